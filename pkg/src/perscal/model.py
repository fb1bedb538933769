"""Problem data model: outcomes, hypotheses, receivers, sender utility, response rules.

Everything downstream (audits, the constrained game, the persuasion benchmarks)
consumes these types. All types are immutable after construction and every
operation here is a pure function of its inputs, so instances can be shared
freely across threads.

Conventions:
  * outcomes live in a per-instance box [lo, hi]^d, itself contained in [-1,1]^d;
  * receiver utilities are affine in the outcome, v(a, y) = w_a . y + c_a, and
    must stay inside [0,1] over the whole outcome box;
  * joint actions are indexed in row-major order with receiver 0 most
    significant (flat = a_0 * m^(N-1) + ... + a_{N-1});
  * ties in the strict best response go to the lowest action index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

WEIGHT_SUM_TOL = 1e-12


def _readonly(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def affine_range(weights: np.ndarray, offset: float, lo: np.ndarray, hi: np.ndarray):
    """Exact (min, max) of w . y + c over the box [lo, hi]^d.

    For an affine map the extremes sit at box corners; per coordinate the
    extreme contribution is w_j * lo_j or w_j * hi_j, so no corner enumeration
    is needed and the bound is exact for any dimension.
    """
    w = np.asarray(weights, dtype=float)
    low = float(np.minimum(w * lo, w * hi).sum() + offset)
    high = float(np.maximum(w * lo, w * hi).sum() + offset)
    return low, high


def check_utility_range(weights, offsets, lo, hi, what: str = "utility"):
    """Reject affine utilities whose range over the outcome box exits [0,1]."""
    for k, (w, c) in enumerate(zip(np.atleast_2d(weights), np.atleast_1d(offsets))):
        rlo, rhi = affine_range(w, float(c), lo, hi)
        if rlo < -1e-12 or rhi > 1 + 1e-12:
            raise ValueError(
                f"{what} row {k} has range [{rlo:.6g}, {rhi:.6g}] outside [0, 1] "
                "over the outcome box"
            )


@dataclass(frozen=True, eq=False)
class Receiver:
    """One receiver: per-action affine utility over outcomes.

    v(a, y) = action_weights[a] . y + action_offsets[a].
    """

    action_weights: np.ndarray  # (m, d)
    action_offsets: np.ndarray  # (m,)

    def __post_init__(self):
        w = _readonly(self.action_weights)
        c = _readonly(self.action_offsets)
        if w.ndim != 2:
            raise ValueError("action_weights must be a (m, d) matrix")
        if c.shape != (w.shape[0],):
            raise ValueError("action_offsets length must match the action count")
        if w.shape[0] < 1:
            raise ValueError("a receiver needs at least one action")
        object.__setattr__(self, "action_weights", w)
        object.__setattr__(self, "action_offsets", c)

    @property
    def n_actions(self) -> int:
        return self.action_weights.shape[0]

    @property
    def d(self) -> int:
        return self.action_weights.shape[1]

    def utilities(self, outcome: np.ndarray) -> np.ndarray:
        """Vector of v(a, outcome) over all actions."""
        return self.action_weights @ np.asarray(outcome, dtype=float) + self.action_offsets


def receiver_utility_value(receiver: Receiver, action: int, outcome) -> float:
    """v(action, outcome) = w_a . y + c_a."""
    y = np.asarray(outcome, dtype=float)
    if y.shape != (receiver.d,):
        raise ValueError(f"outcome has dimension {y.shape}, expected ({receiver.d},)")
    if not 0 <= action < receiver.n_actions:
        raise ValueError(f"action index {action} out of range [0, {receiver.n_actions})")
    return float(receiver.action_weights[action] @ y + receiver.action_offsets[action])


def receiver_lipschitz(receiver: Receiver) -> float:
    """Lipschitz constant of y -> v(a, y) in the sup norm: max_a ||w_a||_1."""
    return float(np.abs(receiver.action_weights).sum(axis=1).max())


def strict_best_response(receiver: Receiver, prediction) -> int:
    """Action maximizing v(a, prediction); ties go to the lowest action index."""
    return int(np.argmax(receiver.utilities(prediction)))


def quantal_response(receiver: Receiver, prediction, eta: float) -> np.ndarray:
    """Softmax action distribution exp(eta * v(a, .)) / sum, with max subtraction."""
    if not (np.isfinite(eta) and eta > 0):
        raise ValueError("quantal response needs a finite inverse temperature eta > 0")
    z = eta * receiver.utilities(prediction)
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass(frozen=True, eq=False)
class SenderUtility:
    """Sender payoff per joint action: u(a, y) = alphas[a] + betas[a] . y."""

    alphas: np.ndarray  # (n_joint,)
    betas: np.ndarray   # (n_joint, d)

    def __post_init__(self):
        a = _readonly(self.alphas)
        b = _readonly(self.betas)
        if a.ndim != 1 or b.ndim != 2 or b.shape[0] != a.shape[0]:
            raise ValueError("sender utility needs alphas (n_joint,) and betas (n_joint, d)")
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "betas", b)

    @property
    def n_joint(self) -> int:
        return self.alphas.shape[0]

    def value_matrix(self, outcomes: np.ndarray) -> np.ndarray:
        """(n_samples, n_joint) matrix of u(a, y) over sample outcomes."""
        return self.alphas[None, :] + outcomes @ self.betas.T


@dataclass(frozen=True, eq=False)
class TabularHypothesis:
    """Deterministic predictor given by an explicit context -> prediction table."""

    values: Mapping[str, np.ndarray]

    def __post_init__(self):
        frozen = {str(k): _readonly(np.atleast_1d(v)) for k, v in self.values.items()}
        if not frozen:
            raise ValueError("tabular hypothesis needs at least one context")
        dims = {v.shape for v in frozen.values()}
        if len(dims) != 1:
            raise ValueError("all tabular predictions must share one dimension")
        object.__setattr__(self, "values", frozen)

    @property
    def d(self) -> int:
        return next(iter(self.values.values())).shape[0]


@dataclass(frozen=True, eq=False)
class AffineHypothesis:
    """Deterministic predictor clip(A x + b) of a feature vector x, clipped to the box."""

    matrix: np.ndarray  # (d, p)
    offset: np.ndarray  # (d,)

    def __post_init__(self):
        m = _readonly(np.atleast_2d(self.matrix))
        b = _readonly(np.atleast_1d(self.offset))
        if b.shape != (m.shape[0],):
            raise ValueError("offset length must match the matrix row count")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", b)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]


Hypothesis = TabularHypothesis | AffineHypothesis


@dataclass(frozen=True)
class ResponseRule:
    """How receivers act on a prediction: strict argmax, or quantal with eta > 0."""

    eta: float | None = None

    def __post_init__(self):
        if self.eta is not None and not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError("quantal rule needs a finite eta > 0")

    @classmethod
    def strict(cls) -> "ResponseRule":
        return cls(None)

    @classmethod
    def quantal(cls, eta: float) -> "ResponseRule":
        return cls(float(eta))

    @property
    def is_strict(self) -> bool:
        return self.eta is None

    def label(self) -> str:
        return "strict" if self.is_strict else f"quantal(eta={self.eta:g})"


STRICT = ResponseRule.strict()


@dataclass(frozen=True, eq=False)
class Sample:
    """One observation: a context identifier (or feature vector) and an outcome."""

    context_id: str | np.ndarray
    outcome: np.ndarray

    def __post_init__(self):
        y = _readonly(np.atleast_1d(self.outcome))
        if np.abs(y).max() > 1 + 1e-12:
            raise ValueError("outcome entries must lie in [-1, 1]")
        ctx = self.context_id
        if not isinstance(ctx, str):
            ctx = _readonly(np.atleast_1d(ctx))
        object.__setattr__(self, "context_id", ctx)
        object.__setattr__(self, "outcome", y)


@dataclass(eq=False)
class Dataset:
    """Uniformly weighted sample set; outcomes cached as an (n, d) matrix."""

    samples: Sequence[Sample]
    outcomes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.samples) < 1:
            raise ValueError("a dataset needs at least one sample")
        dims = {s.outcome.shape[0] for s in self.samples}
        if len(dims) != 1:
            raise ValueError("all outcomes must share the same dimension")
        self.samples = tuple(self.samples)
        y = np.stack([s.outcome for s in self.samples])
        y.setflags(write=False)
        self.outcomes = y

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def d(self) -> int:
        return self.outcomes.shape[1]

    @property
    def context_ids(self):
        return [s.context_id for s in self.samples]


@dataclass(frozen=True, eq=False)
class Instance:
    """Full problem description: receivers, sender, hypothesis class, outcome box.

    ``sampling`` optionally carries the generating law for synthetic instances
    (used by the experiment harness to draw datasets); it plays no role in any
    solver or audit computation.
    """

    d: int
    receivers: tuple[Receiver, ...]
    sender: SenderUtility
    hypotheses: tuple[Hypothesis, ...]
    joint_action_cap: int = 4096
    outcome_lo: np.ndarray = None
    outcome_hi: np.ndarray = None
    sampling: object = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("outcome dimension must be positive")
        receivers = tuple(self.receivers)
        if len(receivers) < 1:
            raise ValueError("need at least one receiver")
        m = receivers[0].n_actions
        if m < 2:
            raise ValueError("receivers need at least two actions (pad with dummies)")
        if any(r.n_actions != m for r in receivers):
            raise ValueError("all receivers must share one action count")
        if any(r.d != self.d for r in receivers):
            raise ValueError("receiver utility dimension must match the outcome dimension")
        lo = self.outcome_lo if self.outcome_lo is not None else -np.ones(self.d)
        hi = self.outcome_hi if self.outcome_hi is not None else np.ones(self.d)
        lo, hi = _readonly(np.atleast_1d(lo)), _readonly(np.atleast_1d(hi))
        if lo.shape != (self.d,) or hi.shape != (self.d,):
            raise ValueError("outcome box bounds must have shape (d,)")
        if np.any(lo < -1 - 1e-12) or np.any(hi > 1 + 1e-12) or np.any(lo >= hi):
            raise ValueError("outcome box must be a nondegenerate sub-box of [-1, 1]^d")
        if self.joint_action_cap < 1:
            raise ValueError("joint_action_cap must be positive")
        if m ** len(receivers) > self.joint_action_cap:
            raise ValueError(
                f"m^N = {m ** len(receivers)} exceeds the joint action cap {self.joint_action_cap}"
            )
        hypotheses = tuple(self.hypotheses)
        if len(hypotheses) < 1:
            raise ValueError("the hypothesis class must be nonempty")
        for k, h in enumerate(hypotheses):
            if h.d != self.d:
                raise ValueError(f"hypothesis {k} predicts dimension {h.d}, expected {self.d}")
            if isinstance(h, TabularHypothesis):
                for ctx, v in h.values.items():
                    if np.any(v < lo - 1e-12) or np.any(v > hi + 1e-12):
                        raise ValueError(
                            f"hypothesis {k} prediction for context {ctx!r} exits the outcome box"
                        )
        if self.sender.n_joint != m ** len(receivers):
            raise ValueError("sender utility table must cover all m^N joint actions")
        if self.sender.betas.shape[1] != self.d:
            raise ValueError("sender utility dimension must match the outcome dimension")
        for i, r in enumerate(receivers):
            check_utility_range(r.action_weights, r.action_offsets, lo, hi, f"receiver {i}")
        check_utility_range(self.sender.betas, self.sender.alphas, lo, hi, "sender")
        object.__setattr__(self, "receivers", receivers)
        object.__setattr__(self, "hypotheses", hypotheses)
        object.__setattr__(self, "outcome_lo", lo)
        object.__setattr__(self, "outcome_hi", hi)

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)

    @property
    def m(self) -> int:
        return self.receivers[0].n_actions

    @property
    def n_joint(self) -> int:
        return self.m ** self.n_receivers

    @property
    def n_hypotheses(self) -> int:
        return len(self.hypotheses)

    @property
    def lipschitz(self) -> float:
        return max(receiver_lipschitz(r) for r in self.receivers)

    @property
    def is_tabular(self) -> bool:
        return all(isinstance(h, TabularHypothesis) for h in self.hypotheses)


@dataclass(frozen=True, eq=False)
class RandomizedPredictor:
    """Nonnegative weights over the hypothesis class, summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        w = _readonly(np.atleast_1d(self.weights))
        if np.any(w < 0):
            raise ValueError("predictor weights must be nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"predictor weights sum to {w.sum()!r}, expected 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def point_mass(cls, index: int, n: int) -> "RandomizedPredictor":
        w = np.zeros(n)
        w[index] = 1.0
        return cls(w)

    @classmethod
    def uniform(cls, n: int) -> "RandomizedPredictor":
        return cls(np.full(n, 1.0 / n))

    @property
    def support(self) -> np.ndarray:
        return np.nonzero(self.weights)[0]


# ---------------------------------------------------------------------------
# prediction and response machinery
# ---------------------------------------------------------------------------


def hypothesis_predictions(instance: Instance, hypothesis: Hypothesis, dataset: Dataset) -> np.ndarray:
    """(n, d) prediction matrix of one hypothesis over a dataset.

    Tabular lookups must cover every context in the dataset; affine predictions
    are clipped into the instance's outcome box.
    """
    if dataset.d != instance.d:
        raise ValueError(f"dataset dimension {dataset.d} does not match instance dimension {instance.d}")
    if isinstance(hypothesis, TabularHypothesis):
        rows = []
        for s in dataset.samples:
            if not isinstance(s.context_id, str):
                raise ValueError("tabular hypotheses need string context identifiers")
            try:
                rows.append(hypothesis.values[s.context_id])
            except KeyError:
                raise ValueError(f"tabular hypothesis has no prediction for context {s.context_id!r}")
        return np.stack(rows)
    feats = []
    for s in dataset.samples:
        if isinstance(s.context_id, str):
            raise ValueError("affine hypotheses need feature-vector contexts")
        feats.append(s.context_id)
    x = np.stack(feats)
    raw = x @ hypothesis.matrix.T + hypothesis.offset
    return np.clip(raw, instance.outcome_lo, instance.outcome_hi)


def response_matrix(receiver: Receiver, predictions: np.ndarray, rule: ResponseRule) -> np.ndarray:
    """(n, m) response probabilities of one receiver to a batch of predictions."""
    utils = predictions @ receiver.action_weights.T + receiver.action_offsets
    if rule.is_strict:
        b = np.zeros_like(utils)
        b[np.arange(utils.shape[0]), np.argmax(utils, axis=1)] = 1.0
        return b
    z = rule.eta * utils
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def joint_response_from_predictions(instance: Instance, predictions: np.ndarray, rule: ResponseRule) -> np.ndarray:
    """(n, m^N) product distribution over joint actions for a prediction batch."""
    per = [response_matrix(r, predictions, rule) for r in instance.receivers]
    joint = per[0]
    for b in per[1:]:
        joint = np.einsum("nk,nj->nkj", joint, b).reshape(joint.shape[0], -1)
    return joint


def joint_response_distribution(instance: Instance, prediction, rule: ResponseRule) -> np.ndarray:
    """Probability vector over all m^N joint actions for a single prediction.

    Receivers respond independently; under the strict rule this is a point mass
    on the profile of per-receiver best responses.
    """
    pred = np.atleast_1d(np.asarray(prediction, dtype=float))
    if pred.shape != (instance.d,):
        raise ValueError(f"prediction has shape {pred.shape}, expected ({instance.d},)")
    return joint_response_from_predictions(instance, pred[None, :], rule)[0]


def per_hypothesis_sender_utilities(
    instance: Instance, dataset: Dataset, rule: ResponseRule = STRICT
) -> np.ndarray:
    """(|H|,) empirical expected sender utility of each hypothesis alone."""
    u_samples = instance.sender.value_matrix(dataset.outcomes)  # (n, n_joint)
    out = np.empty(instance.n_hypotheses)
    for k, h in enumerate(instance.hypotheses):
        preds = hypothesis_predictions(instance, h, dataset)
        joint = joint_response_from_predictions(instance, preds, rule)
        out[k] = float(np.mean(np.sum(u_samples * joint, axis=1)))
    return out


def expected_sender_utility(
    instance: Instance,
    dataset: Dataset,
    predictor: RandomizedPredictor,
    rule: ResponseRule = STRICT,
) -> float:
    """Empirical expected sender utility of a randomized predictor; linear in the weights."""
    if predictor.weights.shape[0] != instance.n_hypotheses:
        raise ValueError("predictor weights do not match the hypothesis class size")
    u_samples = instance.sender.value_matrix(dataset.outcomes)  # (n, n_joint)
    total = 0.0
    for w, h in zip(predictor.weights, instance.hypotheses):
        if w == 0.0:
            continue
        preds = hypothesis_predictions(instance, h, dataset)
        joint = joint_response_from_predictions(instance, preds, rule)
        total += w * float(np.mean(np.sum(u_samples * joint, axis=1)))
    return total
