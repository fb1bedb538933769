"""Bridging decision calibration to the persuasion benchmark.

The finite-context view of a dataset is a prior over posterior-mean states,
one state per context group. A calibrated randomized predictor is the same
object as a signaling scheme over those states: its prediction distribution
is the induced distribution of posterior means. This module provides:

  * the posterior-state view of a dataset and of a predictor,
  * post-processing of a perfectly decision-calibrated predictor into a fully
    calibrated one with the same sender utility and at most m predictions,
  * the instance-dependent discretization of scalar binary-outcome problems
    and utility-preserving rounding onto it,
  * an exact upper bound on single-receiver persuasion value through the
    obedient direct-signaling linear program.

All operations here require the finite-context (tabular) mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audit import decision_calibration_error
from .linprog import simplex_solve
from .model import (
    Dataset,
    Instance,
    RandomizedPredictor,
    STRICT,
    TabularHypothesis,
    expected_sender_utility,
    hypothesis_predictions,
    strict_best_response,
)

DEDUP_TOL = 1e-12
LP_SIZE_CAP = 200


class RegionMismatchError(Exception):
    """A region's conditional-mean representative best-responds to a different action.

    With empirical data and exact boundary ties the convexity argument behind
    post-processing can fail; the failure is reported with its witnesses
    rather than silently accepted.
    """

    def __init__(self, action: int, representative: np.ndarray, got: int):
        self.action = action
        self.representative = representative
        self.got = got
        super().__init__(
            f"representative {representative} of action {action}'s region best-responds to {got}"
        )


@dataclass(frozen=True, eq=False)
class PosteriorStateSet:
    """Exact empirical conditional means per context group with their masses."""

    states: np.ndarray  # (S, d)
    prior: np.ndarray   # (S,)

    def __post_init__(self):
        if abs(self.prior.sum() - 1.0) > 1e-9:
            raise ValueError("state prior must sum to one")


@dataclass(frozen=True, eq=False)
class PredictionDistribution:
    """Distribution of prediction values under (predictor, dataset), with residuals.

    ``residuals[v]`` is the empirical mean of (y - v) conditioned on the
    prediction equalling support point v; a perfectly calibrated predictor has
    an all-zero residual table (posterior means equal the predictions).
    """

    support: np.ndarray    # (V, d)
    mass: np.ndarray       # (V,)
    residuals: np.ndarray  # (V, d)


@dataclass(frozen=True, eq=False)
class DiscretizationSet:
    """Scalar prediction grid: uniform eps-grid plus response thresholds plus states."""

    points: np.ndarray      # sorted, deduplicated
    grid: np.ndarray
    thresholds: np.ndarray
    states: np.ndarray
    intervals: tuple        # ((action, lo, hi), ...) best-response partition of [0,1]


@dataclass(frozen=True, eq=False)
class PostProcessResult:
    """Calibrated post-processing output: at most m predictions, utility preserved."""

    instance: Instance
    predictor: RandomizedPredictor
    representatives: dict        # action -> (d,) conditional-mean prediction
    region_masses: dict          # action -> probability of the action's region
    utility_before: float
    utility_after: float


@dataclass(frozen=True, eq=False)
class RoundingResult:
    """Rounded predictor with its before/after audit deltas."""

    instance: Instance
    predictor: RandomizedPredictor
    utility_before: float
    utility_after: float
    calibration_before: float
    calibration_after: float


def _require_tabular(instance: Instance, op: str):
    if not instance.is_tabular:
        raise ValueError(f"{op} requires the finite-context (tabular) mode")


def posterior_states(instance: Instance, dataset: Dataset) -> PosteriorStateSet:
    """Group samples by context and return exact conditional means with masses.

    Context groups whose means coincide (within 1e-12) merge into one state
    with summed mass.
    """
    _require_tabular(instance, "posterior_states")
    order: list[str] = []
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for s in dataset.samples:
        if s.context_id not in sums:
            order.append(s.context_id)
            sums[s.context_id] = np.zeros(dataset.d)
            counts[s.context_id] = 0
        sums[s.context_id] = sums[s.context_id] + s.outcome
        counts[s.context_id] += 1
    n = len(dataset)
    states: list[np.ndarray] = []
    prior: list[float] = []
    for ctx in order:
        mean = sums[ctx] / counts[ctx]
        mass = counts[ctx] / n
        for i, seen in enumerate(states):
            if np.abs(seen - mean).max() <= DEDUP_TOL:
                prior[i] += mass
                break
        else:
            states.append(mean)
            prior.append(mass)
    return PosteriorStateSet(states=np.stack(states), prior=np.asarray(prior))


def signaling_view(
    instance: Instance, dataset: Dataset, predictor: RandomizedPredictor
) -> PredictionDistribution:
    """Distribution of prediction values under the predictor, with posterior residuals."""
    if predictor.weights.shape[0] != instance.n_hypotheses:
        raise ValueError("predictor weights do not match the hypothesis class size")
    n = len(dataset)
    exact = all(
        isinstance(instance.hypotheses[k], TabularHypothesis) for k in predictor.support
    )
    order: list[tuple] = []
    acc: dict[tuple, list] = {}
    for k in predictor.support:
        w = predictor.weights[k] / n
        preds = hypothesis_predictions(instance, instance.hypotheses[k], dataset)
        keys = preds if exact else np.round(preds / 1e-9) * 1e-9
        for row in range(n):
            key = tuple(keys[row])
            if key not in acc:
                order.append(key)
                acc[key] = [0.0, np.zeros(dataset.d), np.zeros(dataset.d)]
            g = acc[key]
            g[0] += w
            g[1] = g[1] + w * preds[row]
            g[2] = g[2] + w * dataset.outcomes[row]
    support, mass, residuals = [], [], []
    for key in order:
        m, vsum, ysum = acc[key]
        v = vsum / m
        support.append(v)
        mass.append(m)
        residuals.append(ysum / m - v)
    return PredictionDistribution(
        support=np.stack(support), mass=np.asarray(mass), residuals=np.stack(residuals)
    )


def post_process_to_calibrated(
    instance: Instance, dataset: Dataset, predictor: RandomizedPredictor
) -> PostProcessResult:
    """Replace each prediction by its response-region conditional mean.

    Requires a single receiver and an (essentially) perfectly decision
    calibrated predictor. The output predictor takes at most m distinct
    values, is fully calibrated on the dataset, and gives the sender the same
    expected utility, provided every region's representative best-responds to
    its own action (violations raise RegionMismatchError). Actions whose
    response region has zero mass are dropped.
    """
    _require_tabular(instance, "post_process_to_calibrated")
    if instance.n_receivers != 1:
        raise ValueError("post-processing is defined for single-receiver instances")
    dec = decision_calibration_error(instance, dataset, predictor, STRICT).max_abs
    if dec > 1e-10:
        raise ValueError(
            f"post-processing needs perfect decision calibration; measured error {dec:.3g}"
        )
    receiver = instance.receivers[0]
    n = len(dataset)
    mass = np.zeros(instance.m)
    vsum = np.zeros((instance.m, instance.d))
    support = list(predictor.support)
    actions_per_h = {}
    for k in support:
        preds = hypothesis_predictions(instance, instance.hypotheses[k], dataset)
        acts = np.array([strict_best_response(receiver, p) for p in preds])
        actions_per_h[k] = (preds, acts)
        w = predictor.weights[k] / n
        for a in range(instance.m):
            rows = acts == a
            if rows.any():
                mass[a] += w * rows.sum()
                vsum[a] += w * preds[rows].sum(axis=0)

    representatives = {}
    for a in range(instance.m):
        if mass[a] <= 0:
            continue
        rep = vsum[a] / mass[a]
        got = strict_best_response(receiver, rep)
        if got != a:
            raise RegionMismatchError(a, rep, got)
        representatives[a] = rep

    new_hypotheses = []
    for k in support:
        preds, acts = actions_per_h[k]
        table = {}
        for s, a in zip(dataset.samples, acts):
            table[s.context_id] = representatives[a]
        new_hypotheses.append(TabularHypothesis(table))
    new_instance = Instance(
        d=instance.d,
        receivers=instance.receivers,
        sender=instance.sender,
        hypotheses=tuple(new_hypotheses),
        joint_action_cap=instance.joint_action_cap,
        outcome_lo=instance.outcome_lo,
        outcome_hi=instance.outcome_hi,
    )
    new_predictor = RandomizedPredictor(predictor.weights[support])
    return PostProcessResult(
        instance=new_instance,
        predictor=new_predictor,
        representatives=representatives,
        region_masses={a: float(mass[a]) for a in representatives},
        utility_before=expected_sender_utility(instance, dataset, predictor, STRICT),
        utility_after=expected_sender_utility(new_instance, dataset, new_predictor, STRICT),
    )


# ---------------------------------------------------------------------------
# instance-dependent discretization (scalar binary outcomes)
# ---------------------------------------------------------------------------


def _require_scalar_binary(instance: Instance, dataset: Dataset, op: str):
    if instance.d != 1 or instance.n_receivers != 1:
        raise ValueError(f"{op} requires d=1 and a single receiver")
    vals = np.unique(dataset.outcomes)
    if not np.all(np.isin(vals, (0.0, 1.0))):
        raise ValueError(f"{op} requires binary outcomes in {{0, 1}}")


def best_response_intervals(instance: Instance) -> tuple:
    """Merged intervals ((action, lo, hi), ...) partitioning [0,1] by strict response."""
    receiver = instance.receivers[0]
    w = receiver.action_weights[:, 0]
    c = receiver.action_offsets
    cands = {0.0, 1.0}
    m = receiver.n_actions
    for a in range(m):
        for b in range(a + 1, m):
            if w[a] != w[b]:
                p = (c[b] - c[a]) / (w[a] - w[b])
                if 0.0 < p < 1.0:
                    cands.add(float(p))
    cuts = np.array(sorted(cands))
    segments = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        act = strict_best_response(receiver, [(lo + hi) / 2.0])
        if segments and segments[-1][0] == act:
            segments[-1] = (act, segments[-1][1], hi)
        else:
            segments.append((act, lo, hi))
    return tuple(segments)


def build_discretization(instance: Instance, dataset: Dataset, eps: float) -> DiscretizationSet:
    """Uniform eps-grid joined with response thresholds and posterior states.

    eps must be smaller than the shortest best-response interval so every
    interval keeps a grid point and rounding stays inside its interval.
    """
    _require_scalar_binary(instance, dataset, "build_discretization")
    if eps <= 0:
        raise ValueError("eps must be positive")
    intervals = best_response_intervals(instance)
    min_len = min(hi - lo for _, lo, hi in intervals)
    if eps >= min_len:
        raise ValueError(
            f"eps={eps:g} must be below the shortest best-response interval ({min_len:g})"
        )
    grid = np.arange(int(np.floor(1.0 / eps + 1e-12)) + 1) * eps
    grid = grid[grid <= 1.0 + 1e-12]
    thresholds = np.array([lo for _, lo, _ in intervals[1:]])
    states = posterior_states(instance, dataset).states[:, 0]
    merged = np.concatenate([grid, thresholds, states])
    merged.sort()
    keep = np.ones(merged.shape[0], dtype=bool)
    keep[1:] = np.diff(merged) > DEDUP_TOL
    return DiscretizationSet(
        points=merged[keep],
        grid=grid,
        thresholds=thresholds,
        states=np.asarray(sorted(set(states.tolist()))),
        intervals=intervals,
    )


def round_prediction(instance: Instance, disc: DiscretizationSet, p: float) -> float:
    """Nearest grid point sharing p's best response; equidistant ties pick the smaller."""
    receiver = instance.receivers[0]
    action = strict_best_response(receiver, [p])
    eligible = [
        s for s in disc.points if strict_best_response(receiver, [s]) == action
    ]
    if not eligible:
        raise RuntimeError(f"no discretization point shares action {action}")
    dists = np.abs(np.asarray(eligible) - p)
    best = dists.min()
    return float(min(s for s, dd in zip(eligible, dists) if dd == best))


def round_to_discretization(
    instance: Instance,
    dataset: Dataset,
    predictor: RandomizedPredictor,
    disc: DiscretizationSet,
) -> RoundingResult:
    """Round every supported prediction onto the discretization set.

    Every sample keeps its strict best response, so the sender utility is
    unchanged; the calibration error grows by at most the grid resolution.
    """
    _require_scalar_binary(instance, dataset, "round_to_discretization")
    _require_tabular(instance, "round_to_discretization")
    receiver = instance.receivers[0]
    support = list(predictor.support)
    new_hypotheses = []
    for k in support:
        h = instance.hypotheses[k]
        table = {}
        for ctx, v in h.values.items():
            p = float(v[0])
            if p < -1e-12 or p > 1 + 1e-12:
                raise ValueError("predictions must lie in [0, 1] for rounding")
            r = round_prediction(instance, disc, p)
            if strict_best_response(receiver, [r]) != strict_best_response(receiver, [p]):
                raise RuntimeError("rounding changed a best response; interval logic broken")
            table[ctx] = np.array([r])
        new_hypotheses.append(TabularHypothesis(table))
    new_instance = Instance(
        d=1,
        receivers=instance.receivers,
        sender=instance.sender,
        hypotheses=tuple(new_hypotheses),
        joint_action_cap=instance.joint_action_cap,
        outcome_lo=instance.outcome_lo,
        outcome_hi=instance.outcome_hi,
    )
    new_predictor = RandomizedPredictor(predictor.weights[support])
    return RoundingResult(
        instance=new_instance,
        predictor=new_predictor,
        utility_before=expected_sender_utility(instance, dataset, predictor, STRICT),
        utility_after=expected_sender_utility(new_instance, dataset, new_predictor, STRICT),
        calibration_before=decision_calibration_error(instance, dataset, predictor).max_abs,
        calibration_after=decision_calibration_error(new_instance, dataset, new_predictor).max_abs,
    )


# ---------------------------------------------------------------------------
# obedient signaling LP
# ---------------------------------------------------------------------------


def obedient_signaling_upper_bound(instance: Instance, dataset: Dataset) -> float:
    """Optimal sender value of the obedient direct-signaling program.

    Variables pi(a | state) recommend actions per posterior state; obedience
    requires each recommended action to be a best response to its induced
    posterior, with ties inherently resolved in the sender's favor by the
    maximization. This upper-bounds the utility of any perfectly
    decision-calibrated predictor on the same empirical dataset.
    """
    _require_tabular(instance, "obedient_signaling_upper_bound")
    if instance.n_receivers != 1:
        raise ValueError("the signaling benchmark is defined for a single receiver")
    post = posterior_states(instance, dataset)
    s = post.states.shape[0]
    m = instance.m
    if s * m > LP_SIZE_CAP:
        raise ValueError(f"LP size {s * m} exceeds the cap of {LP_SIZE_CAP} variables")
    receiver = instance.receivers[0]
    v = post.states @ receiver.action_weights.T + receiver.action_offsets  # (S, m)
    u = instance.sender.value_matrix(post.states)                          # (S, m)

    def var(si, a):
        return si * m + a

    n_vars = s * m
    c = np.zeros(n_vars)
    for si in range(s):
        for a in range(m):
            c[var(si, a)] = -post.prior[si] * u[si, a]
    a_eq = np.zeros((s, n_vars))
    for si in range(s):
        a_eq[si, si * m : (si + 1) * m] = 1.0
    b_eq = np.ones(s)
    rows = []
    for a in range(m):
        for a2 in range(m):
            if a2 == a:
                continue
            row = np.zeros(n_vars)
            for si in range(s):
                row[var(si, a)] = -post.prior[si] * (v[si, a] - v[si, a2])
            rows.append(row)
    a_ub = np.stack(rows)
    b_ub = np.zeros(a_ub.shape[0])
    _, value = simplex_solve(c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq)
    return -value
