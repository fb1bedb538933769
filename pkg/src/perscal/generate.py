"""Synthetic instance and dataset construction, plus the two exact desk fixtures.

Randomness goes through numpy's PCG64 (``default_rng``) seeded from explicit
``SeedSequence`` values, so instances, datasets, and solver runs are
individually reproducible from their own seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    Dataset,
    Instance,
    Receiver,
    Sample,
    SenderUtility,
    TabularHypothesis,
)

MAX_JOINT_ACTIONS = 4096
MAX_HYPOTHESES = 10_000


@dataclass(frozen=True)
class SamplingModel:
    """Generating law attached to a synthetic instance.

    Contexts are drawn from ``context_probs``; outcome coordinate j in context
    c is ``hi[j]`` with probability ``outcome_probs[c, j]`` and ``lo[j]``
    otherwise, independently across coordinates.
    """

    context_names: tuple[str, ...]
    context_probs: np.ndarray   # (n_contexts,)
    outcome_probs: np.ndarray   # (n_contexts, d)
    lo: np.ndarray              # (d,) low outcome value per coordinate
    hi: np.ndarray              # (d,) high outcome value per coordinate
    fixture: str | None = None

    def context_means(self) -> np.ndarray:
        """(n_contexts, d) exact conditional outcome means."""
        return self.lo + self.outcome_probs * (self.hi - self.lo)

    def overall_mean(self) -> np.ndarray:
        return self.context_probs @ self.context_means()


@dataclass(frozen=True)
class InstanceSpec:
    """Knobs for ``generate_instance``; either a named fixture or random sizes."""

    fixture: str | None = None
    n_receivers: int = 1
    n_actions: int = 2
    d: int = 1
    n_hypotheses: int = 3
    n_contexts: int = 3
    include_mean_hypothesis: bool = True
    prob_range: tuple[float, float] = (0.15, 0.85)

    def __post_init__(self):
        if self.fixture is not None:
            return
        if self.n_actions ** self.n_receivers > MAX_JOINT_ACTIONS:
            raise ValueError(f"m^N exceeds the cap of {MAX_JOINT_ACTIONS} joint actions")
        total_h = self.n_hypotheses + (1 if self.include_mean_hypothesis else 0)
        if total_h > MAX_HYPOTHESES:
            raise ValueError(f"hypothesis count exceeds the cap of {MAX_HYPOTHESES}")
        if min(self.n_receivers, self.n_actions, self.d, self.n_hypotheses, self.n_contexts) < 1:
            raise ValueError("all size parameters must be positive")


FIXTURES = ("threshold-pair", "two-context")


def _binary_receiver() -> Receiver:
    # two actions over y in [0,1]: v(a0,y)=1-y, v(a1,y)=y
    return Receiver(action_weights=[[-1.0], [1.0]], action_offsets=[1.0, 0.0])


def _binary_sender() -> SenderUtility:
    # sender wants action a0 regardless of the outcome
    return SenderUtility(alphas=[1.0, 0.0], betas=[[0.0], [0.0]])


def threshold_pair_instance() -> Instance:
    """One context, binary outcome, H = two constant predictions straddling 0.5.

    The receiver's best response flips at prediction 0.5, so the two
    hypotheses 0.45 / 0.55 land on opposite sides of the threshold while both
    sit at distance 0.05 from the true mean.
    """
    h_lo = TabularHypothesis({"c0": [0.45]})
    h_hi = TabularHypothesis({"c0": [0.55]})
    sampling = SamplingModel(
        context_names=("c0",),
        context_probs=np.array([1.0]),
        outcome_probs=np.array([[0.5]]),
        lo=np.array([0.0]),
        hi=np.array([1.0]),
        fixture="threshold-pair",
    )
    return Instance(
        d=1,
        receivers=(_binary_receiver(),),
        sender=_binary_sender(),
        hypotheses=(h_lo, h_hi),
        outcome_lo=[0.0],
        outcome_hi=[1.0],
        sampling=sampling,
    )


def threshold_pair_dataset(k: int = 100) -> Dataset:
    """2k single-context samples alternating outcome 0/1; empirical mean exactly 0.5."""
    samples = [Sample("c0", [float(i % 2)]) for i in range(2 * k)]
    return Dataset(samples)


def two_context_instance() -> Instance:
    """Two equally likely contexts with conditional means 0.2 and 0.8.

    H holds the per-context exact-mean predictor and the constant overall-mean
    predictor 0.5; the receiver and sender match the threshold-pair fixture.
    """
    h_star = TabularHypothesis({"c0": [0.2], "c1": [0.8]})
    h_mean = TabularHypothesis({"c0": [0.5], "c1": [0.5]})
    sampling = SamplingModel(
        context_names=("c0", "c1"),
        context_probs=np.array([0.5, 0.5]),
        outcome_probs=np.array([[0.2], [0.8]]),
        lo=np.array([0.0]),
        hi=np.array([1.0]),
        fixture="two-context",
    )
    return Instance(
        d=1,
        receivers=(_binary_receiver(),),
        sender=_binary_sender(),
        hypotheses=(h_star, h_mean),
        outcome_lo=[0.0],
        outcome_hi=[1.0],
        sampling=sampling,
    )


def two_context_dataset(reps: int = 1) -> Dataset:
    """10*reps samples per context with exact outcome proportions 0.2 / 0.8."""
    samples = []
    for _ in range(reps):
        for i in range(10):
            samples.append(Sample("c0", [1.0 if i < 2 else 0.0]))
    for _ in range(reps):
        for i in range(10):
            samples.append(Sample("c1", [1.0 if i < 8 else 0.0]))
    return Dataset(samples)


def _rescaled_affine_rows(rng, n_rows: int, d: int, lo, hi):
    """Random affine rows (w, c) rescaled into random subranges of [0, 1].

    Each row's exact range over the box becomes [r_lo, r_hi] with r_lo < r_hi
    drawn at random, so rows differ in slope and intercept instead of all
    spanning the full unit interval.
    """
    weights = np.empty((n_rows, d))
    offsets = np.empty(n_rows)
    for k in range(n_rows):
        w = rng.uniform(-1.0, 1.0, size=d)
        c = rng.uniform(-1.0, 1.0)
        r_lo = rng.uniform(0.0, 0.35)
        r_hi = rng.uniform(0.65, 1.0)
        low = float(np.minimum(w * lo, w * hi).sum() + c)
        high = float(np.maximum(w * lo, w * hi).sum() + c)
        if high - low < 1e-9:
            weights[k] = 0.0
            offsets[k] = 0.5
            continue
        scale = (r_hi - r_lo) / (high - low)
        weights[k] = w * scale
        offsets[k] = r_lo + (c - low) * scale
    return weights, offsets


def generate_instance(spec: InstanceSpec, seed: int) -> Instance:
    """Deterministically build an instance from a spec and a 64-bit seed.

    Receiver and sender utilities are drawn at random and affinely rescaled so
    their exact range over the outcome box is [0, 1]; hypotheses are tabular
    over the generated context set, optionally including the constant
    predictor at the generating-law mean.
    """
    if spec.fixture is not None:
        if spec.fixture == "threshold-pair":
            return threshold_pair_instance()
        if spec.fixture == "two-context":
            return two_context_instance()
        raise ValueError(f"unknown fixture {spec.fixture!r}; known: {FIXTURES}")

    root = np.random.SeedSequence(seed)
    rng_recv, rng_send, rng_hypo, rng_law = [
        np.random.default_rng(s) for s in root.spawn(4)
    ]
    d = spec.d
    lo = np.zeros(d)
    hi = np.ones(d)

    receivers = []
    for _ in range(spec.n_receivers):
        w, c = _rescaled_affine_rows(rng_recv, spec.n_actions, d, lo, hi)
        receivers.append(Receiver(action_weights=w, action_offsets=c))

    n_joint = spec.n_actions ** spec.n_receivers
    bw, bc = _rescaled_affine_rows(rng_send, n_joint, d, lo, hi)
    sender = SenderUtility(alphas=bc, betas=bw)

    context_names = tuple(f"c{i}" for i in range(spec.n_contexts))
    p_lo, p_hi = spec.prob_range
    outcome_probs = rng_law.uniform(p_lo, p_hi, size=(spec.n_contexts, d))
    raw = rng_law.uniform(0.5, 1.5, size=spec.n_contexts)
    context_probs = raw / raw.sum()
    sampling = SamplingModel(
        context_names=context_names,
        context_probs=context_probs,
        outcome_probs=outcome_probs,
        lo=lo,
        hi=hi,
    )

    hypotheses = []
    for _ in range(spec.n_hypotheses):
        table = {
            name: rng_hypo.uniform(0.0, 1.0, size=d) for name in context_names
        }
        hypotheses.append(TabularHypothesis(table))
    if spec.include_mean_hypothesis:
        mean = sampling.overall_mean()
        hypotheses.append(TabularHypothesis({name: mean for name in context_names}))

    return Instance(
        d=d,
        receivers=tuple(receivers),
        sender=sender,
        hypotheses=tuple(hypotheses),
        outcome_lo=lo,
        outcome_hi=hi,
        sampling=sampling,
    )


def sample_dataset(instance: Instance, n: int, seed: int) -> Dataset:
    """Draw n samples from the instance's attached sampling model.

    Fixture instances emit exact-proportion datasets instead of i.i.d. draws,
    so their empirical conditional means match the law exactly; n must then be
    a multiple of the fixture's block size.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    law: SamplingModel | None = instance.sampling
    if law is None:
        raise ValueError("instance carries no sampling model; cannot draw datasets")
    if law.fixture == "threshold-pair":
        if n % 2:
            raise ValueError("threshold-pair fixture needs an even sample count")
        return threshold_pair_dataset(n // 2)
    if law.fixture == "two-context":
        if n % 20:
            raise ValueError("two-context fixture needs a multiple of 20 samples")
        return two_context_dataset(n // 20)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    ctx_idx = rng.choice(len(law.context_names), size=n, p=law.context_probs)
    u = rng.random(size=(n, instance.d))
    hit = u < law.outcome_probs[ctx_idx]
    outcomes = np.where(hit, law.hi, law.lo)
    samples = [
        Sample(law.context_names[ctx_idx[i]], outcomes[i]) for i in range(n)
    ]
    return Dataset(samples)
