"""Constrained minimax solver: sender utility vs. calibration constraints.

The constrained problem (maximize sender utility subject to a calibration
tolerance gamma) is solved as a mass-bounded zero-sum game between a predictor
player and a constraint player. The predictor player best-responds through
exact ERM enumeration over the finite hypothesis class; the constraint player
runs multiplicative-weights (Hedge) over the signed constraint coordinates
plus one slack coordinate that absorbs unused dual mass, so the dual simplex
of mass C emulates the full L1 ball of radius C.

Dual coordinates are laid out as (sign s, receiver i, coordinate j, action a)
in row-major order, signs first (+ then -), with the slack coordinate last.
The per-coordinate payoff of the constraint player when hypothesis h is played
is s * E[(h(x)_j - y_j) * b_i(h(x), a)] - gamma, and the slack payoff is 0.

Equilibrium quality is certified directly: the gap between the constraint
player's best response to the averaged predictor and the ERM value at the
averaged dual bounds both the calibration excess and the utility loss of the
averaged predictor, so the loop stops as soon as the measured gap reaches its
target rather than after a worst-case round count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .audit import per_hypothesis_violations
from .model import (
    Dataset,
    Instance,
    RandomizedPredictor,
    ResponseRule,
    STRICT,
    per_hypothesis_sender_utilities,
)

ROUND_CAP_DEFAULT = 200_000


class DualShapeError(ValueError):
    """Dual vector length does not match the instance's constraint layout."""


@dataclass(frozen=True, eq=False)
class DualVector:
    """Nonnegative dual weights over signed constraints plus a slack coordinate.

    The L1 mass (slack included) is pinned to ``mass``; the slack coordinate is
    the last entry.
    """

    entries: np.ndarray
    mass: float

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        e.setflags(write=False)
        if e.ndim != 1 or e.shape[0] < 2:
            raise ValueError("a dual vector needs at least one constraint plus slack")
        if self.mass <= 0:
            raise ValueError("dual mass must be positive")
        if np.any(e < 0):
            raise ValueError("dual entries must be nonnegative")
        if abs(e.sum() - self.mass) > 1e-9:
            raise ValueError(f"dual L1 mass is {e.sum()!r}, expected {self.mass!r}")
        object.__setattr__(self, "entries", e)

    @classmethod
    def uniform(cls, n_constraints: int, mass: float) -> "DualVector":
        k = n_constraints + 1
        return cls(np.full(k, mass / k), mass)

    @classmethod
    def slack_only(cls, n_constraints: int, mass: float) -> "DualVector":
        e = np.zeros(n_constraints + 1)
        e[-1] = mass
        return cls(e, mass)

    @property
    def real(self) -> np.ndarray:
        """Entries on the signed constraint coordinates (slack excluded)."""
        return self.entries[:-1]

    @property
    def slack(self) -> float:
        return float(self.entries[-1])


@dataclass(frozen=True)
class GameConfig:
    """Solver knobs; ``resolve`` fills the derived defaults for an instance.

    C defaults to 2/epsilon, the gap target to epsilon/2, and the round cap to
    the worst-case Hedge horizon capped at a desk-scale bound (the certified
    gap stops the loop far earlier in practice).
    """

    gamma: float = 0.0
    epsilon: float = 0.1
    dual_mass: float | None = None
    t_max: int | None = None
    gap_target: float | None = None
    rule: ResponseRule = STRICT
    rng_seed: int = 0
    gap_check_every: int = 1

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.dual_mass is not None and self.dual_mass <= 0:
            raise ValueError("dual mass must be positive")
        if self.t_max is not None and self.t_max < 1:
            raise ValueError("t_max must be at least 1")
        if self.gap_target is not None and self.gap_target <= 0:
            raise ValueError("gap_target must be positive")
        if self.gap_check_every < 1:
            raise ValueError("gap_check_every must be at least 1")

    def resolved(self, instance: Instance) -> "GameConfig":
        c = self.dual_mass if self.dual_mass is not None else 2.0 / self.epsilon
        t = self.t_max if self.t_max is not None else min(
            theoretical_round_count(instance, self.epsilon, self.gamma), ROUND_CAP_DEFAULT
        )
        g = self.gap_target if self.gap_target is not None else self.epsilon / 2.0
        return replace(self, dual_mass=c, t_max=t, gap_target=g)


def theoretical_round_count(instance: Instance, epsilon: float, gamma: float) -> int:
    """Worst-case Hedge horizon 128 G^2 ln(2Nmd+1) / eps^4 for the gap target eps/2."""
    k = 2 * instance.n_receivers * instance.m * instance.d + 1
    g = 2.0 + gamma
    return int(math.ceil(128.0 * g * g * math.log(k) / epsilon ** 4))


@dataclass(eq=False)
class SolveTrace:
    """Round-by-round record of the dynamics plus the averaged outcome.

    The returned pair averages the plays of rounds ``window_start .. rounds``
    (1-based, inclusive); the window is the full history unless a suffix
    average certified the gap target first. Within that window the predictor
    weight of a hypothesis equals its selection count divided by the window
    length.
    """

    chosen: np.ndarray      # (T,) hypothesis index per round
    gains: np.ndarray       # (T, 2Nmd+1) constraint-player payoff vectors
    lagrangian: np.ndarray  # (T,) round Lagrangian value at the played pair
    predictor: RandomizedPredictor
    dual: DualVector
    certified_gap: float
    stop_reason: str        # "gap_target" or "round_cap"
    window_start: int = 1

    @property
    def rounds(self) -> int:
        return self.chosen.shape[0]


@dataclass(frozen=True, eq=False)
class _GameData:
    """Per-hypothesis statistics the whole game runs on."""

    utils: np.ndarray        # (H,) expected sender utility per hypothesis
    signed: np.ndarray       # (H, 2Nmd) s * E[(h_j - y_j) b_i(h, a)]
    n_constraints: int

    @property
    def n_hypotheses(self) -> int:
        return self.utils.shape[0]


def _prepare(instance: Instance, dataset: Dataset, rule: ResponseRule) -> _GameData:
    utils = per_hypothesis_sender_utilities(instance, dataset, rule)
    table = per_hypothesis_violations(instance, dataset, rule)  # (H, N, d, m), (y - h) direction
    flat = table.reshape(instance.n_hypotheses, -1)
    signed = np.hstack([-flat, flat])  # s=+ carries (h - y), s=- carries (y - h)
    return _GameData(utils=utils, signed=signed, n_constraints=signed.shape[1])


def _check_dual(data: _GameData, dual: DualVector):
    if dual.entries.shape[0] != data.n_constraints + 1:
        raise DualShapeError(
            f"dual has {dual.entries.shape[0]} entries, expected {data.n_constraints + 1}"
        )


def lagrangian_value(
    instance: Instance,
    dataset: Dataset,
    predictor: RandomizedPredictor,
    dual: DualVector,
    gamma: float,
    rule: ResponseRule = STRICT,
) -> float:
    """Value of the mass-bounded game at (predictor, dual); bilinear in the pair."""
    data = _prepare(instance, dataset, rule)
    _check_dual(data, dual)
    w = predictor.weights
    if w.shape[0] != data.n_hypotheses:
        raise ValueError("predictor weights do not match the hypothesis class size")
    mix_gain = w @ data.signed - gamma
    return float(-(w @ data.utils) + dual.real @ mix_gain)


def erm_oracle(
    instance: Instance,
    dataset: Dataset,
    dual: DualVector,
    gamma: float,
    rule: ResponseRule = STRICT,
) -> int:
    """Exact enumeration argmin of the per-hypothesis Lagrangian loss; lowest index wins ties."""
    data = _prepare(instance, dataset, rule)
    _check_dual(data, dual)
    losses = -data.utils + (data.signed - gamma) @ dual.real
    return int(np.argmin(losses))


def hedge_update(dual: DualVector, gains: np.ndarray, rate: float) -> DualVector:
    """Multiplicative-weights step on the dual; mass renormalized back to C.

    The slack coordinate's gain must be zero: slack exists only to absorb
    unused mass, never to earn payoff.
    """
    g = np.asarray(gains, dtype=float)
    if g.shape != dual.entries.shape:
        raise ValueError("gain vector shape does not match the dual")
    if not np.all(np.isfinite(g)):
        raise ValueError("gains must be finite")
    if g[-1] != 0.0:
        raise ValueError("the slack coordinate's gain must be zero")
    if rate <= 0:
        raise ValueError("learning rate must be positive")
    z = rate * g
    w = dual.entries * np.exp(z - z.max())
    return DualVector(w * (dual.mass / w.sum()), dual.mass)


def _gap(data: _GameData, weights: np.ndarray, dual: DualVector, gamma: float) -> float:
    mix_gain = weights @ data.signed - gamma
    maxside = -(weights @ data.utils) + dual.mass * max(0.0, float(mix_gain.max()))
    minside = float(np.min(-data.utils + (data.signed - gamma) @ dual.real))
    return maxside - minside


def equilibrium_gap(
    instance: Instance,
    dataset: Dataset,
    predictor: RandomizedPredictor,
    dual: DualVector,
    gamma: float,
    rule: ResponseRule = STRICT,
) -> float:
    """max_dual L(f, .) minus min_hypothesis L(., dual): the equilibrium certificate.

    The inner maximization is closed-form (all mass on the most violated
    signed constraint, or on slack when none is violated); the inner
    minimization is one ERM sweep.
    """
    data = _prepare(instance, dataset, rule)
    _check_dual(data, dual)
    gap = _gap(data, predictor.weights, dual, gamma)
    if gap < -1e-9:
        raise RuntimeError(f"equilibrium gap {gap} below -1e-9; audit arithmetic is broken")
    return gap


def solve_persuasive(
    instance: Instance, dataset: Dataset, config: GameConfig
) -> tuple[RandomizedPredictor, DualVector, SolveTrace]:
    """Run ERM-vs-Hedge dynamics and return an averaged pair with its certificate.

    Each round plays the ERM best response to the current dual, then feeds the
    played hypothesis's constraint payoffs to Hedge. Two candidate pairs are
    tracked: the full-history average of the plays and a doubling-window
    suffix average (restarted whenever the round count doubles). A measured
    gap at most the target makes either pair a valid approximate equilibrium,
    so the loop stops as soon as one certifies; the full-history pair wins
    ties. Suffix averages shed the burn-in mass that makes the full average
    certify slowly on instances whose equilibrium needs a mixed dual.

    The returned predictor merges the window's hypothesis picks into weights
    (count / window length), preserving the uniform-average semantics exactly.
    """
    cfg = config.resolved(instance)
    data = _prepare(instance, dataset, cfg.rule)
    n_h = data.n_hypotheses
    k = data.n_constraints + 1
    c = cfg.dual_mass
    gain_bound = 2.0 + cfg.gamma
    rate = math.sqrt(8.0 * math.log(k) / cfg.t_max) / gain_bound
    threshold = cfg.gap_target - 1e-10

    gains_g = data.signed - cfg.gamma                     # (H, K-1)
    gains_full = np.hstack([gains_g, np.zeros((n_h, 1))])  # (H, K) slack payoff 0

    lam = np.full(k, c / k)
    lam_sum = np.zeros(k)
    gsum = np.zeros(k - 1)
    usum = 0.0
    counts = np.zeros(n_h, dtype=np.int64)
    w_lam_sum = np.zeros(k)
    w_gsum = np.zeros(k - 1)
    w_usum = 0.0
    w_counts = np.zeros(n_h, dtype=np.int64)
    w_anchor = 0  # window covers rounds (w_anchor, t]
    next_reset = 2
    chosen = np.empty(cfg.t_max, dtype=np.int64)
    lvals = np.empty(cfg.t_max)

    def pair_gap(g_mean, u_mean, lam_mean_real):
        maxside = -u_mean + c * max(0.0, float(g_mean.max()))
        minside = float(np.min(-data.utils + gains_g @ lam_mean_real))
        return maxside - minside

    stop_reason = "round_cap"
    use_window = False
    t = 0
    for t in range(1, cfg.t_max + 1):
        losses = -data.utils + gains_g @ lam[:-1]
        h = int(np.argmin(losses))
        chosen[t - 1] = h
        lvals[t - 1] = losses[h]
        counts[h] += 1
        gsum += gains_g[h]
        usum += data.utils[h]
        lam_sum += lam
        w_counts[h] += 1
        w_gsum += gains_g[h]
        w_usum += data.utils[h]
        w_lam_sum += lam
        if t == next_reset:
            w_counts[:] = 0
            w_gsum[:] = 0.0
            w_usum = 0.0
            w_lam_sum[:] = 0.0
            w_anchor = t
            next_reset *= 2

        if t % cfg.gap_check_every == 0:
            if pair_gap(gsum / t, usum / t, lam_sum[:-1] / t) <= threshold:
                stop_reason, use_window = "gap_target", False
                break
            w_len = t - w_anchor
            if w_len > 0 and pair_gap(
                w_gsum / w_len, w_usum / w_len, w_lam_sum[:-1] / w_len
            ) <= threshold:
                stop_reason, use_window = "gap_target", True
                break

        z = rate * gains_full[h]
        w = lam * np.exp(z - z.max())
        lam = w * (c / w.sum())

    rounds = t
    if stop_reason == "round_cap":
        # neither pair certified; return whichever sits closer to equilibrium
        full_gap = _gap(data, counts / rounds, DualVector(lam_sum / rounds, c), cfg.gamma)
        w_len = rounds - w_anchor
        win_gap = np.inf
        if w_len > 0:
            win_gap = _gap(
                data, w_counts / w_len, DualVector(w_lam_sum / w_len, c), cfg.gamma
            )
        use_window = win_gap < full_gap
    if use_window:
        w_len = rounds - w_anchor
        predictor = RandomizedPredictor(w_counts / w_len)
        dual = DualVector(w_lam_sum / w_len, c)
        window_start = w_anchor + 1
    else:
        predictor = RandomizedPredictor(counts / rounds)
        dual = DualVector(lam_sum / rounds, c)
        window_start = 1
    certified = _gap(data, predictor.weights, dual, cfg.gamma)
    trace = SolveTrace(
        chosen=chosen[:rounds].copy(),
        gains=np.hstack([gains_g[chosen[:rounds]], np.zeros((rounds, 1))]),
        lagrangian=lvals[:rounds].copy(),
        predictor=predictor,
        dual=dual,
        certified_gap=float(certified),
        stop_reason=stop_reason,
        window_start=window_start,
    )
    return predictor, dual, trace


# ---------------------------------------------------------------------------
# brute-force benchmark
# ---------------------------------------------------------------------------

INFEASIBLE = float("-inf")


def _simplex_grid(parts: int, q: int, _memo: dict | None = None) -> np.ndarray:
    """All integer compositions of q into ``parts`` nonnegative parts."""
    if _memo is None:
        _memo = {}
    key = (parts, q)
    hit = _memo.get(key)
    if hit is not None:
        return hit
    if parts == 1:
        out = np.array([[q]], dtype=np.int64)
    else:
        blocks = []
        for first in range(q + 1):
            rest = _simplex_grid(parts - 1, q - first, _memo)
            block = np.empty((rest.shape[0], parts), dtype=np.int64)
            block[:, 0] = first
            block[:, 1:] = rest
            blocks.append(block)
        out = np.vstack(blocks)
    _memo[key] = out
    return out


def mixture_grid_slack(instance: Instance, grid_step: float) -> float:
    """Utility resolution of the weight grid: any mixture has a grid neighbor
    within L1 distance |H| * step, and sender utility is 1-Lipschitz in that norm."""
    return instance.n_hypotheses * grid_step


def brute_force_opt(
    instance: Instance,
    dataset: Dataset,
    gamma: float,
    rule: ResponseRule = STRICT,
    grid_step: float = 0.01,
) -> float:
    """Best sender utility over the weight grid subject to the calibration bound.

    Enumerates every mixture on the simplex grid with the given step, keeps
    those whose calibration error is at most gamma + 1e-12, and returns the
    best utility (-inf when no grid mixture is feasible). A grid oracle: it
    lower-bounds the true optimum with resolution ``mixture_grid_slack``.
    """
    n_h = instance.n_hypotheses
    if n_h > 5:
        raise ValueError("brute force enumeration is capped at |H| <= 5")
    q = round(1.0 / grid_step)
    if abs(q * grid_step - 1.0) > 1e-9:
        raise ValueError("grid_step must divide 1 evenly")
    data = _prepare(instance, dataset, rule)
    base = data.signed[:, : data.n_constraints // 2]  # one sign suffices for |.|
    grid = _simplex_grid(n_h, q)
    best = INFEASIBLE
    chunk = 500_000
    for start in range(0, grid.shape[0], chunk):
        w = grid[start : start + chunk].astype(float) / q
        worst = np.abs(w @ base).max(axis=1)
        feasible = worst <= gamma + 1e-12
        if np.any(feasible):
            best = max(best, float((w[feasible] @ data.utils).max()))
    return best
