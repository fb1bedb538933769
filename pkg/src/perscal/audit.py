"""Empirical calibration and regret audits for randomized predictors.

Decision calibration conditions the prediction residual on each receiver's
response to the prediction; full calibration conditions on the prediction
value itself. The regret family (swap / type / swap-type) measures how much a
receiver could gain in hindsight by remapping played actions or by responding
with another receiver's utility function.

All expectations are taken under the empirical dataset. Signed violations are
affine in the predictor weights because responses depend only on the realized
hypothesis, so mixture audits reduce to weighted sums of per-hypothesis
audits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Dataset,
    Instance,
    RandomizedPredictor,
    Receiver,
    ResponseRule,
    STRICT,
    TabularHypothesis,
    hypothesis_predictions,
    response_matrix,
)

REGRET_KINDS = ("swap", "type", "swap-type")


@dataclass(frozen=True, eq=False)
class CalibrationReport:
    """Signed per-constraint violations plus their worst absolute value.

    ``violations[s, i, j, a]`` is the empirical mean of (y_j - h(x)_j) times
    receiver i's response probability for action a, with sign s=0 as written
    and s=1 negated; the two signed copies mirror the two-sided constraint
    set. ``max_abs`` is the decision calibration error (smoothed when the rule
    is quantal).
    """

    violations: np.ndarray  # (2, N, d, m)
    max_abs: float
    rule: ResponseRule

    def base(self) -> np.ndarray:
        """(N, d, m) table of E[(y_j - h_j) * b_i(h, a)] without the sign copies."""
        return self.violations[0]

    def worst_constraint(self):
        """(s, i, j, a) index of the largest absolute violation, lexicographic ties."""
        idx = int(np.argmax(np.abs(self.violations)))
        return np.unravel_index(idx, self.violations.shape)

    def to_json_dict(self) -> dict:
        signs = ("+", "-")
        entries = []
        _, n, d, m = self.violations.shape
        for s in range(2):
            for i in range(n):
                for j in range(d):
                    for a in range(m):
                        entries.append(
                            {
                                "sign": signs[s],
                                "receiver": i,
                                "coordinate": j,
                                "action": a,
                                "value": float(self.violations[s, i, j, a]),
                            }
                        )
        return {"rule": self.rule.label(), "max_abs": self.max_abs, "violations": entries}


@dataclass(frozen=True)
class RegretWitness:
    """The strategy achieving the reported regret value."""

    receiver: int
    remap: tuple[int, ...] | None = None
    impersonated: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "receiver": self.receiver,
            "remap": list(self.remap) if self.remap is not None else None,
            "impersonated": self.impersonated,
        }


@dataclass(frozen=True)
class RegretReport:
    kind: str
    value: float
    witness: RegretWitness

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "witness": self.witness.to_json_dict()}


def _check_pairing(instance: Instance, dataset: Dataset, predictor: RandomizedPredictor):
    if dataset.d != instance.d:
        raise ValueError(
            f"dataset dimension {dataset.d} does not match instance dimension {instance.d}"
        )
    if predictor.weights.shape[0] != instance.n_hypotheses:
        raise ValueError("predictor weights do not match the hypothesis class size")


def per_hypothesis_violations(
    instance: Instance, dataset: Dataset, rule: ResponseRule = STRICT
) -> np.ndarray:
    """(|H|, N, d, m) table of E[(y_j - h_j) * b_i(h, a)] per hypothesis.

    This is the audit building block shared with the game solver: violations
    of a mixture are the weight-combination of these rows.
    """
    n = len(dataset)
    out = np.empty((instance.n_hypotheses, instance.n_receivers, instance.d, instance.m))
    for k, h in enumerate(instance.hypotheses):
        preds = hypothesis_predictions(instance, h, dataset)
        resid = dataset.outcomes - preds  # (n, d)
        for i, r in enumerate(instance.receivers):
            b = response_matrix(r, preds, rule)  # (n, m)
            out[k, i] = resid.T @ b / n
    return out


def decision_calibration_error(
    instance: Instance,
    dataset: Dataset,
    predictor: RandomizedPredictor,
    rule: ResponseRule = STRICT,
) -> CalibrationReport:
    """Empirical decision calibration audit (smoothed when the rule is quantal)."""
    _check_pairing(instance, dataset, predictor)
    table = per_hypothesis_violations(instance, dataset, rule)
    base = np.tensordot(predictor.weights, table, axes=1)  # (N, d, m)
    violations = np.stack([base, -base])
    return CalibrationReport(
        violations=violations, max_abs=float(np.abs(base).max()), rule=rule
    )


def _prediction_groups(instance: Instance, dataset: Dataset, predictor: RandomizedPredictor):
    """Group (hypothesis, sample) pairs by prediction value.

    Returns dict key -> [mass, value_sum, outcome_sum]; grouping is exact for
    tabular-only support and uses a 1e-9 rounding grid when any supported
    hypothesis is affine.
    """
    _check_pairing(instance, dataset, predictor)
    exact = all(
        isinstance(instance.hypotheses[k], TabularHypothesis) for k in predictor.support
    )
    n = len(dataset)
    groups: dict = {}
    for k in predictor.support:
        w = predictor.weights[k] / n
        preds = hypothesis_predictions(instance, instance.hypotheses[k], dataset)
        keys = preds if exact else np.round(preds / 1e-9) * 1e-9
        for row in range(n):
            key = tuple(keys[row])
            g = groups.get(key)
            if g is None:
                groups[key] = [w, w * preds[row], w * dataset.outcomes[row]]
            else:
                g[0] += w
                g[1] = g[1] + w * preds[row]
                g[2] = g[2] + w * dataset.outcomes[row]
    return groups


def full_calibration_error(
    instance: Instance, dataset: Dataset, predictor: RandomizedPredictor
) -> float:
    """Worst absolute residual of outcomes conditioned on the prediction value."""
    groups = _prediction_groups(instance, dataset, predictor)
    worst = 0.0
    for mass, value_sum, outcome_sum in groups.values():
        if mass <= 0:
            continue
        resid = outcome_sum / mass - value_sum / mass
        worst = max(worst, float(np.abs(resid).max()))
    return worst


# ---------------------------------------------------------------------------
# regret audits
# ---------------------------------------------------------------------------


def _cross_play_matrix(
    instance: Instance,
    dataset: Dataset,
    predictor: RandomizedPredictor,
    rule: ResponseRule,
    utility_receiver: Receiver,
    responder: Receiver,
) -> np.ndarray:
    """M[a, a'] = E_f[v_i(a', y) * b_{i'}(h(x), a)] for utilities i, responses i'."""
    n = len(dataset)
    v_out = dataset.outcomes @ utility_receiver.action_weights.T + utility_receiver.action_offsets
    m = utility_receiver.n_actions
    acc = np.zeros((m, m))
    for k in predictor.support:
        preds = hypothesis_predictions(instance, instance.hypotheses[k], dataset)
        b = response_matrix(responder, preds, rule)
        acc += predictor.weights[k] * (b.T @ v_out) / n
    return acc


def _greedy_remap(play: np.ndarray) -> tuple[np.ndarray, float]:
    """Best per-action remap of a play matrix; ties keep the played action.

    The optimal remap decomposes across played actions because each action's
    replacement contributes independently, so the per-action argmax is exact.
    """
    m = play.shape[0]
    remap = np.empty(m, dtype=int)
    gain = 0.0
    for a in range(m):
        best = int(np.argmax(play[a]))
        if play[a, best] <= play[a, a]:
            best = a
        remap[a] = best
        gain += play[a, best] - play[a, a]
    return remap, gain


def regret_audit(
    instance: Instance,
    dataset: Dataset,
    predictor: RandomizedPredictor,
    rule: ResponseRule = STRICT,
    kind: str = "swap",
    alternatives: tuple[Receiver, ...] | None = None,
) -> RegretReport:
    """Worst-case receiver regret of the given kind under the empirical dataset.

    ``alternatives`` supplies impersonation candidates for type / swap-type
    audits when the instance has a single receiver.
    """
    if kind not in REGRET_KINDS:
        raise ValueError(f"regret kind must be one of {REGRET_KINDS}, got {kind!r}")
    _check_pairing(instance, dataset, predictor)
    if kind != "swap":
        candidates = tuple(alternatives) if alternatives else instance.receivers
        if len(candidates) < 2 and alternatives is None and instance.n_receivers < 2:
            raise ValueError(
                "type and swap-type audits need a second receiver or an explicit "
                "alternative-receiver list"
            )
    best: RegretReport | None = None
    for i, receiver in enumerate(instance.receivers):
        own = _cross_play_matrix(instance, dataset, predictor, rule, receiver, receiver)
        baseline = float(np.trace(own))
        if kind == "swap":
            remap, gain = _greedy_remap(own)
            report = RegretReport(kind, gain, RegretWitness(i, tuple(int(x) for x in remap)))
        else:
            cand_best = None
            for i2, other in enumerate(candidates):
                cross = (
                    own
                    if other is receiver
                    else _cross_play_matrix(instance, dataset, predictor, rule, receiver, other)
                )
                if kind == "type":
                    value = float(np.trace(cross)) - baseline
                    witness = RegretWitness(i, None, i2)
                else:
                    remap, _ = _greedy_remap_rows(cross)
                    value = float(cross[np.arange(cross.shape[0]), remap].sum()) - baseline
                    witness = RegretWitness(i, tuple(int(x) for x in remap), i2)
                if cand_best is None or value > cand_best.value:
                    cand_best = RegretReport(kind, value, witness)
            report = cand_best
        if best is None or report.value > best.value:
            best = report
    return best


def _greedy_remap_rows(play: np.ndarray) -> tuple[np.ndarray, float]:
    """Row-wise argmax remap without the keep-tie rule (used on cross matrices)."""
    remap = np.argmax(play, axis=1)
    gain = float(play[np.arange(play.shape[0]), remap].sum())
    return remap, gain


def replay_value(
    instance: Instance,
    dataset: Dataset,
    predictor: RandomizedPredictor,
    rule: ResponseRule,
    receiver: int,
    remap: tuple[int, ...] | None = None,
    impersonated: int | None = None,
    alternatives: tuple[Receiver, ...] | None = None,
) -> float:
    """E_f[sum_a v_i(phi(a), y) * b_{i'}(h(x), a)] for a concrete strategy.

    Recomputes the payoff a regret witness claims, so audits can be verified
    independently of the search that produced them.
    """
    util_receiver = instance.receivers[receiver]
    if impersonated is None:
        responder = util_receiver
    else:
        pool = tuple(alternatives) if alternatives else instance.receivers
        responder = pool[impersonated]
    play = _cross_play_matrix(instance, dataset, predictor, rule, util_receiver, responder)
    idx = np.arange(play.shape[0]) if remap is None else np.asarray(remap)
    return float(play[np.arange(play.shape[0]), idx].sum())
