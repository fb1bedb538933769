import math

import numpy as np
import pytest

from perscal.audit import (
    CalibrationReport,
    decision_calibration_error,
    full_calibration_error,
    per_hypothesis_violations,
    regret_audit,
    replay_value,
)
from perscal.generate import sample_dataset
from perscal.model import (
    Instance,
    RandomizedPredictor,
    ResponseRule,
    STRICT,
    TabularHypothesis,
    quantal_response,
    receiver_lipschitz,
    strict_best_response,
)

from conftest import random_simple_instance, random_weights


def brute_violation_table(instance, dataset, predictor, rule):
    """Per-(i,j,a) signed violations by direct per-sample loops (oracle path)."""
    n = len(dataset)
    out = np.zeros((instance.n_receivers, instance.d, instance.m))
    for k, h in enumerate(instance.hypotheses):
        w = predictor.weights[k]
        if w == 0:
            continue
        for s in dataset.samples:
            pred = np.asarray(h.values[s.context_id])
            for i, r in enumerate(instance.receivers):
                if rule.is_strict:
                    b = np.zeros(instance.m)
                    b[strict_best_response(r, pred)] = 1.0
                else:
                    b = quantal_response(r, pred, rule.eta)
                for j in range(instance.d):
                    out[i, j] += w * (s.outcome[j] - pred[j]) * b / n
    return out


def with_constant_mean_hypothesis(instance, dataset):
    """Extend H with the constant predictor at the dataset's empirical mean."""
    mean = dataset.outcomes.mean(axis=0)
    contexts = set()
    for h in instance.hypotheses:
        contexts.update(h.values.keys())
    const = TabularHypothesis({c: mean for c in sorted(contexts)})
    return Instance(
        d=instance.d,
        receivers=instance.receivers,
        sender=instance.sender,
        hypotheses=instance.hypotheses + (const,),
        joint_action_cap=instance.joint_action_cap,
        outcome_lo=instance.outcome_lo,
        outcome_hi=instance.outcome_hi,
    )


# ---------------------------------------------------------------------------
# decision calibration
# ---------------------------------------------------------------------------


def test_decce_threshold_pair_points(tp_instance, tp_dataset):
    lo = decision_calibration_error(tp_instance, tp_dataset, RandomizedPredictor.point_mass(0, 2))
    hi = decision_calibration_error(tp_instance, tp_dataset, RandomizedPredictor.point_mass(1, 2))
    assert lo.max_abs == pytest.approx(0.05, abs=1e-12)
    assert hi.max_abs == pytest.approx(0.05, abs=1e-12)
    # h_lo drives action 0 always: the (j=0, a=0) residual is +0.05, action 1 idle
    assert lo.base()[0, 0, 0] == pytest.approx(0.05, abs=1e-12)
    assert lo.base()[0, 0, 1] == 0.0


def test_decce_constant_mean_is_zero():
    for seed in range(4):
        inst = random_simple_instance(seed, n_actions=3, d=2, include_mean=False)
        ds = sample_dataset(inst, 157, seed=seed + 50)
        inst2 = with_constant_mean_hypothesis(inst, ds)
        f = RandomizedPredictor.point_mass(inst2.n_hypotheses - 1, inst2.n_hypotheses)
        rep = decision_calibration_error(inst2, ds, f)
        assert rep.max_abs <= 1e-12


def test_decce_two_context_exact_means(tc_instance, tc_dataset):
    rep = decision_calibration_error(tc_instance, tc_dataset, RandomizedPredictor.point_mass(0, 2))
    assert rep.max_abs <= 1e-12


def test_decce_sign_antisymmetry(tp_instance, tp_dataset):
    rep = decision_calibration_error(tp_instance, tp_dataset, RandomizedPredictor([0.3, 0.7]))
    np.testing.assert_array_equal(rep.violations[0], -rep.violations[1])
    assert rep.max_abs == np.abs(rep.violations).max()


def test_decce_matches_bruteforce_oracle():
    for seed in (0, 1, 2):
        inst = random_simple_instance(seed, n_receivers=2, n_actions=3, d=2, n_hypotheses=3)
        ds = sample_dataset(inst, 83, seed=seed + 9)
        f = RandomizedPredictor(random_weights(np.random.default_rng(seed), inst.n_hypotheses))
        for rule in (STRICT, ResponseRule.quantal(7.0)):
            rep = decision_calibration_error(inst, ds, f, rule)
            oracle = brute_violation_table(inst, ds, f, rule)
            np.testing.assert_allclose(rep.base(), oracle, atol=1e-12)


def test_violations_affine_in_weights():
    inst = random_simple_instance(5, n_actions=3, d=1, n_hypotheses=4)
    ds = sample_dataset(inst, 64, seed=3)
    table = per_hypothesis_violations(inst, ds, STRICT)
    rng = np.random.default_rng(2)
    w1, w2 = random_weights(rng, inst.n_hypotheses), random_weights(rng, inst.n_hypotheses)
    mix = RandomizedPredictor(0.25 * w1 + 0.75 * w2)
    rep = decision_calibration_error(inst, ds, mix)
    combo = np.tensordot(0.25 * w1 + 0.75 * w2, table, axes=1)
    np.testing.assert_allclose(rep.base(), combo, atol=1e-14)


def test_decce_dimension_mismatch(tp_instance, tc_dataset):
    from perscal.model import Dataset, Sample

    bad = Dataset([Sample("c0", [0.1, 0.1])])
    with pytest.raises(ValueError, match="dimension"):
        decision_calibration_error(tp_instance, bad, RandomizedPredictor([1.0, 0.0]))


# ---------------------------------------------------------------------------
# full calibration
# ---------------------------------------------------------------------------


def test_full_calibration_constant_mean():
    inst = random_simple_instance(11, n_actions=2, d=2, include_mean=False)
    ds = sample_dataset(inst, 41, seed=4)
    inst2 = with_constant_mean_hypothesis(inst, ds)
    f = RandomizedPredictor.point_mass(inst2.n_hypotheses - 1, inst2.n_hypotheses)
    assert full_calibration_error(inst2, ds, f) <= 1e-12


def test_full_calibration_two_context(tc_instance, tc_dataset):
    assert full_calibration_error(tc_instance, tc_dataset, RandomizedPredictor.point_mass(0, 2)) <= 1e-12


def test_full_calibration_threshold_pair(tp_instance, tp_dataset):
    err = full_calibration_error(tp_instance, tp_dataset, RandomizedPredictor.point_mass(0, 2))
    assert err == pytest.approx(0.05, abs=1e-12)


# ---------------------------------------------------------------------------
# regret audits
# ---------------------------------------------------------------------------


def test_swap_regret_constant_mean_zero():
    inst = random_simple_instance(21, n_actions=3, d=1, include_mean=False)
    ds = sample_dataset(inst, 101, seed=8)
    inst2 = with_constant_mean_hypothesis(inst, ds)
    f = RandomizedPredictor.point_mass(inst2.n_hypotheses - 1, inst2.n_hypotheses)
    rep = regret_audit(inst2, ds, f, STRICT, "swap")
    assert rep.value <= 1e-12


def test_swap_regret_threshold_pair_tie(tp_instance, tp_dataset):
    rep = regret_audit(tp_instance, tp_dataset, RandomizedPredictor.point_mass(0, 2), STRICT, "swap")
    assert rep.value == pytest.approx(0.0, abs=1e-12)
    # both actions earn 0.5 against the 0.5 mean; the greedy remap keeps ties
    assert rep.witness.remap == (0, 1)


def test_type_regret_identical_receivers(tp_instance, tp_dataset):
    r = tp_instance.receivers[0]
    from perscal.model import SenderUtility

    inst2 = Instance(
        d=1,
        receivers=(r, r),
        sender=SenderUtility(alphas=np.full(4, 0.5), betas=np.zeros((4, 1))),
        hypotheses=tp_instance.hypotheses,
        outcome_lo=[0.0],
        outcome_hi=[1.0],
    )
    rep = regret_audit(inst2, tp_dataset, RandomizedPredictor([0.4, 0.6]), STRICT, "type")
    assert rep.value == pytest.approx(0.0, abs=1e-12)


def test_type_regret_requires_alternatives(tp_instance, tp_dataset):
    with pytest.raises(ValueError, match="alternative"):
        regret_audit(tp_instance, tp_dataset, RandomizedPredictor([1.0, 0.0]), STRICT, "type")


def test_regret_audit_rejects_bad_kind(tp_instance, tp_dataset):
    with pytest.raises(ValueError, match="kind"):
        regret_audit(tp_instance, tp_dataset, RandomizedPredictor([1.0, 0.0]), STRICT, "internal")


def test_witness_reproduces_value():
    rng = np.random.default_rng(0)
    for seed in range(6):
        inst = random_simple_instance(seed, n_receivers=2, n_actions=3, d=1, n_hypotheses=4)
        ds = sample_dataset(inst, 59, seed=seed)
        f = RandomizedPredictor(random_weights(rng, inst.n_hypotheses))
        for kind in ("swap", "type", "swap-type"):
            rep = regret_audit(inst, ds, f, STRICT, kind)
            w = rep.witness
            played = replay_value(inst, ds, f, STRICT, w.receiver)
            deviated = replay_value(
                inst, ds, f, STRICT, w.receiver, remap=w.remap, impersonated=w.impersonated
            )
            assert deviated - played == pytest.approx(rep.value, abs=1e-12)


@pytest.mark.parametrize("rule_eta", [None, 5.0, 25.0])
def test_regret_bounded_by_calibration(rule_eta):
    """Swap/type/swap-type regret is at most 2 L m times the calibration error
    (plus the softmax approximation term under the quantal rule)."""
    rng = np.random.default_rng(77)
    rule = STRICT if rule_eta is None else ResponseRule.quantal(rule_eta)
    for seed in range(12):
        n_rec = 1 + seed % 2
        inst = random_simple_instance(
            seed + 100,
            n_receivers=n_rec,
            n_actions=2 + seed % 2,
            d=1 + seed % 2,
            n_hypotheses=2 + seed % 5,
        )
        ds = sample_dataset(inst, 97, seed=seed)
        f = RandomizedPredictor(random_weights(rng, inst.n_hypotheses))
        err = decision_calibration_error(inst, ds, f, rule).max_abs
        L = inst.lipschitz
        slack = 0.0 if rule.is_strict else (math.log(inst.m) + 1) / rule.eta
        bound = 2 * L * inst.m * err + slack + 1e-9
        for kind in ("swap", "type", "swap-type"):
            if kind != "swap" and n_rec < 2:
                continue
            rep = regret_audit(inst, ds, f, rule, kind)
            assert rep.value <= bound, (seed, kind, rep.value, bound)
