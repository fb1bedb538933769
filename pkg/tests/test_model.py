import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perscal.model import (
    Dataset,
    Instance,
    RandomizedPredictor,
    Receiver,
    ResponseRule,
    STRICT,
    Sample,
    SenderUtility,
    TabularHypothesis,
    expected_sender_utility,
    joint_response_distribution,
    quantal_response,
    receiver_lipschitz,
    receiver_utility_value,
    strict_best_response,
)
from perscal.generate import threshold_pair_dataset

from conftest import random_simple_instance, random_weights


# ---------------------------------------------------------------------------
# receiver utility and Lipschitz constant
# ---------------------------------------------------------------------------


def test_utility_value_identity_row():
    r = Receiver(action_weights=[[1.0]], action_offsets=[0.0])
    assert receiver_utility_value(r, 0, [0.3]) == pytest.approx(0.3, abs=1e-15)


def test_utility_value_flipped_row():
    r = Receiver(action_weights=[[-1.0]], action_offsets=[1.0])
    assert receiver_utility_value(r, 0, [0.3]) == pytest.approx(0.7, abs=1e-15)


def test_utility_range_violation_rejected():
    with pytest.raises(ValueError, match="outside"):
        Instance(
            d=1,
            receivers=(Receiver(action_weights=[[2.0], [0.0]], action_offsets=[0.0, 0.5]),),
            sender=SenderUtility(alphas=[0.5, 0.5], betas=[[0.0], [0.0]]),
            hypotheses=(TabularHypothesis({"c0": [0.0]}),),
        )


def test_utility_value_errors():
    r = Receiver(action_weights=[[1.0, 0.0]], action_offsets=[0.0])
    with pytest.raises(ValueError, match="dimension"):
        receiver_utility_value(r, 0, [0.1])
    with pytest.raises(ValueError, match="out of range"):
        receiver_utility_value(r, 3, [0.1, 0.2])


def test_lipschitz_values(tp_instance):
    assert receiver_lipschitz(tp_instance.receivers[0]) == 1.0
    r = Receiver(action_weights=[[0.5, 0.25]], action_offsets=[0.25])
    assert receiver_lipschitz(r) == pytest.approx(0.75)
    z = Receiver(action_weights=[[0.0, 0.0]], action_offsets=[0.5])
    assert receiver_lipschitz(z) == 0.0


# ---------------------------------------------------------------------------
# strict and quantal responses
# ---------------------------------------------------------------------------


def test_strict_best_response_fixture(tp_instance):
    r = tp_instance.receivers[0]
    assert strict_best_response(r, [0.45]) == 0
    assert strict_best_response(r, [0.55]) == 1
    # exact tie resolves to the lowest action index
    assert strict_best_response(r, [0.5]) == 0


def test_quantal_uniform_limit(tp_instance):
    r = tp_instance.receivers[0]
    p = quantal_response(r, [0.45], eta=1e-12)
    np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-9)


def test_quantal_closed_form(tp_instance):
    # utility gap 0.1 at prediction 0.45, eta=10: softmax of (5.5, 4.5)
    r = tp_instance.receivers[0]
    p = quantal_response(r, [0.45], eta=10.0)
    e = math.exp(1.0)
    np.testing.assert_allclose(p, [e / (1 + e), 1 / (1 + e)], atol=1e-12)


def test_quantal_strict_limit(tp_instance):
    r = tp_instance.receivers[0]
    p = quantal_response(r, [0.45], eta=1e6)
    np.testing.assert_allclose(p, [1.0, 0.0], atol=1e-6)


def test_quantal_rejects_bad_eta(tp_instance):
    r = tp_instance.receivers[0]
    for eta in (0.0, -1.0, float("inf"), float("nan")):
        with pytest.raises(ValueError):
            quantal_response(r, [0.45], eta=eta)
    with pytest.raises(ValueError):
        ResponseRule.quantal(-2.0)


@given(st.integers(0, 10_000), st.floats(0.1, 50.0))
@settings(max_examples=60, deadline=None)
def test_quantal_is_probability_vector(seed, eta):
    rng = np.random.default_rng(seed)
    inst = random_simple_instance(seed, n_actions=int(rng.integers(2, 5)), d=int(rng.integers(1, 3)))
    r = inst.receivers[0]
    pred = rng.uniform(inst.outcome_lo, inst.outcome_hi)
    p = quantal_response(r, pred, eta)
    assert np.all(p > 0)
    assert abs(p.sum() - 1.0) <= 1e-12


def test_strict_matches_quantal_argmax_away_from_ties():
    # prediction grids at distance >= 1e-3 from the tie surface
    rng = np.random.default_rng(7)
    hits = 0
    for seed in range(40):
        inst = random_simple_instance(seed, n_actions=3, d=2)
        r = inst.receivers[0]
        pred = rng.uniform(0.0, 1.0, size=2)
        utils = r.utilities(pred)
        top = np.sort(utils)[-2:]
        if top[1] - top[0] < 1e-3:
            continue
        hits += 1
        assert strict_best_response(r, pred) == int(np.argmax(quantal_response(r, pred, 1e6)))
    assert hits > 20


# ---------------------------------------------------------------------------
# joint responses
# ---------------------------------------------------------------------------


def _two_receiver_instance(tp_instance):
    r = tp_instance.receivers[0]
    sender = SenderUtility(alphas=[1.0, 0.0, 0.0, 0.0], betas=np.zeros((4, 1)))
    return Instance(
        d=1,
        receivers=(r, r),
        sender=sender,
        hypotheses=tp_instance.hypotheses,
        outcome_lo=[0.0],
        outcome_hi=[1.0],
    )


def test_joint_response_single_receiver(tp_instance):
    joint = joint_response_distribution(tp_instance, [0.45], ResponseRule.quantal(10.0))
    np.testing.assert_allclose(joint, quantal_response(tp_instance.receivers[0], [0.45], 10.0))


def test_joint_response_two_receivers_strict(tp_instance):
    inst2 = _two_receiver_instance(tp_instance)
    joint = joint_response_distribution(inst2, [0.45], STRICT)
    expected = np.zeros(4)
    expected[0] = 1.0  # (a0, a0) in row-major joint indexing
    np.testing.assert_allclose(joint, expected)


def test_joint_response_two_receivers_quantal(tp_instance):
    inst2 = _two_receiver_instance(tp_instance)
    single = quantal_response(tp_instance.receivers[0], [0.45], 10.0)
    joint = joint_response_distribution(inst2, [0.45], ResponseRule.quantal(10.0))
    np.testing.assert_allclose(joint, np.outer(single, single).ravel(), atol=1e-15)


def test_joint_response_cap(tp_instance):
    r = tp_instance.receivers[0]
    with pytest.raises(ValueError, match="cap"):
        Instance(
            d=1,
            receivers=(r,) * 13,  # 2^13 = 8192 > 4096
            sender=SenderUtility(alphas=np.full(2 ** 13, 0.5), betas=np.zeros((2 ** 13, 1))),
            hypotheses=tp_instance.hypotheses,
            outcome_lo=[0.0],
            outcome_hi=[1.0],
        )


# ---------------------------------------------------------------------------
# expected sender utility
# ---------------------------------------------------------------------------


def test_sender_utility_fixture_points(tp_instance, tp_dataset):
    u_lo = expected_sender_utility(tp_instance, tp_dataset, RandomizedPredictor.point_mass(0, 2))
    u_hi = expected_sender_utility(tp_instance, tp_dataset, RandomizedPredictor.point_mass(1, 2))
    assert u_lo == 1.0
    assert u_hi == 0.0


def test_sender_utility_mixture_linearity(tp_instance, tp_dataset):
    u_mix = expected_sender_utility(tp_instance, tp_dataset, RandomizedPredictor([0.5, 0.5]))
    assert u_mix == pytest.approx(0.5, abs=1e-12)


def test_sender_utility_affine_in_weights():
    inst = random_simple_instance(3, n_receivers=2, n_actions=2, d=2, n_hypotheses=3)
    from perscal.generate import sample_dataset

    ds = sample_dataset(inst, 60, seed=5)
    rng = np.random.default_rng(11)
    k = inst.n_hypotheses
    w1, w2 = random_weights(rng, k), random_weights(rng, k)
    for lam in (0.0, 0.25, 0.5, 1.0):
        mixed = RandomizedPredictor(lam * w1 + (1 - lam) * w2)
        left = expected_sender_utility(inst, ds, mixed, ResponseRule.quantal(5.0))
        right = lam * expected_sender_utility(inst, ds, RandomizedPredictor(w1), ResponseRule.quantal(5.0)) + (
            1 - lam
        ) * expected_sender_utility(inst, ds, RandomizedPredictor(w2), ResponseRule.quantal(5.0))
        assert left == pytest.approx(right, abs=1e-12)


def test_sender_utility_dimension_mismatch(tp_instance):
    bad = Dataset([Sample("c0", [0.1, 0.2])])
    with pytest.raises(ValueError, match="dimension"):
        expected_sender_utility(tp_instance, bad, RandomizedPredictor([1.0, 0.0]))


# ---------------------------------------------------------------------------
# type invariants
# ---------------------------------------------------------------------------


def test_predictor_weight_validation():
    with pytest.raises(ValueError):
        RandomizedPredictor([0.5, 0.4])
    with pytest.raises(ValueError):
        RandomizedPredictor([1.1, -0.1])
    RandomizedPredictor([0.5, 0.5 + 5e-13])  # within tolerance


def test_sample_outcome_box():
    with pytest.raises(ValueError):
        Sample("c0", [1.5])
    Dataset([Sample("c0", [1.0]), Sample("c0", [-1.0])])


def test_dataset_requires_uniform_dimension():
    with pytest.raises(ValueError):
        Dataset([Sample("c0", [0.0]), Sample("c1", [0.0, 1.0])])


def test_instance_rejects_mismatched_receivers(tp_instance):
    r3 = Receiver(action_weights=[[0.0], [0.0], [0.0]], action_offsets=[0.5, 0.5, 0.5])
    with pytest.raises(ValueError, match="share"):
        Instance(
            d=1,
            receivers=(tp_instance.receivers[0], r3),
            sender=SenderUtility(alphas=np.full(6, 0.5), betas=np.zeros((6, 1))),
            hypotheses=tp_instance.hypotheses,
            outcome_lo=[0.0],
            outcome_hi=[1.0],
        )


def test_alternating_dataset_mean_exact():
    ds = threshold_pair_dataset(k=17)
    assert float(ds.outcomes.mean()) == 0.5


@given(st.floats(0.05, 40.0))
@settings(max_examples=30, deadline=None)
def test_strict_rule_and_quantal_rule_labels(eta):
    assert STRICT.is_strict
    q = ResponseRule.quantal(eta)
    assert not q.is_strict and q.eta == eta
