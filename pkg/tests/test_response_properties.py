"""Smoothness and approximation properties of the quantal response."""

import math

import numpy as np

from perscal.model import quantal_response, receiver_lipschitz, joint_response_distribution
from perscal.model import ResponseRule

from conftest import random_simple_instance


def test_single_receiver_lipschitz_bound():
    rng = np.random.default_rng(123)
    for seed in range(10):
        inst = random_simple_instance(seed, n_actions=3, d=2)
        r = inst.receivers[0]
        L = receiver_lipschitz(r)
        for eta in (1.0, 5.0, 25.0):
            z = rng.uniform(0, 1, size=(200, 2))
            dz = rng.uniform(-0.2, 0.2, size=(200, 2))
            z2 = np.clip(z + dz, 0, 1)
            for a, b in zip(z, z2):
                diff = np.abs(quantal_response(r, a, eta) - quantal_response(r, b, eta))
                assert diff.max() <= 2 * eta * L * np.abs(a - b).max() + 1e-9


def test_joint_lipschitz_bound():
    rng = np.random.default_rng(321)
    for seed in range(6):
        inst = random_simple_instance(seed, n_receivers=2, n_actions=3, d=2)
        L = inst.lipschitz
        for eta in (1.0, 5.0):
            rule = ResponseRule.quantal(eta)
            for _ in range(60):
                a = rng.uniform(0, 1, size=2)
                b = np.clip(a + rng.uniform(-0.3, 0.3, size=2), 0, 1)
                ja = joint_response_distribution(inst, a, rule)
                jb = joint_response_distribution(inst, b, rule)
                lhs = np.abs(ja - jb).sum()
                rhs = 2 * eta * inst.m * inst.n_receivers * L * np.abs(a - b).max() + 1e-9
                assert lhs <= rhs


def test_smoothed_play_nearly_optimal():
    # expected quantal payoff against any outcome trails the best action by at
    # most (ln m + 1) / eta
    rng = np.random.default_rng(55)
    for seed in range(10):
        inst = random_simple_instance(seed, n_actions=2 + seed % 3, d=2)
        r = inst.receivers[0]
        m = r.n_actions
        for eta in (1.0, 5.0, 25.0):
            for _ in range(50):
                y = rng.uniform(0, 1, size=2)
                utils = r.utilities(y)
                played = float(utils @ quantal_response(r, y, eta))
                assert played >= utils.max() - (math.log(m) + 1) / eta
