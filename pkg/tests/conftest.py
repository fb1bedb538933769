import numpy as np
import pytest

from perscal.generate import (
    threshold_pair_dataset,
    threshold_pair_instance,
    two_context_dataset,
    two_context_instance,
)


@pytest.fixture(scope="session")
def tp_instance():
    return threshold_pair_instance()


@pytest.fixture(scope="session")
def tp_dataset():
    return threshold_pair_dataset(k=100)


@pytest.fixture(scope="session")
def tc_instance():
    return two_context_instance()


@pytest.fixture(scope="session")
def tc_dataset():
    return two_context_dataset()


def random_simple_instance(seed, n_receivers=1, n_actions=2, d=1, n_hypotheses=3,
                           n_contexts=3, include_mean=True):
    """Small random instance + its spec, for property-style loops."""
    from perscal.generate import InstanceSpec, generate_instance

    spec = InstanceSpec(
        n_receivers=n_receivers,
        n_actions=n_actions,
        d=d,
        n_hypotheses=n_hypotheses,
        n_contexts=n_contexts,
        include_mean_hypothesis=include_mean,
    )
    return generate_instance(spec, seed)


def random_weights(rng, k):
    w = rng.random(k)
    return w / w.sum()
