"""Calibration-constrained persuasive prediction: solver, audits, and benchmarks."""

from .model import (
    AffineHypothesis,
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

__version__ = "0.1.0"
