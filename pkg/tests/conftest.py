"""Shared oracle helpers for the test suite.

These are deliberately independent of the library code paths they check:
plain rejection-free samplers and closed-form formulas only.
"""

import math

import numpy as np


def sample_ci_votes(accuracies, n, seed, class_prior=0.5):
    """Conditionally independent +-1 votes with known correlation accuracies.

    Draws y ~ +-1 with P(+1) = class_prior, then each vote equals y with
    probability (1 + a_j) / 2 independently. Returns (votes, y).
    """
    rng = np.random.default_rng(seed)
    a = np.asarray(accuracies, dtype=float)
    y = np.where(rng.random(n) < class_prior, 1, -1).astype(np.int8)
    agree = rng.random((n, a.size)) < (1.0 + a) / 2.0
    votes = np.where(agree, y[:, None], -y[:, None]).astype(np.int8)
    return votes, y


def normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def logistic(z):
    return 1.0 / (1.0 + math.exp(-z))
