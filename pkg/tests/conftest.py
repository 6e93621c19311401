import sys
import itertools

import numpy as np
import pytest

from partqap.core import ImageRecord, MatchingMatrix, TrainingCorpus, TRAIN
from partqap.cost import CostContext, Moments


def random_hard(rng, P, n, R):
    """Uniformly random member of the hard set."""
    M = np.zeros((P, n * R))
    for i in range(n):
        cols = rng.choice(R, size=P, replace=False)
        M[np.arange(P), i * R + cols] = 1
    return MatchingMatrix(M, R, "hard")


def random_soft(rng, P, n, R):
    """Positive matrix with unit per-image row sums."""
    M = rng.random((P, n, R)) + 0.05
    M /= M.sum(axis=2, keepdims=True)
    return MatchingMatrix(M.reshape(P, n * R), R, "soft")


def random_context(rng, d, n, R, lam=0.1):
    X = rng.standard_normal((d, 3 * n * R))
    mu = X.mean(axis=1)
    cov = np.cov(X, bias=True)
    moments = Moments.from_covariance(mu, cov, lam)
    return CostContext.build(moments, rng.standard_normal((d, n * R)), R)


def identity_context(Xplus, block, mu=None):
    Xplus = np.asarray(Xplus, float)
    d = Xplus.shape[0]
    mu = np.zeros(d) if mu is None else mu
    return CostContext.build(Moments.from_covariance(mu, np.eye(d)), Xplus, block)


def enumerate_hard(P, n, R):
    """Every member of the hard set, as dense arrays."""
    per_image = []
    for perm in itertools.permutations(range(R), P):
        B = np.zeros((P, R))
        B[np.arange(P), perm] = 1
        per_image.append(B)
    for combo in itertools.product(per_image, repeat=n):
        yield np.hstack(combo)


def make_corpus(rng, d=3, R=4, counts=(3, 2), n_background=1, n_test=1):
    images = []
    for c, k in enumerate(counts):
        for i in range(k):
            images.append(ImageRecord(f"c{c}_{i}", c, TRAIN, rng.standard_normal((d, R)),
                                      np.tile([0.1, 0.1, 0.2, 0.2], (R, 1))))
        for i in range(n_test):
            images.append(ImageRecord(f"c{c}_t{i}", c, "test", rng.standard_normal((d, R)),
                                      np.tile([0.1, 0.1, 0.2, 0.2], (R, 1))))
    for i in range(n_background):
        images.append(ImageRecord(f"bg_{i}", -1, TRAIN, rng.standard_normal((d, R)),
                                  np.tile([0.5, 0.5, 0.2, 0.2], (R, 1))))
    return TrainingCorpus(tuple(images), d, R, tuple(f"cat{c}" for c in range(len(counts))))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
