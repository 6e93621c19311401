"""Initial matching matrix from clustered positive regions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax
from sklearn.cluster import KMeans

from .core import MatchingMatrix, TrainingCorpus
from .cost import CostContext, Moments


class InitializationError(ValueError):
    pass


@dataclass(frozen=True)
class InitOptions:
    """``K=None`` means 5 P clusters."""

    K: int | None = None
    tau: float = 1.0
    kmeans_restarts: int = 3
    kmeans_max_iter: int = 300
    seed: int = 0
    softmax_axis: str = "regions"  # or "parts"

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.softmax_axis not in ("regions", "parts"):
            raise ValueError(f"unknown softmax axis {self.softmax_axis!r}")


@dataclass
class InitReport:
    cluster_sizes: list
    pos_scores: list
    neg_scores: list
    ranking: str
    selected: list
    dropped_empty: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"cluster_sizes": self.cluster_sizes, "pos_scores": self.pos_scores,
                "neg_scores": self.neg_scores, "ranking": self.ranking,
                "selected": self.selected, "dropped_empty": self.dropped_empty}


def _max_response(images, W: np.ndarray) -> np.ndarray:
    """Mean over images of the per-image maximum response of each classifier."""
    if not images:
        return np.zeros(W.shape[1])
    return np.mean([np.max(W.T @ im.descriptors, axis=1) for im in images], axis=0)


def rank_clusters(pos: np.ndarray, neg: np.ndarray) -> tuple[np.ndarray, str]:
    """Order clusters by s+/s- (descending); falls back to s+ - s- when any
    negative score is not safely positive, since the ratio is then meaningless."""
    if np.all(neg > 1e-12):
        key, how = pos / neg, "ratio"
    else:
        key, how = pos - neg, "difference"
    return np.argsort(-key, kind="stable"), how


def initialize_parts(corpus: TrainingCorpus, category: int, P: int, ctx: CostContext,
                     opts: InitOptions = InitOptions(), return_report: bool = False):
    """Soft M0 for one category.

    Positive regions are clustered with k-means; each cluster gets the LDA
    classifier S^-1 (mean_c - mu), clusters are ranked by how much more
    strongly they fire on positive than on negative images, and the top P
    classifiers' z-scored responses go through a softmax on every image.
    """
    moments: Moments = ctx.moments
    K = opts.K if opts.K is not None else 5 * P
    if K < P:
        raise InitializationError(f"K={K} clusters cannot provide P={P} parts")
    Xp = ctx.Xplus
    if Xp.shape[1] < K:
        raise InitializationError(f"{Xp.shape[1]} positive regions cannot form {K} clusters")
    km = KMeans(n_clusters=K, init="k-means++", n_init=opts.kmeans_restarts,
                max_iter=opts.kmeans_max_iter, random_state=opts.seed)
    labels = km.fit_predict(Xp.T)
    sizes = np.bincount(labels, minlength=K)
    keep = np.flatnonzero(sizes > 0)
    if keep.size < P:
        raise InitializationError(f"only {keep.size} non-empty clusters for P={P} parts")
    means = np.stack([Xp[:, labels == c].mean(axis=1) for c in keep], axis=1)
    Wc = moments.solve(means - moments.mu[:, None])

    pos = _max_response(corpus.positives(category), Wc)
    neg = _max_response(corpus.negatives(category), Wc)
    order, how = rank_clusters(pos, neg)
    top = order[:P]
    W = Wc[:, top]

    S = W.T @ Xp  # P x R+
    S = (S - S.mean(axis=1, keepdims=True)) / np.maximum(S.std(axis=1, keepdims=True), 1e-12)
    P_, n, R = P, ctx.n_plus, ctx.block
    Z = S.reshape(P_, n, R) / opts.tau
    if opts.softmax_axis == "regions":
        M = softmax(Z, axis=2)
    else:
        M = softmax(Z, axis=0)
    M0 = MatchingMatrix(M.reshape(P_, n * R), ctx.block, "soft")
    if not return_report:
        return M0
    report = InitReport(cluster_sizes=sizes.tolist(), pos_scores=pos.tolist(),
                        neg_scores=neg.tolist(), ranking=how,
                        selected=keep[top].tolist(), dropped_empty=int(K - keep.size))
    return M0, report


def uniform_matching(P: int, n_plus: int, block: int) -> MatchingMatrix:
    """Baseline M0 with every per-image row uniform over its regions."""
    return MatchingMatrix(np.full((P, n_plus * block), 1.0 / block), block, "soft")
