"""Planted-parts benchmark: synthetic corpora with known part locations."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .core import BACKGROUND, TEST, TRAIN, ImageRecord, MatchingMatrix, TrainingCorpus
from .formats import quantize
from .projections import assign_max


@dataclass(frozen=True)
class SyntheticSpec:
    """``noise`` is relative: a planted region is its prototype plus a
    Gaussian vector of expected norm ``noise * ||prototype||``.
    Prototypes have unit norm; background regions are N(0, spread^2 / d I)."""

    categories: int = 2
    parts: int = 4
    d: int = 16
    n_pos: int = 20
    n_test: int = 20
    n_regions: int = 30
    noise: float = 0.05
    background_spread: float = 1.0
    n_background: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.parts > self.n_regions:
            raise ValueError(f"cannot plant {self.parts} parts in {self.n_regions} regions")
        if self.noise < 0 or self.background_spread < 0:
            raise ValueError("noise and background spread must be non-negative")
        if self.categories < 1 or self.n_pos < 1:
            raise ValueError("need at least one category with one positive image")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GroundTruth:
    """image_id -> planted region index of each true part."""

    planted: dict

    def for_images(self, image_ids) -> list:
        return [self.planted[i] for i in image_ids]

    def to_dict(self) -> dict:
        return {"planted": {k: list(v) for k, v in self.planted.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls({k: [int(x) for x in v] for k, v in d["planted"].items()})


def random_rects(rng: np.random.Generator, count: int) -> np.ndarray:
    """Square regions with side log-uniform in [0.05, 0.5], uniform position."""
    side = np.exp(rng.uniform(np.log(0.05), np.log(0.5), count))
    x = rng.uniform(0, 1 - side)
    y = rng.uniform(0, 1 - side)
    return quantize(np.stack([x, y, side, side], axis=1))


def synth_generate(spec: SyntheticSpec) -> tuple[TrainingCorpus, GroundTruth]:
    rng = np.random.default_rng(spec.seed)
    d, R, P = spec.d, spec.n_regions, spec.parts
    protos = rng.standard_normal((spec.categories, P, d))
    protos /= np.linalg.norm(protos, axis=2, keepdims=True)
    bg_scale = spec.background_spread / np.sqrt(d)
    noise_scale = spec.noise / np.sqrt(d)

    images, planted = [], {}

    def make(image_id, label, split):
        X = bg_scale * rng.standard_normal((d, R))
        if label != BACKGROUND:
            idx = rng.choice(R, size=P, replace=False)
            X[:, idx] = (protos[label] + noise_scale * rng.standard_normal((P, d))).T
            planted[image_id] = [int(i) for i in idx]
        images.append(ImageRecord(image_id, label, split, quantize(X), random_rects(rng, R)))

    names = [f"cat{c}" for c in range(spec.categories)]
    for c in range(spec.categories):
        for i in range(spec.n_pos):
            make(f"{names[c]}_train_{i:04d}", c, TRAIN)
    for i in range(spec.n_background):
        make(f"background_train_{i:04d}", BACKGROUND, TRAIN)
    for c in range(spec.categories):
        for i in range(spec.n_test):
            make(f"{names[c]}_test_{i:04d}", c, TEST)
    corpus = TrainingCorpus(tuple(images), d, R, tuple(names),
                            {"sqrt": False, "l2": False, "applied": False})
    return corpus, GroundTruth(planted)


def recovery_score(M: MatchingMatrix, truth) -> float:
    """Fraction of planted (image, part) slots recovered, under the best
    global relabeling of learned parts to true parts.

    ``truth`` lists, for each image block of ``M`` in order, the planted
    region index of every true part.
    """
    truth = np.asarray(truth, dtype=int)
    n, P_true = truth.shape
    if n != M.n_images:
        raise ValueError(f"truth covers {n} images, matrix has {M.n_images}")
    P = M.n_parts
    if P != P_true:
        warnings.warn(f"scoring {min(P, P_true)} parts: learned P={P}, planted {P_true}",
                      stacklevel=2)
    blocks = M.values.reshape(P, n, M.block)
    # agree[p, q] = number of images where part p sits on the region of true part q
    agree = np.zeros((P, P_true))
    for q in range(P_true):
        agree[:, q] = blocks[:, np.arange(n), truth[:, q]].sum(axis=1)
    if P <= P_true:
        total = agree[np.arange(P), assign_max(agree)].sum()
    else:
        total = agree.T[np.arange(P_true), assign_max(agree.T)].sum()
    return float(total / (n * min(P, P_true)))
