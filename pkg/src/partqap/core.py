"""Domain types: region rectangles, image records, training corpora,
matching matrices and part models, plus constraint-set membership tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

TRAIN = "train"
TEST = "test"
BACKGROUND = -1  # label of negative-only images that belong to no category

DEFAULT_TOL = 1e-6


def _frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RegionRect:
    """Axis-aligned region in normalized image coordinates."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0 and self.x >= 0 and self.y >= 0
                and self.x + self.w <= 1 + 1e-6 and self.y + self.h <= 1 + 1e-6):
            raise ValueError(f"invalid region rect {self!r}")

    @property
    def center(self) -> tuple[float, float]:
        return self.x + 0.5 * self.w, self.y + 0.5 * self.h


@dataclass(frozen=True, eq=False)
class ImageRecord:
    """One image: ``descriptors`` is d x |R| (column r describes region r)
    and ``rects`` is a |R| x 4 array of (x, y, w, h)."""

    image_id: str
    label: int
    split: str
    descriptors: np.ndarray
    rects: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "descriptors", _frozen(self.descriptors))
        object.__setattr__(self, "rects", _frozen(np.reshape(self.rects, (-1, 4))))
        if self.descriptors.ndim != 2:
            raise ValueError(f"{self.image_id}: descriptors must be a d x |R| matrix")

    @property
    def d(self) -> int:
        return self.descriptors.shape[0]

    @property
    def n_regions(self) -> int:
        return self.descriptors.shape[1]

    def rect(self, r: int) -> RegionRect:
        return RegionRect(*map(float, self.rects[r]))


@dataclass(frozen=True, eq=False)
class TrainingCorpus:
    """All images of a dataset, both splits.

    Positive images of category ``c`` are the training images labelled ``c``;
    every other training image (other categories and background) is negative.
    """

    images: tuple[ImageRecord, ...]
    d: int
    n_regions: int
    categories: tuple[str, ...]
    preprocessing: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "categories", tuple(self.categories))

    @property
    def category_count(self) -> int:
        return len(self.categories)

    def category_index(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            return int(name_or_index)
        return self.categories.index(name_or_index)

    def split(self, split: str) -> list[ImageRecord]:
        return [im for im in self.images if im.split == split]

    def train_images(self) -> list[ImageRecord]:
        return self.split(TRAIN)

    def positives(self, category: int) -> list[ImageRecord]:
        return [im for im in self.images if im.split == TRAIN and im.label == category]

    def negatives(self, category: int) -> list[ImageRecord]:
        return [im for im in self.images if im.split == TRAIN and im.label != category]

    def n_positive(self, category: int) -> int:
        return len(self.positives(category))

    def train_matrix(self) -> np.ndarray:
        """d x R matrix of every training region descriptor."""
        return np.hstack([im.descriptors for im in self.train_images()])

    def positive_matrix(self, category: int) -> np.ndarray:
        """d x R+ matrix of the positive regions, image blocks in corpus order."""
        return np.hstack([im.descriptors for im in self.positives(category)])


def validate_corpus(corpus: TrainingCorpus) -> list[str]:
    """Return the list of problems that make ``corpus`` unusable (empty if fine)."""
    problems = []
    seen = set()
    for im in corpus.images:
        if im.image_id in seen:
            problems.append(f"{im.image_id}: duplicate image id")
        seen.add(im.image_id)
        if im.descriptors.shape[1] != im.rects.shape[0]:
            problems.append(
                f"{im.image_id}: count mismatch ({im.descriptors.shape[1]} descriptors,"
                f" {im.rects.shape[0]} rects)")
        if im.descriptors.shape[0] != corpus.d:
            problems.append(
                f"{im.image_id}: dimension mismatch (d={im.descriptors.shape[0]},"
                f" corpus d={corpus.d})")
        if im.descriptors.shape[1] != corpus.n_regions:
            problems.append(
                f"{im.image_id}: region count {im.descriptors.shape[1]} differs from"
                f" corpus |R|={corpus.n_regions}")
        if not np.all(np.isfinite(im.descriptors)):
            problems.append(f"{im.image_id}: non-finite descriptor")
        if im.split not in (TRAIN, TEST):
            problems.append(f"{im.image_id}: unknown split {im.split!r}")
        if im.label != BACKGROUND and not 0 <= im.label < corpus.category_count:
            problems.append(f"{im.image_id}: label {im.label} out of range")
    for c, name in enumerate(corpus.categories):
        if not corpus.positives(c):
            problems.append(f"category {name!r}: empty category (no training images)")
    return problems


@dataclass(frozen=True, eq=False)
class MatchingMatrix:
    """P x R+ assignment of positive regions to parts.

    Columns come in consecutive per-image blocks of width ``block``.
    ``mode`` is ``"hard"`` for members of the binary set and ``"soft"``
    for relaxed iterates; it is a label, membership is checked by
    :meth:`in_M` / :meth:`in_S`.
    """

    values: np.ndarray
    block: int
    mode: str = "soft"

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2:
            raise ValueError("matching matrix must be 2-D")
        if self.block <= 0 or v.shape[1] % self.block:
            raise ValueError(
                f"{v.shape[1]} columns do not split into blocks of width {self.block}")
        if self.mode not in ("hard", "soft"):
            raise ValueError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "values", v)

    @property
    def n_parts(self) -> int:
        return self.values.shape[0]

    @property
    def n_images(self) -> int:
        return self.values.shape[1] // self.block

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def blocks(self) -> Iterator[np.ndarray]:
        for i in range(self.n_images):
            yield self.values[:, i * self.block:(i + 1) * self.block]

    def block_row_sums(self) -> np.ndarray:
        """P x n+ matrix of per-image row sums."""
        return self.values.reshape(self.n_parts, self.n_images, self.block).sum(axis=2)

    def in_M(self) -> bool:
        return in_M(self)

    def in_S(self, eps: float = DEFAULT_TOL) -> bool:
        return in_S(self, eps)


def in_M(M: MatchingMatrix) -> bool:
    """Binary, column sums <= 1, every per-image block row sum exactly 1."""
    v = M.values
    if not np.all((v == 0) | (v == 1)):
        return False
    if np.any(v.sum(axis=0) > 1):
        return False
    return bool(np.all(M.block_row_sums() == 1))


def in_S(M: MatchingMatrix, eps: float = DEFAULT_TOL) -> bool:
    """Box, column-sum and per-image row-sum constraints within ``eps``."""
    v = M.values
    if np.any(v < -eps) or np.any(v > 1 + eps):
        return False
    if np.any(v.sum(axis=0) > 1 + eps):
        return False
    return bool(np.all(np.abs(M.block_row_sums() - 1) <= eps))


def constraint_residual(M: MatchingMatrix) -> float:
    """Largest violation among row sums, column overflow and box bounds."""
    v = M.values
    row = np.max(np.abs(M.block_row_sums() - 1))
    col = max(0.0, float(np.max(v.sum(axis=0))) - 1)
    box = max(0.0, -float(v.min()), float(v.max()) - 1)
    return float(max(row, col, box))


@dataclass(frozen=True, eq=False)
class PartModel:
    """d x P matrix whose column p is the LDA classifier of part p."""

    W: np.ndarray
    category: int

    def __post_init__(self):
        W = _frozen(self.W)
        if W.ndim != 2:
            raise ValueError("W must be d x P")
        if not np.all(np.isfinite(W)):
            raise ValueError("part model has non-finite entries")
        object.__setattr__(self, "W", W)

    @property
    def n_parts(self) -> int:
        return self.W.shape[1]

    @property
    def d(self) -> int:
        return self.W.shape[0]

