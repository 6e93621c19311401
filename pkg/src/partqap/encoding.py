"""Image signatures built from learned parts: BoP, SBoP, CoP and PCoP."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ImageRecord, PartModel

SCHEMES = ("bop", "sbop", "cop", "pcop", "bop+cop", "sbop+pcop")


@dataclass(frozen=True, eq=False)
class ImageEncoding:
    vector: np.ndarray
    scheme: str

    @property
    def dimension(self) -> int:
        return self.vector.shape[0]


def score_regions(image: ImageRecord, parts: PartModel) -> np.ndarray:
    """P x |R| matrix of <w_p, x_r>."""
    if image.d != parts.d:
        raise ValueError(f"dimension mismatch: image d={image.d}, parts d={parts.d}")
    return parts.W.T @ image.descriptors


def encode_bop(scores: Sequence[np.ndarray]) -> ImageEncoding:
    """Per part (max, mean) over regions; parts of every category in order."""
    feats = [np.stack([S.max(axis=1), S.mean(axis=1)], axis=1).ravel() for S in scores]
    return ImageEncoding(np.concatenate(feats), "bop")


def grid_cells(rects: np.ndarray) -> np.ndarray:
    """2x2 cell index of every region center: 0 top-left, 1 top-right,
    2 bottom-left, 3 bottom-right.  Centers on a midline go right/down."""
    cx = rects[:, 0] + 0.5 * rects[:, 2]
    cy = rects[:, 1] + 0.5 * rects[:, 3]
    return (cx >= 0.5).astype(int) + 2 * (cy >= 0.5).astype(int)


def encode_sbop(scores: Sequence[np.ndarray], rects: np.ndarray) -> ImageEncoding:
    """BoP followed by per-part maxima over the four grid cells.

    A cell holding no region center takes the part's minimum score over
    the image.
    """
    cells = grid_cells(np.asarray(rects))
    spatial = []
    for S in scores:
        fill = S.min(axis=1)
        out = np.empty((S.shape[0], 4))
        for c in range(4):
            inside = cells == c
            out[:, c] = S[:, inside].max(axis=1) if inside.any() else fill
        spatial.append(out.ravel())
    bop = encode_bop(scores).vector
    return ImageEncoding(np.concatenate([bop, *spatial]), "sbop")


def encode_cop(scores: Sequence[np.ndarray], descriptors: np.ndarray) -> ImageEncoding:
    """Descriptor of the best-scoring region of every part (first on ties)."""
    feats = [descriptors[:, np.argmax(S, axis=1)].T.ravel() for S in scores]
    return ImageEncoding(np.concatenate(feats), "cop")


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # k x D, orthonormal rows

    @property
    def dimension(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "components": self.components.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        return cls(np.asarray(d["mean"], float), np.asarray(d["components"], float))


def fit_pcop(train: np.ndarray, dim: int = 256, rank_tol: float = 1e-10) -> PcaModel:
    """Centered PCA on the rows of ``train`` keeping min(dim, rank) axes."""
    X = np.asarray(train, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("PCA needs at least 2 training encodings")
    mean = X.mean(axis=0)
    _, s, Vt = np.linalg.svd(X - mean, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise ValueError("zero-variance input: PCA is undefined")
    rank = int(np.sum(s > rank_tol * s[0]))
    k = min(dim, rank)
    comps = Vt[:k]
    # sign convention: largest-magnitude coordinate of each axis positive
    flip = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    return PcaModel(mean=mean, components=comps * flip[:, None])


def apply_pcop(encoding, model: PcaModel) -> ImageEncoding:
    v = np.asarray(getattr(encoding, "vector", encoding), dtype=float)
    z = model.components @ (v - model.mean)
    nrm = np.linalg.norm(z)
    return ImageEncoding(z / nrm if nrm > 0 else z, "pcop")


def concat(*encodings: ImageEncoding) -> ImageEncoding:
    return ImageEncoding(np.concatenate([e.vector for e in encodings]),
                         "+".join(e.scheme for e in encodings))


def encoding_dimension(scheme: str, P: int, categories: int, d: int,
                       pca_dim: int | None = None) -> int:
    """Closed-form length of a signature."""
    sizes = {"bop": 2 * P * categories, "sbop": 6 * P * categories,
             "cop": d * P * categories, "pcop": pca_dim}
    return sum(sizes[s] for s in scheme.split("+"))


def encode_images(images: Sequence[ImageRecord], models: Sequence[PartModel],
                  scheme: str, pca: PcaModel | None = None) -> np.ndarray:
    """Signatures of many images (one row each) for a scheme in :data:`SCHEMES`.

    ``pcop`` needs a fitted ``pca`` (see :func:`fit_pcop` on CoP rows).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    rows = []
    for im in images:
        scores = [score_regions(im, m) for m in models]
        parts = []
        for s in scheme.split("+"):
            if s == "bop":
                parts.append(encode_bop(scores))
            elif s == "sbop":
                parts.append(encode_sbop(scores, im.rects))
            elif s == "cop":
                parts.append(encode_cop(scores, im.descriptors))
            else:
                if pca is None:
                    raise ValueError("pcop encoding needs a fitted PCA model")
                parts.append(apply_pcop(encode_cop(scores, im.descriptors), pca))
        rows.append(concat(*parts).vector)
    return np.vstack(rows)
