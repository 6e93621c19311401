"""End-to-end steps shared by the CLI and the tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import TEST, TRAIN, BACKGROUND, MatchingMatrix, PartModel, TrainingCorpus
from .cost import CostContext, Moments, compute_moments, part_models
from .encoding import encode_images, fit_pcop, encode_cop, score_regions, PcaModel
from .initialization import InitOptions, initialize_parts, uniform_matching
from .solvers import GfbOptions, IsaSchedule, SolverReport, round_to_hard, solve


@dataclass
class LearnResult:
    parts: PartModel
    matching: MatchingMatrix
    hard: MatchingMatrix
    report: SolverReport
    init_report: Optional[dict]
    context: CostContext


def learn_category(corpus: TrainingCorpus, category, P: int, solver: str = "isa",
                   moments: Optional[Moments] = None, init: InitOptions = InitOptions(),
                   isa: IsaSchedule = IsaSchedule(), gfb: Optional[GfbOptions] = None,
                   ipfp_max_iter: int = 100, parts_from: str = "solver",
                   uniform_init: bool = False) -> LearnResult:
    """Initialize, optimize and build the part models of one category.

    ``parts_from="solver"`` builds W from the solver output (soft for ISA and
    GFB); ``"hard"`` builds it from the rounded matrix.
    """
    c = corpus.category_index(category)
    if moments is None:
        moments = compute_moments(corpus)
    ctx = CostContext.for_category(corpus, c, moments)
    init_report = None
    if uniform_init:
        M0 = uniform_matching(P, ctx.n_plus, ctx.block)
    else:
        M0, rep = initialize_parts(corpus, c, P, ctx, init, return_report=True)
        init_report = rep.to_dict()
    M, report = solve(solver, M0, ctx, isa=isa, gfb=gfb, ipfp_max_iter=ipfp_max_iter)
    hard = M if M.mode == "hard" else (report.rounded or round_to_hard(M))
    source = hard if parts_from == "hard" else M
    parts = part_models(source, ctx, category=c)
    return LearnResult(parts, M, hard, report, init_report, ctx)


def labelled(images):
    return [im for im in images if im.label != BACKGROUND]


def encode_split(corpus: TrainingCorpus, models: Sequence[PartModel], scheme: str,
                 pca_dim: int = 256, pca: Optional[PcaModel] = None):
    """Signatures of the labelled train and test images.

    PCoP fits its PCA on the train CoP signatures unless ``pca`` is given.
    Returns (train_images, X_train, test_images, X_test, pca).
    """
    train = labelled(corpus.split(TRAIN))
    test = labelled(corpus.split(TEST))
    if "pcop" in scheme and pca is None:
        cop = np.vstack([encode_cop([score_regions(im, m) for m in models], im.descriptors).vector
                         for im in train])
        pca = fit_pcop(cop, pca_dim)
    Xtr = encode_images(train, models, scheme, pca)
    Xte = encode_images(test, models, scheme, pca) if test else np.zeros((0, Xtr.shape[1]))
    return train, Xtr, test, Xte, pca


def mean_descriptor_features(images) -> np.ndarray:
    """Full-image baseline: the average of an image's region descriptors."""
    return np.vstack([im.descriptors.mean(axis=1) for im in images])
