"""Part learning for image classification posed as a quadratic assignment
between parts and image regions, with Hungarian, IPFP, soft-assign and
forward-backward solvers, part-based image encodings and a linear SVM."""

from .core import ImageRecord, MatchingMatrix, PartModel, TrainingCorpus
from .cost import CostContext, compute_moments
from .initialization import InitOptions, initialize_parts
from .pipeline import learn_category
from .solvers import SOLVERS, GfbOptions, IsaSchedule, solve
from .synth import SyntheticSpec, recovery_score, synth_generate

__version__ = "0.1.0"

__all__ = [
    "ImageRecord", "MatchingMatrix", "PartModel", "TrainingCorpus", "CostContext",
    "compute_moments", "InitOptions", "initialize_parts", "learn_category", "SOLVERS",
    "GfbOptions", "IsaSchedule", "solve", "SyntheticSpec", "recovery_score", "synth_generate",
]
