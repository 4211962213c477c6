"""Template registration by derivative-free optimization of a penalized SSD."""

from .imagecore import Image, extract_template, load_image, sample_bilinear, save_pgm, synthetic_scene
from .objective import (
    BudgetExhausted,
    ObjectiveConfig,
    ObjectiveEvaluator,
    ObjectiveResult,
    ParameterBounds,
    Pose,
    clamp_pose,
)
from .optim_core import Algorithm, OptimizerConfig, RunRecord, run
from .harness import BenchmarkReport, GroundTruth, benchmark, distance, histogram

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "BenchmarkReport",
    "BudgetExhausted",
    "GroundTruth",
    "Image",
    "ObjectiveConfig",
    "ObjectiveEvaluator",
    "ObjectiveResult",
    "OptimizerConfig",
    "ParameterBounds",
    "Pose",
    "RunRecord",
    "benchmark",
    "clamp_pose",
    "distance",
    "extract_template",
    "histogram",
    "load_image",
    "run",
    "sample_bilinear",
    "save_pgm",
    "synthetic_scene",
]
