"""Penalized sum-squared-difference registration objective.

The template's pixel grid, scaled by ``s`` and centered on ``(x, y)``, is
mapped into the scene, which is sampled bilinearly.  The raw error is the
mean squared intensity difference over template pixels that land inside
the scene; every template pixel that lands outside adds ``penalty_c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imagecore import Image, sample_grid, template_lattice


class BudgetExhausted(RuntimeError):
    """The evaluator's evaluation budget has been used up."""


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"scale must be positive, got {self.s}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.s], dtype=np.float64)

    @classmethod
    def from_array(cls, vec) -> "Pose":
        x, y, s = (float(c) for c in vec)
        return cls(x, y, s)

    def as_dict(self):
        return {"x": self.x, "y": self.y, "s": self.s}


@dataclass(frozen=True)
class ParameterBounds:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    s_min: float
    s_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max and self.s_min < self.s_max):
            raise ValueError("each bound minimum must be below its maximum")
        if not self.s_min > 0:
            raise ValueError("s_min must be positive")

    @classmethod
    def for_scene(cls, scene: Image, s_min: float = 0.1, s_max: float = 2.0) -> "ParameterBounds":
        return cls(0.0, float(scene.width - 1), 0.0, float(scene.height - 1), s_min, s_max)

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.s_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.s_max])

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def midpoint(self) -> Pose:
        return Pose.from_array((self.lower + self.upper) / 2.0)

    def as_dict(self):
        return {k: getattr(self, k) for k in ("x_min", "x_max", "y_min", "y_max", "s_min", "s_max")}


@dataclass(frozen=True)
class ObjectiveConfig:
    penalty_c: float = 1000.0
    bounds: ParameterBounds | None = None

    def __post_init__(self):
        if not self.penalty_c > 0:
            raise ValueError("penalty_c must be positive")


@dataclass(frozen=True)
class ObjectiveResult:
    error_p: float
    error_raw: float
    out_pixels: int
    overlap: int
    pose: Pose  # the pose actually sampled, after scale clamping


def clamp_pose(pose: Pose, bounds: ParameterBounds) -> Pose:
    """Hard-limit the scale; translations are left to the penalty term."""
    s = min(max(pose.s, bounds.s_min), bounds.s_max)
    if s == pose.s:
        return pose
    return Pose(pose.x, pose.y, s)


def penalized_error(scene: Image, template: Image, pose: Pose, penalty_c: float,
                    bounds: ParameterBounds) -> ObjectiveResult:
    """Pure objective evaluation (no budget accounting)."""
    pose = clamp_pose(pose, bounds)
    xs, ys = template_lattice(template.width, template.height, pose.x, pose.y, pose.s)
    sampled, inside = sample_grid(scene, xs, ys)
    overlap = int(np.count_nonzero(inside))
    out_pixels = template.width * template.height - overlap
    if overlap:
        diff = sampled[inside] - template.data[inside]
        # exactly rounded sum, independent of summation order
        error_raw = math.fsum((diff * diff).tolist()) / overlap
    else:
        error_raw = 0.0
    return ObjectiveResult(error_raw + out_pixels * penalty_c, error_raw, out_pixels, overlap, pose)


@dataclass
class ObjectiveEvaluator:
    """Budgeted objective for a single optimizer run.

    Besides counting evaluations, the evaluator remembers the best pose it
    has ever scored, which is what a run ultimately reports.
    """

    scene: Image
    template: Image
    config: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    eval_budget: int = 1000
    record_trace: bool = False

    eval_count: int = field(default=0, init=False)
    best_result: ObjectiveResult | None = field(default=None, init=False)
    trace: list = field(default_factory=list, init=False)

    def __post_init__(self):
        if self.eval_budget < 1:
            raise ValueError("eval_budget must be >= 1")
        if self.config.bounds is None:
            self.config = ObjectiveConfig(self.config.penalty_c, ParameterBounds.for_scene(self.scene))

    @property
    def bounds(self) -> ParameterBounds:
        return self.config.bounds

    @property
    def remaining(self) -> int:
        return self.eval_budget - self.eval_count

    @property
    def best_pose(self) -> Pose | None:
        return None if self.best_result is None else self.best_result.pose

    @property
    def best_error(self) -> float:
        return math.inf if self.best_result is None else self.best_result.error_p

    def evaluate(self, pose: Pose) -> ObjectiveResult:
        if self.eval_count >= self.eval_budget:
            raise BudgetExhausted(f"evaluation budget of {self.eval_budget} exhausted")
        result = penalized_error(self.scene, self.template, pose, self.config.penalty_c, self.bounds)
        self.eval_count += 1
        if self.best_result is None or result.error_p < self.best_result.error_p:
            self.best_result = result
        if self.record_trace:
            self.trace.append((self.eval_count, self.best_result.error_p))
        return result

    def __call__(self, vec) -> float:
        """Penalized error of a raw ``(x, y, s)`` vector; used by the optimizers."""
        x, y, s = (float(c) for c in vec)
        if not s > 0:
            s = self.bounds.s_min
        return self.evaluate(Pose(x, y, s)).error_p


def evaluate(ev: ObjectiveEvaluator, pose: Pose) -> ObjectiveResult:
    return ev.evaluate(pose)


def remaining_budget(ev: ObjectiveEvaluator) -> int:
    return ev.remaining
