"""Shared optimizer plumbing: RNG, run configuration and run records.

All randomness comes from numpy's PCG64 bit generator seeded with a single
integer, so a seed reproduces a run on any platform numpy supports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .objective import ObjectiveEvaluator, ParameterBounds, Pose


class Algorithm(str, Enum):
    SIMPLEX = "simplex"
    ANNEALING = "annealing"
    GENETIC = "genetic"
    SWARM = "swarm"
    RANDOM = "random"  # uniform random search baseline

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    Algorithm.SIMPLEX: "Nelder-Mead simplex",
    Algorithm.ANNEALING: "Simulated annealing",
    Algorithm.GENETIC: "Genetic algorithm",
    Algorithm.SWARM: "Particle swarm",
    Algorithm.RANDOM: "Random search",
}

OPTIMIZERS = (Algorithm.SIMPLEX, Algorithm.ANNEALING, Algorithm.GENETIC, Algorithm.SWARM)
EVOLUTIONARY = (Algorithm.ANNEALING, Algorithm.GENETIC, Algorithm.SWARM)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class OptimizerConfig:
    algorithm: Algorithm
    seed: int = 0
    eval_budget: int = 1000
    params: Any = None  # per-algorithm parameter block; None selects defaults
    record_trace: bool = False

    def __post_init__(self):
        self.algorithm = Algorithm(self.algorithm)
        if self.eval_budget < 1:
            raise ValueError("eval_budget must be >= 1")


@dataclass
class RunRecord:
    best_pose: Pose
    best_error: float
    evals_used: int
    seed: int | None
    algorithm: Algorithm
    trace: list | None = None
    out_pixels: int = 0

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm.value,
            "seed": self.seed,
            "best_pose": self.best_pose.as_dict(),
            "best_error": self.best_error,
            "out_pixels": self.out_pixels,
            "evals_used": self.evals_used,
            "trace": self.trace,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        p = d["best_pose"]
        return cls(
            best_pose=Pose(p["x"], p["y"], p["s"]),
            best_error=d["best_error"],
            evals_used=d["evals_used"],
            seed=d["seed"],
            algorithm=Algorithm(d["algorithm"]),
            trace=d.get("trace"),
            out_pixels=d.get("out_pixels", 0),
        )


def random_pose(rng: np.random.Generator, bounds: ParameterBounds) -> Pose:
    return Pose.from_array(random_vector(rng, bounds))


def random_vector(rng: np.random.Generator, bounds: ParameterBounds) -> np.ndarray:
    return bounds.lower + rng.random(3) * bounds.span


def record_from(evaluator: ObjectiveEvaluator, algorithm: Algorithm, seed: int | None) -> RunRecord:
    """Build a RunRecord from the evaluator's best-ever sample."""
    best = evaluator.best_result
    if best is None:
        raise RuntimeError("run finished without evaluating any pose")
    return RunRecord(
        best_pose=best.pose,
        best_error=best.error_p,
        evals_used=evaluator.eval_count,
        seed=seed,
        algorithm=algorithm,
        trace=list(evaluator.trace) if evaluator.record_trace else None,
        out_pixels=best.out_pixels,
    )


def random_search(evaluator: ObjectiveEvaluator, rng: np.random.Generator) -> None:
    from .objective import BudgetExhausted

    try:
        while True:
            evaluator(random_vector(rng, evaluator.bounds))
    except BudgetExhausted:
        pass


def run(config: OptimizerConfig, evaluator: ObjectiveEvaluator) -> RunRecord:
    """Run one optimizer to budget exhaustion (or convergence) and record it."""
    from . import evolution, simplex_family, swarm

    if evaluator.eval_count != 0:
        raise ValueError("run() needs a fresh evaluator")
    evaluator.eval_budget = config.eval_budget
    evaluator.record_trace = config.record_trace
    rng = make_rng(config.seed)
    algo = config.algorithm
    params = config.params
    if algo is Algorithm.SIMPLEX:
        simplex_family.multistart_simplex(evaluator, params or simplex_family.SimplexParams(), rng)
    elif algo is Algorithm.ANNEALING:
        simplex_family.simulated_annealing(evaluator, params or simplex_family.AnnealingParams(), rng)
    elif algo is Algorithm.GENETIC:
        evolution.ga_run(evaluator, params or evolution.GaParams(), rng)
    elif algo is Algorithm.SWARM:
        swarm.pso_run(evaluator, params or swarm.SwarmParams(), rng)
    else:
        random_search(evaluator, rng)
    return record_from(evaluator, algo, config.seed)
