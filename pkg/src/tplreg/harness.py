"""Multi-run benchmark: seeded repetitions, distance to ground truth, histograms."""

from __future__ import annotations

import logging
import math
import statistics
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .imagecore import Image
from .objective import ObjectiveConfig, ObjectiveEvaluator, Pose
from .optim_core import Algorithm, OptimizerConfig, RunRecord, run

log = logging.getLogger(__name__)

N_BINS = 10


@dataclass(frozen=True)
class GroundTruth:
    x_g: float
    y_g: float
    s_g: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x_g, self.y_g, self.s_g])

    def as_dict(self):
        return {"x_g": self.x_g, "y_g": self.y_g, "s_g": self.s_g}

    @classmethod
    def from_dict(cls, d) -> "GroundTruth":
        return cls(float(d["x_g"]), float(d["y_g"]), float(d["s_g"]))


def distance(run_pose: Pose, gt: GroundTruth) -> float:
    """Unweighted Euclidean distance in (x, y, s), mixing pixel and scale units."""
    return math.sqrt((gt.x_g - run_pose.x) ** 2 + (gt.y_g - run_pose.y) ** 2 + (gt.s_g - run_pose.s) ** 2)


@dataclass
class AccuracyHistogram:
    bin_counts: list
    runs: int
    distances: list
    bin_width: float = 1.0

    def __post_init__(self):
        if sum(self.bin_counts) != self.runs:
            raise AssertionError("histogram counts do not sum to the run count")


def histogram(distances) -> AccuracyHistogram:
    """Unit-width bins ``[k, k+1)``; everything at or beyond 9 lands in the last bin."""
    distances = [float(d) for d in distances]
    if not distances:
        raise ValueError("histogram of an empty distance list")
    if any(not d >= 0 for d in distances):
        raise ValueError("distances must be non-negative")
    counts = [0] * N_BINS
    for d in distances:
        counts[min(int(math.floor(d)), N_BINS - 1)] += 1
    return AccuracyHistogram(counts, len(distances), distances)


@dataclass
class AlgorithmSummary:
    algorithm: Algorithm
    records: list
    distances: list
    histogram: AccuracyHistogram

    @property
    def best_distance(self) -> float:
        return min(self.distances)

    @property
    def median_distance(self) -> float:
        return statistics.median(self.distances)

    @property
    def worst_distance(self) -> float:
        return max(self.distances)

    @property
    def mean_evals(self) -> float:
        return statistics.fmean(r.evals_used for r in self.records)

    @property
    def seeds(self) -> list:
        return [r.seed for r in self.records]

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm.value,
            "label": self.algorithm.label,
            "histogram": {"bin_counts": self.histogram.bin_counts, "bin_width": self.histogram.bin_width,
                          "runs": self.histogram.runs},
            "best_distance": self.best_distance,
            "median_distance": self.median_distance,
            "worst_distance": self.worst_distance,
            "mean_evals_used": self.mean_evals,
            "seeds": self.seeds,
            "distances": self.distances,
            "records": [r.to_dict() for r in self.records],
        }


def summarize(algorithm: Algorithm, records, gt: GroundTruth) -> AlgorithmSummary:
    dists = [distance(r.best_pose, gt) for r in records]
    return AlgorithmSummary(Algorithm(algorithm), list(records), dists, histogram(dists))


@dataclass
class BenchmarkReport:
    ground_truth: GroundTruth
    summaries: dict  # Algorithm -> AlgorithmSummary, in run order
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, algorithm) -> AlgorithmSummary:
        return self.summaries[Algorithm(algorithm)]

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "ground_truth": self.ground_truth.as_dict(),
            "algorithms": [s.to_dict() for s in self.summaries.values()],
        }

    @classmethod
    def from_dict(cls, d) -> "BenchmarkReport":
        """Rebuild a report from its stored run records alone."""
        gt = GroundTruth.from_dict(d["ground_truth"])
        summaries = {}
        for entry in d["algorithms"]:
            algo = Algorithm(entry["algorithm"])
            records = [RunRecord.from_dict(r) for r in entry["records"]]
            summaries[algo] = summarize(algo, records, gt)
        return cls(gt, summaries, d.get("metadata", {}))


class RunFailure(RuntimeError):
    def __init__(self, algorithm, run_index, seed, cause):
        super().__init__(f"{Algorithm(algorithm).value} run {run_index} (seed {seed}) failed: {cause!r}")
        self.algorithm = algorithm
        self.run_index = run_index
        self.seed = seed


def derive_seed(base_seed: int, algorithm, run_index: int) -> int:
    """Stable per-run seed; independent of which other algorithms are run."""
    tag = zlib.crc32(Algorithm(algorithm).value.encode("ascii"))
    words = np.random.SeedSequence([int(base_seed), tag, int(run_index)]).generate_state(2, np.uint32)
    return (int(words[0]) << 31) ^ int(words[1])


def _one_run(task):
    scene, template, objective_config, algo, params, budget, seed, index = task
    try:
        evaluator = ObjectiveEvaluator(scene, template, objective_config, eval_budget=budget)
        return run(OptimizerConfig(algo, seed=seed, eval_budget=budget, params=params), evaluator)
    except Exception as exc:
        raise RunFailure(algo, index, seed, exc) from exc


def benchmark(scene: Image, template: Image, gt: GroundTruth, algorithms, runs_per_algorithm: int = 50,
              base_seed: int = 0, eval_budget: int = 1000, params: dict | None = None,
              objective_config: ObjectiveConfig | None = None, include_baseline: bool = True,
              jobs: int = 1, metadata: dict | None = None) -> BenchmarkReport:
    """Run every algorithm ``runs_per_algorithm`` times and summarize.

    ``params`` maps algorithms to parameter blocks (missing ones use defaults).
    The random-search baseline is appended unless already listed or disabled.
    """
    if runs_per_algorithm < 1:
        raise ValueError("runs_per_algorithm must be >= 1")
    algos = [Algorithm(a) for a in algorithms]
    if include_baseline and Algorithm.RANDOM not in algos:
        algos.append(Algorithm.RANDOM)
    params = {Algorithm(k): v for k, v in (params or {}).items()}
    objective_config = objective_config or ObjectiveConfig()

    tasks = [
        (scene, template, objective_config, algo, params.get(algo), eval_budget,
         derive_seed(base_seed, algo, i), i)
        for algo in algos
        for i in range(runs_per_algorithm)
    ]
    def collect(records):
        out = []
        for task, rec in zip(tasks, records):
            log.info("%s run %d/%d done: error %.6g, distance %.4f", task[3].value, task[7] + 1,
                     runs_per_algorithm, rec.best_error, distance(rec.best_pose, gt))
            out.append(rec)
        return out

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = collect(pool.map(_one_run, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = collect(_one_run(t) for t in tasks)

    summaries = {}
    for k, algo in enumerate(algos):
        chunk = results[k * runs_per_algorithm : (k + 1) * runs_per_algorithm]
        summaries[algo] = summarize(algo, chunk, gt)

    meta = dict(metadata or {})
    meta.setdefault("config", {
        "algorithms": [a.value for a in algos],
        "runs_per_algorithm": runs_per_algorithm,
        "base_seed": base_seed,
        "eval_budget": eval_budget,
        "penalty_c": objective_config.penalty_c,
        "bounds": objective_config.bounds.as_dict() if objective_config.bounds else "scene default",
        "params": {a.value: _params_snapshot(params.get(a)) for a in algos},
    })
    return BenchmarkReport(gt, summaries, meta)


def _params_snapshot(p):
    if p is None:
        return "defaults"
    from dataclasses import asdict, is_dataclass

    return asdict(p) if is_dataclass(p) else repr(p)
