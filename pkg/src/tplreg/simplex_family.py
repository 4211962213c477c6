"""Nelder-Mead simplex search and its simulated-annealing variant.

Both share one step routine.  The annealing variant follows the classic
simplex-annealing construction: at every step each stored vertex value is
seen through a positive thermal fluctuation ``-T*ln(u)`` and each trial
point through a negative one, so uphill moves are accepted with
Metropolis-like probability while the stored values stay exact.  At
``T = 0`` the step is plain Nelder-Mead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .objective import BudgetExhausted, ObjectiveEvaluator, Pose, penalized_error
from .optim_core import Algorithm, RunRecord, make_rng, random_vector, record_from

DIM = 3

REFLECT = "reflect"
EXPAND = "expand"
CONTRACT_OUT = "contract_out"
CONTRACT_IN = "contract_in"
SHRINK = "shrink"


class GridTooLargeError(ValueError):
    pass


@dataclass
class Simplex:
    """Four vertices in pose space with their exact (unfluctuated) errors."""

    vertices: np.ndarray  # (4, 3)
    values: np.ndarray  # (4,)

    def __post_init__(self):
        self.vertices = np.array(self.vertices, dtype=np.float64).reshape(DIM + 1, DIM)
        self.values = np.array(self.values, dtype=np.float64).reshape(DIM + 1)

    @classmethod
    def evaluate(cls, f, vertices) -> "Simplex":
        vertices = np.asarray(vertices, dtype=np.float64)
        values = np.full(DIM + 1, np.inf)
        simplex = cls(vertices, values)
        for i, v in enumerate(simplex.vertices):
            simplex.values[i] = f(v)
        return simplex

    def best_index(self) -> int:
        return int(np.argmin(self.values))

    def diameter(self) -> float:
        best = self.vertices[self.best_index()]
        return float(np.max(np.linalg.norm(self.vertices - best, axis=1)))

    def spread(self) -> float:
        return float(self.values.max() - self.values.min())


@dataclass(frozen=True)
class NelderMeadCoefficients:
    reflect: float = 1.0
    expand: float = 2.0
    contract: float = 0.5
    shrink: float = 0.5


def initial_simplex(start, step) -> np.ndarray:
    """Start vertex plus one axis-aligned offset per parameter."""
    start = np.asarray(start, dtype=np.float64)
    verts = np.tile(start, (DIM + 1, 1))
    for i in range(DIM):
        verts[i + 1, i] += step[i]
    return verts


def nm_step(simplex: Simplex, f, coeffs=NelderMeadCoefficients(), temperature: float = 0.0,
            rng: np.random.Generator | None = None) -> str:
    """One Nelder-Mead move on ``simplex`` in place; returns the move taken.

    With ``temperature > 0`` comparisons use fluctuated values (vertices
    penalized, trial points favored) drawn from ``rng``.
    """
    if temperature > 0.0:
        def fluct():
            return -temperature * math.log(1.0 - rng.random())
        seen = simplex.values + np.array([fluct() for _ in range(DIM + 1)])
    else:
        def fluct():
            return 0.0
        seen = simplex.values.copy()

    order = np.argsort(seen, kind="stable")
    lo, nhi, hi = order[0], order[-2], order[-1]
    centroid = (simplex.vertices.sum(axis=0) - simplex.vertices[hi]) / DIM
    worst = simplex.vertices[hi]

    def trial(coef):
        x = centroid + coef * (centroid - worst)
        fx = f(x)
        return x, fx, fx - fluct()

    def accept(x, fx, seen_x):
        simplex.vertices[hi] = x
        simplex.values[hi] = fx
        seen[hi] = seen_x

    xr, fr, sr = trial(coeffs.reflect)
    if sr < seen[lo]:
        xe, fe, se = trial(coeffs.reflect * coeffs.expand)
        if se < sr:
            accept(xe, fe, se)
            return EXPAND
        accept(xr, fr, sr)
        return REFLECT
    if sr < seen[nhi]:
        accept(xr, fr, sr)
        return REFLECT
    if sr < seen[hi]:
        xc, fc, sc = trial(coeffs.reflect * coeffs.contract)
        if sc <= sr:
            accept(xc, fc, sc)
            return CONTRACT_OUT
    else:
        xc, fc, sc = trial(-coeffs.contract)
        if sc < seen[hi]:
            accept(xc, fc, sc)
            return CONTRACT_IN
    best = simplex.vertices[lo].copy()
    for i in range(DIM + 1):
        if i == lo:
            continue
        simplex.vertices[i] = best + coeffs.shrink * (simplex.vertices[i] - best)
        simplex.values[i] = f(simplex.vertices[i])
    return SHRINK


# --------------------------------------------------------------------------
# Pre-processing start chooser


def lattice_axis(lo: float, hi: float, n: int, offset: float = 0.0) -> np.ndarray:
    """Points of an ``n``-cell partition of ``[lo, hi]``.

    ``offset`` in ``[-0.5, 0.5)`` shifts every point by that fraction of a
    cell; 0 gives cell centers.
    """
    return lo + (np.arange(n) + 0.5 + offset) * (hi - lo) / n


def rank_lattice(evaluator: ObjectiveEvaluator, grid=(8, 8, 3), budget_fraction: float = 0.2,
                 charge: bool = True, offset=(0.0, 0.0, 0.0)):
    """Score a regular lattice over the bounds; return (vectors, errors) best-first.

    Charged evaluations are drawn from the evaluator's budget; uncharged ones
    are scored directly and leave the evaluator untouched.
    """
    nx, ny, ns = grid
    if min(grid) < 1:
        raise ValueError("grid counts must be >= 1")
    if charge and nx * ny * ns > budget_fraction * evaluator.eval_budget:
        raise GridTooLargeError(
            f"grid {nx}x{ny}x{ns} = {nx * ny * ns} evaluations exceeds "
            f"{budget_fraction:.0%} of the {evaluator.eval_budget}-evaluation budget"
        )
    b = evaluator.bounds
    axes = (lattice_axis(b.x_min, b.x_max, nx, offset[0]), lattice_axis(b.y_min, b.y_max, ny, offset[1]),
            lattice_axis(b.s_min, b.s_max, ns, offset[2]))
    points = np.array(np.meshgrid(*axes, indexing="ij")).reshape(DIM, -1).T
    errors = np.empty(len(points))
    for i, p in enumerate(points):
        if charge:
            errors[i] = evaluator(p)
        else:
            errors[i] = penalized_error(evaluator.scene, evaluator.template, Pose.from_array(p),
                                        evaluator.config.penalty_c, b).error_p
    order = np.argsort(errors, kind="stable")
    return points[order], errors[order]


def choose_start(evaluator: ObjectiveEvaluator, grid=(8, 8, 3), budget_fraction: float = 0.2,
                 charge: bool = True) -> Pose:
    points, _ = rank_lattice(evaluator, grid, budget_fraction, charge)
    return Pose.from_array(points[0])


# --------------------------------------------------------------------------
# Nelder-Mead


@dataclass
class SimplexParams:
    grid: tuple = (8, 8, 3)
    grid_budget_fraction: float = 0.2
    charge_grid: bool = True
    jitter: bool = True  # seeded sub-cell shift of the lattice, so runs differ by seed
    initial_step: float = 0.05  # fraction of each bound span
    xtol: float = 1e-5
    ftol: float = 1e-10
    coefficients: NelderMeadCoefficients = field(default_factory=NelderMeadCoefficients)


def _converged(simplex: Simplex, params: SimplexParams) -> bool:
    return simplex.spread() < params.ftol and simplex.diameter() < params.xtol


def _descend(evaluator: ObjectiveEvaluator, start, params: SimplexParams) -> Simplex:
    step = params.initial_step * evaluator.bounds.span
    simplex = Simplex.evaluate(evaluator, initial_simplex(start, step))
    while not _converged(simplex, params):
        nm_step(simplex, evaluator, params.coefficients)
    return simplex


def nelder_mead(evaluator: ObjectiveEvaluator, start: Pose, params: SimplexParams | None = None) -> RunRecord:
    """Single Nelder-Mead descent from ``start`` until convergence or budget."""
    params = params or SimplexParams()
    try:
        _descend(evaluator, start.as_array(), params)
    except BudgetExhausted:
        pass
    return record_from(evaluator, Algorithm.SIMPLEX, None)


def multistart_simplex(evaluator: ObjectiveEvaluator, params: SimplexParams | None = None,
                       rng: np.random.Generator | None = None) -> RunRecord:
    """Lattice pre-scan, then Nelder-Mead from the best lattice points in turn.

    Each converged descent hands over to the next-ranked lattice point until
    the budget runs out; if the lattice is used up, starts are drawn at random.
    ``rng`` drives the lattice jitter and those random starts.
    """
    params = params or SimplexParams()
    rng = rng if rng is not None else make_rng(0)
    offset = rng.random(DIM) - 0.5 if params.jitter else np.zeros(DIM)
    grid = tuple(params.grid)
    fraction = params.grid_budget_fraction
    if params.charge_grid and np.prod(grid) > fraction * evaluator.eval_budget:
        # lattice does not fit this budget: a single midpoint start
        grid, fraction = (1, 1, 1), 1.0
    try:
        points, _ = rank_lattice(evaluator, grid, fraction, params.charge_grid, offset)
        k = 0
        while True:
            if k < len(points):
                start = points[k]
            else:
                start = random_vector(rng, evaluator.bounds)
            k += 1
            _descend(evaluator, start, params)
    except BudgetExhausted:
        pass
    return record_from(evaluator, Algorithm.SIMPLEX, None)


# --------------------------------------------------------------------------
# Simulated annealing


def sa_accept(delta_e: float, temp: float, k_b: float = 1.0, rng: np.random.Generator | None = None) -> bool:
    """Metropolis acceptance: downhill always, uphill with ``exp(-dE/(k_b T))``."""
    if temp <= 0:
        raise ValueError("temperature must be positive")
    if delta_e <= 0:
        return True
    p = math.exp(-delta_e / (k_b * temp))
    return bool(rng.random() < p)


@dataclass
class AnnealingSchedule:
    t_initial: float | None = 0.01  # error units; None: max(initial simplex spread, 1)
    decay: float = 0.8
    iters_per_temp: int = 50
    k_b: float = 1.0

    def __post_init__(self):
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if self.iters_per_temp < 1:
            raise ValueError("iters_per_temp must be >= 1")
        if self.t_initial is not None and not self.t_initial > 0:
            raise ValueError("t_initial must be positive")


@dataclass
class RestartParams:
    stall_evals: int = 30
    stall_diameter: float = 1e-3
    enabled: bool = True


@dataclass
class AnnealingParams:
    schedule: AnnealingSchedule = field(default_factory=AnnealingSchedule)
    restart: RestartParams = field(default_factory=RestartParams)
    coefficients: NelderMeadCoefficients = field(default_factory=NelderMeadCoefficients)


def random_simplex(rng: np.random.Generator, bounds) -> np.ndarray:
    return np.array([random_vector(rng, bounds) for _ in range(DIM + 1)])


class _Annealer:
    """Annealing state machine; split out so tests can script single steps."""

    def __init__(self, evaluator, params: AnnealingParams, rng, vertices=None):
        self.evaluator = evaluator
        self.params = params
        self.rng = rng
        self.evals_at_improvement = 0
        if vertices is None:
            vertices = random_simplex(rng, evaluator.bounds)
        self.simplex = Simplex.evaluate(evaluator, vertices)
        self.vertex_best = float(self.simplex.values.min())
        self.evals_at_improvement = evaluator.eval_count
        sched = params.schedule
        t0 = sched.t_initial if sched.t_initial is not None else max(self.simplex.spread(), 1.0)
        self.temperature = t0
        self.restarts = 0

    def step(self) -> str:
        move = nm_step(self.simplex, self.evaluator, self.params.coefficients,
                       self.params.schedule.k_b * self.temperature, self.rng)
        lo = float(self.simplex.values.min())
        if lo < self.vertex_best:
            self.vertex_best = lo
            self.evals_at_improvement = self.evaluator.eval_count
        return move

    def stuck(self) -> bool:
        """No vertex improvement for ``stall_evals`` evaluations, or a collapsed simplex."""
        r = self.params.restart
        if not r.enabled:
            return False
        stalled = self.evaluator.eval_count - self.evals_at_improvement >= r.stall_evals
        return stalled or self.simplex.diameter() < r.stall_diameter

    def restart(self):
        """Fresh random simplex with the best pose seen so far as one vertex."""
        ev = self.evaluator
        best = ev.best_pose.as_array()
        best_value = ev.best_error
        verts = random_simplex(self.rng, ev.bounds)
        verts[0] = best
        self.simplex = Simplex(verts, np.full(DIM + 1, np.inf))
        self.simplex.values[0] = best_value
        for i in range(1, DIM + 1):
            self.simplex.values[i] = ev(verts[i])
        self.vertex_best = float(self.simplex.values.min())
        self.evals_at_improvement = ev.eval_count
        self.restarts += 1

    def cool(self):
        self.temperature *= self.params.schedule.decay

    def run(self):
        while True:
            for _ in range(self.params.schedule.iters_per_temp):
                self.step()
                if self.stuck():
                    self.restart()
            self.cool()


def simulated_annealing(evaluator: ObjectiveEvaluator, params: AnnealingParams | None = None,
                        rng: np.random.Generator | None = None) -> RunRecord:
    params = params or AnnealingParams()
    try:
        _Annealer(evaluator, params, rng).run()
    except BudgetExhausted:
        pass
    return record_from(evaluator, Algorithm.ANNEALING, None)
