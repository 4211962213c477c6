"""Real-coded genetic algorithm.

Operators are normalized geometric ranking selection, arithmetic crossover
and multi-non-uniform mutation.  Fitness is the negated penalized error;
replacement is elitist truncation over parents, children and mutants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .objective import BudgetExhausted, ObjectiveEvaluator, ParameterBounds
from .optim_core import Algorithm, RunRecord, random_vector, record_from


@dataclass
class GaParams:
    population_size: int = 20
    q_select: float = 0.6
    crossovers_per_gen: int = 10  # parent pairs; each yields two children
    mutations_per_gen: int = 20
    mutation_shape_b: float = 3.0
    max_generations: int | None = None  # None: derived from the budget

    def __post_init__(self):
        if not 0 < self.q_select < 1:
            raise ValueError("q_select must lie in (0, 1)")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")

    @property
    def evals_per_generation(self) -> int:
        return 2 * self.crossovers_per_gen + self.mutations_per_gen

    def generations_for(self, budget: int) -> int:
        """Generations started within ``budget``, counting a partial last one."""
        if self.max_generations is not None:
            return self.max_generations
        spare = max(budget - self.population_size, 0)
        return max(1, math.ceil(spare / max(self.evals_per_generation, 1)))


@dataclass
class Individual:
    pose: np.ndarray
    fitness: float  # negated penalized error


def geometric_rank_probabilities(n: int, q: float) -> np.ndarray:
    """Rank-``r`` selection probability ``q' (1-q)^(r-1)``, normalized over ``n``."""
    q_norm = q / (1.0 - (1.0 - q) ** n)
    return q_norm * (1.0 - q) ** np.arange(n)


def norm_geom_select(ranked, q_select: float, rng: np.random.Generator):
    """Pick one member of a best-first ``ranked`` sequence."""
    probs = geometric_rank_probabilities(len(ranked), q_select)
    cdf = np.cumsum(probs)
    r = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return ranked[min(r, len(ranked) - 1)]


def arith_crossover(p1, p2, rng: np.random.Generator, lam: float | None = None):
    """Two children on the segment between the parents (componentwise blend)."""
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    if lam is None:
        lam = rng.random()
    return lam * p1 + (1.0 - lam) * p2, (1.0 - lam) * p1 + lam * p2


def multi_nonuniform_mutate(p, generation: int, max_generations: int, shape_b: float,
                            bounds: ParameterBounds, rng: np.random.Generator) -> np.ndarray:
    """Perturb every component toward one of its bounds.

    The step is ``headroom * (1 - r**((1 - g/G)**b))``, which shrinks to zero
    as ``g`` approaches ``G``.
    """
    p = np.asarray(p, dtype=np.float64)
    frac = min(generation / max_generations, 1.0) if max_generations > 0 else 1.0
    exponent = (1.0 - frac) ** shape_b
    out = p.copy()
    lower, upper = bounds.lower, bounds.upper
    for i in range(len(p)):
        r = rng.random()
        factor = 1.0 - r**exponent
        if rng.random() < 0.5:
            out[i] = p[i] + (upper[i] - p[i]) * factor
        else:
            out[i] = p[i] - (p[i] - lower[i]) * factor
    return out


def _ranked(population):
    return sorted(population, key=lambda ind: -ind.fitness)


def ga_run(evaluator: ObjectiveEvaluator, params: GaParams | None = None,
           rng: np.random.Generator | None = None, initial=None) -> RunRecord:
    """Run the GA until the evaluation budget is spent.

    ``initial`` optionally supplies seed chromosomes for the first population;
    the remainder is drawn uniformly within the bounds.
    """
    params = params or GaParams()
    bounds = evaluator.bounds
    G = params.generations_for(evaluator.eval_budget)

    def make(vec):
        return Individual(np.asarray(vec, dtype=np.float64), -evaluator(vec))

    try:
        seeds = [] if initial is None else [np.asarray(v, dtype=np.float64) for v in initial]
        population = [make(v) for v in seeds[: params.population_size]]
        while len(population) < params.population_size:
            population.append(make(random_vector(rng, bounds)))
        population = _ranked(population)

        generation = 0
        while True:
            parents = [norm_geom_select(population, params.q_select, rng)
                       for _ in range(2 * params.crossovers_per_gen)]
            to_mutate = [norm_geom_select(population, params.q_select, rng)
                         for _ in range(params.mutations_per_gen)]
            offspring = []
            for a, b in zip(parents[0::2], parents[1::2]):
                offspring.extend(arith_crossover(a.pose, b.pose, rng))
            offspring.extend(
                multi_nonuniform_mutate(ind.pose, generation, G, params.mutation_shape_b, bounds, rng)
                for ind in to_mutate
            )
            children = [make(v) for v in offspring]
            population = _ranked(population + children)[: params.population_size]
            generation += 1
    except BudgetExhausted:
        pass
    return record_from(evaluator, Algorithm.GENETIC, None)

