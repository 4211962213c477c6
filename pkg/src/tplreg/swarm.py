"""Particle swarm optimizer with a logical ring neighborhood.

Velocities follow ``v' = alpha*v + beta_i*(p_i - x) + beta_g*(p_g - x)``
with deterministic coefficients, where ``p_g`` is the best position among
the particles within ``neighborhood_radius`` ring indices.  Positions are
not clamped: the out-of-image penalty pulls strays back and the evaluator
hard-limits the scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .objective import BudgetExhausted, ObjectiveEvaluator
from .optim_core import Algorithm, RunRecord, record_from


@dataclass
class SwarmParams:
    particle_count: int = 20
    alpha: float = 0.99
    beta_i: float = 0.01
    beta_g: float = 0.01
    neighborhood_radius: int = 3
    v_max: float | None = 0.25  # fraction of each bound span per iteration; None disables
    initial_speed: float = 0.01  # initial velocities uniform in +-this fraction of span
    stochastic: bool = False  # multiply attraction terms by U(0,1) draws

    def __post_init__(self):
        if self.particle_count < 2:
            raise ValueError("particle_count must be >= 2")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.beta_i < 0 or self.beta_g < 0:
            raise ValueError("attraction constants must be non-negative")
        if self.neighborhood_radius < 1:
            raise ValueError("neighborhood_radius must be >= 1")


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_value: float
    index: int


def neighborhood_indices(index: int, radius: int, count: int) -> list[int]:
    return [(index + k) % count for k in range(-radius, radius + 1)]


def neighborhood_best(swarm, index: int, radius: int) -> np.ndarray:
    """Best personal-best position in the ring window around ``index``.

    Ties go to the lowest particle index.
    """
    count = len(swarm)
    members = sorted(set(neighborhood_indices(index, min(radius, count), count)))
    winner = min(members, key=lambda i: (swarm[i].best_value, i))
    return swarm[winner].best_position


def update_velocity(p: Particle, group_best, params: SwarmParams, span=None, rng=None) -> np.ndarray:
    r_i = r_g = 1.0
    if params.stochastic:
        r_i, r_g = rng.random(len(p.velocity)), rng.random(len(p.velocity))
    v = (params.alpha * p.velocity
         + params.beta_i * r_i * (p.best_position - p.position)
         + params.beta_g * r_g * (np.asarray(group_best) - p.position))
    if params.v_max is not None and span is not None:
        cap = params.v_max * np.asarray(span)
        v = np.clip(v, -cap, cap)
    return v


def create_swarm(evaluator: ObjectiveEvaluator, params: SwarmParams, rng: np.random.Generator):
    b = evaluator.bounds
    swarm = []
    for i in range(params.particle_count):
        pos = b.lower + rng.random(3) * b.span
        vel = (2.0 * rng.random(3) - 1.0) * params.initial_speed * b.span
        swarm.append(Particle(pos, vel, pos.copy(), np.inf, i))
    return swarm


def pso_run(evaluator: ObjectiveEvaluator, params: SwarmParams | None = None,
            rng: np.random.Generator | None = None, swarm=None) -> RunRecord:
    """Iterate the swarm until the budget is spent; ``swarm`` may be pre-built."""
    params = params or SwarmParams()
    span = evaluator.bounds.span
    if swarm is None:
        swarm = create_swarm(evaluator, params, rng)
    try:
        while True:
            values = [evaluator(p.position) for p in swarm]
            for p, value in zip(swarm, values):
                if value < p.best_value:
                    p.best_value = value
                    p.best_position = p.position.copy()
            group = [neighborhood_best(swarm, p.index, params.neighborhood_radius) for p in swarm]
            for p, g in zip(swarm, group):
                p.velocity = update_velocity(p, g, params, span, rng)
                p.position = p.position + p.velocity
    except BudgetExhausted:
        pass
    return record_from(evaluator, Algorithm.SWARM, None)
