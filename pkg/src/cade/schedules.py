"""Cosine-annealed F/CR schedules (strategies 1-4) plus a fixed baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import ConfigError, DomainError


class Strategy(str, Enum):
    S1 = "1"  # wave value, only after a generation without improvement
    S2 = "2"  # wave value every update
    S3 = "3"  # wave value plus a uniform draw, every update
    S4 = "4"  # S3 rule, only after a generation without improvement
    FIXED = "fixed"


class Wave(str, Enum):
    COS = "cos"
    SIN = "sin"


def _check(v_min, v_max, t, max_iterations):
    if max_iterations <= 0:
        raise DomainError("max_iterations must be positive")
    if not 0 <= t <= max_iterations:
        raise DomainError(f"t={t} outside [0, {max_iterations}]")
    if v_min > v_max:
        raise DomainError(f"v_min={v_min} > v_max={v_max}")


def cosine_value(v_min, v_max, t, max_iterations) -> float:
    """Half-cosine decay from ``v_max`` at t=0 to ``v_min`` at t=max_iterations."""
    _check(v_min, v_max, t, max_iterations)
    return v_min + (v_max - v_min) / 2 * (1 + math.cos(math.pi * t / max_iterations))


def sine_value(v_min, v_max, t, max_iterations) -> float:
    """Midpoint at both ends, ``v_max`` halfway through."""
    _check(v_min, v_max, t, max_iterations)
    return v_min + (v_max - v_min) / 2 * (1 + math.sin(math.pi * t / max_iterations))


WAVES = {Wave.COS: cosine_value, Wave.SIN: sine_value}


@dataclass(frozen=True)
class ScheduleState:
    F_min: float
    F_max: float
    CR_min: float
    CR_max: float
    F: float
    CR: float
    t: int
    max_iterations: int
    strategy: Strategy = Strategy.S2
    wave_F: Wave = Wave.COS
    wave_CR: Wave = Wave.COS
    update_period: int = 1

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "wave_F", Wave(self.wave_F))
        object.__setattr__(self, "wave_CR", Wave(self.wave_CR))
        if self.F_min > self.F_max:
            raise ConfigError(f"F_min={self.F_min} > F_max={self.F_max}", "f_min")
        if self.CR_min > self.CR_max:
            raise ConfigError(f"CR_min={self.CR_min} > CR_max={self.CR_max}", "cr_min")
        if self.max_iterations <= 0:
            raise ConfigError("must be positive", "max_iterations")
        if self.update_period <= 0:
            raise ConfigError("must be positive", "update_period")

    @classmethod
    def initial(
        cls,
        F_init,
        CR_init,
        max_iterations,
        strategy=Strategy.S2,
        wave_F=Wave.COS,
        wave_CR=Wave.COS,
        update_period=1,
        F_min=0.0,
        CR_min=0.0,
    ):
        """Start at the upper bounds: ``F = F_max = F_init``, ``CR = CR_max = CR_init``."""
        return cls(
            F_min=F_min,
            F_max=F_init,
            CR_min=CR_min,
            CR_max=CR_init,
            F=F_init,
            CR=CR_init,
            t=0,
            max_iterations=max_iterations,
            strategy=strategy,
            wave_F=wave_F,
            wave_CR=wave_CR,
            update_period=update_period,
        )

    def wave_values(self, t=None):
        t = self.t if t is None else t
        f = WAVES[self.wave_F](self.F_min, self.F_max, t, self.max_iterations)
        cr = WAVES[self.wave_CR](self.CR_min, self.CR_max, t, self.max_iterations)
        return f, cr


def update(state: ScheduleState, generation_improved: bool, rng) -> ScheduleState:
    """Advance one generation: ``t += 1``, then apply the configured strategy.

    Wave values are only recomputed when the new ``t`` is a multiple of
    ``update_period``. S3/S4 draw ``uniform(F_min, F_max)`` then
    ``uniform(CR_min, CR_max)``; no clamping follows the addition.
    """
    t = state.t + 1
    if t > state.max_iterations and state.strategy is not Strategy.FIXED:
        raise DomainError(f"schedule advanced past max_iterations={state.max_iterations}")
    new = replace(state, t=t)
    s = state.strategy
    if s is Strategy.FIXED or t % state.update_period != 0:
        return new
    if s in (Strategy.S1, Strategy.S4) and generation_improved:
        return new
    f, cr = new.wave_values()
    if s in (Strategy.S3, Strategy.S4):
        f = f + float(rng.uniform(state.F_min, state.F_max))
        cr = cr + float(rng.uniform(state.CR_min, state.CR_max))
    return replace(new, F=f, CR=cr)


class ScheduleController:
    """Adapts a :class:`ScheduleState` to the evolution loop (one F/CR for the whole population).

    The success flag handed to the strategy is per generation: True when at
    least one trial replaced its target.
    """

    def __init__(self, state: ScheduleState):
        self.state = state

    def current(self):
        return self.state.F, self.state.CR

    def sample(self, n, rng):
        return np.full(n, self.state.F), np.full(n, self.state.CR)

    def observe(self, success, F, CR, improvements, rng):
        self.state = update(self.state, bool(np.any(success)), rng)


def fixed_controller(F=0.5, CR=0.9, max_iterations=1):
    """Plain DE: constant F and CR."""
    return ScheduleController(
        ScheduleState.initial(F, CR, max(int(max_iterations), 1), strategy=Strategy.FIXED)
    )
