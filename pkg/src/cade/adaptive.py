"""SHADE and SADE parameter adaptation on top of the DE/rand/1 loop.

Only the F/CR adaptation rules are reproduced; SHADE's external archive and
current-to-pbest mutation and SADE's strategy pool are left out so that all
three algorithms share one mutation operator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import SizingError

SHADE_SCALE = 0.1


@dataclass(frozen=True)
class ShadeMemory:
    M_F: tuple
    M_CR: tuple
    write_index: int = 0

    @classmethod
    def initial(cls, H=5):
        if H < 1:
            raise SizingError("memory size H must be >= 1")
        return cls((0.5,) * H, (0.5,) * H, 0)

    @property
    def H(self):
        return len(self.M_F)


def shade_sample(memory: ShadeMemory, rng):
    """One (F, CR) pair around a random memory cell.

    F ~ Cauchy(M_F[r], 0.1), redrawn while <= 0, capped at 1.
    CR ~ Normal(M_CR[r], 0.1), clipped to [0, 1].
    """
    r = int(rng.integers(memory.H))
    f = 0.0
    while f <= 0:
        f = memory.M_F[r] + SHADE_SCALE * float(rng.standard_cauchy())
    f = min(f, 1.0)
    cr = float(np.clip(rng.normal(memory.M_CR[r], SHADE_SCALE), 0.0, 1.0))
    return f, cr


def lehmer_mean(values, weights):
    values = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    return float(np.sum(w * values**2) / np.sum(w * values))


def shade_update_memory(memory: ShadeMemory, successful_F, successful_CR, improvements) -> ShadeMemory:
    if not (len(successful_F) == len(successful_CR) == len(improvements)):
        raise SizingError("successful_F, successful_CR and improvements must have equal length")
    if len(successful_F) == 0:
        return memory
    w = np.asarray(improvements, dtype=np.float64)
    w = w / w.sum() if w.sum() > 0 else np.full(len(w), 1.0 / len(w))
    m_f = lehmer_mean(successful_F, w)
    m_cr = float(np.sum(w * np.asarray(successful_CR, dtype=np.float64)))
    k = memory.write_index
    M_F = memory.M_F[:k] + (m_f,) + memory.M_F[k + 1:]
    M_CR = memory.M_CR[:k] + (m_cr,) + memory.M_CR[k + 1:]
    return ShadeMemory(M_F, M_CR, (k + 1) % memory.H)


class ShadeController:
    def __init__(self, H=5):
        self.memory = ShadeMemory.initial(H)

    def current(self):
        return float(np.mean(self.memory.M_F)), float(np.mean(self.memory.M_CR))

    def sample(self, n, rng):
        pairs = [shade_sample(self.memory, rng) for _ in range(n)]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    def observe(self, success, F, CR, improvements, rng):
        self.memory = shade_update_memory(
            self.memory, F[success], CR[success], improvements[success]
        )


@dataclass(frozen=True)
class SadeState:
    CRm: float = 0.5
    learning_period: int = 5
    generation: int = 0  # generations elapsed in the current learning period
    success_count: int = 0
    failure_count: int = 0
    successful_cr: tuple = ()

    def __post_init__(self):
        if self.learning_period < 1:
            raise SizingError("learning_period must be >= 1")


def sade_sample(state: SadeState, rng):
    """F ~ Normal(0.5, 0.3) redrawn while <= 0 and capped at 2; CR ~ Normal(CRm, 0.1) clipped to [0, 1]."""
    f = 0.0
    while f <= 0:
        f = float(rng.normal(0.5, 0.3))
    f = min(f, 2.0)
    cr = float(np.clip(rng.normal(state.CRm, 0.1), 0.0, 1.0))
    return f, cr


def sade_update(state: SadeState, successful_cr, failures: int) -> SadeState:
    """Record one generation; at the end of a learning period recompute CRm.

    CRm becomes the mean CR of the period's successful trials and stays put if
    there were none. Counters reset either way.
    """
    new = replace(
        state,
        generation=state.generation + 1,
        success_count=state.success_count + len(successful_cr),
        failure_count=state.failure_count + int(failures),
        successful_cr=state.successful_cr + tuple(float(c) for c in successful_cr),
    )
    if new.generation < new.learning_period:
        return new
    crm = float(np.mean(new.successful_cr)) if new.successful_cr else new.CRm
    return SadeState(CRm=crm, learning_period=new.learning_period)


class SadeController:
    def __init__(self, learning_period=5):
        self.state = SadeState(learning_period=learning_period)

    def current(self):
        return 0.5, self.state.CRm

    def sample(self, n, rng):
        pairs = [sade_sample(self.state, rng) for _ in range(n)]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    def observe(self, success, F, CR, improvements, rng):
        self.state = sade_update(self.state, CR[success], int((~success).sum()))
