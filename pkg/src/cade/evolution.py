"""DE/rand/1/bin engine with pluggable F/CR controllers.

Fitness is maximised everywhere; a trial replaces its target only when it is
strictly better. Each generation the coordinator draws every random number
(controller sampling, donor indices, crossover masks) before any fitness is
evaluated, so the number of evaluation workers never changes the result.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .errors import DomainError, FitnessEvaluationError, NumericError, SizingError

MIN_POPULATION = 4

HISTORY_COLUMNS = ("generation", "best_fitness", "mean_fitness", "F", "CR", "replacements")


def make_rng(seed) -> np.random.Generator:
    """The package's random stream: PCG64 seeded from ``seed``."""
    return np.random.default_rng(seed)


def spawn_seeds(seed, n):
    """``n`` independent child seeds derived from ``seed``."""
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


class FitnessProblem(Protocol):
    dim: int

    def __call__(self, genome: np.ndarray) -> float: ...


@dataclass
class Population:
    members: np.ndarray  # (size, dim)
    fitness: np.ndarray  # (size,)
    generation: int = 0

    def __post_init__(self):
        self.members = np.asarray(self.members)
        self.fitness = np.asarray(self.fitness, dtype=np.float64)
        if self.members.ndim != 2:
            raise SizingError("population members must form a (size, dim) array")
        if len(self.members) != len(self.fitness):
            raise SizingError(
                f"{len(self.members)} members but {len(self.fitness)} fitness values"
            )
        if len(self.members) < MIN_POPULATION:
            raise SizingError(
                f"population size {len(self.members)} < {MIN_POPULATION} (DE/rand/1 needs a target and 3 donors)"
            )
        if not np.all(np.isfinite(self.members)):
            raise NumericError("population contains non-finite genome values")

    @classmethod
    def evaluate(cls, members, problem, workers=1):
        members = np.asarray(members)
        return cls(members, evaluate_all(problem, members, workers))

    @property
    def size(self):
        return len(self.members)

    @property
    def dim(self):
        return self.members.shape[1]

    @property
    def best_index(self):
        return int(np.argmax(self.fitness))

    @property
    def best(self):
        return self.members[self.best_index]

    @property
    def best_fitness(self):
        return float(self.fitness.max())

    def copy(self):
        return Population(self.members.copy(), self.fitness.copy(), self.generation)


def random_population(problem, size, rng, low=-1.0, high=1.0, workers=1):
    members = rng.uniform(low, high, size=(size, problem.dim))
    return Population.evaluate(members, problem, workers)


def mutate(target_index, population: Population, F, rng, donors=None) -> np.ndarray:
    """DE/rand/1 donor ``a + F * (b - c)`` from three distinct non-target members.

    ``donors`` overrides the random draw (used by tests to force a, b, c).
    """
    n = population.size
    if n < MIN_POPULATION:
        raise SizingError(f"population size {n} < {MIN_POPULATION}")
    if donors is None:
        candidates = np.delete(np.arange(n), target_index)
        donors = rng.choice(candidates, size=3, replace=False)
    a, b, c = (population.members[int(i)] for i in donors)
    with np.errstate(over="ignore", invalid="ignore"):
        u = a + F * (b - c)
    bad = np.flatnonzero(~np.isfinite(u))
    if bad.size:
        raise NumericError(f"mutation produced a non-finite value at component {int(bad[0])}")
    return u


def crossover(target, donor, CR, rng) -> np.ndarray:
    """Binomial crossover; component ``j_rand`` always comes from the donor."""
    target = np.asarray(target)
    donor = np.asarray(donor)
    if target.shape != donor.shape or target.ndim != 1:
        raise SizingError(f"dimension mismatch: target {target.shape} vs donor {donor.shape}")
    d = target.shape[0]
    j_rand = int(rng.integers(d))
    take = np.asarray(rng.random(d)) <= CR
    take[j_rand] = True
    return np.where(take, donor, target).astype(target.dtype, copy=False)


def select(target_fitness, trial_fitness) -> bool:
    """True when the trial should replace the target (strictly better; ties keep the incumbent)."""
    return trial_fitness > target_fitness


def evaluate_all(problem, genomes, workers=1) -> np.ndarray:
    def run(item):
        i, g = item
        try:
            value = float(problem(g))
        except Exception as exc:
            raise FitnessEvaluationError(i, exc) from exc
        if not math.isfinite(value):
            raise FitnessEvaluationError(i, NumericError(f"non-finite fitness {value}"))
        return value

    items = list(enumerate(genomes))
    if workers <= 1 or len(items) <= 1:
        return np.array([run(it) for it in items], dtype=np.float64)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.array(list(pool.map(run, items)), dtype=np.float64)


@dataclass(frozen=True)
class Budget:
    max_generations: int
    target_fitness: Optional[float] = None  # stop once the best fitness reaches this

    def __post_init__(self):
        if self.max_generations < 0:
            raise DomainError("max_generations must be >= 0")


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_fitness: float
    mean_fitness: float
    F: float
    CR: float
    replacements: int

    def to_line(self):
        return "\t".join(
            [
                str(self.generation),
                repr(self.best_fitness),
                repr(self.mean_fitness),
                repr(self.F),
                repr(self.CR),
                str(self.replacements),
            ]
        )


class Controller(Protocol):
    """Supplies per-individual F/CR and learns from each generation's outcome."""

    def current(self) -> tuple: ...

    def sample(self, n: int, rng) -> tuple: ...

    def observe(self, success, F, CR, improvements, rng) -> None: ...


def evolve(
    population: Population,
    controller: Controller,
    problem: FitnessProblem,
    budget: Budget,
    rng,
    workers: int = 1,
    on_generation: Callable[[GenerationRecord], None] | None = None,
):
    """Run generational DE; returns ``(final_population, history)``.

    ``history[0]`` describes the starting population; each later row holds
    the mean F/CR actually used to build that generation's trials.
    """
    pop = population.copy()
    if pop.dim != problem.dim:
        raise SizingError(f"genome dim {pop.dim} != problem dim {problem.dim}")
    f0, cr0 = controller.current()
    history = [
        GenerationRecord(
            pop.generation, pop.best_fitness, float(pop.fitness.mean()), float(f0), float(cr0), 0
        )
    ]
    if on_generation:
        on_generation(history[0])

    for _ in range(budget.max_generations):
        if budget.target_fitness is not None and pop.best_fitness >= budget.target_fitness:
            break
        n = pop.size
        F, CR = controller.sample(n, rng)
        trials = np.empty_like(pop.members)
        for i in range(n):
            donor = mutate(i, pop, F[i], rng)
            trials[i] = crossover(pop.members[i], donor, CR[i], rng)
        trial_fitness = evaluate_all(problem, trials, workers)

        success = trial_fitness > pop.fitness
        improvements = np.where(success, trial_fitness - pop.fitness, 0.0)
        pop.members[success] = trials[success]
        pop.fitness[success] = trial_fitness[success]
        pop.generation += 1
        controller.observe(success, F, CR, improvements, rng)

        record = GenerationRecord(
            pop.generation,
            pop.best_fitness,
            float(pop.fitness.mean()),
            float(np.mean(F)),
            float(np.mean(CR)),
            int(success.sum()),
        )
        history.append(record)
        if on_generation:
            on_generation(record)
    return pop, history


def format_history(history: Sequence[GenerationRecord]) -> str:
    buf = io.StringIO()
    buf.write("\t".join(HISTORY_COLUMNS) + "\n")
    for rec in history:
        buf.write(rec.to_line() + "\n")
    return buf.getvalue()


def parse_history(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or tuple(lines[0].split("\t")) != HISTORY_COLUMNS:
        raise ValueError("not a history log: header mismatch")
    out = []
    for ln in lines[1:]:
        g, best, mean, f, cr, rep = ln.split("\t")
        out.append(GenerationRecord(int(g), float(best), float(mean), float(f), float(cr), int(rep)))
    return out
