"""Classical test functions for checking the optimisers without a network in the loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sphere(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(x**2))


def rastrigin(x):
    x = np.asarray(x, dtype=np.float64)
    return float(10.0 * x.size + np.sum(x**2 - 10.0 * np.cos(2 * np.pi * x)))


def rosenbrock(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


_TABLE = {
    # name: (function, domain box, optimum coordinate)
    "sphere": (sphere, (-5.12, 5.12), 0.0),
    "rastrigin": (rastrigin, (-5.12, 5.12), 0.0),
    "rosenbrock": (rosenbrock, (-2.048, 2.048), 1.0),
}

NAMES = tuple(_TABLE)


@dataclass(frozen=True)
class BenchProblem:
    """A minimisation benchmark exposed as a fitness (``-f(x)``, higher is better)."""

    name: str
    dim: int

    def __post_init__(self):
        if self.name not in _TABLE:
            raise ValueError(f"unknown benchmark {self.name!r}; choose from {NAMES}")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")

    @property
    def function(self):
        return _TABLE[self.name][0]

    @property
    def domain(self):
        return _TABLE[self.name][1]

    @property
    def optimum(self):
        return np.full(self.dim, _TABLE[self.name][2])

    @property
    def optimum_value(self):
        return 0.0

    def value(self, x):
        return self.function(x)

    def __call__(self, x):
        return -self.function(x)

    def describe(self):
        return f"problem = {self.name}\ndim = {self.dim}\n"
