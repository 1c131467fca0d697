"""Builders for the three reference problems and their worst-case parameter sequences."""
from __future__ import annotations

import math

import numpy as np

from .lp_core import NormSpec, Problem
from .semiinf import Family, SemiInfSource, discretize, polynomial, BUILTIN_SAMPLERS

SQRT17 = math.sqrt(17.0)
SQRT5 = math.sqrt(5.0)


def example1(norm: str = "euclidean") -> Problem:
    A = [[-1.0, 0.0], [-1.0, -0.5], [-1.0, -1.0]]
    return Problem(("1", "2", "3"), A, np.zeros(3), [1.0, 1.0 / 3.0], NormSpec(norm),
                   nominal_x=np.zeros(2))


def example2(norm: str = "euclidean") -> Problem:
    A = [[-1.0, 0.0], [-1.0, -0.5], [-1.0, -1.0], [-1.0, 1.0]]
    return Problem(("1", "2", "3", "4"), A, np.zeros(4), [1.0, 1.0 / 3.0], NormSpec(norm),
                   nominal_x=np.zeros(2))


def example3_source(grid: int = 4096) -> SemiInfSource:
    circle = Family("circle", BUILTIN_SAMPLERS["circle"], polynomial([1.0]), -math.pi, math.pi,
                    grid, {"name": "circle", "sampler": "circle", "range": ["-pi", "pi"],
                           "grid": grid, "b": [1.0]})
    discrete = [("4", [-1.0, -1.0], 1.0), ("5", [-1.0, 1.0], 1.0)]
    return SemiInfSource(2, np.array([1.0, 0.0]), [circle], discrete, "euclidean",
                         np.array([-1.0, 0.0]))


def example3(grid: int = 4096) -> Problem:
    return discretize(example3_source(grid))


def example1_sequence(n: int):
    """(b^n, x^n) with b^n = (1/n, -1/n, 0) and x^n = (-1/n, 4/n)."""
    return np.array([1.0 / n, -1.0 / n, 0.0]), np.array([-1.0 / n, 4.0 / n])


def example2_sequence(eps: float):
    """(b^eps, x^eps) with b^eps = (-eps, eps, eps, eps) and x^eps = (eps, -2 eps)."""
    return np.array([-eps, eps, eps, eps]), np.array([eps, -2.0 * eps])


def example3_point(n: int) -> np.ndarray:
    r = math.sqrt(1.0 - 6.0 / n + 1.0 / n ** 2)
    return 0.5 * np.array([-1.0 - 1.0 / n - r, -1.0 - 1.0 / n + r])


def example3_sequence(problem: Problem, n: int):
    """(b^n, x^n) on the grid of ``problem``: the arc-modified right-hand side."""
    x = example3_point(n)
    rad = 1.0 - 1.0 / n
    alpha = math.acos(x[0] / rad)
    b = np.empty(problem.m)
    fam_rows = set()
    for blk in problem.families:
        for row, t in zip(blk.rows, blk.params):
            b[row] = rad if abs(t) <= alpha else rad * math.cos(abs(t) - alpha)
            fam_rows.add(row)
    for i in range(problem.m):
        if i not in fam_rows:
            b[i] = 1.0 + 1.0 / n
    return b, x
