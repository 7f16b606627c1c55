"""Extinction probabilities and marked roots by monotone fixed-point iteration.

Both solvers iterate the per-type offspring generating map from the origin.
The map is monotone on the unit box and maps it into itself, so the iterates
increase componentwise to the minimal root, which is the probabilistically
meaningful one; a Newton-type method could land on the other root instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import SpecError
from .model import MarkAssignment, MarkedSets, ProcessSpec, _monomial

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 1_000_000

# Iterates of a monotone map can only lose monotonicity through float
# rounding; anything beyond this slack is a real bug.
_MONOTONE_SLACK = 1e-13


@dataclass(frozen=True)
class ExtinctionResult:
    """Minimal nonnegative root of the split generating system."""

    q: tuple[float, ...]
    residual: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class MarkedRootResult:
    """Unique unit-box root of the marked split generating system."""

    q_marked: tuple[float, ...]
    residual: float
    iterations: int
    converged: bool


def _offspring_maps(spec: ProcessSpec, marks: MarkedSets | None,
                    vals: MarkAssignment | None):
    """Per type, the fixed-point map x -> sum_j p[k][j] * x^j (marked terms
    scaled by their assigned value)."""
    maps: list[Callable[[Sequence[float]], float]] = []
    for k, law in enumerate(spec.laws):
        weighted = []
        for j, p in law.offspring:
            w = p
            if marks is not None and j in marks.sets[k]:
                w *= vals.value(k, j)
            weighted.append((w, j))

        def f(x, weighted=tuple(weighted)):
            acc = 0.0
            for w, j in weighted:
                acc += w * _monomial(x, j)
            return acc

        maps.append(f)
    return maps


def _iterate_from_zero(spec: ProcessSpec, maps, tol: float, max_iter: int):
    if not tol > 0:
        raise SpecError(f"tolerance must be positive, got {tol}")
    d = spec.d
    theta_max = max(spec.thetas)
    # Residual bound chosen so both |B| <= theta_max*tol and |B| <= tol hold.
    residual_bound = tol * min(1.0, theta_max)
    x = [0.0] * d
    iterations = 0
    converged = False
    while iterations < max_iter:
        x_new = [maps[k](x) for k in range(d)]
        iterations += 1
        diff = 0.0
        for k in range(d):
            step = x_new[k] - x[k]
            if step < -_MONOTONE_SLACK:
                raise AssertionError(
                    f"fixed-point iterate decreased in component {k} by {-step}"
                )
            diff += abs(step)
        x = x_new
        if diff <= tol:
            residual = max(
                spec.laws[k].theta * abs(maps[k](x) - x[k]) for k in range(d)
            )
            if residual <= residual_bound:
                converged = True
                break
    x = [min(v, 1.0) for v in x]
    residual = max(spec.laws[k].theta * abs(maps[k](x) - x[k]) for k in range(d))
    return tuple(x), residual, iterations, converged


def extinction_prob(spec: ProcessSpec, tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER) -> ExtinctionResult:
    """Extinction probability vector: the minimal nonnegative root of the
    split generating system.

    Near-critical specs converge slowly; if ``max_iter`` is exhausted the
    best iterate is still returned with ``converged=False``.
    """
    maps = _offspring_maps(spec, None, None)
    q, residual, iterations, converged = _iterate_from_zero(spec, maps, tol, max_iter)
    return ExtinctionResult(q=q, residual=residual, iterations=iterations,
                            converged=converged)


def marked_root(spec: ProcessSpec, marks: MarkedSets, vals: MarkAssignment,
                tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> MarkedRootResult:
    """Unit-box root of the marked split generating system.

    Uniqueness holds for mark values in [0, 1); values equal to 1 are
    accepted as a deliberate extension (the term is then unweighted and the
    iteration from the origin still selects the minimal root, which at
    all-ones values is the extinction probability).
    """
    vals.check(marks)
    maps = _offspring_maps(spec, marks, vals)
    q, residual, iterations, converged = _iterate_from_zero(spec, maps, tol, max_iter)
    return MarkedRootResult(q_marked=q, residual=residual, iterations=iterations,
                            converged=converged)
