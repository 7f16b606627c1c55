"""Built-in 2-type birth-death fixture with closed-form answers.

Type 1 splits at unit rate into nothing (probability p) or two type-2
individuals (probability 1 - p); type 2 splits at unit rate into nothing
(probability alpha) or one type-1 individual (probability 1 - alpha).  With
childless splits marked for both types, the fixed-point root system is a
quadratic in one variable and solvable in closed form, which makes this
fixture the ground truth for every solver in the package.  The CLI exposes
it under the builtin name "paper-example".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import SpecError
from .model import ProcessSpec, validate_spec


@dataclass(frozen=True)
class ExampleParams:
    """Childless-split probabilities of the two types; the birth
    probabilities are the complements q = 1 - p and beta = 1 - alpha."""

    p: float
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.p < 1.0 and 0.0 < self.alpha < 1.0):
            raise SpecError(
                f"parameters must lie in (0, 1), got p={self.p}, alpha={self.alpha}"
            )

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def beta(self) -> float:
        return 1.0 - self.alpha


def example_spec(params: ExampleParams) -> ProcessSpec:
    """The fixture as a validated spec (both split rates equal 1)."""
    d = 2
    zero = (0,) * d
    return validate_spec([
        (1.0, {zero: params.p, (0, 2): params.q}),
        (1.0, {zero: params.alpha, (1, 0): params.beta}),
    ])


def example_rho(params: ExampleParams) -> float:
    """Dominant mean-matrix eigenvalue at the all-ones point:
    ``sqrt(2*q*beta) - 1``."""
    return math.sqrt(2.0 * params.q * params.beta) - 1.0


def _discriminant(params: ExampleParams, y: float, z: float) -> float:
    return 1.0 - 4.0 * params.q * params.beta * (params.p * params.beta * y
                                                 + params.alpha * z)


def example_uv(params: ExampleParams, y: float, z: float) -> tuple[float, float]:
    """Closed-form root of the childless-split marked system.

    Solves ``q*v^2 - u + p*y = 0`` and ``beta*u - v + alpha*z = 0``:
    the returned pair is the generating-function value of the childless
    split counts at extinction (unconditioned), one component per
    starting type.
    """
    if not (0.0 <= y <= 1.0 and 0.0 <= z <= 1.0):
        raise SpecError(f"mark values must lie in [0, 1], got y={y}, z={z}")
    q, beta, alpha = params.q, params.beta, params.alpha
    disc = _discriminant(params, y, z)
    if disc < 0.0:
        raise SpecError(
            f"negative discriminant {disc} at y={y}, z={z}: parameters out of range"
        )
    s = 1.0 - math.sqrt(disc)
    u = s / (2.0 * q * beta * beta) - alpha * z / beta
    v = s / (2.0 * q * beta)
    return u, v


def example_extinction_pgf(params: ExampleParams, y: float, z: float,
                           start_type: int) -> float:
    """Closed-form generating function of the childless split counts at
    extinction, as the fixture's displays give it: the plain root when
    extinction is certain (``2*q*beta <= 1``), otherwise the conditional
    form with denominator ``2*(1 - 2*q*beta + q*beta^2)`` for a type-1
    start and ``2*(1 - q*beta)`` for a type-2 start."""
    if start_type not in (0, 1):
        raise SpecError(f"start_type must be 0 or 1, got {start_type}")
    q, beta, alpha = params.q, params.beta, params.alpha
    if 2.0 * q * beta <= 1.0:
        u, v = example_uv(params, y, z)
        return u if start_type == 0 else v
    disc = _discriminant(params, y, z)
    if disc < 0.0:
        raise SpecError(
            f"negative discriminant {disc} at y={y}, z={z}: parameters out of range"
        )
    s = 1.0 - math.sqrt(disc)
    if start_type == 0:
        return (s - 2.0 * q * beta * alpha * z) / (2.0 * (1.0 - 2.0 * q * beta + q * beta * beta))
    return s / (2.0 * (1.0 - q * beta))
