"""Joint generating-function flow of the counted split events.

The per-ancestor joint generating function solves an autonomous ODE system
whose right-hand side is the marked split generating function evaluated at
the current value.  The production path is fixed-step classical RK4 (bit
reproducible, which the acceptance suite relies on); a successive
approximation scheme on a fixed quadrature grid mirrors the constructive
existence argument and serves as an independent test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import HorizonCapError, SpecError, StepSizeError
from . import extinction
from .model import MarkAssignment, MarkedSets, ProcessSpec, as_gf_point

#: Default step ceiling: at most this fraction of the fastest mean lifetime.
STEP_FACTOR = 0.01

#: A clamped excursion beyond this aborts the integration (step too large).
CLAMP_FAIL = 1e-6

#: Quadrature grid density for the successive-approximation oracle.
PICARD_GRID_PER_UNIT_TIME = 1000

_LIMIT_CAP_EXPONENT = 20


@dataclass(frozen=True)
class FlowResult:
    """Flow value at the requested horizon plus integrator diagnostics."""

    g: tuple[float, ...]
    t: float
    steps_taken: int
    max_clamp: float


@dataclass(frozen=True)
class PicardParams:
    """Constants of the successive-approximation error bound.

    ``M`` is the sum of the split rates; ``L`` bounds, uniformly on the unit
    box, the l1-Lipschitz constant of the integrand (the drift plus its
    linear removal term).  All coefficients of that integrand are
    nonnegative, so its partial derivatives are maximal at the all-ones
    point; ``L`` is the largest row sum of the gradient there.
    """

    M: float
    L: float


def _drift_terms(spec: ProcessSpec, marks: MarkedSets, vals: MarkAssignment):
    """Per type, the positive polynomial part of the drift as
    (coefficient, exponent-vector) pairs; the drift is that sum minus
    ``theta_k * u_k``."""
    vals.check(marks)
    terms = []
    for k, law in enumerate(spec.laws):
        rk = marks.sets[k]
        row = []
        for j, p in law.offspring:
            c = law.theta * p
            if j in rk:
                c *= vals.value(k, j)
            if c != 0.0:
                row.append((c, j))
        terms.append(tuple(row))
    return tuple(terms)


def _eval_drift(terms, thetas, u: Sequence[float]) -> list[float]:
    out = []
    for k, row in enumerate(terms):
        acc = 0.0
        for c, j in row:
            m = c
            for idx, e in enumerate(j):
                if e == 1:
                    m *= u[idx]
                elif e:
                    m *= u[idx] ** e
            acc += m
        out.append(acc - thetas[k] * u[k])
    return out


def drift(spec: ProcessSpec, marks: MarkedSets, vals: MarkAssignment, u) -> tuple[float, ...]:
    """Right-hand side of the flow ODE at u (the marked split generating
    function of each type)."""
    pt = as_gf_point(spec, u)
    terms = _drift_terms(spec, marks, vals)
    return tuple(_eval_drift(terms, spec.thetas, pt))


def picard_params(spec: ProcessSpec) -> PicardParams:
    """Error-bound constants for :func:`picard` on ``spec``."""
    from .model import jacobian

    thetas = spec.thetas
    m_const = float(sum(thetas))
    grad_at_one = jacobian(spec, (1.0,) * spec.d).entries
    l_const = 0.0
    for k in range(spec.d):
        row_sum = sum(grad_at_one[k]) + thetas[k]
        l_const = max(l_const, row_sum)
    return PicardParams(M=m_const, L=l_const)


def picard_bound(spec: ProcessSpec, n: int, t: float) -> float:
    """Bound on the l1 gap between successive approximations n+1 and n at
    time t: ``M * (d*L)^n * t^(n+1) / (n+1)!``."""
    params = picard_params(spec)
    return params.M * (spec.d * params.L) ** n * t ** (n + 1) / math.factorial(n + 1)


def _resolve_steps(spec: ProcessSpec, t: float, h: float | None) -> tuple[int, float]:
    theta_max = max(spec.thetas)
    if h is None:
        h_target = min(STEP_FACTOR / theta_max, t / 100.0)
        n = max(1, math.ceil(t / h_target - 1e-9))
        return n, t / n
    if not h > 0:
        raise SpecError(f"step size must be positive, got {h}")
    n = round(t / h)
    if n < 1 or abs(n * h - t) > 1e-9 * max(1.0, t):
        raise SpecError(f"horizon {t} is not an integer number of steps of size {h}")
    return n, t / n


def _rk4_segment(terms, thetas, u: list[float], n_steps: int, h: float,
                 max_clamp: float) -> tuple[list[float], float]:
    """Advance u by n_steps of size h, clamping each completed step into the
    unit box.  Returns the new state and the updated worst excursion."""
    d = len(u)
    for _ in range(n_steps):
        k1 = _eval_drift(terms, thetas, u)
        stage = [u[c] + 0.5 * h * k1[c] for c in range(d)]
        k2 = _eval_drift(terms, thetas, stage)
        stage = [u[c] + 0.5 * h * k2[c] for c in range(d)]
        k3 = _eval_drift(terms, thetas, stage)
        stage = [u[c] + h * k3[c] for c in range(d)]
        k4 = _eval_drift(terms, thetas, stage)
        for c in range(d):
            v = u[c] + (h / 6.0) * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
            if v < 0.0:
                max_clamp = max(max_clamp, -v)
                v = 0.0
            elif v > 1.0:
                max_clamp = max(max_clamp, v - 1.0)
                v = 1.0
            u[c] = v
        if max_clamp > CLAMP_FAIL:
            raise StepSizeError(
                f"clamped excursion {max_clamp:.3e} exceeds {CLAMP_FAIL:.0e}; "
                "retry with a smaller step"
            )
    return u, max_clamp


def integrate(spec: ProcessSpec, marks: MarkedSets, vals: MarkAssignment,
              x0, t: float, h: float | None = None) -> FlowResult:
    """Integrate the flow from x0 over [0, t] with fixed-step classical RK4.

    The default step is ``min(0.01 / theta_max, t / 100)`` rounded so the
    horizon is an integer number of steps.  Completed steps are projected
    onto the unit box; the projection distance measures integrator error
    and aborts the run beyond ``CLAMP_FAIL``.
    """
    pt = as_gf_point(spec, x0)
    if t < 0:
        raise SpecError(f"horizon must be nonnegative, got {t}")
    if t == 0:
        return FlowResult(g=pt, t=0.0, steps_taken=0, max_clamp=0.0)
    terms = _drift_terms(spec, marks, vals)
    n, h_eff = _resolve_steps(spec, t, h)
    u, max_clamp = _rk4_segment(terms, spec.thetas, list(pt), n, h_eff, 0.0)
    return FlowResult(g=tuple(u), t=t, steps_taken=n, max_clamp=max_clamp)


def _cumulative_simpson(w: np.ndarray, dx: float) -> np.ndarray:
    """Cumulative integral of samples on a uniform grid with an even number
    of subintervals, by composite Simpson pairs; interior odd points use the
    quadratic through their surrounding pair."""
    n = w.shape[0] - 1
    out = np.empty_like(w)
    out[0] = 0.0
    pair = (dx / 3.0) * (w[0:-2:2] + 4.0 * w[1:-1:2] + w[2::2])
    even = np.concatenate(([0.0], np.cumsum(pair)))
    out[0::2] = even
    out[1::2] = even[:-1] + (dx / 12.0) * (5.0 * w[0:-2:2] + 8.0 * w[1:-1:2] - w[2::2])
    return out


def picard(spec: ProcessSpec, marks: MarkedSets, vals: MarkAssignment,
           x0, t: float, n: int) -> tuple[float, ...]:
    """n-th successive approximation to the flow at time t.

    The zeroth approximation is ``x_k * exp(-theta_k s)``; each refinement
    integrates the exponentially weighted positive drift part over the fixed
    quadrature grid.  Test oracle only; not a production path.
    """
    pt = as_gf_point(spec, x0)
    if t < 0:
        raise SpecError(f"horizon must be nonnegative, got {t}")
    if n < 0:
        raise SpecError(f"iteration count must be nonnegative, got {n}")
    if t == 0:
        return pt
    grid_n = max(2, math.ceil(PICARD_GRID_PER_UNIT_TIME * t))
    if grid_n % 2:
        grid_n += 1
    s = np.linspace(0.0, t, grid_n + 1)
    dx = t / grid_n
    thetas = np.asarray(spec.thetas)
    terms = _drift_terms(spec, marks, vals)

    decay = np.exp(-np.outer(s, thetas))       # shape (grid_n+1, d)
    growth = np.exp(np.outer(s, thetas))
    u = decay * np.asarray(pt)                 # zeroth approximation
    for _ in range(n):
        integ = np.empty_like(u)
        for k in range(spec.d):
            h_k = np.zeros(grid_n + 1)
            for c, j in terms[k]:
                mono = np.ones(grid_n + 1)
                for idx, e in enumerate(j):
                    if e:
                        mono = mono * u[:, idx] ** e
                h_k += c * mono
            integ[:, k] = _cumulative_simpson(growth[:, k] * h_k, dx)
        u = decay * (np.asarray(pt) + integ)
    return tuple(float(v) for v in u[-1])


def limit(spec: ProcessSpec, marks: MarkedSets, vals: MarkAssignment,
          tol: float = 1e-9) -> tuple[float, ...]:
    """Long-time limit of the flow started from the all-ones point.

    Doubles the horizon until successive checkpoints differ by at most
    ``tol`` in l1, then cross-checks the settled value against the marked
    fixed-point root within ``10 * tol``.  Mark values must lie in [0, 1).
    """
    vals.check(marks, strict_below_one=True)
    if not tol > 0:
        raise SpecError(f"tolerance must be positive, got {tol}")
    terms = _drift_terms(spec, marks, vals)
    thetas = spec.thetas
    theta_max = max(thetas)
    u = [1.0] * spec.d
    max_clamp = 0.0
    checkpoint = u[:]
    t = 0.0
    segment = 1.0 / theta_max
    cap = 2.0 ** _LIMIT_CAP_EXPONENT / theta_max
    while True:
        n_steps = max(1, math.ceil(segment * theta_max / STEP_FACTOR - 1e-9))
        u, max_clamp = _rk4_segment(terms, thetas, u, n_steps, segment / n_steps,
                                    max_clamp)
        t += segment
        diff = sum(abs(u[c] - checkpoint[c]) for c in range(spec.d))
        if diff <= tol:
            break
        checkpoint = u[:]
        segment = t  # doubling: integrate from t to 2t
        if t + segment > cap * (1.0 + 1e-12):
            root = extinction.marked_root(spec, marks, vals).q_marked
            raise HorizonCapError(
                f"flow limit not settled by horizon {t:g} (cap {cap:g}); "
                f"flow checkpoint {tuple(u)}, fixed-point root {root}",
                flow_value=u, root_value=root,
            )
    root = extinction.marked_root(spec, marks, vals).q_marked
    gap = max(abs(u[c] - root[c]) for c in range(spec.d))
    if gap > 10.0 * tol:
        raise HorizonCapError(
            f"settled flow value differs from the fixed-point root by {gap:.3e} "
            f"(> 10*tol = {10.0 * tol:.3e})",
            flow_value=u, root_value=root,
        )
    return tuple(u)
