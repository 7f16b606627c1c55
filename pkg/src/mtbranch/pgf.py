"""Probability generating functions of the counted split events.

Horizon values come from the flow started at the all-ones point; values at
extinction come from the marked fixed-point root, divided by the extinction
probability when survival is possible (conditioning on eventual extinction).
Lines of descent are independent, so a start with several individuals takes
the product of the per-ancestor values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ConvergenceError, SpecError
from . import extinction, flow
from .model import (
    CriticalityClass,
    MarkAssignment,
    MarkedSets,
    ProcessSpec,
    classify,
    marked_sets,
)

StartState = tuple[int, ...]


@dataclass(frozen=True)
class ExtinctionPgfResult:
    """Generating-function value of the event counts at extinction.

    ``conditioned`` is true when survival is possible and the value is the
    per-ancestor ratio root/extinction-probability (the law conditioned on
    eventual extinction); ``q_used`` holds the divisor.
    """

    value: float
    conditioned: bool
    q_used: tuple[float, ...]


def as_start_state(spec: ProcessSpec, start) -> StartState:
    out = tuple(int(c) for c in start)
    if len(out) != spec.d:
        raise SpecError(f"start state {out} has length {len(out)}, expected {spec.d}")
    if any(int(c) != c or c < 0 for c in start):
        raise SpecError(f"start state {start!r} must have nonnegative integer entries")
    return out


def horizon_pgf(spec: ProcessSpec, marks: MarkedSets, vals: MarkAssignment,
                start, t: float, h: float | None = None) -> float:
    """Joint generating function of the event counts at horizon t, started
    from ``start`` individuals per type: the product over types of the
    per-ancestor flow value raised to the initial count."""
    i = as_start_state(spec, start)
    vals.check(marks)
    res = flow.integrate(spec, marks, vals, (1.0,) * spec.d, t, h)
    value = 1.0
    for k, count in enumerate(i):
        if count:
            value *= res.g[k] ** count
    return value


def marginal_pgf(spec: ProcessSpec, marks: MarkedSets,
                 vals_partial: MarkAssignment | Mapping, start, t: float,
                 h: float | None = None) -> float:
    """Like :func:`horizon_pgf` with unassigned marks set to 1 (marginalizing
    their counters out)."""
    if isinstance(vals_partial, MarkAssignment):
        partial = dict(vals_partial.values)
    else:
        partial = dict(MarkAssignment.from_dict(vals_partial).values)
    full = {key: partial.get(key, 1.0) for key in marks.keys()}
    unknown = set(partial) - set(full)
    if unknown:
        raise SpecError(f"mark values for unmarked vectors: {sorted(unknown)}")
    return horizon_pgf(spec, marks, MarkAssignment(values=full), start, t, h)


def extinction_pgf(spec: ProcessSpec, marks: MarkedSets, vals: MarkAssignment,
                   start) -> ExtinctionPgfResult:
    """Generating function of the event counts accumulated by extinction.

    Mark values must lie in [0, 1); to marginalize a counter remove its
    vector from the marked sets instead of assigning 1.  When extinction is
    not certain the result conditions on it, dividing each per-ancestor
    factor by the extinction probability of its type.
    """
    i = as_start_state(spec, start)
    vals.check(marks, strict_below_one=True)
    crit = classify(spec)
    root = extinction.marked_root(spec, marks, vals)
    if not root.converged:
        raise ConvergenceError(
            f"marked root solve did not converge ({root.iterations} iterations, "
            f"residual {root.residual:.3e})"
        )
    if crit.kind is CriticalityClass.SUPERCRITICAL:
        q = extinction.extinction_prob(spec)
        if not q.converged:
            raise ConvergenceError(
                f"extinction solve did not converge ({q.iterations} iterations, "
                f"residual {q.residual:.3e})"
            )
        q_used = q.q
        conditioned = True
        factors = tuple(root.q_marked[k] / q_used[k] for k in range(spec.d))
    else:
        # Certain extinction: the divisor is exactly one per type.
        q_used = (1.0,) * spec.d
        conditioned = False
        factors = root.q_marked
    value = 1.0
    for k, count in enumerate(i):
        if count:
            value *= factors[k] ** count
    return ExtinctionPgfResult(value=value, conditioned=conditioned, q_used=q_used)


def pure_death_marks(spec: ProcessSpec) -> MarkedSets:
    """Mark, for every type that can die childless, the all-zero offspring
    vector; the counters then count childless splits."""
    zero = (0,) * spec.d
    sets: list[Sequence] = []
    for law in spec.laws:
        sets.append([zero] if zero in set(law.support) else [])
    return marked_sets(spec, sets)


def twins_marks(spec: ProcessSpec) -> MarkedSets:
    """Mark, for every type that can split into two of its own kind, that
    same-type pair vector; the counters then count twin births."""
    sets: list[Sequence] = []
    for k, law in enumerate(spec.laws):
        twin = tuple(2 if c == k else 0 for c in range(spec.d))
        sets.append([twin] if twin in set(law.support) else [])
    return marked_sets(spec, sets)
