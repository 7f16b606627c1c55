"""Multi-type branching process specification and its generating functions.

A process with ``d`` types is described per type by a split rate ``theta``
and a finitely supported offspring distribution: when a type-k individual
splits it is replaced by the offspring vector ``j`` with probability
``p[k][j]``.  Everything else is derived from that data: the split-event
generating functions, their decomposition over a set of marked offspring
vectors, the mean matrix, and the criticality classification by the sign
of the dominant eigenvalue at the all-ones point.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import SpecError

OffspringVector = tuple[int, ...]

#: Offspring probabilities must sum to one within this tolerance.
PROB_SUM_TOL = 1e-12

#: Default half-width of the "critical" band around rho(1) = 0.
DEFAULT_CLASSIFY_TOL = 1e-10

_POWER_ITER_TOL = 1e-12
_POWER_ITER_CAP = 10_000


def _as_vector(j, d: int | None = None) -> OffspringVector:
    """Normalize an offspring vector to a tuple of nonnegative ints."""
    try:
        vec = tuple(int(c) for c in j)
    except TypeError as exc:
        raise SpecError(f"offspring vector {j!r} is not a sequence of integers") from exc
    if any(int(c) != c for c in j):
        raise SpecError(f"offspring vector {j!r} has non-integer entries")
    if any(c < 0 for c in vec):
        raise SpecError(f"offspring vector {vec} has negative entries")
    if d is not None and len(vec) != d:
        raise SpecError(f"offspring vector {vec} has length {len(vec)}, expected {d}")
    return vec


def unit_vector(d: int, k: int) -> OffspringVector:
    return tuple(1 if c == k else 0 for c in range(d))


@dataclass(frozen=True)
class TypeLaw:
    """Split law of one type: rate ``theta`` and offspring distribution.

    ``offspring`` is a tuple of (vector, probability) pairs, sorted by
    vector; probabilities are in (0, 1] and sum to one.
    """

    theta: float
    offspring: tuple[tuple[OffspringVector, float], ...]

    def __post_init__(self):
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise SpecError(f"split rate must be positive and finite, got {self.theta}")
        if not self.offspring:
            raise SpecError("offspring distribution is empty")
        total = 0.0
        seen = set()
        for j, p in self.offspring:
            if j in seen:
                raise SpecError(f"offspring vector {j} listed twice")
            seen.add(j)
            if not (0.0 < p <= 1.0):
                raise SpecError(f"offspring probability for {j} must be in (0, 1], got {p}")
            total += p
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise SpecError(f"offspring probabilities sum to {total!r}, not 1")

    @property
    def support(self) -> tuple[OffspringVector, ...]:
        return tuple(j for j, _ in self.offspring)

    def probability(self, j: OffspringVector) -> float:
        for jj, p in self.offspring:
            if jj == j:
                return p
        return 0.0


@dataclass(frozen=True)
class ProcessSpec:
    """Validated d-type branching specification.

    The split rates ``b[k][j] = theta_k * p[k][j]`` (for j != e_k) are
    materialized in :attr:`rates`; the diagonal rate at e_k is ``-theta_k``.
    """

    d: int
    laws: tuple[TypeLaw, ...]

    def __post_init__(self):
        if self.d < 1:
            raise SpecError(f"dimension must be >= 1, got {self.d}")
        if len(self.laws) != self.d:
            raise SpecError(f"expected {self.d} type laws, got {len(self.laws)}")
        for k, law in enumerate(self.laws):
            ek = unit_vector(self.d, k)
            for j, _ in law.offspring:
                if len(j) != self.d:
                    raise SpecError(
                        f"type {k}: offspring vector {j} has length {len(j)}, expected {self.d}"
                    )
                if j == ek:
                    raise SpecError(
                        f"type {k}: the no-change split {ek} may not carry positive probability"
                    )

    @cached_property
    def rates(self) -> tuple[Mapping[OffspringVector, float], ...]:
        """Per type, the map j -> theta_k * p[k][j] over the support."""
        return tuple({j: law.theta * p for j, p in law.offspring} for law in self.laws)

    @cached_property
    def thetas(self) -> tuple[float, ...]:
        return tuple(law.theta for law in self.laws)

    def rate(self, k: int, j) -> float:
        """Split rate b[k][j] for any vector j (``-theta_k`` at e_k, 0 off support)."""
        _check_type_index(self, k)
        j = _as_vector(j, self.d)
        if j == unit_vector(self.d, k):
            return -self.laws[k].theta
        return self.rates[k].get(j, 0.0)


@dataclass(frozen=True)
class MarkedSets:
    """Per type, the finite set of offspring vectors whose splits are counted."""

    sets: tuple[frozenset[OffspringVector], ...]

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.sets)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def keys(self) -> tuple[tuple[int, OffspringVector], ...]:
        """All (type, vector) pairs in deterministic (type, lexicographic) order."""
        return tuple((k, j) for k, s in enumerate(self.sets) for j in sorted(s))


def marked_sets(spec: ProcessSpec, sets: Sequence[Iterable]) -> MarkedSets:
    """Validate and build marked sets against ``spec``'s offspring supports."""
    if len(sets) != spec.d:
        raise SpecError(f"expected {spec.d} marked sets, got {len(sets)}")
    out = []
    for k, raw in enumerate(sets):
        vectors = frozenset(_as_vector(j, spec.d) for j in raw)
        support = set(spec.laws[k].support)
        for j in sorted(vectors):
            if j not in support:
                raise SpecError(
                    f"marked vector {j} of type {k} is not in the offspring support"
                )
        out.append(vectors)
    return MarkedSets(sets=tuple(out))


@dataclass(frozen=True)
class MarkAssignment:
    """One value in [0, 1] for every marked offspring vector."""

    values: Mapping[tuple[int, OffspringVector], float]

    @classmethod
    def from_dict(cls, mapping: Mapping) -> "MarkAssignment":
        norm = {}
        for (k, j), v in mapping.items():
            norm[(int(k), _as_vector(j))] = float(v)
        return cls(values=norm)

    @classmethod
    def constant(cls, marks: MarkedSets, value: float) -> "MarkAssignment":
        return cls(values={key: float(value) for key in marks.keys()})

    @classmethod
    def ones(cls, marks: MarkedSets) -> "MarkAssignment":
        return cls.constant(marks, 1.0)

    def value(self, k: int, j: OffspringVector) -> float:
        try:
            return self.values[(k, j)]
        except KeyError:
            raise SpecError(f"no mark value assigned for type {k}, vector {j}") from None

    def check(self, marks: MarkedSets, *, strict_below_one: bool = False) -> None:
        """Require exactly one in-range value per marked vector."""
        keys = set(marks.keys())
        extra = set(self.values) - keys
        if extra:
            raise SpecError(f"mark values for unmarked vectors: {sorted(extra)}")
        missing = keys - set(self.values)
        if missing:
            raise SpecError(f"missing mark values for: {sorted(missing)}")
        top = 1.0
        for key, v in self.values.items():
            if not (0.0 <= v <= top) or (strict_below_one and v >= 1.0):
                rng = "[0, 1)" if strict_below_one else "[0, 1]"
                raise SpecError(f"mark value {v} for {key} outside {rng}")


class CriticalityClass(enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class Criticality:
    kind: CriticalityClass
    rho_one: float
    tol: float


@dataclass(frozen=True)
class MeanMatrix:
    """Jacobian of the split generating functions at a point, with its
    maximal real eigenvalue."""

    entries: tuple[tuple[float, ...], ...]
    rho: float


def _check_type_index(spec: ProcessSpec, k: int) -> None:
    if not (0 <= k < spec.d):
        raise SpecError(f"type index {k} out of range for d={spec.d}")


def as_gf_point(spec: ProcessSpec, x) -> tuple[float, ...]:
    """Normalize a point of the unit box [0, 1]^d."""
    pt = tuple(float(c) for c in x)
    if len(pt) != spec.d:
        raise SpecError(f"point {pt} has length {len(pt)}, expected {spec.d}")
    for c in pt:
        if not (0.0 <= c <= 1.0):
            raise SpecError(f"point {pt} lies outside the unit box")
    return pt


def validate_spec(raw) -> ProcessSpec:
    """Build a validated :class:`ProcessSpec` from raw material.

    ``raw`` may be an existing spec (returned as-is, construction already
    validates) or a sequence of per-type entries.  Each entry is a
    ``TypeLaw``, a ``(theta, offspring)`` pair, or a mapping with keys
    ``theta`` and ``offspring``; the offspring part is a mapping
    ``vector -> probability`` or an iterable of such pairs.  Offspring are
    sorted by vector so equivalent inputs produce identical specs.
    """
    if isinstance(raw, ProcessSpec):
        return raw
    try:
        entries = list(raw)
    except TypeError as exc:
        raise SpecError(f"cannot interpret {raw!r} as a process specification") from exc
    if not entries:
        raise SpecError("specification has no types")

    laws = []
    for k, entry in enumerate(entries):
        if isinstance(entry, TypeLaw):
            laws.append(entry)
            continue
        if isinstance(entry, Mapping):
            try:
                theta, offspring = entry["theta"], entry["offspring"]
            except KeyError as exc:
                raise SpecError(f"type {k}: missing field {exc}") from None
        else:
            try:
                theta, offspring = entry
            except (TypeError, ValueError):
                raise SpecError(
                    f"type {k}: expected (theta, offspring) or a mapping, got {entry!r}"
                ) from None
        if isinstance(offspring, Mapping):
            pairs = offspring.items()
        else:
            pairs = list(offspring)
        try:
            dist = sorted((_as_vector(j), float(p)) for j, p in pairs)
        except (TypeError, ValueError) as exc:
            raise SpecError(f"type {k}: malformed offspring distribution: {exc}") from exc
        try:
            laws.append(TypeLaw(theta=float(theta), offspring=tuple(dist)))
        except SpecError as exc:
            raise SpecError(f"type {k}: {exc}") from None

    d = len(laws[0].support[0]) if laws[0].support else 0
    return ProcessSpec(d=d, laws=tuple(laws))


def _monomial(x: Sequence[float], j: OffspringVector) -> float:
    m = 1.0
    for c, e in enumerate(j):
        if e == 1:
            m *= x[c]
        elif e:
            m *= x[c] ** e
    return m


def gf_B(spec: ProcessSpec, k: int, x) -> float:
    """Split generating function of type k at x:
    ``theta_k * (sum_j p[k][j] x^j - x_k)``."""
    _check_type_index(spec, k)
    pt = as_gf_point(spec, x)
    law = spec.laws[k]
    acc = 0.0
    for j, p in law.offspring:
        acc += p * _monomial(pt, j)
    return law.theta * (acc - pt[k])


def gf_B_marked(spec: ProcessSpec, marks: MarkedSets, vals: MarkAssignment,
                k: int, x) -> float:
    """Marked split generating function: marked offspring terms are scaled by
    their assigned value, unmarked terms enter as in :func:`gf_B`."""
    _check_type_index(spec, k)
    pt = as_gf_point(spec, x)
    law = spec.laws[k]
    rk = marks.sets[k]
    acc = 0.0
    for j, p in law.offspring:
        term = p * _monomial(pt, j)
        if j in rk:
            term *= vals.value(k, j)
        acc += term
    return law.theta * (acc - pt[k])


def jacobian(spec: ProcessSpec, x) -> MeanMatrix:
    """Mean matrix at x: entry (i, j) is the x_j-derivative of the type-i
    split generating function, with its maximal real eigenvalue."""
    pt = as_gf_point(spec, x)
    d = spec.d
    rows = []
    for i, law in enumerate(spec.laws):
        row = []
        for col in range(d):
            s = 0.0
            for j, p in law.offspring:
                e = j[col]
                if e:
                    s += p * e * _monomial_shift(pt, j, col)
            row.append(law.theta * (s - (1.0 if i == col else 0.0)))
        rows.append(tuple(row))
    entries = tuple(rows)
    return MeanMatrix(entries=entries, rho=_max_real_eigenvalue(entries))


def _monomial_shift(x: Sequence[float], j: OffspringVector, col: int) -> float:
    """x^(j - e_col), assuming j[col] >= 1."""
    m = 1.0
    for c, e in enumerate(j):
        if c == col:
            e -= 1
        if e == 1:
            m *= x[c]
        elif e:
            m *= x[c] ** e
    return m


def _max_real_eigenvalue(entries: tuple[tuple[float, ...], ...]) -> float:
    """Maximal real eigenvalue of a mean matrix.

    Closed form for d <= 2 (the off-diagonal product is nonnegative on the
    unit box, so the eigenvalues are real); for larger d, power iteration
    on the entrywise nonnegative shift ``entries + c*I``.
    """
    d = len(entries)
    if d == 1:
        return entries[0][0]
    if d == 2:
        a, b = entries[0]
        c, dd = entries[1]
        disc = (a - dd) * (a - dd) + 4.0 * b * c
        return 0.5 * ((a + dd) + math.sqrt(max(disc, 0.0)))
    mat = np.asarray(entries, dtype=float)
    shift = 1.0 + float(np.max(np.abs(np.diag(mat))))
    shifted = mat + shift * np.eye(d)
    v = np.full(d, 1.0 / math.sqrt(d))
    lam = 0.0
    for _ in range(_POWER_ITER_CAP):
        w = shifted @ v
        lam_new = float(v @ w)
        v = w / np.linalg.norm(w)
        if abs(lam_new - lam) <= _POWER_ITER_TOL:
            lam = lam_new
            break
        lam = lam_new
    return lam - shift


def classify(spec: ProcessSpec, tol: float = DEFAULT_CLASSIFY_TOL) -> Criticality:
    """Classify by the sign of the dominant eigenvalue at the all-ones point,
    with an explicit band of width ``tol`` around zero for the critical case."""
    if not tol > 0:
        raise SpecError(f"classification tolerance must be positive, got {tol}")
    rho_one = jacobian(spec, (1.0,) * spec.d).rho
    if rho_one > tol:
        kind = CriticalityClass.SUPERCRITICAL
    elif rho_one < -tol:
        kind = CriticalityClass.SUBCRITICAL
    else:
        kind = CriticalityClass.CRITICAL
    return Criticality(kind=kind, rho_one=rho_one, tol=tol)


def check_positive_regularity(spec: ProcessSpec) -> bool:
    """True iff some power m <= d of the shifted mean matrix ``N + c*I`` is
    entrywise positive, where N is the mean matrix at the all-ones point and
    ``c = 1 + max_i |N_ii|`` makes the matrix entrywise nonnegative."""
    n = np.asarray(jacobian(spec, (1.0,) * spec.d).entries, dtype=float)
    c = 1.0 + float(np.max(np.abs(np.diag(n))))
    shifted = n + c * np.eye(spec.d)
    power = shifted.copy()
    for _ in range(spec.d):
        if np.all(power > 0.0):
            return True
        power = power @ shifted
    return False
