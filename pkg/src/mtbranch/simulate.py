"""Exact simulation of the population chain with split-event counters.

Each replica realizes the continuous-time chain event by event: an
exponential holding time at the total split rate, a splitting type chosen
proportionally to its rate, and an offspring vector drawn from that type's
law (alias tables, built once per spec); a counter increments whenever the
drawn vector is marked for the splitting type.

RNG discipline: a master seed derives one counter-based stream per replica
(Philox jumps), and per-replica statistics are merged in fixed replica-index
order, so serial and thread-fanned runs are bit-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Mapping

import numpy as np

from .errors import SimulationError, SpecError
from .model import MarkAssignment, MarkedSets, OffspringVector, ProcessSpec, unit_vector
from .pgf import as_start_state

DEFAULT_MAX_POP = 10**6

#: Above this truncated-replica fraction an estimate is flagged unreliable.
TRUNCATION_THRESHOLD = 1e-3

_CHUNK = 1024  # replica chunk size for thread fan-out (fixed, thread-count independent)


@dataclass(frozen=True)
class ChainState:
    """Population vector, per-mark event counters, and elapsed time."""

    x: tuple[int, ...]
    counters: Mapping[tuple[int, OffspringVector], int]
    clock: float

    @property
    def absorbed(self) -> bool:
        return sum(self.x) == 0


@dataclass(frozen=True)
class SimOutcome:
    """One replica: terminal state, absorption flag and time, truncation flag."""

    final: ChainState
    absorbed: bool
    tau: float | None
    truncated: bool


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean with its standard error; deterministic given the seed."""

    mean: float
    std_error: float
    replicas: int
    seed: int
    truncated_fraction: float = 0.0

    @property
    def reliable(self) -> bool:
        return self.truncated_fraction <= TRUNCATION_THRESHOLD


@dataclass(frozen=True)
class ExtinctionCounts:
    """Empirical law of the counters at extinction plus the escape frequency.

    ``counts`` maps a counter vector (ordered as ``counter_keys``) to the
    number of absorbed replicas that ended with it; replicas that hit the
    population cap are counted in ``truncated`` and excluded from the law.
    """

    counter_keys: tuple[tuple[int, OffspringVector], ...]
    counts: Mapping[tuple[int, ...], int]
    absorbed: int
    truncated: int
    replicas: int
    seed: int

    @property
    def absorbed_fraction(self) -> float:
        return self.absorbed / self.replicas

    @property
    def escape_frequency(self) -> float:
        return self.truncated / self.replicas

    def pmf(self) -> dict[tuple[int, ...], float]:
        if self.absorbed == 0:
            return {}
        return {l: c / self.absorbed for l, c in self.counts.items()}

    def pgf_estimate(self, vals: MarkAssignment, *,
                     conditional: bool = False) -> tuple[float, float]:
        """Plug mark values into the empirical law: mean and standard error
        of the per-replica weight ``prod(vals**counters)``.

        Conditional averages over absorbed replicas only; unconditional
        counts an escaped replica as weight zero (so the mean approximates
        the unconditioned generating-function value).
        """
        weights = [vals.value(k, j) for k, j in self.counter_keys]
        n = self.absorbed if conditional else self.replicas
        if n == 0:
            return 0.0, 0.0
        total = 0.0
        total_sq = 0.0
        for l, c in self.counts.items():
            w = 1.0
            for slot, count in enumerate(l):
                if count:
                    w *= weights[slot] ** count
            total += c * w
            total_sq += c * w * w
        mean = total / n
        if n > 1:
            var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
            se = math.sqrt(var / n)
        else:
            se = 0.0
        return mean, se


class _SimTables:
    """Per-(spec, marks) sampling tables: split rates, alias tables of the
    offspring laws, state deltas, and counter slots."""

    def __init__(self, spec: ProcessSpec, marks: MarkedSets):
        d = spec.d
        self.d = d
        self.thetas = list(spec.thetas)
        self.counter_keys = marks.keys()
        slot_of = {key: i for i, key in enumerate(self.counter_keys)}
        self.n_counters = len(self.counter_keys)
        self.n_off = []
        self.aprob = []
        self.alias = []
        self.offspring = []
        self.deltas = []
        self.total_delta = []
        self.mark_slot = []
        for k, law in enumerate(spec.laws):
            vectors = [j for j, _ in law.offspring]
            probs = [p for _, p in law.offspring]
            prob, alias = _build_alias(probs)
            self.n_off.append(len(vectors))
            self.aprob.append(prob)
            self.alias.append(alias)
            self.offspring.append(vectors)
            deltas_k = []
            totals_k = []
            slots_k = []
            for j in vectors:
                delta = [(c, j[c] - (1 if c == k else 0)) for c in range(d)
                         if j[c] - (1 if c == k else 0) != 0]
                deltas_k.append(tuple(delta))
                totals_k.append(sum(j) - 1)
                slots_k.append(slot_of.get((k, j), -1))
            self.deltas.append(deltas_k)
            self.total_delta.append(totals_k)
            self.mark_slot.append(slots_k)


def _build_alias(probs: list[float]) -> tuple[list[float], list[int]]:
    """Vose alias table; sampling needs a single uniform."""
    n = len(probs)
    scaled = [p * n for p in probs]
    prob = [0.0] * n
    alias = list(range(n))
    small = [i for i, s in enumerate(scaled) if s < 1.0]
    large = [i for i, s in enumerate(scaled) if s >= 1.0]
    while small and large:
        s = small.pop()
        l = large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = (scaled[l] + scaled[s]) - 1.0
        if scaled[l] < 1.0:
            small.append(l)
        else:
            large.append(l)
    for i in large:
        prob[i] = 1.0
    for i in small:
        prob[i] = 1.0
    return prob, alias


@lru_cache(maxsize=128)
def _tables(spec: ProcessSpec, marks: MarkedSets) -> _SimTables:
    return _SimTables(spec, marks)


def replica_generator(seed: int, index: int) -> np.random.Generator:
    """Independent counter-split stream for one replica: Philox keyed by the
    master seed with the replica index in the top counter word, so streams
    sit 2^192 draws apart.  A pure function of (seed, index): any parallel
    execution order reproduces the serial results."""
    if index < 0:
        raise SpecError(f"replica index must be nonnegative, got {index}")
    key = int(seed) & ((1 << 128) - 1)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, index]))


class _ReplicaStreams:
    """Reusable equivalent of :func:`replica_generator`: one Philox object
    whose counter is reset per replica, avoiding per-replica construction
    cost.  Not thread safe; each worker owns its own instance."""

    def __init__(self, seed: int):
        self._bg = np.random.Philox(key=int(seed) & ((1 << 128) - 1))
        self.generator = np.random.Generator(self._bg)
        self._template = self._bg.state
        self._template["buffer_pos"] = 4  # buffer exhausted: content irrelevant
        self._template["has_uint32"] = 0
        self._counter = self._template["state"]["counter"]
        self._counter[:] = 0

    def reset(self, index: int) -> np.random.Generator:
        self._counter[3] = index
        self._bg.state = self._template
        return self.generator


def _sample_event(tables: _SimTables, x, lam: float, u2: float, u3: float):
    """Splitting type and offspring index from two uniforms."""
    d = tables.d
    thetas = tables.thetas
    r = u2 * lam
    acc = 0.0
    k = d - 1
    for kk in range(d):
        acc += x[kk] * thetas[kk]
        if r < acc:
            k = kk
            break
    n = tables.n_off[k]
    scaled = u3 * n
    idx = int(scaled)
    if idx >= n:
        idx = n - 1
    if (scaled - idx) >= tables.aprob[k][idx]:
        idx = tables.alias[k][idx]
    return k, idx


def new_chain_state(spec: ProcessSpec, marks: MarkedSets, start) -> ChainState:
    x = as_start_state(spec, start)
    counters = {key: 0 for key in marks.keys()}
    return ChainState(x=x, counters=counters, clock=0.0)


def step(spec: ProcessSpec, marks: MarkedSets, state: ChainState,
         rng: np.random.Generator) -> ChainState:
    """Advance the chain by exactly one split event.

    Consumes three uniforms (holding time, splitting type, offspring), the
    same pattern as :func:`run`, so a step-by-step replay of one stream
    reproduces a full run exactly.
    """
    if state.absorbed:
        raise SimulationError("cannot step an absorbed chain (empty population)")
    tables = _tables(spec, marks)
    x = list(state.x)
    lam = 0.0
    for k in range(tables.d):
        lam += x[k] * tables.thetas[k]
    u1 = rng.random()
    u2 = rng.random()
    u3 = rng.random()
    dt = -math.log(1.0 - u1) / lam
    k, idx = _sample_event(tables, x, lam, u2, u3)
    for c, delta in tables.deltas[k][idx]:
        x[c] += delta
    counters = dict(state.counters)
    slot = tables.mark_slot[k][idx]
    if slot >= 0:
        counters[tables.counter_keys[slot]] += 1
    return ChainState(x=tuple(x), counters=counters, clock=state.clock + dt)


def _run_kernel(tables: _SimTables, x0, horizon: float, max_pop: int,
                gen: np.random.Generator):
    """Hot loop shared by all replica runs.

    Returns (x, counts, absorbed, tau, clock, truncated); ``counts`` is a
    list aligned with ``tables.counter_keys``.
    """
    d = tables.d
    thetas = tables.thetas
    x = list(x0)
    total = sum(x)
    counts = [0] * tables.n_counters
    clock = 0.0
    if total == 0:
        return x, counts, True, 0.0, 0.0, False
    if total > max_pop:
        return x, counts, False, None, 0.0, True
    n_off = tables.n_off
    aprob = tables.aprob
    alias = tables.alias
    deltas = tables.deltas
    total_delta = tables.total_delta
    mark_slot = tables.mark_slot
    log = math.log
    random = gen.random
    buf = random(24).tolist()
    bi = 0
    nbuf = 24
    while True:
        lam = 0.0
        for k in range(d):
            lam += x[k] * thetas[k]
        if bi + 3 > nbuf:
            nbuf = 192 if nbuf == 24 else 1536
            buf = random(nbuf).tolist()
            bi = 0
        u1 = buf[bi]
        u2 = buf[bi + 1]
        u3 = buf[bi + 2]
        bi += 3
        t_next = clock - log(1.0 - u1) / lam
        if t_next > horizon:
            clock = horizon
            return x, counts, False, None, clock, False
        clock = t_next
        # splitting type
        r = u2 * lam
        acc = 0.0
        k = d - 1
        for kk in range(d):
            acc += x[kk] * thetas[kk]
            if r < acc:
                k = kk
                break
        # offspring via the alias table
        n = n_off[k]
        scaled = u3 * n
        idx = int(scaled)
        if idx >= n:
            idx = n - 1
        if (scaled - idx) >= aprob[k][idx]:
            idx = alias[k][idx]
        slot = mark_slot[k][idx]
        if slot >= 0:
            counts[slot] += 1
        for c, delta in deltas[k][idx]:
            x[c] += delta
        total += total_delta[k][idx]
        if total == 0:
            return x, counts, True, clock, clock, False
        if total > max_pop:
            return x, counts, False, None, clock, True


def run(spec: ProcessSpec, marks: MarkedSets, start, horizon: float,
        max_pop: int = DEFAULT_MAX_POP,
        rng: np.random.Generator | None = None) -> SimOutcome:
    """Run one replica until the horizon, absorption, or the population cap.

    The state reported at the horizon is the state after the last event at
    or before it (chain paths are right-continuous).  ``horizon`` may be
    ``math.inf`` to run to absorption or truncation.
    """
    x0 = as_start_state(spec, start)
    if not horizon > 0:
        raise SpecError(f"horizon must be positive, got {horizon}")
    if max_pop < sum(x0):
        raise SpecError(f"population cap {max_pop} below initial size {sum(x0)}")
    if rng is None:
        rng = replica_generator(0, 0)
    tables = _tables(spec, marks)
    x, counts, absorbed, tau, clock, truncated = _run_kernel(
        tables, x0, horizon, max_pop, rng
    )
    counters = dict(zip(tables.counter_keys, counts))
    final = ChainState(x=tuple(x), counters=counters, clock=clock)
    return SimOutcome(final=final, absorbed=absorbed, tau=tau, truncated=truncated)


def _fan_out(replicas: int, threads: int, task) -> None:
    """Apply ``task(lo, hi)`` over fixed-size replica chunks, optionally on a
    thread pool.  Chunking is independent of the thread count, and each
    chunk touches only its own replica slots, so results never depend on
    ``threads``."""
    bounds = [(lo, min(lo + _CHUNK, replicas)) for lo in range(0, replicas, _CHUNK)]
    if threads <= 1 or len(bounds) <= 1:
        for lo, hi in bounds:
            task(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda b: task(*b), bounds))


def mc_pgf(spec: ProcessSpec, marks: MarkedSets, vals: MarkAssignment, start,
           t: float, replicas: int, seed: int, *,
           max_pop: int = DEFAULT_MAX_POP, threads: int = 1) -> McEstimate:
    """Monte Carlo estimate of the joint generating function of the event
    counts at horizon t: the mean over replicas of ``prod(vals**counters)``.

    Replicas that hit the population cap keep their counters as of
    truncation; their fraction is reported and flags the estimate
    unreliable above :data:`TRUNCATION_THRESHOLD`.
    """
    x0 = as_start_state(spec, start)
    vals.check(marks)
    if replicas < 1:
        raise SpecError(f"need at least one replica, got {replicas}")
    if t < 0:
        raise SpecError(f"horizon must be nonnegative, got {t}")
    tables = _tables(spec, marks)
    weights = [vals.value(k, j) for k, j in tables.counter_keys]
    w_out = np.empty(replicas, dtype=float)
    trunc_out = np.zeros(replicas, dtype=bool)

    def task(lo: int, hi: int) -> None:
        streams = _ReplicaStreams(seed)
        for i in range(lo, hi):
            if t == 0:
                w_out[i] = 1.0
                continue
            gen = streams.reset(i)
            _, counts, _, _, _, truncated = _run_kernel(tables, x0, t, max_pop, gen)
            w = 1.0
            for slot, count in enumerate(counts):
                if count:
                    w *= weights[slot] ** count
            w_out[i] = w
            trunc_out[i] = truncated

    _fan_out(replicas, threads, task)
    mean = float(np.mean(w_out))
    std_error = float(np.std(w_out, ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    return McEstimate(mean=mean, std_error=std_error, replicas=replicas, seed=seed,
                      truncated_fraction=float(np.count_nonzero(trunc_out)) / replicas)


def mc_extinction_counts(spec: ProcessSpec, marks: MarkedSets, start,
                         replicas: int, max_pop: int = DEFAULT_MAX_POP,
                         seed: int = 0, *, threads: int = 1) -> ExtinctionCounts:
    """Empirical law of the counters at extinction.

    Each replica runs to absorption or to the population cap; the law is
    taken over absorbed replicas and the cap-escape frequency is reported
    alongside (paths past the cap almost never return, so escapes stand in
    for non-extinction with bias at most max(q)^max_pop).
    """
    x0 = as_start_state(spec, start)
    if replicas < 1:
        raise SpecError(f"need at least one replica, got {replicas}")
    tables = _tables(spec, marks)
    outcomes: list[tuple[int, ...] | None] = [None] * replicas

    def task(lo: int, hi: int) -> None:
        streams = _ReplicaStreams(seed)
        for i in range(lo, hi):
            gen = streams.reset(i)
            _, counts, absorbed, _, _, _ = _run_kernel(
                tables, x0, math.inf, max_pop, gen
            )
            if absorbed:
                outcomes[i] = tuple(counts)

    _fan_out(replicas, threads, task)
    counts: dict[tuple[int, ...], int] = {}
    absorbed = 0
    for outcome in outcomes:
        if outcome is not None:
            absorbed += 1
            counts[outcome] = counts.get(outcome, 0) + 1
    return ExtinctionCounts(
        counter_keys=tables.counter_keys,
        counts=counts,
        absorbed=absorbed,
        truncated=replicas - absorbed,
        replicas=replicas,
        seed=seed,
    )


def jump_rates(spec: ProcessSpec, marks: MarkedSets, x) -> dict:
    """Exact rational jump rates out of population state x, as the simulation
    generates them.

    Keys are ``(new_x, counter_key)`` where ``counter_key`` is the
    incremented ``(type, vector)`` pair for a marked split and ``None``
    otherwise; unmarked splits of different types landing on the same state
    are merged, mirroring the augmented chain's transitions.
    """
    state = as_start_state(spec, x)
    if sum(state) == 0:
        return {}
    rates: dict = {}
    for k, law in enumerate(spec.laws):
        if state[k] == 0:
            continue
        base = state[k] * Fraction(law.theta)
        for j, p in law.offspring:
            new_x = tuple(state[c] + j[c] - (1 if c == k else 0) for c in range(spec.d))
            counter_key = (k, j) if j in marks.sets[k] else None
            key = (new_x, counter_key)
            rates[key] = rates.get(key, Fraction(0)) + base * Fraction(p)
    return rates


def branching_rate(spec: ProcessSpec, i, j) -> Fraction:
    """Exact rational entry of the population chain's generator: total rate
    of the jump ``i -> j`` summed over splitting types (``j = i`` gives the
    diagonal)."""
    istate = as_start_state(spec, i)
    jstate = as_start_state(spec, j)
    if sum(istate) == 0:
        return Fraction(0)
    if istate == jstate:
        return -sum(istate[k] * Fraction(spec.laws[k].theta) for k in range(spec.d))
    total = Fraction(0)
    for k, law in enumerate(spec.laws):
        if istate[k] == 0:
            continue
        offspring = tuple(jstate[c] - istate[c] + (1 if c == k else 0)
                          for c in range(spec.d))
        if any(c < 0 for c in offspring) or offspring == unit_vector(spec.d, k):
            continue
        p = law.probability(offspring)
        if p > 0.0:
            total += istate[k] * Fraction(law.theta) * Fraction(p)
    return total


def augmented_rate(spec: ProcessSpec, marks: MarkedSets, state_from, state_to) -> Fraction:
    """Exact rational entry of the augmented chain's generator between two
    (population, counters) states; counters are dicts keyed by
    ``(type, vector)``."""
    x_from, counters_from = state_from
    x_to, counters_to = state_to
    x_from = as_start_state(spec, x_from)
    x_to = as_start_state(spec, x_to)
    keys = marks.keys()
    c_from = tuple(int(counters_from.get(key, 0)) for key in keys)
    c_to = tuple(int(counters_to.get(key, 0)) for key in keys)
    if sum(x_from) == 0:
        return Fraction(0)
    if x_from == x_to and c_from == c_to:
        return -sum(x_from[k] * Fraction(spec.laws[k].theta) for k in range(spec.d))
    slot_of = {key: i for i, key in enumerate(keys)}
    total = Fraction(0)
    for k, law in enumerate(spec.laws):
        if x_from[k] == 0:
            continue
        offspring = tuple(x_to[c] - x_from[c] + (1 if c == k else 0)
                          for c in range(spec.d))
        if any(c < 0 for c in offspring) or offspring == unit_vector(spec.d, k):
            continue
        p = law.probability(offspring)
        if p <= 0.0:
            continue
        expected = list(c_from)
        if offspring in marks.sets[k]:
            expected[slot_of[(k, offspring)]] += 1
        if tuple(expected) == c_to:
            total += x_from[k] * Fraction(law.theta) * Fraction(p)
    return total
