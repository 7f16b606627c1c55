"""Command-line interface: JSON config in, deterministic JSON report out.

Commands cover every library capability: ``validate``, ``classify``,
``extinction``, ``marked-root``, ``pgf``, ``extinction-pgf``, ``simulate``
and ``compare``.  Reports serialize with sorted keys and floats at 17
significant digits, so identical invocations produce byte-identical bodies
apart from the wall-time field.

Exit codes: 0 success, 1 usage or parse failure, 2 validation failure,
3 solver nonconvergence, 4 simulation truncation beyond the threshold.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import re
import sys
import time
from typing import Any, Mapping, Sequence

from .errors import ConvergenceError, MtbranchError, SpecError
from . import extinction, flow, pgf, simulate
from .model import (
    MarkAssignment,
    MarkedSets,
    ProcessSpec,
    classify,
    jacobian,
    marked_sets,
    validate_spec,
)
from .oracle import ExampleParams, example_spec

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NONCONVERGENCE = 3
EXIT_TRUNCATION = 4

_BUILTINS = {"paper-example"}

_VALUES_RE = re.compile(r"^\s*(\d+)\s*:\s*\(([^()]*)\)\s*=\s*([^\s;]+)\s*$")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise _UsageError(message)


def canonical_json(obj: Any) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    parts: list[str] = []
    _write_canonical(obj, parts)
    return "".join(parts)


def _write_canonical(obj: Any, parts: list[str]) -> None:
    if obj is None or isinstance(obj, bool):
        parts.append(json.dumps(obj))
    elif isinstance(obj, int):
        parts.append(str(obj))
    elif isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"cannot serialize non-finite float {obj}")
        parts.append(format(obj, ".17g"))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, Mapping):
        parts.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise ValueError(f"non-string key {key!r}")
            if i:
                parts.append(",")
            parts.append(json.dumps(key, ensure_ascii=False))
            parts.append(":")
            _write_canonical(obj[key], parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, item in enumerate(obj):
            if i:
                parts.append(",")
            _write_canonical(item, parts)
        parts.append("]")
    else:
        raise ValueError(f"cannot serialize {type(obj).__name__}")


def serialize_config(spec: ProcessSpec, marks: MarkedSets) -> dict:
    """Canonical document form of a validated spec and its marked sets."""
    return {
        "d": spec.d,
        "types": [
            {
                "theta": law.theta,
                "offspring": [{"j": list(j), "p": p} for j, p in law.offspring],
            }
            for law in spec.laws
        ],
        "marks": [[list(j) for j in sorted(s)] for s in marks.sets],
    }


def input_digest(spec: ProcessSpec, marks: MarkedSets) -> str:
    """Digest of the canonical expansion, so equivalent configs (including
    builtins) share a digest."""
    return hashlib.sha256(canonical_json(serialize_config(spec, marks)).encode()).hexdigest()


def _fail(path: str, message: str) -> SpecError:
    return SpecError(f"{path}: {message}")


def parse_config(source: str) -> tuple[ProcessSpec, MarkedSets]:
    """Parse a JSON config document into validated objects.

    The document either spells out ``d`` and ``types`` or names a
    ``builtin`` (mutually exclusive); ``marks`` is optional and defaults to
    all-empty sets.  Diagnostics name the offending field path.
    """
    doc = json.loads(source)
    if not isinstance(doc, dict):
        raise _fail("$", "config must be a JSON object")
    unknown = set(doc) - {"d", "types", "marks", "builtin"}
    if unknown:
        raise _fail(sorted(unknown)[0], "unknown field")

    if "builtin" in doc:
        if "types" in doc or "d" in doc:
            raise _fail("builtin", "builtin and explicit spec are mutually exclusive")
        builtin = doc["builtin"]
        if not isinstance(builtin, dict) or "name" not in builtin:
            raise _fail("builtin", "expected an object with a name")
        name = builtin["name"]
        if name not in _BUILTINS:
            raise _fail("builtin.name", f"unknown builtin {name!r}")
        try:
            params = ExampleParams(p=float(builtin.get("p", 0.5)),
                                   alpha=float(builtin.get("alpha", 0.5)))
        except (TypeError, ValueError, SpecError) as exc:
            raise _fail("builtin", str(exc)) from None
        spec = example_spec(params)
    else:
        if "types" not in doc:
            raise _fail("types", "missing field")
        raw_types = doc["types"]
        if not isinstance(raw_types, list) or not raw_types:
            raise _fail("types", "expected a nonempty list")
        entries = []
        for k, raw_law in enumerate(raw_types):
            if not isinstance(raw_law, dict):
                raise _fail(f"types[{k}]", "expected an object")
            if "theta" not in raw_law:
                raise _fail(f"types[{k}].theta", "missing field")
            if "offspring" not in raw_law or not isinstance(raw_law["offspring"], list):
                raise _fail(f"types[{k}].offspring", "expected a list")
            dist = []
            for m, item in enumerate(raw_law["offspring"]):
                if not isinstance(item, dict) or "j" not in item or "p" not in item:
                    raise _fail(f"types[{k}].offspring[{m}]",
                                "expected an object with j and p")
                dist.append((item["j"], item["p"]))
            entries.append((raw_law["theta"], dist))
        try:
            spec = validate_spec(entries)
        except SpecError as exc:
            raise _fail("types", str(exc)) from None
        if "d" in doc and doc["d"] != spec.d:
            raise _fail("d", f"declared {doc['d']} but offspring vectors have length {spec.d}")

    raw_marks = doc.get("marks", [[] for _ in range(spec.d)])
    if not isinstance(raw_marks, list) or len(raw_marks) != spec.d:
        raise _fail("marks", f"expected a list of {spec.d} mark sets")
    sets = []
    for k, raw_set in enumerate(raw_marks):
        if not isinstance(raw_set, list):
            raise _fail(f"marks[{k}]", "expected a list of offspring vectors")
        vectors = []
        for m, raw_vec in enumerate(raw_set):
            try:
                vec = tuple(int(c) for c in raw_vec)
            except (TypeError, ValueError):
                raise _fail(f"marks[{k}][{m}]", f"not an integer vector: {raw_vec!r}") from None
            vectors.append(vec)
        sets.append(vectors)
    try:
        marks = marked_sets(spec, sets)
    except SpecError as exc:
        # locate the offending vector for the diagnostic
        for k, raw_set in enumerate(sets):
            support = set(spec.laws[k].support)
            for m, vec in enumerate(raw_set):
                if len(vec) != spec.d or vec not in support:
                    raise _fail(f"marks[{k}][{m}]", str(exc)) from None
        raise _fail("marks", str(exc)) from None
    return spec, marks


def parse_mark_values(text: str, spec: ProcessSpec, marks: MarkedSets,
                      *, default_one: bool) -> MarkAssignment:
    """Parse the ``TYPE:(j1,...,jd)=VALUE`` grammar (entries separated by
    ';'; types are 1-based).  Missing marked vectors default to 1 when
    ``default_one`` and are an error otherwise."""
    assigned: dict = {}
    for entry in text.split(";"):
        if not entry.strip():
            continue
        m = _VALUES_RE.match(entry)
        if not m:
            raise SpecError(f"cannot parse mark value entry {entry!r}; "
                            "expected TYPE:(j1,...,jd)=VALUE")
        k = int(m.group(1)) - 1
        if not (0 <= k < spec.d):
            raise SpecError(f"mark value entry {entry!r}: type {k + 1} out of range")
        try:
            j = tuple(int(c) for c in m.group(2).split(","))
        except ValueError:
            raise SpecError(f"mark value entry {entry!r}: bad vector") from None
        value = float(m.group(3))
        if j not in marks.sets[k]:
            raise SpecError(f"mark value entry {entry!r}: vector {j} is not marked")
        if (k, j) in assigned:
            raise SpecError(f"mark value entry {entry!r}: duplicate assignment")
        assigned[(k, j)] = value
    if default_one:
        for key in marks.keys():
            assigned.setdefault(key, 1.0)
    else:
        missing = set(marks.keys()) - set(assigned)
        if missing:
            raise SpecError(
                f"missing mark values for {sorted(missing)}; extinction commands "
                "require every marked vector to be assigned"
            )
    return MarkAssignment(values=assigned)


def _parse_start(text: str, spec: ProcessSpec) -> tuple[int, ...]:
    try:
        parts = tuple(int(c) for c in text.split(","))
    except ValueError:
        raise SpecError(f"cannot parse start state {text!r}") from None
    return pgf.as_start_state(spec, parts)


def _read_config(args) -> tuple[ProcessSpec, MarkedSets]:
    if args.config == "-":
        return parse_config(sys.stdin.read())
    try:
        with open(args.config, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise _UsageError(f"cannot read config {args.config!r}: {exc}") from None


def _build_parser() -> _Parser:
    parser = _Parser(prog="mtbranch", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("-c", "--config", required=True,
                       help="JSON config file ('-' for stdin)")
        p.add_argument("--out", help="write the report to this file instead of stdout")
        return p

    add("validate", help="validate a config and echo the derived split rates")

    p = add("classify", help="criticality class by the dominant eigenvalue")
    p.add_argument("--tol", type=float, default=1e-10)

    p = add("extinction", help="extinction probability vector")
    p.add_argument("--tol", type=float, default=extinction.DEFAULT_TOL)

    p = add("marked-root", help="root of the marked split generating system")
    p.add_argument("--values", default="", help="mark values, TYPE:(j,...)=V;...")
    p.add_argument("--tol", type=float, default=extinction.DEFAULT_TOL)

    p = add("pgf", help="generating function of the event counts at a horizon")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--start", required=True, help="initial counts, e.g. 1,0")
    p.add_argument("--values", default="", help="omitted marks default to 1")

    p = add("extinction-pgf", help="generating function of the counts at extinction")
    p.add_argument("--start", required=True)
    p.add_argument("--values", default="", help="every marked vector needs a value in [0,1)")

    p = add("simulate", help="Monte Carlo replica summary")
    p.add_argument("--t", type=float, required=True, help="horizon ('inf' allowed)")
    p.add_argument("--start", required=True)
    p.add_argument("--values", default="", help="optional; omitted marks default to 1")
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-pop", type=int, default=simulate.DEFAULT_MAX_POP)
    p.add_argument("--threads", type=int, default=1)

    p = add("compare", help="analytic horizon value vs Monte Carlo estimate")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--start", required=True)
    p.add_argument("--values", default="")
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-pop", type=int, default=simulate.DEFAULT_MAX_POP)
    p.add_argument("--threads", type=int, default=1)

    return parser


def _execute(args, spec: ProcessSpec, marks: MarkedSets) -> tuple[dict, dict, int]:
    """Run one command; returns (results, diagnostics, exit_code)."""
    cmd = args.command
    if cmd == "validate":
        rates = [
            {"j": list(j), "b": spec.laws[k].theta * p}
            for k, law in enumerate(spec.laws) for j, p in law.offspring
        ]
        return ({"d": spec.d, "thetas": list(spec.thetas), "rates": rates,
                 "mark_counts": list(marks.counts)}, {}, EXIT_OK)

    if cmd == "classify":
        crit = classify(spec, tol=args.tol)
        return ({"class": crit.kind.value, "rho_one": crit.rho_one},
                {"tol": crit.tol}, EXIT_OK)

    if cmd == "extinction":
        res = extinction.extinction_prob(spec, tol=args.tol)
        code = EXIT_OK if res.converged else EXIT_NONCONVERGENCE
        return ({"q": list(res.q)},
                {"residual": res.residual, "iterations": res.iterations,
                 "converged": res.converged}, code)

    if cmd == "marked-root":
        vals = parse_mark_values(args.values, spec, marks, default_one=True)
        res = extinction.marked_root(spec, marks, vals, tol=args.tol)
        code = EXIT_OK if res.converged else EXIT_NONCONVERGENCE
        return ({"q_marked": list(res.q_marked)},
                {"residual": res.residual, "iterations": res.iterations,
                 "converged": res.converged}, code)

    if cmd == "pgf":
        vals = parse_mark_values(args.values, spec, marks, default_one=True)
        start = _parse_start(args.start, spec)
        res = flow.integrate(spec, marks, vals, (1.0,) * spec.d, args.t)
        value = 1.0
        for k, count in enumerate(start):
            if count:
                value *= res.g[k] ** count
        return ({"value": value, "per_ancestor": list(res.g)},
                {"steps": res.steps_taken, "max_clamp": res.max_clamp}, EXIT_OK)

    if cmd == "extinction-pgf":
        vals = parse_mark_values(args.values, spec, marks, default_one=False)
        start = _parse_start(args.start, spec)
        res = pgf.extinction_pgf(spec, marks, vals, start)
        return ({"value": res.value, "conditioned": res.conditioned,
                 "q_used": list(res.q_used)}, {}, EXIT_OK)

    if cmd == "simulate":
        vals = parse_mark_values(args.values, spec, marks, default_one=True)
        start = _parse_start(args.start, spec)
        est = simulate.mc_pgf(spec, marks, vals, start, args.t, args.reps,
                              args.seed, max_pop=args.max_pop, threads=args.threads)
        code = EXIT_OK if est.reliable else EXIT_TRUNCATION
        return ({"mc_mean": est.mean, "mc_std_error": est.std_error},
                {"replicas": est.replicas, "seed": est.seed,
                 "truncated_fraction": est.truncated_fraction,
                 "reliable": est.reliable}, code)

    if cmd == "compare":
        vals = parse_mark_values(args.values, spec, marks, default_one=True)
        start = _parse_start(args.start, spec)
        analytic = pgf.horizon_pgf(spec, marks, vals, start, args.t)
        est = simulate.mc_pgf(spec, marks, vals, start, args.t, args.reps,
                              args.seed, max_pop=args.max_pop, threads=args.threads)
        delta = abs(est.mean - analytic)
        passed = delta <= 4.0 * est.std_error
        code = EXIT_OK if est.reliable else EXIT_TRUNCATION
        return ({"analytic": analytic, "mc_mean": est.mean,
                 "mc_std_error": est.std_error, "abs_difference": delta,
                 "within_4_std_errors": passed},
                {"replicas": est.replicas, "seed": est.seed,
                 "truncated_fraction": est.truncated_fraction,
                 "reliable": est.reliable}, code)

    raise _UsageError(f"unknown command {cmd!r}")


def dispatch(argv: Sequence[str]) -> int:
    """Parse argv, run the command, and write the report.  Returns the exit
    code instead of raising SystemExit so it is callable from tests."""
    parser = _build_parser()
    started = time.perf_counter()
    try:
        args = parser.parse_args(list(argv))
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        spec, marks = _read_config(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpecError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        results, diagnostics, code = _execute(args, spec, marks)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MtbranchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE

    report = {
        "command": args.command,
        "argv": list(argv),
        "input_digest": input_digest(spec, marks),
        "results": results,
        "diagnostics": diagnostics,
        "wall_time_s": time.perf_counter() - started,
    }
    body = canonical_json(report) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(body)
    else:
        sys.stdout.write(body)
    return code


def main() -> None:
    try:
        code = dispatch(sys.argv[1:])
    except SystemExit as exc:  # argparse -h
        code = exc.code if isinstance(exc.code, int) else EXIT_OK
    sys.exit(code)


if __name__ == "__main__":
    main()
