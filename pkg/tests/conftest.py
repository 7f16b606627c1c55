"""Shared fixtures: the closed-form 2-type birth-death fixtures and a
seeded random-spec generator for property tests."""

from __future__ import annotations

import numpy as np
import pytest

from mtbranch import (
    ExampleParams,
    MarkAssignment,
    MarkedSets,
    ProcessSpec,
    example_spec,
    marked_sets,
    pure_death_marks,
    validate_spec,
)
from mtbranch.model import unit_vector

SUB_PARAMS = ExampleParams(p=0.5, alpha=0.5)
SUP_PARAMS = ExampleParams(p=0.2, alpha=0.2)


@pytest.fixture(scope="session")
def sub_spec() -> ProcessSpec:
    return example_spec(SUB_PARAMS)


@pytest.fixture(scope="session")
def sup_spec() -> ProcessSpec:
    return example_spec(SUP_PARAMS)


@pytest.fixture(scope="session")
def sub_marks(sub_spec) -> MarkedSets:
    return pure_death_marks(sub_spec)


@pytest.fixture(scope="session")
def sup_marks(sup_spec) -> MarkedSets:
    return pure_death_marks(sup_spec)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20260809)


def random_spec(rng: np.random.Generator, d: int | None = None,
                include_zero: bool = True) -> ProcessSpec:
    """Random small spec: offspring entries at most 2 per component, total
    offspring at most 4, probabilities bounded away from zero."""
    if d is None:
        d = int(rng.integers(1, 4))
    laws = []
    for k in range(d):
        theta = 0.3 + 2.7 * float(rng.random())
        support = {(0,) * d} if include_zero else set()
        target = int(rng.integers(2, 5))
        attempts = 0
        while len(support) < target and attempts < 50:
            attempts += 1
            j = tuple(int(v) for v in rng.integers(0, 3, size=d))
            if sum(j) > 4 or j == unit_vector(d, k):
                continue
            support.add(j)
        vectors = sorted(support)
        w = rng.dirichlet(np.ones(len(vectors))) + 0.02
        w = w / w.sum()
        laws.append((theta, list(zip(vectors, (float(v) for v in w)))))
    return validate_spec(laws)


def random_marks(rng: np.random.Generator, spec: ProcessSpec,
                 nonempty: bool = False) -> MarkedSets:
    """Random subset of each type's support; optionally forces at least one
    marked vector overall."""
    sets = []
    for law in spec.laws:
        support = list(law.support)
        chosen = [j for j in support if rng.random() < 0.5]
        sets.append(chosen)
    if nonempty and not any(sets):
        k = int(rng.integers(0, spec.d))
        sets[k] = [spec.laws[k].support[0]]
    return marked_sets(spec, sets)


def random_vals(rng: np.random.Generator, marks: MarkedSets,
                top: float = 1.0) -> MarkAssignment:
    """Independent uniform mark values on [0, top)."""
    return MarkAssignment(values={key: top * float(rng.random())
                                  for key in marks.keys()})
