"""The closed-form fixture: construction, eigenvalue, and root formulas."""

from __future__ import annotations

import math

import pytest

from mtbranch import (
    ExampleParams,
    MarkAssignment,
    SpecError,
    example_extinction_pgf,
    example_rho,
    example_spec,
    example_uv,
    extinction_prob,
    gf_B,
    jacobian,
    marked_root,
    pure_death_marks,
)


class TestExampleSpec:
    def test_polynomials_at_random_points(self, rng):
        params = ExampleParams(p=0.35, alpha=0.65)
        spec = example_spec(params)
        for _ in range(20):
            x1, x2 = rng.random(2)
            b1 = params.p - x1 + params.q * x2 * x2
            b2 = params.alpha - x2 + params.beta * x1
            assert gf_B(spec, 0, (x1, x2)) == pytest.approx(b1, abs=1e-14)
            assert gf_B(spec, 1, (x1, x2)) == pytest.approx(b2, abs=1e-14)

    def test_parameters_validated(self):
        with pytest.raises(SpecError):
            ExampleParams(p=0.0, alpha=0.5)
        with pytest.raises(SpecError):
            ExampleParams(p=0.5, alpha=1.0)

    def test_half_point_identity(self):
        params = ExampleParams(p=0.5, alpha=0.5)
        spec = example_spec(params)
        assert gf_B(spec, 0, (0.5, 0.5)) == pytest.approx(
            params.p - 0.5 + params.q * 0.25, abs=1e-15)


class TestExampleRho:
    def test_matches_jacobian_on_grid(self):
        for p in (0.1, 0.3, 0.5, 0.7, 0.9):
            for alpha in (0.1, 0.3, 0.5, 0.7, 0.9):
                params = ExampleParams(p=p, alpha=alpha)
                spec = example_spec(params)
                assert jacobian(spec, (1.0, 1.0)).rho == pytest.approx(
                    example_rho(params), abs=1e-12)

    def test_known_values(self):
        assert example_rho(ExampleParams(p=0.5, alpha=0.5)) == pytest.approx(
            math.sqrt(0.5) - 1.0)
        assert example_rho(ExampleParams(p=0.2, alpha=0.2)) == pytest.approx(
            math.sqrt(1.28) - 1.0)

    def test_critical_parameters(self):
        p = 1.0 - math.sqrt(0.5)
        assert example_rho(ExampleParams(p=p, alpha=p)) == pytest.approx(0.0, abs=1e-12)


class TestExampleUv:
    def test_satisfies_root_system(self, rng):
        # q*v^2 - u + p*y = 0 and beta*u - v + alpha*z = 0
        for _ in range(30):
            p, alpha = 0.05 + 0.9 * rng.random(2)
            y, z = rng.random(2)
            params = ExampleParams(p=float(p), alpha=float(alpha))
            u, v = example_uv(params, float(y), float(z))
            assert params.q * v * v - u + params.p * y == pytest.approx(0.0, abs=1e-12)
            assert params.beta * u - v + params.alpha * z == pytest.approx(0.0, abs=1e-12)

    def test_frozen_half_values(self):
        u, v = example_uv(ExampleParams(p=0.5, alpha=0.5), 0.5, 0.5)
        assert u == pytest.approx(0.3377223, abs=1e-6)
        assert v == pytest.approx(0.4188612, abs=1e-6)

    def test_unit_values_give_extinction_probability(self):
        sup = ExampleParams(p=0.2, alpha=0.2)
        assert example_uv(sup, 1.0, 1.0) == pytest.approx((0.453125, 0.5625), abs=1e-12)
        sub = ExampleParams(p=0.5, alpha=0.5)
        # discriminant is (1 - 2*q*beta)^2, so the root hits all-ones exactly
        assert example_uv(sub, 1.0, 1.0) == pytest.approx((1.0, 1.0), abs=1e-9)

    def test_discriminant_nonnegative_on_box_corners(self, rng):
        # 4*q*beta*(p*beta + alpha) = 4*q*beta*(1 - q*beta) <= 1 always
        for _ in range(50):
            p, alpha = 0.02 + 0.96 * rng.random(2)
            example_uv(ExampleParams(p=float(p), alpha=float(alpha)), 1.0, 1.0)

    def test_out_of_range_values_rejected(self):
        with pytest.raises(SpecError):
            example_uv(ExampleParams(p=0.5, alpha=0.5), 1.5, 0.0)


class TestCrossModule:
    def test_marked_root_agrees_on_grid(self):
        params = ExampleParams(p=0.4, alpha=0.7)
        spec = example_spec(params)
        marks = pure_death_marks(spec)
        for y in (0.0, 0.225, 0.45, 0.675, 0.9):
            for z in (0.0, 0.225, 0.45, 0.675, 0.9):
                vals = MarkAssignment(values={(0, (0, 0)): y, (1, (0, 0)): z})
                root = marked_root(spec, marks, vals).q_marked
                assert root == pytest.approx(example_uv(params, y, z), abs=1e-9)

    def test_conditional_display_consistency(self):
        # supercritical: the displayed conditional forms equal root / q
        params = ExampleParams(p=0.2, alpha=0.2)
        spec = example_spec(params)
        q = extinction_prob(spec).q
        for y, z in ((0.0, 0.0), (0.5, 0.5), (0.9, 0.1), (0.3, 0.8)):
            u, v = example_uv(params, y, z)
            assert example_extinction_pgf(params, y, z, 0) == pytest.approx(
                u / q[0], abs=1e-9)
            assert example_extinction_pgf(params, y, z, 1) == pytest.approx(
                v / q[1], abs=1e-9)

    def test_subcritical_display_is_plain_root(self):
        params = ExampleParams(p=0.5, alpha=0.5)
        u, v = example_uv(params, 0.3, 0.6)
        assert example_extinction_pgf(params, 0.3, 0.6, 0) == u
        assert example_extinction_pgf(params, 0.3, 0.6, 1) == v
