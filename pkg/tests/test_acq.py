import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldsid.acq import (
    DEFAULT_CONE,
    Cone,
    build_polytope,
    cone_contains,
    is_acquiescent,
    no_blowup_ok,
    project,
    project_qp,
    relaxed_cone,
    sandwich_levels,
    scaled_char_values,
    spectral_radius_ok,
)
from ldsid.gen import random_acquiescent
from ldsid.poly import Polynomial, char_poly, coeffs_to_a, roots


def sample_members(count, n, alpha, seed, cone=DEFAULT_CONE, strategy="gaussian_coeff"):
    rng = np.random.default_rng(seed)
    return [
        random_acquiescent(n, alpha, cone, strategy=strategy, rng=rng).a
        for _ in range(count)
    ]


class TestCone:
    CONE = Cone(1.0, 0.5, 2.0)

    def test_interior_point(self):
        assert cone_contains(self.CONE, 1.0)

    def test_imaginary_axis_excluded(self):
        assert not cone_contains(self.CONE, 1j)

    def test_lower_bound_strict(self):
        assert not cone_contains(self.CONE, 0.5 + 0.0j)
        assert cone_contains(self.CONE, 0.5 + 0.0j, strict_interval=False)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            Cone(0.0, 0.1, 10.0)
        with pytest.raises(ValueError):
            Cone(0.1, 3.0, 2.0)


class TestMembership:
    def test_zero_vector_member(self):
        assert is_acquiescent(np.zeros(4), 1.0)
        assert is_acquiescent(np.zeros(4), 0.5, Cone(0.3, 0.9, 1.1))

    def test_l1_ball_with_small_slope_cone(self):
        # Inside the l1 ball of radius sqrt(2)/2 the scaled polynomial stays
        # within sqrt(2)/2 of 1, which fits a cone with vanishing slope slack
        # and window containing (1 - r, 1 + r).
        cone = Cone(1e-9, 0.25, 2.0)
        rng = np.random.default_rng(1)
        for _ in range(200):
            a = rng.normal(size=3)
            a *= (np.sqrt(2) / 2) * rng.uniform() / np.abs(a).sum()
            assert is_acquiescent(a, 1.0, cone)

    def test_colliding_roots_not_member(self):
        p = Polynomial.from_roots([0.99] * 8)
        assert not is_acquiescent(coeffs_to_a(p), 1.0)

    def test_grid_size_floor(self):
        with pytest.raises(ValueError, match="grid"):
            is_acquiescent(np.zeros(8), 1.0, M=100)

    def test_margin_report_fields(self):
        rep = is_acquiescent(np.zeros(2), 1.0)
        assert rep.slope_margin == pytest.approx(1.0)
        assert rep.lower_margin == pytest.approx(1.0 - DEFAULT_CONE.tau1)
        assert rep.upper_margin == pytest.approx(DEFAULT_CONE.tau2 - 1.0)


class TestPolytope:
    def test_origin_feasible(self):
        polytope = build_polytope(3, 0.9)
        assert polytope.contains(np.zeros(3))

    def test_constraints_affine(self):
        polytope = build_polytope(3, 0.9)
        rng = np.random.default_rng(7)
        for _ in range(20):
            a, b = rng.normal(size=3), rng.normal(size=3)
            lam = rng.uniform()
            mix = polytope.constraint_values(lam * a + (1 - lam) * b)
            interp = lam * polytope.constraint_values(a) + (1 - lam) * polytope.constraint_values(b)
            assert np.abs(mix - interp).max() < 1e-12

    def test_sandwich(self):
        # Full-circle members (approximated by a dense grid check at the tight
        # cone) satisfy the polytope, and polytope members satisfy the dense
        # grid check at the relaxed cone.
        n, alpha = 3, 0.9
        polytope = build_polytope(n, alpha)
        dense_M = 8 * polytope.M
        relaxed = relaxed_cone(DEFAULT_CONE)
        members = sample_members(250, n, alpha, seed=11)
        for a in members:
            if is_acquiescent(a, alpha, DEFAULT_CONE, M=dense_M):
                assert polytope.contains(a, tol=1e-12)
        rng = np.random.default_rng(13)
        for _ in range(250):
            point = project(rng.normal(0, 0.5, size=n), polytope)
            assert is_acquiescent(point, alpha, relaxed, M=dense_M)

    def test_membership_equals_constraint_check(self):
        n, alpha = 2, 1.0
        polytope = build_polytope(n, alpha)
        kappa_cone = Cone(*polytope.kappa)
        rng = np.random.default_rng(17)
        for _ in range(200):
            a = rng.normal(0, 0.4, size=n)
            vals = scaled_char_values(a, alpha, polytope.M)
            direct = bool(
                np.all(vals.real >= (1 + polytope.kappa[0]) * np.abs(vals.imag))
                and np.all(vals.real >= polytope.kappa[1])
                and np.all(vals.real <= polytope.kappa[2])
            )
            assert polytope.contains(a, tol=1e-12) == direct

    def test_json_export(self):
        polytope = build_polytope(2, 0.9)
        data = polytope.to_json()
        assert data["n"] == 2
        assert len(data["grid_angles"]) == polytope.M
        assert data["kappa"] == list(sandwich_levels(DEFAULT_CONE))


class TestProject:
    def test_feasible_point_unchanged(self):
        polytope = build_polytope(2, 0.9)
        a = np.array([0.05, -0.03])
        assert polytope.contains(a)
        assert np.array_equal(project(a, polytope), a)

    def test_single_halfspace_formula(self):
        # Violating only the upper real-part bound at one angle reduces the
        # projection to the classic single-constraint formula.
        polytope = build_polytope(1, 1.0, kappa=(0.075, 0.075, 1.5))
        a = np.array([0.5005])
        vals = polytope.constraint_values(a)
        violated = np.flatnonzero(vals > 1e-12)
        got = project(a, polytope)
        worst = violated[np.argmax(vals[violated])]
        nu = polytope.normals[worst]
        expected = a - (nu @ a - polytope.offsets[worst]) * nu / (nu @ nu)
        assert got == pytest.approx(expected, abs=1e-7)

    def test_brute_force_grid_oracle(self):
        polytope = build_polytope(2, 0.9)
        grid_1d = np.linspace(-1.2, 1.2, 400)
        gx, gy = np.meshgrid(grid_1d, grid_1d)
        points = np.stack([gx.ravel(), gy.ravel()], axis=1)
        feasible = points[
            (points @ polytope.normals.T - polytope.offsets <= 0).all(axis=1)
        ]
        rng = np.random.default_rng(23)
        for _ in range(8):
            a = rng.normal(0, 1.0, size=2)
            if polytope.contains(a):
                continue
            x = project(a, polytope)
            assert polytope.constraint_values(x).max() <= 1e-8
            best = feasible[np.argmin(np.sum((feasible - a) ** 2, axis=1))]
            assert np.linalg.norm(x - a) <= np.linalg.norm(best - a) + 1e-4

    def test_agrees_with_qp(self):
        polytope = build_polytope(3, 0.9)
        rng = np.random.default_rng(29)
        for _ in range(10):
            a = rng.normal(0, 0.8, size=3)
            x_dyk = project(a, polytope)
            x_qp = project_qp(a, polytope)
            assert np.linalg.norm(x_dyk - x_qp) < 1e-5

    def test_idempotent(self):
        polytope = build_polytope(2, 0.9)
        rng = np.random.default_rng(31)
        for _ in range(20):
            x = project(rng.normal(0, 1.0, size=2), polytope)
            again = project(x, polytope)
            assert np.linalg.norm(again - x) <= 1e-10


class TestSpectralRadius:
    def test_zero_vector(self):
        assert spectral_radius_ok(np.zeros(3), 0.1)

    def test_root_outside(self):
        assert not spectral_radius_ok(np.array([-1.1]), 1.0)

    def test_members_stay_inside(self):
        for a in sample_members(100, 3, 0.9, seed=37):
            assert spectral_radius_ok(a, 0.9)


class TestNoBlowup:
    def test_zero_vector_trivial(self):
        report = no_blowup_ok(np.zeros(2), 0.9)
        assert report.sum_ok and report.pointwise_ok

    def test_members_pass(self):
        for a in sample_members(20, 3, 0.9, seed=41):
            report = no_blowup_ok(a, 0.9, K=2000)
            assert bool(report)
            assert report.discounted_sum <= report.discounted_bound

    def test_pointwise_envelope(self):
        for a in sample_members(10, 2, 0.9, seed=43):
            report = no_blowup_ok(a, 0.9, K=500)
            assert report.max_pointwise_excess <= 0.0

    def test_precondition_distinct_from_bound_failure(self):
        bad = coeffs_to_a(Polynomial.from_roots([0.99] * 4))
        with pytest.raises(ValueError, match="precondition"):
            no_blowup_ok(bad, 1.0)


class TestMonotonicity:
    def test_members_stay_members_at_larger_radius(self):
        members = sample_members(60, 3, 0.9, seed=47)
        for a in members:
            for beta in (0.92, 0.94, 0.96, 0.98, 1.0):
                assert is_acquiescent(a, beta)

    def test_convexity_midpoints(self):
        polytope = build_polytope(3, 0.9)
        rng = np.random.default_rng(53)
        members = []
        while len(members) < 30:
            a = project(rng.normal(0, 0.5, size=3), polytope)
            members.append(a)
        for i in range(0, 30, 2):
            mid = 0.5 * (members[i] + members[i + 1])
            assert polytope.contains(mid, tol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-0.3, 0.3), min_size=1, max_size=6))
def test_scaled_values_match_char_poly(lower):
    a = np.asarray(lower)
    vals = scaled_char_values(a, 0.9, 64)
    p = char_poly(a)
    z = 0.9 * np.exp(2j * np.pi * np.arange(64) / 64)
    assert np.abs(vals - p(z) / z ** len(a)).max() < 1e-10
