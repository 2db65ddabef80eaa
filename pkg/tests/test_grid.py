import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from obslab.grid import (
    BallSpec,
    GridError,
    GridSpec,
    OutOfDomainError,
    ResolutionError,
    ScalarField,
    ball_integral,
    centered_box,
    discrete_laplacian,
    field_from_function,
    gradient,
    interpolate,
    interpolate_many,
    sphere_integral,
    sup_on_ball,
)


def quadratic_field(grid, matrix):
    matrix = np.asarray(matrix, dtype=float)
    return field_from_function(grid, lambda p: 0.5 * np.einsum("mi,ij,mj->m", p, matrix, p))


class TestGridSpec:
    def test_spacing_and_shape(self):
        g = GridSpec(lower=(-1.0, -1.0), upper=(1.0, 1.0), nodes_per_axis=(129, 129))
        assert g.dimension == 2
        assert g.h == pytest.approx(2.0 / 128.0)
        assert g.shape == (129, 129)
        assert g.node_count == 129 * 129

    def test_rejects_empty_box(self):
        with pytest.raises(GridError):
            GridSpec(lower=(0.0,), upper=(0.0,), nodes_per_axis=(5,))

    def test_rejects_too_few_nodes(self):
        with pytest.raises(GridError):
            GridSpec(lower=(0.0,), upper=(1.0,), nodes_per_axis=(2,))

    def test_rejects_nonuniform_spacing(self):
        with pytest.raises(GridError):
            GridSpec(lower=(0.0, 0.0), upper=(1.0, 2.0), nodes_per_axis=(11, 11))

    def test_rejects_dimension_4(self):
        with pytest.raises(GridError):
            GridSpec(lower=(0.0,) * 4, upper=(1.0,) * 4, nodes_per_axis=(5,) * 4)


class TestScalarField:
    def test_shape_mismatch(self):
        g = centered_box(1, 1.0, 5)
        with pytest.raises(GridError):
            ScalarField(g, np.zeros(4))

    def test_rejects_inf(self):
        g = centered_box(1, 1.0, 5)
        with pytest.raises(GridError):
            ScalarField(g, np.array([0.0, 1.0, np.inf, 0.0, 0.0]))

    def test_values_read_only(self):
        g = centered_box(1, 1.0, 5)
        f = ScalarField(g, np.zeros(5))
        with pytest.raises(ValueError):
            f.values[0] = 1.0


class TestDiscreteLaplacian:
    def test_unit_trace_quadratic_gives_one(self):
        # central stencil exact on quadratics
        g = centered_box(2, 1.0, 33)
        f = quadratic_field(g, [[0.3, 0.1], [0.1, 0.7]])
        lap = discrete_laplacian(f)
        assert_allclose(lap.interior(), 1.0, atol=1e-11)

    def test_constant_annihilated(self):
        g = centered_box(3, 1.0, 9)
        f = ScalarField(g, np.full(g.shape, 4.2))
        lap = discrete_laplacian(f)
        assert_allclose(lap.interior(), 0.0, atol=1e-12)

    def test_halfspace_kink_by_node_category(self):
        # u = (1/2)[(x1)_+]^2 with a node layer exactly at x1 = 0:
        # stencil gives 1 on x1 > 0, 0 on x1 < 0, 1/2 on the kink layer
        g = centered_box(2, 1.0, 17)
        f = field_from_function(g, lambda p: 0.5 * np.maximum(p[:, 0], 0.0) ** 2)
        lap = discrete_laplacian(f).values
        x = g.axis(0)
        for i in range(1, 16):
            expected = 1.0 if x[i] > 0 else 0.0
            if x[i] == 0.0:
                expected = 0.5
            assert_allclose(lap[i, 1:-1], expected, atol=1e-12)

    def test_boundary_marked_undefined(self):
        g = centered_box(2, 1.0, 9)
        lap = discrete_laplacian(ScalarField(g, np.zeros(g.shape)))
        assert np.isnan(lap.values[0, :]).all()
        assert np.isnan(lap.values[:, -1]).all()
        assert np.isfinite(lap.interior()).all()

    def test_linearity_on_random_fields(self):
        rng = np.random.default_rng(7)
        g = centered_box(2, 1.0, 15)
        for _ in range(20):
            f1 = ScalarField(g, rng.standard_normal(g.shape))
            f2 = ScalarField(g, rng.standard_normal(g.shape))
            a, b = rng.standard_normal(2)
            combo = ScalarField(g, a * f1.values + b * f2.values)
            lhs = discrete_laplacian(combo).interior()
            rhs = a * discrete_laplacian(f1).interior() + b * discrete_laplacian(f2).interior()
            assert_allclose(lhs, rhs, atol=1e-9)


class TestInterpolate:
    def test_affine_exact(self):
        g = centered_box(2, 1.0, 11)
        f = field_from_function(g, lambda p: 2.0 * p[:, 0] + 3.0)
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, size=(50, 2))
        assert_allclose(interpolate_many(f, pts), 2.0 * pts[:, 0] + 3.0, atol=1e-12)

    def test_node_coincident_exact(self):
        g = centered_box(2, 1.0, 11)
        rng = np.random.default_rng(5)
        f = ScalarField(g, rng.standard_normal(g.shape))
        assert interpolate(f, (g.axis(0)[3], g.axis(1)[7])) == pytest.approx(
            f.values[3, 7], abs=1e-14
        )

    def test_quadratic_within_2h2(self):
        # p = |x|^2/4 at (0.05, 0.05) on h = 0.1
        g = centered_box(2, 1.0, 21)
        assert g.h == pytest.approx(0.1)
        f = quadratic_field(g, [[0.5, 0.0], [0.0, 0.5]])
        value = interpolate(f, (0.05, 0.05))
        exact = 0.25 * (0.05**2 + 0.05**2)
        assert abs(value - exact) <= 2 * g.h**2

    def test_between_neighbor_bounds(self):
        # multilinear convexity: value within local nodal min/max
        rng = np.random.default_rng(11)
        g = centered_box(2, 1.0, 9)
        f = ScalarField(g, rng.standard_normal(g.shape))
        for _ in range(40):
            p = rng.uniform(-1, 1, size=2)
            t = (p - np.array(g.lower)) / g.h
            i0 = np.clip(np.floor(t).astype(int), 0, np.array(g.shape) - 2)
            cell = f.values[i0[0] : i0[0] + 2, i0[1] : i0[1] + 2]
            v = interpolate(f, p)
            assert cell.min() - 1e-12 <= v <= cell.max() + 1e-12

    def test_outside_box_raises(self):
        g = centered_box(2, 1.0, 9)
        f = ScalarField(g, np.zeros(g.shape))
        with pytest.raises(OutOfDomainError):
            interpolate(f, (1.5, 0.0))


class TestBallIntegral:
    def test_ball_volume(self):
        g = centered_box(2, 1.5, 193)
        f = ScalarField(g, np.ones(g.shape))
        ball = BallSpec((0.0, 0.0), 1.0)
        val = ball_integral(f, ball)
        assert abs(val - math.pi) <= 5.0 * (g.h / 1.0) * math.pi

    def test_odd_function_cancels(self):
        g = centered_box(2, 1.5, 129)
        f = field_from_function(g, lambda p: p[:, 0])
        val = ball_integral(f, BallSpec((0.0, 0.0), 1.0))
        assert abs(val) <= 1e-10

    def test_weiss_bulk_closed_form(self):
        # (|grad p|^2 + 2p) for p = |x|^2/4 over B_1 is 3 pi / 8
        g = centered_box(2, 1.5, 257)
        f = field_from_function(g, lambda p: 0.75 * np.sum(p * p, axis=1))
        val = ball_integral(f, BallSpec((0.0, 0.0), 1.0))
        assert val == pytest.approx(3 * math.pi / 8, rel=5e-3)

    def test_resolution_error(self):
        g = centered_box(2, 1.0, 17)
        f = ScalarField(g, np.ones(g.shape))
        with pytest.raises(ResolutionError):
            ball_integral(f, BallSpec((0.0, 0.0), 2.0 * g.h))

    def test_ball_outside_box(self):
        g = centered_box(2, 1.0, 33)
        f = ScalarField(g, np.ones(g.shape))
        with pytest.raises(OutOfDomainError):
            ball_integral(f, BallSpec((0.9, 0.0), 0.5))

    def test_linearity_and_monotonicity(self):
        rng = np.random.default_rng(13)
        g = centered_box(2, 1.0, 65)
        ball = BallSpec((0.1, -0.05), 0.5)
        for _ in range(10):
            v1 = rng.standard_normal(g.shape)
            v2 = rng.standard_normal(g.shape)
            a, b = rng.standard_normal(2)
            lhs = ball_integral(ScalarField(g, a * v1 + b * v2), ball)
            rhs = a * ball_integral(ScalarField(g, v1), ball) + b * ball_integral(
                ScalarField(g, v2), ball
            )
            assert lhs == pytest.approx(rhs, abs=1e-10)
            lo = np.minimum(v1, v2)
            assert ball_integral(ScalarField(g, lo), ball) <= ball_integral(
                ScalarField(g, np.maximum(v1, v2)), ball
            ) + 1e-12


class TestSphereIntegral:
    def test_quadratic_squared_on_circle(self):
        # p = |x|^2/4 is 1/4 on the unit circle: int p^2 = 2 pi / 16
        g = centered_box(2, 1.5, 257)
        f = field_from_function(g, lambda p: (0.25 * np.sum(p * p, axis=1)) ** 2)
        val = sphere_integral(f, BallSpec((0.0, 0.0), 1.0), 64)
        assert val == pytest.approx(math.pi / 8, rel=5e-3)

    def test_sphere_area_3d(self):
        g = centered_box(3, 1.5, 49)
        f = ScalarField(g, np.ones(g.shape))
        val = sphere_integral(f, BallSpec((0.0, 0.0, 0.0), 1.0), 32)
        assert val == pytest.approx(4 * math.pi, rel=5e-3)

    def test_odd_integrand_cancels(self):
        g = centered_box(2, 1.5, 129)
        f = field_from_function(g, lambda p: p[:, 0] * np.abs(p[:, 1]))
        val = sphere_integral(f, BallSpec((0.0, 0.0), 1.0), 64)
        assert abs(val) <= 1e-10

    def test_one_dimensional_two_point_sum(self):
        g = centered_box(1, 1.0, 65)
        f = field_from_function(g, lambda p: p[:, 0] ** 2)
        val = sphere_integral(f, BallSpec((0.0,), 0.5))
        assert val == pytest.approx(0.5, abs=1e-6)

    def test_homogeneous_scaling(self):
        # p two-homogeneous: int_{dB_r} p^2 = r^(n-1+4) int_{dB_1} p^2
        g = centered_box(2, 1.5, 257)
        f = field_from_function(
            g, lambda p: (0.5 * (0.6 * p[:, 0] ** 2 + 0.4 * p[:, 1] ** 2)) ** 2
        )
        base = sphere_integral(f, BallSpec((0.0, 0.0), 1.0), 128)
        for r in (0.5, 0.75):
            val = sphere_integral(f, BallSpec((0.0, 0.0), r), 128)
            assert val == pytest.approx(r ** (2 - 1 + 4) * base, rel=2e-3)

    def test_angular_samples_floor(self):
        g = centered_box(2, 1.0, 33)
        f = ScalarField(g, np.ones(g.shape))
        with pytest.raises(GridError):
            sphere_integral(f, BallSpec((0.0, 0.0), 0.5), 8)


class TestSupOnBall:
    def test_halfspace_profile(self):
        g = centered_box(2, 1.0, 129)
        f = field_from_function(g, lambda p: 0.5 * np.maximum(p[:, 0], 0.0) ** 2)
        for r in (0.25, 0.5):
            s = sup_on_ball(f, BallSpec((0.0, 0.0), r))
            assert abs(s - 0.5 * r * r) <= 2.0 * g.h * r

    def test_zero_field(self):
        g = centered_box(2, 1.0, 33)
        f = ScalarField(g, np.zeros(g.shape))
        assert sup_on_ball(f, BallSpec((0.0, 0.0), 0.5)) == 0.0

    def test_isotropic_quadratic(self):
        g = centered_box(2, 1.0, 129)
        f = field_from_function(g, lambda p: 0.25 * np.sum(p * p, axis=1))
        for r in (0.25, 0.5):
            s = sup_on_ball(f, BallSpec((0.0, 0.0), r))
            assert abs(s - 0.25 * r * r) <= 2.0 * g.h * r


class TestGradient:
    def test_affine_exact_everywhere(self):
        g = centered_box(2, 1.0, 17)
        f = field_from_function(g, lambda p: 3.0 * p[:, 0] - 2.0 * p[:, 1] + 1.0)
        gx, gy = gradient(f)
        assert_allclose(gx.values, 3.0, atol=1e-12)
        assert_allclose(gy.values, -2.0, atol=1e-12)

    def test_quadratic_exact(self):
        # one-sided boundary formula is second order, so exact here too
        g = centered_box(2, 1.0, 17)
        f = quadratic_field(g, [[1.0, 0.0], [0.0, 0.0]])
        gx, gy = gradient(f)
        X, _ = g.meshgrid()
        assert_allclose(gx.values, X, atol=1e-12)
        assert_allclose(gy.values, 0.0, atol=1e-12)

    def test_kink_derivative_bound(self):
        # d1 u at the kink layer of (1/2)[(x1)_+]^2 is h/4, within h/2
        g = centered_box(1, 1.0, 17)
        f = field_from_function(g, lambda p: 0.5 * np.maximum(p[:, 0], 0.0) ** 2)
        (gx,) = gradient(f)
        kink = np.argwhere(g.axis(0) == 0.0).item()
        assert abs(gx.values[kink]) <= g.h / 2.0
