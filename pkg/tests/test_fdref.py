"""Unit tests for the finite-difference reference solvers."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import ConvergenceError, SingularSystemError, UnsupportedProblemError
from core.fdref import (
    ReferenceSolution,
    shishkin_mesh,
    solve_1d,
    solve_2d,
    solve_reference,
    solve_time,
    thomas_solve,
)
from core.layers import Axis, BoundaryLayerSpec, Side
from core.models import FDScheme
from core.problems import ProblemDefinition, ProblemKind, analytic_on_grid, get_example


def _max_error(problem, reference: ReferenceSolution) -> float:
    exact = analytic_on_grid(problem, reference.grid_points())
    return float(np.abs(reference.grid_values() - exact).max())


class TestShishkinMesh:
    """Test fitted mesh construction."""

    def test_four_cells_right_layer(self):
        mesh = shishkin_mesh(4, 1e-3, BoundaryLayerSpec(Axis.X, Side.RIGHT, 1.0))
        tau = 2e-3 * math.log(4)
        assert mesh.tau == pytest.approx(2.7726e-3, rel=1e-4)
        np.testing.assert_allclose(mesh.nodes, [0.0, (1 - tau) / 2, 1 - tau, 1 - tau / 2, 1.0])

    def test_left_layer_mirrors(self):
        spec = BoundaryLayerSpec(Axis.X, Side.LEFT, 2.0)
        mesh = shishkin_mesh(8, 1e-3, spec)
        tau = 2 * 1e-3 / 2.0 * math.log(8)
        np.testing.assert_allclose(mesh.nodes[:5], np.linspace(0.0, tau, 5))
        assert mesh.nodes[-1] == 1.0
        assert mesh.side == Side.LEFT

    def test_tau_capped_at_half(self):
        mesh = shishkin_mesh(16, 0.5, BoundaryLayerSpec(Axis.X, Side.RIGHT, 1.0))
        assert mesh.tau == 0.5
        np.testing.assert_allclose(mesh.nodes, np.linspace(0.0, 1.0, 17))

    def test_no_layer_is_uniform(self):
        mesh = shishkin_mesh(6, 1e-3)
        assert mesh.n_cells == 6
        np.testing.assert_allclose(mesh.widths, 1.0 / 6)

    @given(
        half=st.integers(2, 512),
        epsilon=st.floats(1e-6, 1.0),
        side=st.sampled_from(list(Side)),
        coeff=st.floats(0.5, 5.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_nodes_strictly_increasing(self, half, epsilon, side, coeff):
        mesh = shishkin_mesh(2 * half, epsilon, BoundaryLayerSpec(Axis.X, side, coeff))
        assert len(mesh.nodes) == 2 * half + 1
        assert mesh.nodes[0] == 0.0 and mesh.nodes[-1] == 1.0
        assert np.all(np.diff(mesh.nodes) > 0)
        assert 0.0 < mesh.tau <= 0.5

    @pytest.mark.parametrize("n", [2, 5])
    def test_invalid_cell_count(self, n):
        with pytest.raises(ValueError):
            shishkin_mesh(n, 1e-3)


class TestThomas:
    """Test the tridiagonal solver."""

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(0)
        n = 12
        lower, upper = rng.random(n), rng.random(n)
        diag = 3.0 + rng.random(n)
        rhs = rng.random(n)
        dense = np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)
        np.testing.assert_allclose(thomas_solve(lower, diag, upper, rhs), np.linalg.solve(dense, rhs))

    def test_zero_pivot(self):
        with pytest.raises(SingularSystemError):
            thomas_solve(np.zeros(3), np.array([0.0, 1.0, 1.0]), np.zeros(3), np.ones(3))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            thomas_solve(np.zeros(3), np.ones(4), np.zeros(3), np.ones(3))


class TestSolve1D:
    """Test steady 1D references against closed forms."""

    @pytest.mark.parametrize("example_id", [1, 2, 3])
    def test_layer_examples_at_small_epsilon(self, example_id):
        problem = get_example(example_id, 1e-3)
        assert _max_error(problem, solve_1d(problem, 1024)) <= 1e-3

    @pytest.mark.parametrize("example_id", [1, 2, 3])
    def test_error_decreases_under_refinement(self, example_id):
        problem = get_example(example_id, 1e-3)
        errors = [_max_error(problem, solve_1d(problem, n)) for n in (512, 1024, 2048)]
        assert errors[0] > errors[1] > errors[2]

    def test_example2_moderate_epsilon(self):
        problem = get_example(2, 0.1)
        assert _max_error(problem, solve_1d(problem, 512)) <= 1e-3

    @pytest.mark.parametrize("scheme", [FDScheme.HYBRID, FDScheme.UPWIND])
    def test_refinement_reduces_error(self, scheme):
        problem = get_example(1, 1e-3)
        coarse = _max_error(problem, solve_1d(problem, 1024, scheme))
        fine = _max_error(problem, solve_1d(problem, 2048, scheme))
        assert fine < coarse

    def test_boundary_values_exact(self):
        problem = get_example(2, 1e-3)
        ref = solve_1d(problem, 64)
        assert ref.values[0] == problem.boundary_values(np.array([[0.0]]))[0]
        assert ref.values[-1] == problem.boundary_values(np.array([[1.0]]))[0]

    def test_maximum_principle(self):
        # -eps u'' + u' = 0 with u(0) = 0, u(1) = 1 stays within [0, 1]
        problem = ProblemDefinition(
            kind="steady1d", convection="1", boundary={"left": "0", "right": "1"}
        ).build(1e-4)
        ref = solve_1d(problem, 256, FDScheme.UPWIND)
        assert ref.values.min() >= -1e-12 and ref.values.max() <= 1.0 + 1e-12

    def test_rejects_other_kinds(self):
        with pytest.raises(UnsupportedProblemError):
            solve_1d(get_example(4), 16)

    def test_interpolation_between_nodes(self):
        problem = get_example(1, 0.1)
        ref = solve_1d(problem, 256)
        x = np.array([[0.123], [0.777]])
        np.testing.assert_allclose(ref.interpolate(x), analytic_on_grid(problem, x), atol=1e-3)


class TestSolve2D:
    """Test the five-point SOR solver."""

    def test_zero_data_gives_zero(self):
        problem = ProblemDefinition(
            kind="steady2d",
            convection=["1", "0"],
            boundary={"x0": "0", "x1": "0", "y0": "0", "y1": "0"},
        ).build(1e-3)
        ref = solve_2d(problem, 16)
        np.testing.assert_array_equal(ref.values, 0.0)

    def test_example4_edges_hold_boundary_data(self):
        problem = get_example(4, 1e-3)
        ref = solve_2d(problem, 32)
        x, y = ref.axes
        np.testing.assert_allclose(ref.values[0, :], np.sin(np.pi * y), atol=1e-15)
        np.testing.assert_allclose(ref.values[-1, :], 2 * np.sin(np.pi * y), atol=1e-15)
        np.testing.assert_allclose(ref.values[:, 0], 0.0, atol=1e-15)
        np.testing.assert_allclose(ref.values[:, -1], 0.0, atol=1e-15)
        assert np.isfinite(ref.values).all()

    def test_layer_axis_is_refined(self):
        ref = solve_2d(get_example(4, 1e-3), 16)
        x, y = ref.axes
        assert x[-2] > 0.99
        np.testing.assert_allclose(y, np.linspace(0.0, 1.0, 17))

    def test_sweep_cap(self):
        with pytest.raises(ConvergenceError):
            solve_2d(get_example(4, 0.5), 16, max_sweeps=10)

    @pytest.mark.slow
    def test_self_convergence(self):
        problem = get_example(4, 0.5)
        coarse = solve_2d(problem, 64)
        fine = solve_2d(problem, 128)
        diff = np.abs(fine.interpolate(coarse.grid_points()) - coarse.grid_values())
        assert diff.max() < 1e-3

    @pytest.mark.slow
    def test_example4_full_resolution(self):
        ref = solve_2d(get_example(4, 1e-3), 256)
        assert ref.values.max() <= 2.0 + 1e-9


class TestSolveTime:
    """Test the backward Euler solver."""

    def test_linear_solution_is_exact(self):
        # u = x + t solves u_t - eps*u_xx + u_x = 2
        problem = ProblemDefinition(
            kind="time1d",
            convection="1",
            forcing="2",
            boundary={"left": "t", "right": "1 + t"},
            initial="x",
        ).build(1e-2)
        ref = solve_time(problem, 16, 8)
        x, t = ref.axes
        expected = x[:, None] + t[None, :]
        np.testing.assert_allclose(ref.values, expected, atol=1e-10)

    def test_example8_initial_slice(self):
        problem = get_example(8, 1e-3)
        ref = solve_time(problem, 64, 16)
        x = ref.axes[0]
        np.testing.assert_allclose(ref.values[1:-1, 0], np.sin(2 * np.pi * x[1:-1]))
        assert ref.kind == ProblemKind.TIME_1D
        assert np.isfinite(ref.values).all()

    @pytest.mark.parametrize("example_id", [7, 8])
    def test_boundary_traces_hold_boundary_data(self, example_id):
        problem = get_example(example_id, 1e-2)
        ref = solve_time(problem, 32, 8)
        t = ref.axes[1][1:]
        left = problem.boundary_values(np.column_stack([np.zeros_like(t), t]))
        right = problem.boundary_values(np.column_stack([np.ones_like(t), t]))
        np.testing.assert_array_equal(ref.values[0, 1:], left)
        np.testing.assert_array_equal(ref.values[-1, 1:], right)

    @pytest.mark.slow
    def test_self_convergence(self):
        # u = exp(-t)*sin(pi*x) under the Example 8 operator; data compatible at the corners
        problem = ProblemDefinition(
            kind="time1d",
            convection="1",
            reaction="5",
            forcing="exp(-t)*((4 + eps*pi**2)*sin(pi*x) + pi*cos(pi*x))",
            boundary={"left": "0", "right": "0"},
            initial="sin(pi*x)",
        ).build(0.1)
        coarse = solve_time(problem, 256, 256)
        fine = solve_time(problem, 512, 512)
        diff = np.abs(fine.interpolate(coarse.grid_points()) - coarse.grid_values())
        assert diff.max() < 5e-3

    def test_reference_dispatch(self):
        ref = solve_reference(get_example(7, 1e-3), 32, nt=4)
        assert ref.values.shape == (33, 5)

    def test_rejects_steady_problem(self):
        with pytest.raises(UnsupportedProblemError):
            solve_time(get_example(1), 16, 4)


class TestReferenceSolution:
    """Test grid bookkeeping."""

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ReferenceSolution("p", ProblemKind.STEADY_1D, 0.1, [np.linspace(0, 1, 5)], np.zeros(4))

    def test_non_finite_values(self):
        with pytest.raises(ValueError):
            ReferenceSolution(
                "p", ProblemKind.STEADY_1D, 0.1, [np.linspace(0, 1, 3)], np.array([0.0, np.nan, 1.0])
            )

    def test_grid_order_matches_values(self):
        axes = [np.array([0.0, 0.5, 1.0]), np.array([0.0, 1.0])]
        values = np.arange(6, dtype=float).reshape(3, 2)
        ref = ReferenceSolution("p", ProblemKind.STEADY_2D, 0.1, axes, values)
        pts = ref.grid_points()
        np.testing.assert_allclose(ref.interpolate(pts), ref.grid_values())
        assert pts[1, 0] == 0.5 and pts[1, 1] == 0.0
