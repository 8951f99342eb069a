"""Unit tests for problem definitions and the residual operator."""

import json

import numpy as np
import pytest
from pydantic import ValidationError

from core.errors import MissingAnalyticError
from core.problems import (
    ProblemDefinition,
    ProblemKind,
    analytic_on_grid,
    builtin_examples,
    compile_expression,
    get_example,
    load_problem_file,
    residual,
)
from fields.analytic import AnalyticField, CallableField, ConstantField


def _wave_field(dim: int) -> CallableField:
    # sin(pi*x) in the first coordinate, constant in the others
    def func(p):
        grad = np.zeros_like(p)
        hess = np.zeros_like(p)
        grad[:, 0] = np.pi * np.cos(np.pi * p[:, 0])
        hess[:, 0] = -np.pi**2 * np.sin(np.pi * p[:, 0])
        return np.sin(np.pi * p[:, 0]), grad, hess

    return CallableField(func, dim=dim)


def _exp_field(dim: int) -> CallableField:
    # exp(x + 2*t)
    def func(p):
        value = np.exp(p[:, 0] + 2.0 * p[:, 1])
        grad = np.column_stack([value, 2.0 * value])
        hess = np.column_stack([value, 4.0 * value])
        return value, grad, hess

    return CallableField(func, dim=dim)


class TestBuiltinExamples:
    """Test the benchmark set."""

    def test_eight_examples(self):
        problems = builtin_examples(1e-3)
        assert [p.example_id for p in problems] == list(range(1, 9))
        kinds = [p.kind for p in problems]
        assert kinds[:3] == [ProblemKind.STEADY_1D] * 3
        assert kinds[3:6] == [ProblemKind.STEADY_2D] * 3
        assert kinds[6:] == [ProblemKind.TIME_1D] * 2
        assert all(p.epsilon == 1e-3 for p in problems)

    def test_only_1d_examples_have_closed_forms(self):
        assert [p.has_analytic for p in builtin_examples()] == [True] * 3 + [False] * 5

    @pytest.mark.parametrize("example_id", [0, 9])
    def test_unknown_example(self, example_id):
        with pytest.raises(ValueError):
            get_example(example_id)

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ValueError):
            get_example(1, 0.0)

    def test_with_epsilon_rebuilds_coefficients(self):
        coarse = get_example(1, 0.1)
        fine = coarse.with_epsilon(0.01)
        x = np.array([[0.5]])
        assert fine.epsilon == 0.01
        assert fine.forcing(x)[0] == pytest.approx(0.01 * np.pi**2)
        assert coarse.forcing(x)[0] == pytest.approx(0.1 * np.pi**2)

    def test_example2_analytic_matches_right_boundary(self):
        problem = get_example(2, 1e-3)
        value = analytic_on_grid(problem, np.array([[1.0]]))[0]
        assert value == pytest.approx(1.0 + np.exp(-1.0), rel=1e-12)
        assert problem.boundary_values(np.array([[1.0]]))[0] == pytest.approx(value)

    def test_example1_analytic_boundary_values(self):
        problem = get_example(1, 1e-3)
        values = analytic_on_grid(problem, np.array([[0.0], [1.0]]))
        np.testing.assert_allclose(values, [0.0, 1.0], atol=1e-12)

    def test_example3_analytic_left_value(self):
        problem = get_example(3, 1e-3)
        assert analytic_on_grid(problem, np.array([[0.0]]))[0] == pytest.approx(0.0, abs=1e-14)

    def test_analytic_stays_finite_at_tiny_epsilon(self):
        for example_id in (1, 2, 3):
            problem = get_example(example_id, 1e-38)
            values = analytic_on_grid(problem, np.linspace(0.0, 1.0, 101)[:, None])
            assert np.isfinite(values).all()

    def test_missing_analytic(self):
        with pytest.raises(MissingAnalyticError):
            analytic_on_grid(get_example(4), np.array([[0.5, 0.5]]))
        with pytest.raises(MissingAnalyticError):
            AnalyticField(get_example(5))

    def test_2d_boundary_data(self):
        problem = get_example(4, 1e-3)
        pts = np.array([[0.0, 0.5], [1.0, 0.5], [0.3, 0.0], [0.3, 1.0]])
        np.testing.assert_allclose(problem.boundary_values(pts), [1.0, 2.0, 0.0, 0.0], atol=1e-12)

    def test_edge_tolerance_is_round_off(self):
        problem = get_example(4, 1e-3)
        on_edge = problem.boundary_values(np.array([[1.0 - 1e-15, 0.5]]))
        assert on_edge[0] == pytest.approx(2.0)
        assert np.isnan(problem.boundary_values(np.array([[1.0 - 1e-10, 0.5]])))[0]

    def test_time_data(self):
        problem = get_example(8, 1e-3)
        np.testing.assert_allclose(problem.initial_values([0.25]), [1.0])
        pts = np.array([[0.0, 0.4], [1.0, 0.4]])
        np.testing.assert_allclose(problem.boundary_values(pts), [0.0, 1.0])

    def test_initial_data_only_for_time_problems(self):
        with pytest.raises(ValueError):
            get_example(1).initial_values([0.5])


class TestResidual:
    """Test the residual operator."""

    @pytest.mark.parametrize("example_id", [1, 2, 3])
    @pytest.mark.parametrize("epsilon", [0.1, 0.01])
    def test_closed_forms_solve_their_equations(self, example_id, epsilon):
        problem = get_example(example_id, epsilon)
        x = np.random.default_rng(0).random((100, 1))
        r = residual(problem, AnalyticField(problem), x)
        assert np.abs(r).max() < 1e-6

    def test_example1_at_small_epsilon(self):
        problem = get_example(1, 0.1)
        x = np.linspace(0.01, 0.99, 50)[:, None]
        assert np.abs(residual(problem, AnalyticField(problem), x)).max() < 1e-8

    def test_example3_single_point(self):
        problem = get_example(3, 0.1)
        r = residual(problem, AnalyticField(problem), np.array([[0.3]]))
        assert abs(r[0]) < 1e-8

    def test_constant_field(self):
        problem = get_example(1, 0.001)
        r = residual(problem, ConstantField(5.0), np.array([[0.5]]))
        assert r[0] == pytest.approx(-(0.001 * np.pi**2), rel=1e-10)

    def test_homogeneous_drops_forcing(self):
        problem = get_example(1, 0.001)
        r = residual(problem, ConstantField(5.0), np.array([[0.5]]), homogeneous=True)
        assert r[0] == 0.0

    def test_time_operator_includes_time_derivative(self):
        problem = get_example(8, 0.01)
        # u = t: u_t = 1, so R = 1 + 5*t
        field = CallableField(
            lambda p: (p[:, 1], np.column_stack([np.zeros(len(p)), np.ones(len(p))]), np.zeros((len(p), 2))),
            dim=2,
        )
        pts = np.array([[0.3, 0.2], [0.6, 0.5]])
        np.testing.assert_allclose(residual(problem, field, pts), [2.0, 3.5])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            residual(get_example(4), ConstantField(0.0, dim=1), np.array([[0.5]]))

    @pytest.mark.parametrize("example_id", [2, 3, 8])
    def test_residual_is_affine(self, example_id):
        problem = get_example(example_id, 0.05)
        dim = 2 if example_id == 8 else 1
        u = _wave_field(dim)
        v = AnalyticField(problem) if dim == 1 else _exp_field(dim)
        a, b = 1.7, -0.4

        def combined(p):
            ju, jv = u.jet(p), v.jet(p)
            return (
                a * ju.value + b * jv.value,
                a * ju.grad + b * jv.grad,
                a * ju.diag_hess + b * jv.diag_hess,
            )

        pts = np.random.default_rng(example_id).random((40, dim))
        forcing = -residual(problem, ConstantField(0.0, dim=dim), pts)
        expected = (
            a * residual(problem, u, pts, homogeneous=True)
            + b * residual(problem, v, pts, homogeneous=True)
            - forcing
        )
        actual = residual(problem, CallableField(combined, dim=dim), pts)
        np.testing.assert_allclose(actual, expected, rtol=1e-12, atol=1e-10)


class TestCustomProblems:
    """Test JSON problem definitions."""

    def test_compile_expression(self):
        fn = compile_expression("eps*pi**2*sin(pi*x)", ["x", "eps"])
        assert fn(x=np.array([0.5]), eps=0.1)[0] == pytest.approx(0.1 * np.pi**2)

    def test_compile_rejects_unknown_names(self):
        with pytest.raises(ValueError):
            compile_expression("os.system('ls')", ["x"])

    def test_steady_problem_round_trip(self, tmp_path):
        data = {
            "name": "shifted",
            "kind": "steady1d",
            "convection": "1",
            "forcing": "1",
            "boundary": {"left": "0", "right": "1"},
            "analytic": {"value": "x", "grad": ["1"], "diag_hess": ["0"]},
        }
        path = tmp_path / "problem.json"
        path.write_text(json.dumps(data))

        problem = load_problem_file(path, 0.05)
        assert problem.name == "shifted"
        assert problem.example_id is None
        x = np.linspace(0.1, 0.9, 5)[:, None]
        np.testing.assert_allclose(residual(problem, AnalyticField(problem), x), 0.0, atol=1e-14)
        assert problem.with_epsilon(0.01).epsilon == 0.01

    def test_2d_needs_four_edges(self):
        with pytest.raises(ValidationError):
            ProblemDefinition(kind="steady2d", convection=["1", "0"], boundary={"left": "0", "right": "0"})

    def test_time_needs_initial(self):
        with pytest.raises(ValidationError):
            ProblemDefinition(kind="time1d", convection="1", boundary={"left": "0", "right": "0"})

    def test_diffusion_sign(self):
        with pytest.raises(ValidationError):
            ProblemDefinition(
                kind="steady1d", convection="1", diffusion_sign=2, boundary={"left": "0", "right": "0"}
            )

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_problem_file(tmp_path / "nope.json", 0.1)
