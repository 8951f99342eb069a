"""Unit tests for boundary-layer inference and the composite model."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.diffnet import Activation, init_mlp
from core.errors import UnsupportedProblemError
from core.layers import (
    Axis,
    BoundaryLayerSpec,
    CompositeModel,
    ExponentialFactor,
    ModelMode,
    Side,
    build_factor,
    build_model,
    composite_jet,
    infer_layers,
)
from core.problems import ProblemDefinition, get_example
from fields.base import FieldJet

EXPECTED_LAYERS = {
    1: ["x=1"],
    2: ["x=1"],
    3: ["x=0"],
    4: ["x=1"],
    5: ["y=0"],
    6: ["x=0", "y=0"],
    7: ["x=0"],
    8: ["x=1"],
}


def _sample_points(dim: int, n: int = 8, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.05, 0.95, size=(n, dim))


class TestInferLayers:
    """Test layer location rules."""

    @pytest.mark.parametrize("example_id", sorted(EXPECTED_LAYERS))
    def test_benchmark_layer_locations(self, example_id):
        layers = infer_layers(get_example(example_id, 1e-3))
        assert [spec.describe() for spec in layers] == EXPECTED_LAYERS[example_id]

    def test_example1_spec(self):
        assert infer_layers(get_example(1)) == [BoundaryLayerSpec(Axis.X, Side.RIGHT, 1.0)]

    def test_example6_canonicalized(self):
        layers = infer_layers(get_example(6))
        assert layers == [
            BoundaryLayerSpec(Axis.X, Side.LEFT, 1.0),
            BoundaryLayerSpec(Axis.Y, Side.LEFT, 1.0),
        ]

    def test_example3_coefficient_includes_epsilon(self):
        (spec,) = infer_layers(get_example(3, 0.1))
        assert spec.coeff == pytest.approx(1.1)

    def test_turning_point_rejected(self):
        problem = ProblemDefinition(
            kind="steady1d", convection="x - 0.5", boundary={"left": "0", "right": "1"}
        ).build(0.01)
        with pytest.raises(UnsupportedProblemError):
            infer_layers(problem)

    def test_zero_convection_has_no_layer(self):
        problem = ProblemDefinition(
            kind="steady2d",
            convection=["0", "0"],
            boundary={"x0": "0", "x1": "0", "y0": "0", "y1": "0"},
        ).build(0.01)
        assert infer_layers(problem) == []

    def test_time_problem_needs_negative_diffusion(self):
        problem = ProblemDefinition(
            kind="time1d",
            diffusion_sign=1,
            convection="1",
            boundary={"left": "0", "right": "0"},
            initial="0",
        ).build(0.01)
        with pytest.raises(UnsupportedProblemError):
            infer_layers(problem)

    def test_spec_needs_positive_coefficient(self):
        with pytest.raises(ValueError):
            BoundaryLayerSpec(Axis.X, Side.LEFT, 0.0)


class TestExponentialFactor:
    """Test the fixed layer factors."""

    def test_right_layer_values(self):
        factor = build_factor(BoundaryLayerSpec(Axis.X, Side.RIGHT, 2.0), 0.1)
        phi, dphi, d2phi = factor.evaluate(np.array([[1.0], [0.9]]))
        np.testing.assert_allclose(phi, [1.0, np.exp(-2.0)])
        np.testing.assert_allclose(dphi, 20.0 * phi)
        np.testing.assert_allclose(d2phi, 400.0 * phi)

    def test_left_layer_derivative_sign(self):
        factor = build_factor(BoundaryLayerSpec(Axis.Y, Side.LEFT, 1.0), 0.5)
        pts = np.array([[0.3, 0.25]])
        phi, dphi, _ = factor.evaluate(pts)
        assert phi[0] == pytest.approx(np.exp(-0.5))
        assert dphi[0] == pytest.approx(-2.0 * phi[0])

    def test_derivatives_match_finite_differences(self):
        factor = build_factor(BoundaryLayerSpec(Axis.X, Side.RIGHT, 1.0), 0.1)
        x = np.linspace(0.2, 0.9, 6)[:, None]
        h = 1e-5
        _, dphi, d2phi = factor.evaluate(x)
        up, mid, down = factor(x + h), factor(x), factor(x - h)
        np.testing.assert_allclose(dphi, (up - down) / (2 * h), rtol=1e-6)
        np.testing.assert_allclose(d2phi, (up - 2 * mid + down) / h**2, rtol=1e-4)

    def test_tiny_epsilon_stays_finite(self):
        factor = ExponentialFactor(BoundaryLayerSpec(Axis.X, Side.RIGHT, 1.0), 1e-38)
        pts = np.array([[0.0], [0.5], [1.0 - 1e-16], [1.0]])
        phi, dphi, d2phi = factor.evaluate(pts)
        for arr in (phi, dphi, d2phi):
            assert np.isfinite(arr).all()
        np.testing.assert_array_equal(phi[:3], 0.0)
        assert phi[3] == 1.0
        assert dphi[3] == pytest.approx(1e38)
        assert d2phi[3] == pytest.approx(1e76)

    def test_factor_rejects_nonpositive_epsilon(self):
        with pytest.raises(ValueError):
            ExponentialFactor(BoundaryLayerSpec(Axis.X, Side.LEFT, 1.0), 0.0)

    @given(
        exponent=st.integers(-38, 0),
        coeff=st.floats(0.1, 10.0),
        side=st.sampled_from(list(Side)),
        seed=st.integers(0, 1000),
    )
    @settings(max_examples=50, deadline=None)
    def test_factor_bounded(self, exponent, coeff, side, seed):
        factor = build_factor(BoundaryLayerSpec(Axis.X, side, coeff), 10.0**exponent)
        pts = np.random.default_rng(seed).random((20, 1))
        phi, dphi, d2phi = factor.evaluate(pts)
        assert np.all((phi >= 0.0) & (phi <= 1.0))
        assert np.isfinite(dphi).all() and np.isfinite(d2phi).all()
        assert factor(np.array([[float(side)]]))[0] == 1.0


class TestCompositeModel:
    """Test the layer-augmented field."""

    @pytest.mark.parametrize("example_id", sorted(EXPECTED_LAYERS))
    def test_jet_matches_finite_differences(self, example_id):
        problem = get_example(example_id, 0.1)
        model = build_model(problem, [10, 10], Activation.TANH, seed=0, mode=ModelMode.GKPINN)
        pts = _sample_points(problem.dim)
        jet = composite_jet(model, pts)
        h = 1e-4
        for k in range(problem.dim):
            step = np.zeros(problem.dim)
            step[k] = h
            up, mid, down = model.values(pts + step), model.values(pts), model.values(pts - step)
            np.testing.assert_allclose(jet.grad[:, k], (up - down) / (2 * h), rtol=1e-5, atol=1e-7)
            np.testing.assert_allclose(
                jet.diag_hess[:, k], (up - 2 * mid + down) / h**2, rtol=1e-3, atol=1e-4
            )

    def test_pinn_mode_has_no_layer_terms(self):
        model = build_model(get_example(6), [8], Activation.TANH, seed=0, mode="pinn")
        assert model.mode == ModelMode.PINN
        assert len(model.networks()) == 1

    def test_layer_counts(self):
        ex4 = build_model(get_example(4), [8], Activation.TANH, seed=0, mode=ModelMode.GKPINN)
        ex6 = build_model(get_example(6), [8], Activation.TANH, seed=0, mode=ModelMode.GKPINN)
        assert len(ex4.layer_terms) == 1
        assert len(ex6.layer_terms) == 2

    def test_layer_networks_use_offset_seeds(self):
        model = build_model(get_example(6), [8], Activation.TANH, seed=5, mode=ModelMode.GKPINN)
        expected = [init_mlp([2, 8, 1], Activation.TANH, s) for s in (5, 6, 7)]
        for net, ref in zip(model.networks(), expected):
            np.testing.assert_array_equal(net.weights[0], ref.weights[0])

    def test_far_from_layer_equals_smooth_network(self):
        problem = get_example(1, 1e-3)
        model = build_model(problem, [8], Activation.SIGMOID, seed=0, mode=ModelMode.GKPINN)
        smooth = CompositeModel(model.smooth)
        x = np.array([[0.1], [0.5]])
        np.testing.assert_array_equal(model.values(x), smooth.values(x))

    def test_backward_matches_finite_differences(self):
        problem = get_example(6, 0.2)
        model = build_model(problem, [5], Activation.TANH, seed=1, mode=ModelMode.GKPINN)
        pts = _sample_points(2, n=6, seed=3)
        rng = np.random.default_rng(4)
        weights = FieldJet(rng.normal(size=6), rng.normal(size=(6, 2)), rng.normal(size=(6, 2)))

        def loss(m):
            jet = m.jet(pts)
            return (
                np.sum(weights.value * jet.value)
                + np.sum(weights.grad * jet.grad)
                + np.sum(weights.diag_hess * jet.diag_hess)
            )

        _, tape = model.forward(pts)
        grads = model.backward(tape, weights)
        h = 1e-6
        for net_index, net in enumerate(model.networks()):
            for pos in [(0, 0), (2, 1), (4, 0)]:
                nets_up = [n.copy() for n in model.networks()]
                nets_down = [n.copy() for n in model.networks()]
                nets_up[net_index].weights[0][pos] += h
                nets_down[net_index].weights[0][pos] -= h
                fd = (loss(model.with_networks(nets_up)) - loss(model.with_networks(nets_down))) / (2 * h)
                assert grads[net_index].weights[0][pos] == pytest.approx(fd, rel=1e-5, abs=1e-6)

    def test_with_networks_checks_count(self):
        model = build_model(get_example(1), [4], Activation.TANH, seed=0, mode=ModelMode.GKPINN)
        with pytest.raises(ValueError):
            model.with_networks([model.smooth])

    def test_tiny_epsilon_model_is_finite(self):
        problem = get_example(6, 1e-38)
        model = build_model(problem, [8], Activation.TANH, seed=0, mode=ModelMode.GKPINN)
        s = np.linspace(0.0, 1.0, 11)
        xx, yy = np.meshgrid(s, s)
        jet = model.jet(np.column_stack([xx.ravel(), yy.ravel()]))
        assert jet.is_finite()
