"""
Fully connected scalar networks with exact input derivatives and parameter gradients.

Forward evaluation carries 1 + 2d channels through every layer: the value, the d
first partials and the d pure second partials with respect to the inputs. The
backward pass differentiates through all channels, so losses built from u_x and
u_xx terms get exact parameter gradients.
"""

from __future__ import annotations

import logging
from abc import abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from fields.base import FieldEvaluator, FieldJet, as_points

from .errors import NonFiniteError

logger = logging.getLogger(__name__)


class Activation(str, Enum):
    """Hidden-layer activation."""

    SIGMOID = "sigmoid"
    TANH = "tanh"


def activation_derivatives(
    activation: Activation, z: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Evaluate an activation and its first three derivatives.

    Args:
        activation: Activation kind
        z: Pre-activation values

    Returns:
        Tuple of (sigma, sigma', sigma'', sigma''')
    """
    if activation == Activation.SIGMOID:
        s = expit(z)
        s1 = s * (1.0 - s)
        s2 = s1 * (1.0 - 2.0 * s)
        s3 = s1 * (1.0 - 6.0 * s + 6.0 * s * s)
    elif activation == Activation.TANH:
        s = np.tanh(z)
        s1 = 1.0 - s * s
        s2 = -2.0 * s * s1
        s3 = (6.0 * s * s - 2.0) * s1
    else:
        raise ValueError(f"Unsupported activation: {activation}")
    return s, s1, s2, s3


@dataclass
class MLPParams:
    """Weights and biases of one fully connected network with a scalar output."""

    layer_sizes: List[int]
    weights: List[np.ndarray]  # weights[l] has shape (layer_sizes[l+1], layer_sizes[l])
    biases: List[np.ndarray]
    activation: Activation = Activation.TANH

    def __post_init__(self):
        if len(self.layer_sizes) < 3:
            raise ValueError("layer_sizes needs an input, at least one hidden and an output width")
        if self.layer_sizes[-1] != 1:
            raise ValueError(f"Output width must be 1, got {self.layer_sizes[-1]}")
        if any(int(n) < 1 for n in self.layer_sizes):
            raise ValueError(f"Layer widths must be positive: {self.layer_sizes}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("weights/biases do not match layer_sizes")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[l + 1], self.layer_sizes[l])
            if w.shape != expected or b.shape != (expected[0],):
                raise ValueError(
                    f"Layer {l}: weight {w.shape} / bias {b.shape} inconsistent with {expected}"
                )
        self.activation = Activation(self.activation)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> List[np.ndarray]:
        """Flat list [W0, b0, W1, b1, ...] used by the optimizer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> MLPParams:
        """Build params of the same architecture from a flat [W0, b0, ...] list."""
        return MLPParams(
            layer_sizes=list(self.layer_sizes),
            weights=[np.asarray(a) for a in arrays[0::2]],
            biases=[np.asarray(a) for a in arrays[1::2]],
            activation=self.activation,
        )

    def copy(self) -> MLPParams:
        return self.with_arrays([a.copy() for a in self.arrays()])

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays())

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


@dataclass
class MLPGrads:
    """Parameter gradient congruent to an MLPParams."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @classmethod
    def zeros_like(cls, params: MLPParams) -> MLPGrads:
        return cls(
            weights=[np.zeros_like(w) for w in params.weights],
            biases=[np.zeros_like(b) for b in params.biases],
        )

    def arrays(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def accumulate(self, other: MLPGrads) -> None:
        for mine, theirs in zip(self.arrays(), other.arrays()):
            mine += theirs

    def check_finite(self, quantity: str = "parameter gradient") -> None:
        if not all(np.isfinite(a).all() for a in self.arrays()):
            raise NonFiniteError(quantity)


def init_mlp(layer_sizes: Sequence[int], activation: Activation, seed: int) -> MLPParams:
    """
    Create a network with Glorot-uniform weights and zero biases.

    Args:
        layer_sizes: [input_dim, hidden..., 1]
        activation: Hidden-layer activation
        seed: Seed for the weight draw

    Returns:
        Freshly initialized MLPParams
    """
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 3:
        raise ValueError("layer_sizes needs at least one hidden layer")
    if sizes[-1] != 1:
        raise ValueError(f"Output width must be 1, got {sizes[-1]}")
    if sizes[0] not in (1, 2):
        raise ValueError(f"Input width must be 1 or 2, got {sizes[0]}")

    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    params = MLPParams(sizes, weights, biases, Activation(activation))
    logger.debug(f"Initialized MLP {sizes} ({params.n_parameters()} parameters, seed={seed})")
    return params


@dataclass
class _LayerCache:
    inputs: np.ndarray  # (C, N, n_in) channel stack entering the affine map
    z: Optional[np.ndarray] = None  # (C, N, n_out), hidden layers only
    s1: Optional[np.ndarray] = None
    s2: Optional[np.ndarray] = None
    s3: Optional[np.ndarray] = None


@dataclass
class MLPTape:
    """Intermediate values recorded by `mlp_forward` for the backward pass."""

    n_points: int
    dim: int
    layers: List[_LayerCache] = field(default_factory=list)


def _input_stack(x: np.ndarray) -> np.ndarray:
    # Channels: [value, d/dx_1..d/dx_d, d2/dx_1^2..d2/dx_d^2]
    n, d = x.shape
    h = np.zeros((1 + 2 * d, n, d))
    h[0] = x
    for k in range(d):
        h[1 + k, :, k] = 1.0
    return h


def _affine(h: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Only the value channel receives the bias.
    c, n, n_in = h.shape
    z = (h.reshape(c * n, n_in) @ w.T).reshape(c, n, w.shape[0])
    z[0] += b
    return z


def mlp_forward(params: MLPParams, points) -> Tuple[FieldJet, MLPTape]:
    """
    Evaluate the network jet and record a tape for `mlp_backward`.

    Args:
        params: Network parameters
        points: Array-like of shape (N, d)

    Returns:
        Tuple of (jet, tape)
    """
    x = as_points(points, params.input_dim)
    n, d = x.shape
    tape = MLPTape(n_points=n, dim=d)

    h = _input_stack(x)
    for l in range(params.n_layers - 1):
        z = _affine(h, params.weights[l], params.biases[l])
        s, s1, s2, s3 = activation_derivatives(params.activation, z[0])
        tape.layers.append(_LayerCache(inputs=h, z=z, s1=s1, s2=s2, s3=s3))

        zg = z[1 : 1 + d]
        h = np.empty_like(z)
        h[0] = s
        h[1 : 1 + d] = s1 * zg
        h[1 + d :] = s2 * zg * zg + s1 * z[1 + d :]

    out = _affine(h, params.weights[-1], params.biases[-1])
    tape.layers.append(_LayerCache(inputs=h))

    jet = FieldJet(
        value=out[0, :, 0].copy(),
        grad=out[1 : 1 + d, :, 0].T.copy(),
        diag_hess=out[1 + d :, :, 0].T.copy(),
    )
    return jet, tape


def mlp_backward(params: MLPParams, tape: MLPTape, cotangent: FieldJet) -> MLPGrads:
    """
    Pull a cotangent on the output jet back to the parameters.

    Args:
        params: Network parameters used in the forward pass
        tape: Tape returned by `mlp_forward`
        cotangent: dL/d(value), dL/d(grad), dL/d(diag_hess) at each point

    Returns:
        Exact gradient of L with respect to every weight and bias
    """
    d, n = tape.dim, tape.n_points
    grads = MLPGrads.zeros_like(params)

    g = np.empty((1 + 2 * d, n, 1))
    g[0, :, 0] = cotangent.value
    g[1 : 1 + d, :, 0] = cotangent.grad.T
    g[1 + d :, :, 0] = cotangent.diag_hess.T

    for l in range(params.n_layers - 1, -1, -1):
        h_in = tape.layers[l].inputs
        c, _, n_in = h_in.shape
        g2 = g.reshape(c * n, g.shape[2])
        grads.weights[l] = g2.T @ h_in.reshape(c * n, n_in)
        grads.biases[l] = g[0].sum(axis=0)
        if l == 0:
            break

        gh = (g2 @ params.weights[l]).reshape(c, n, n_in)

        # Undo h = sigma(z), h' = s1 z', h'' = s2 z'^2 + s1 z'' of layer l-1
        prev = tape.layers[l - 1]
        z, s1, s2, s3 = prev.z, prev.s1, prev.s2, prev.s3
        zg, zh = z[1 : 1 + d], z[1 + d :]
        gg, gH = gh[1 : 1 + d], gh[1 + d :]
        g = np.empty_like(gh)
        g[0] = gh[0] * s1 + (gg * s2 * zg + gH * (s3 * zg * zg + s2 * zh)).sum(axis=0)
        g[1 : 1 + d] = gg * s1 + 2.0 * gH * s2 * zg
        g[1 + d :] = gH * s1
    return grads


def eval_jet(params: MLPParams, points) -> FieldJet:
    """Exact value, gradient and diagonal Hessian of the network at the points."""
    jet, _ = mlp_forward(params, points)
    return jet


class DifferentiableField(FieldEvaluator):
    """A field whose jet is differentiable with respect to its member networks."""

    @abstractmethod
    def networks(self) -> List[MLPParams]:
        """Member networks in a fixed order."""
        pass

    @abstractmethod
    def forward(self, points) -> Tuple[FieldJet, object]:
        """Evaluate the jet and return a tape for `backward`."""
        pass

    @abstractmethod
    def backward(self, tape: object, cotangent: FieldJet) -> List[MLPGrads]:
        """Gradients for each member network, in `networks()` order."""
        pass

    def jet(self, points) -> FieldJet:
        jet, _ = self.forward(points)
        return jet


class MLPField(DifferentiableField):
    """A single network viewed as a field."""

    def __init__(self, params: MLPParams):
        self.params = params

    @property
    def input_dim(self) -> int:
        return self.params.input_dim

    def networks(self) -> List[MLPParams]:
        return [self.params]

    def forward(self, points) -> Tuple[FieldJet, MLPTape]:
        return mlp_forward(self.params, points)

    def backward(self, tape: MLPTape, cotangent: FieldJet) -> List[MLPGrads]:
        return [mlp_backward(self.params, tape, cotangent)]


# A loss receives one jet per point batch and returns (loss, cotangent per batch).
LossFunction = Callable[[List[FieldJet]], Tuple[float, List[FieldJet]]]


def _split(points: np.ndarray, workers: int) -> List[np.ndarray]:
    if workers <= 1 or points.shape[0] < 2 * workers:
        return [points]
    return np.array_split(points, workers)


def loss_param_gradient(
    model: DifferentiableField,
    point_batches: Sequence[np.ndarray],
    loss_fn: LossFunction,
    workers: int = 1,
) -> Tuple[float, List[MLPGrads]]:
    """
    Exact gradient of a scalar loss built from field jets.

    Each batch is split into `workers` chunks evaluated on a thread pool; chunk
    gradients are summed in chunk order, so results only depend on `workers`.

    Args:
        model: Field to differentiate
        point_batches: Point arrays (e.g. interior, boundary, initial)
        loss_fn: Maps the batch jets to (loss, cotangents)
        workers: Number of threads for point chunks

    Returns:
        Tuple of (loss value, one MLPGrads per member network)
    """
    chunked = [_split(as_points(p, model.input_dim), workers) for p in point_batches]
    flat = [c for chunks in chunked for c in chunks]

    if workers > 1 and len(flat) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(model.forward, flat))
    else:
        results = [model.forward(c) for c in flat]

    jets, pos = [], 0
    for chunks in chunked:
        jets.append(FieldJet.concatenate([r[0] for r in results[pos : pos + len(chunks)]]))
        pos += len(chunks)
    for jet in jets:
        jet.check_finite("model jet")

    loss, cotangents = loss_fn(jets)
    if not np.isfinite(loss):
        raise NonFiniteError("loss")

    # Slice each batch cotangent back onto its chunks
    jobs = []
    pos = 0
    for chunks, cot in zip(chunked, cotangents):
        start = 0
        for chunk in chunks:
            stop = start + chunk.shape[0]
            jobs.append((results[pos][1], cot.take(slice(start, stop))))
            start = stop
            pos += 1

    def pull(job):
        tape, cot = job
        return model.backward(tape, cot)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(pull, jobs))
    else:
        partials = [pull(job) for job in jobs]

    total = [MLPGrads.zeros_like(p) for p in model.networks()]
    for partial in partials:
        for acc, g in zip(total, partial):
            acc.accumulate(g)
    for g in total:
        g.check_finite()
    return float(loss), total
