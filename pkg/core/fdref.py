"""
Fitted-mesh finite-difference reference solutions.

Every solver works on the canonical form -eps*Lap(u) + b.grad(u) + c*u = f
(problems written with +eps*Lap(u) are negated first) over tensor products of
piecewise-uniform Shishkin meshes. Two stencils are available:

- ``upwind``: central diffusion, one-sided convection against the flow.
- ``hybrid``: central differences where the mesh Peclet number |b|h/(2eps) <= 1,
  midpoint upwinding (b, c, f sampled between nodes) elsewhere.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from numba import njit
from scipy.interpolate import RegularGridInterpolator

from fields.base import as_points

from .errors import ConvergenceError, SingularSystemError, UnsupportedProblemError
from .layers import Axis, BoundaryLayerSpec, Side, infer_layers
from .models import FDScheme
from .problems import PerturbedProblem, ProblemKind

logger = logging.getLogger(__name__)

SHISHKIN_SIGMA = 2.0
SOR_OMEGA = 1.5
SOR_TOLERANCE = 1e-10
SOR_MAX_SWEEPS = 1_000_000


@dataclass(frozen=True)
class ShishkinMesh1D:
    """Piecewise-uniform mesh on [0, 1] refined towards one boundary."""

    nodes: np.ndarray
    tau: float
    side: Optional[Side] = None  # None: uniform, no layer

    @property
    def n_cells(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)


def shishkin_mesh(
    n: int,
    epsilon: float,
    layer: Optional[BoundaryLayerSpec] = None,
    sigma: float = SHISHKIN_SIGMA,
) -> ShishkinMesh1D:
    """
    Build a Shishkin mesh with n cells.

    The transition width is tau = min(1/2, sigma*eps/beta*ln(n)) with beta the
    layer coefficient; n/2 uniform cells fill the tau-wide strip next to the
    layer and n/2 fill the rest. Without a layer the mesh is uniform.

    Args:
        n: Number of cells, even and at least 4
        epsilon: Perturbation parameter
        layer: Layer on this axis, or None
        sigma: Transition constant

    Returns:
        ShishkinMesh1D with n + 1 nodes
    """
    if n < 4 or n % 2:
        raise ValueError(f"n must be an even integer >= 4, got {n}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if layer is None:
        return ShishkinMesh1D(nodes=np.linspace(0.0, 1.0, n + 1), tau=0.5, side=None)

    tau = min(0.5, sigma * epsilon / layer.coeff * math.log(n))
    half = n // 2
    if layer.side == Side.RIGHT:
        coarse = np.linspace(0.0, 1.0 - tau, half + 1)
        fine = np.linspace(1.0 - tau, 1.0, half + 1)
        nodes = np.concatenate([coarse, fine[1:]])
    else:
        fine = np.linspace(0.0, tau, half + 1)
        coarse = np.linspace(tau, 1.0, half + 1)
        nodes = np.concatenate([fine, coarse[1:]])
    nodes[0], nodes[-1] = 0.0, 1.0
    return ShishkinMesh1D(nodes=nodes, tau=tau, side=layer.side)


@njit(cache=True)
def _thomas_kernel(lower, diag, upper, rhs):
    n = rhs.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    x = np.empty(n)

    pivot = diag[0]
    if pivot == 0.0 or not np.isfinite(pivot):
        return x, False
    cp[0] = upper[0] / pivot
    dp[0] = rhs[0] / pivot
    for k in range(1, n):
        pivot = diag[k] - lower[k] * cp[k - 1]
        if pivot == 0.0 or not np.isfinite(pivot):
            return x, False
        cp[k] = upper[k] / pivot
        dp[k] = (rhs[k] - lower[k] * dp[k - 1]) / pivot

    x[n - 1] = dp[n - 1]
    for k in range(n - 2, -1, -1):
        x[k] = dp[k] - cp[k] * x[k + 1]
    return x, True


def thomas_solve(
    lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray
) -> np.ndarray:
    """
    Solve a tridiagonal system with the Thomas algorithm.

    Args:
        lower: Sub-diagonal (lower[0] unused)
        diag: Main diagonal
        upper: Super-diagonal (upper[-1] unused)
        rhs: Right-hand side

    Returns:
        Solution vector
    """
    arrays = [np.ascontiguousarray(a, dtype=np.float64) for a in (lower, diag, upper, rhs)]
    if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1:
        raise ValueError("Tridiagonal bands and right-hand side must be equal-length vectors")
    x, ok = _thomas_kernel(*arrays)
    if not ok:
        raise SingularSystemError("Zero or non-finite pivot in tridiagonal solve")
    return x


@njit(cache=True)
def _sor_kernel(u, aw, ae, as_, an, ap, rhs, omega, tol, max_sweeps, reverse_x, reverse_y, check_every):
    nx, ny = u.shape
    residual = np.inf
    for sweep in range(1, max_sweeps + 1):
        for jj in range(1, ny - 1):
            j = ny - 1 - jj if reverse_y else jj
            for ii in range(1, nx - 1):
                i = nx - 1 - ii if reverse_x else ii
                gs = (
                    rhs[i, j]
                    - aw[i, j] * u[i - 1, j]
                    - ae[i, j] * u[i + 1, j]
                    - as_[i, j] * u[i, j - 1]
                    - an[i, j] * u[i, j + 1]
                ) / ap[i, j]
                u[i, j] += omega * (gs - u[i, j])

        if sweep % check_every == 0 or sweep == max_sweeps:
            residual = 0.0
            for j in range(1, ny - 1):
                for i in range(1, nx - 1):
                    r = (
                        rhs[i, j]
                        - ap[i, j] * u[i, j]
                        - aw[i, j] * u[i - 1, j]
                        - ae[i, j] * u[i + 1, j]
                        - as_[i, j] * u[i, j - 1]
                        - an[i, j] * u[i, j + 1]
                    ) / ap[i, j]
                    if abs(r) > residual:
                        residual = abs(r)
            if residual <= tol:
                return sweep, residual
    return max_sweeps, residual


@dataclass
class ReferenceSolution:
    """
    Finite-difference solution on a tensor grid.

    `values` is indexed [ix] in 1D and [ix, iy] (or [ix, it]) otherwise.
    """

    problem: str
    kind: ProblemKind
    epsilon: float
    axes: List[np.ndarray]
    values: np.ndarray
    scheme: FDScheme = FDScheme.HYBRID
    meta: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.kind = ProblemKind(self.kind)
        self.scheme = FDScheme(self.scheme)
        expected = tuple(a.shape[0] for a in self.axes)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} does not match axes {expected}")
        if not np.isfinite(self.values).all():
            raise ValueError("Reference values must be finite")

    @property
    def dim(self) -> int:
        return len(self.axes)

    def grid_points(self) -> np.ndarray:
        """All grid nodes, second coordinate outer and x inner."""
        if self.dim == 1:
            return self.axes[0][:, None]
        xx, yy = np.meshgrid(self.axes[0], self.axes[1])
        return np.column_stack([xx.ravel(), yy.ravel()])

    def grid_values(self) -> np.ndarray:
        """Values in `grid_points` order."""
        return self.values if self.dim == 1 else self.values.T.ravel()

    def interpolate(self, points) -> np.ndarray:
        """Piecewise-linear (1D) or bilinear (2D) interpolation at arbitrary points."""
        pts = np.clip(as_points(points, self.dim), 0.0, 1.0)
        if self.dim == 1:
            return np.interp(pts[:, 0], self.axes[0], self.values)
        interpolator = RegularGridInterpolator(tuple(self.axes), self.values, method="linear")
        return interpolator(pts)


# Canonical coefficient samplers: positions -> (b, c, f)
Coefficients1D = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]


def _canonical_sign(problem: PerturbedProblem) -> float:
    # Printed form s*eps*u'' + ...; canonical needs -eps*u''
    return -float(problem.diffusion_sign)


def _assemble_1d(
    nodes: np.ndarray,
    epsilon: float,
    coefficients: Coefficients1D,
    scheme: FDScheme,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Tridiagonal bands for the interior nodes of -eps*u'' + b*u' + c*u = f."""
    h = np.diff(nodes)
    hl, hr = h[:-1], h[1:]
    hbar = 0.5 * (hl + hr)
    xi = nodes[1:-1]
    mids = 0.5 * (nodes[:-1] + nodes[1:])

    b, c, f = coefficients(xi)
    bm, cm, fm = coefficients(mids)

    lower = -epsilon / (hl * hbar)
    upper = -epsilon / (hr * hbar)
    diag = epsilon / (hl * hbar) + epsilon / (hr * hbar)
    rhs = np.empty_like(xi)

    if scheme == FDScheme.HYBRID:
        central = np.abs(b) * np.maximum(hl, hr) <= 2.0 * epsilon
    else:
        central = np.zeros_like(xi, dtype=bool)
    forward = ~central & (b >= 0.0)  # flow to the right: difference backwards
    backward = ~central & (b < 0.0)

    k = central
    lower[k] += -b[k] / (hl[k] + hr[k])
    upper[k] += b[k] / (hl[k] + hr[k])
    diag[k] += c[k]
    rhs[k] = f[k]

    if scheme == FDScheme.HYBRID:
        # Midpoint upwind: convection, reaction and forcing at x_{i-1/2} or x_{i+1/2}
        k = forward
        left_mid = np.flatnonzero(k)  # mids[i-1] sits left of interior node i
        lower[k] += -bm[left_mid] / hl[k] + 0.5 * cm[left_mid]
        diag[k] += bm[left_mid] / hl[k] + 0.5 * cm[left_mid]
        rhs[k] = fm[left_mid]

        k = backward
        right_mid = np.flatnonzero(k) + 1
        upper[k] += bm[right_mid] / hr[k] + 0.5 * cm[right_mid]
        diag[k] += -bm[right_mid] / hr[k] + 0.5 * cm[right_mid]
        rhs[k] = fm[right_mid]
    else:
        k = forward
        lower[k] += -b[k] / hl[k]
        diag[k] += b[k] / hl[k] + c[k]
        rhs[k] = f[k]

        k = backward
        upper[k] += b[k] / hr[k]
        diag[k] += -b[k] / hr[k] + c[k]
        rhs[k] = f[k]

    return lower, diag, upper, rhs


def _solve_two_point(
    nodes: np.ndarray,
    epsilon: float,
    coefficients: Coefficients1D,
    scheme: FDScheme,
    left: float,
    right: float,
) -> np.ndarray:
    lower, diag, upper, rhs = _assemble_1d(nodes, epsilon, coefficients, scheme)
    rhs[0] -= lower[0] * left
    rhs[-1] -= upper[-1] * right
    lower[0] = 0.0
    upper[-1] = 0.0
    interior = thomas_solve(lower, diag, upper, rhs)
    return np.concatenate([[left], interior, [right]])


def _axis_layer(layers: List[BoundaryLayerSpec], axis: Axis) -> Optional[BoundaryLayerSpec]:
    for spec in layers:
        if spec.axis == axis:
            return spec
    return None


def solve_1d(
    problem: PerturbedProblem, n: int, scheme: FDScheme = FDScheme.HYBRID
) -> ReferenceSolution:
    """
    Reference solution of a steady 1D problem.

    Args:
        problem: STEADY_1D problem with constant-sign convection
        n: Number of mesh cells (even, >= 4)
        scheme: Stencil choice. Hybrid is the default because plain upwind
            misses 1e-3 max-norm accuracy at n = 1024 on the layer examples

    Returns:
        ReferenceSolution on the Shishkin mesh
    """
    if problem.kind != ProblemKind.STEADY_1D:
        raise UnsupportedProblemError(f"solve_1d needs a steady 1D problem, got {problem.kind.value}")
    scheme = FDScheme(scheme)
    layer = _axis_layer(infer_layers(problem), Axis.X)
    mesh = shishkin_mesh(n, problem.epsilon, layer)
    sign = _canonical_sign(problem)

    def coefficients(xs: np.ndarray):
        pts = xs[:, None]
        b = sign * problem.convection_at(pts)[:, 0]
        c = sign * np.broadcast_to(problem.reaction(pts), xs.shape)
        f = sign * np.broadcast_to(problem.forcing(pts), xs.shape)
        return b, np.asarray(c, dtype=np.float64), np.asarray(f, dtype=np.float64)

    left, right = problem.boundary_values(np.array([[0.0], [1.0]]))
    values = _solve_two_point(mesh.nodes, problem.epsilon, coefficients, scheme, left, right)
    logger.debug(
        f"solve_1d {problem.name}: n={n}, tau={mesh.tau:.3e}, scheme={scheme.value}"
    )
    return ReferenceSolution(
        problem=problem.name,
        kind=problem.kind,
        epsilon=problem.epsilon,
        axes=[mesh.nodes],
        values=values,
        scheme=scheme,
        meta={"n": n, "tau_x": mesh.tau},
    )


def _axis_stencil(
    h_minus: np.ndarray,
    h_plus: np.ndarray,
    b: np.ndarray,
    epsilon: float,
    scheme: FDScheme,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Neighbour and centre weights of -eps*u_ss + b*u_s along one axis."""
    hbar = 0.5 * (h_minus + h_plus)
    minus = -epsilon / (h_minus * hbar)
    plus = -epsilon / (h_plus * hbar)
    centre = -(minus + plus)

    if scheme == FDScheme.HYBRID:
        central = np.abs(b) * np.maximum(h_minus, h_plus) <= 2.0 * epsilon
    else:
        central = np.zeros(b.shape, dtype=bool)
    span = h_minus + h_plus
    minus = minus + np.where(central, -b / span, np.where(b >= 0.0, -b / h_minus, 0.0))
    plus = plus + np.where(central, b / span, np.where(b < 0.0, b / h_plus, 0.0))
    centre = centre + np.where(central, 0.0, np.where(b >= 0.0, b / h_minus, -b / h_plus))
    return minus, centre, plus


def solve_2d(
    problem: PerturbedProblem,
    n: int,
    scheme: FDScheme = FDScheme.HYBRID,
    omega: float = SOR_OMEGA,
    tolerance: float = SOR_TOLERANCE,
    max_sweeps: int = SOR_MAX_SWEEPS,
) -> ReferenceSolution:
    """
    Reference solution of a steady problem on the unit square.

    Five-point stencil on the tensor product of per-axis Shishkin meshes (uniform
    on axes without a layer). Convection switches per axis between central and
    nodal upwind differences; reaction and forcing are taken at the nodes. The
    system is solved by SOR sweeps running in the flow direction until
    max_ij |r_ij / a_p,ij| <= tolerance, where r is the residual of the assembled
    system and a_p its diagonal.

    Args:
        problem: STEADY_2D problem
        n: Cells per axis (even, >= 4)
        scheme: Stencil choice
        omega: Relaxation factor
        tolerance: Bound on the diagonally scaled residual max-norm
        max_sweeps: Sweep cap

    Returns:
        ReferenceSolution with values[ix, iy]

    Raises:
        ConvergenceError: Sweep cap reached; carries the achieved scaled residual
    """
    if problem.kind != ProblemKind.STEADY_2D:
        raise UnsupportedProblemError(f"solve_2d needs a steady 2D problem, got {problem.kind.value}")
    scheme = FDScheme(scheme)
    layers = infer_layers(problem)
    mesh_x = shishkin_mesh(n, problem.epsilon, _axis_layer(layers, Axis.X))
    mesh_y = shishkin_mesh(n, problem.epsilon, _axis_layer(layers, Axis.Y))
    x, y = mesh_x.nodes, mesh_y.nodes
    nx, ny = x.shape[0], y.shape[0]

    # Nodes indexed [i, j] -> (x_i, y_j)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    sign = _canonical_sign(problem)
    b = (sign * problem.convection_at(pts)).reshape(nx, ny, 2)
    c = sign * np.broadcast_to(problem.reaction(pts), (nx * ny,)).reshape(nx, ny)
    f = sign * np.broadcast_to(problem.forcing(pts), (nx * ny,)).reshape(nx, ny)

    hx, hy = np.diff(x), np.diff(y)
    hxm, hxp = hx[:-1][:, None], hx[1:][:, None]
    hym, hyp = hy[:-1][None, :], hy[1:][None, :]
    inner = (slice(1, -1), slice(1, -1))
    bx, by = b[..., 0][inner], b[..., 1][inner]
    shape_in = (nx - 2, ny - 2)
    aw, cx, ae = _axis_stencil(
        np.broadcast_to(hxm, shape_in), np.broadcast_to(hxp, shape_in), bx, problem.epsilon, scheme
    )
    as_, cy, an = _axis_stencil(
        np.broadcast_to(hym, shape_in), np.broadcast_to(hyp, shape_in), by, problem.epsilon, scheme
    )

    def padded(a: np.ndarray) -> np.ndarray:
        out = np.zeros((nx, ny))
        out[inner] = a
        return out

    ap = np.ones((nx, ny))
    ap[inner] = cx + cy + c[inner]
    rhs = padded(f[inner])

    # Dirichlet data on the boundary ring, interior starts from zero
    u = np.zeros((nx, ny))
    edge = np.ones((nx, ny), dtype=bool)
    edge[inner] = False
    u[edge] = problem.boundary_values(pts[edge.ravel()])

    mean_b = b[inner].reshape(-1, 2).mean(axis=0)
    sweeps, residual = _sor_kernel(
        u,
        padded(aw),
        padded(ae),
        padded(as_),
        padded(an),
        ap,
        rhs,
        float(omega),
        float(tolerance),
        int(max_sweeps),
        bool(mean_b[0] < 0.0),
        bool(mean_b[1] < 0.0),
        10,
    )
    if residual > tolerance:
        raise ConvergenceError(sweeps, residual, tolerance)
    logger.info(
        f"solve_2d {problem.name}: n={n}, tau=({mesh_x.tau:.3e}, {mesh_y.tau:.3e}), "
        f"{sweeps} SOR sweeps, residual={residual:.2e}"
    )
    return ReferenceSolution(
        problem=problem.name,
        kind=problem.kind,
        epsilon=problem.epsilon,
        axes=[x, y],
        values=u,
        scheme=scheme,
        meta={"n": n, "tau_x": mesh_x.tau, "tau_y": mesh_y.tau, "sweeps": sweeps},
    )


def solve_time(
    problem: PerturbedProblem,
    nx: int,
    nt: int,
    scheme: FDScheme = FDScheme.HYBRID,
) -> ReferenceSolution:
    """
    Reference solution of u_t - eps*u_xx + b*u_x + c*u = f on (0,1) x (0,1].

    Backward Euler on a uniform time grid with the 1D stencil in space; the
    time derivative is treated as an extra reaction and forcing term so the
    midpoint stencil samples it between nodes as well.

    Args:
        problem: TIME_1D problem
        nx: Spatial cells (even, >= 4)
        nt: Time steps (>= 1)
        scheme: Stencil choice

    Returns:
        ReferenceSolution with values[ix, it]
    """
    if problem.kind != ProblemKind.TIME_1D:
        raise UnsupportedProblemError(f"solve_time needs a time-dependent problem, got {problem.kind.value}")
    if nt < 1:
        raise ValueError(f"nt must be positive, got {nt}")
    scheme = FDScheme(scheme)
    layer = _axis_layer(infer_layers(problem), Axis.X)
    mesh = shishkin_mesh(nx, problem.epsilon, layer)
    x = mesh.nodes
    t = np.linspace(0.0, 1.0, nt + 1)
    dt = 1.0 / nt

    values = np.empty((x.shape[0], nt + 1))
    values[:, 0] = problem.initial_values(x)

    for step in range(1, nt + 1):
        t_new = t[step]
        previous = values[:, step - 1]

        def coefficients(xs: np.ndarray, t_new=t_new, previous=previous):
            pts = np.column_stack([xs, np.full_like(xs, t_new)])
            b = problem.convection_at(pts)[:, 0]
            c = np.broadcast_to(problem.reaction(pts), xs.shape) + 1.0 / dt
            f = np.broadcast_to(problem.forcing(pts), xs.shape) + np.interp(xs, x, previous) / dt
            return b, np.asarray(c, dtype=np.float64), np.asarray(f, dtype=np.float64)

        left, right = problem.boundary_values(np.array([[0.0, t_new], [1.0, t_new]]))
        values[:, step] = _solve_two_point(x, problem.epsilon, coefficients, scheme, left, right)

    logger.debug(
        f"solve_time {problem.name}: nx={nx}, nt={nt}, tau={mesh.tau:.3e}, scheme={scheme.value}"
    )
    return ReferenceSolution(
        problem=problem.name,
        kind=problem.kind,
        epsilon=problem.epsilon,
        axes=[x, t],
        values=values,
        scheme=scheme,
        meta={"n": nx, "nt": nt, "tau_x": mesh.tau},
    )


def solve_reference(
    problem: PerturbedProblem,
    n: int,
    nt: Optional[int] = None,
    scheme: FDScheme = FDScheme.HYBRID,
) -> ReferenceSolution:
    """Dispatch to the solver matching the problem kind."""
    if problem.kind == ProblemKind.STEADY_1D:
        return solve_1d(problem, n, scheme)
    if problem.kind == ProblemKind.STEADY_2D:
        return solve_2d(problem, n, scheme)
    return solve_time(problem, n, nt if nt is not None else n, scheme)
