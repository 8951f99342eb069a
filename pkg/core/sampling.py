"""Collocation, boundary, initial and test point generation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List

import numpy as np

from .problems import PerturbedProblem, ProblemKind

logger = logging.getLogger(__name__)


@dataclass
class PointSets:
    """One fixed set of training and test points for a run."""

    interior: np.ndarray  # (N_r, d), open domain
    boundary: np.ndarray  # (N_bc, d), on the boundary faces
    boundary_faces: np.ndarray  # (N_bc,) face index per boundary point
    initial: np.ndarray  # (N_ic, 2) with t = 0, empty for steady problems
    test: np.ndarray  # (N_test, d), closed domain

    @property
    def n_interior(self) -> int:
        return self.interior.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary.shape[0]

    @property
    def n_initial(self) -> int:
        return self.initial.shape[0]


def latin_hypercube(n: int, dim: int, seed: int) -> np.ndarray:
    """
    Latin hypercube sample of the unit cube.

    Each axis is cut into n equal strata and every stratum holds exactly one point.
    Offsets inside a stratum are uniform; a zero offset is replaced by the stratum
    midpoint so every coordinate stays strictly inside (0, 1).

    Args:
        n: Number of points
        dim: Dimension (1 or 2)
        seed: Random seed

    Returns:
        Array of shape (n, dim)
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")

    rng = np.random.default_rng(seed)
    points = np.empty((n, dim))
    for k in range(dim):
        strata = rng.permutation(n)
        offsets = rng.random(n)
        offsets[offsets == 0.0] = 0.5
        points[:, k] = (strata + offsets) / n
    return points


def face_counts(n: int, n_faces: int) -> List[int]:
    """Split n points over faces: n // F each, remainder to the lowest-indexed faces."""
    base, rest = divmod(n, n_faces)
    return [base + (1 if face < rest else 0) for face in range(n_faces)]


def _boundary_points(kind: ProblemKind, n: int, rng: np.random.Generator):
    if kind == ProblemKind.STEADY_1D:
        counts = face_counts(n, 2)
        xs = np.concatenate([np.zeros(counts[0]), np.ones(counts[1])])
        faces = np.repeat([0, 1], counts)
        return xs[:, None], faces

    # Faces: x=0, x=1, then y=0, y=1 for squares; time problems have no t=1 face
    # and the t=0 line is covered by the initial points
    n_faces = 4 if kind == ProblemKind.STEADY_2D else 2
    counts = face_counts(n, n_faces)
    chunks, faces = [], []
    for face, count in enumerate(counts):
        free = rng.random(count)
        fixed = np.full(count, float(face % 2))
        chunk = np.column_stack([fixed, free]) if face < 2 else np.column_stack([free, fixed])
        chunks.append(chunk)
        faces.append(np.full(count, face))
    return np.concatenate(chunks).reshape(-1, 2), np.concatenate(faces).astype(int)


def test_grid(problem: PerturbedProblem, n: int) -> np.ndarray:
    """
    Evaluation grid on the closed domain.

    1D gives n equispaced points. 2D and time problems give a ceil(sqrt(n))^2
    tensor grid ordered with x varying fastest.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if problem.dim == 1:
        return np.linspace(0.0, 1.0, n)[:, None]
    side = math.isqrt(n - 1) + 1
    s = np.linspace(0.0, 1.0, side)
    xx, yy = np.meshgrid(s, s)
    return np.column_stack([xx.ravel(), yy.ravel()])


def sample_problem_points(
    problem: PerturbedProblem,
    n_interior: int,
    n_boundary: int,
    n_initial: int,
    seed: int,
    n_test: int = 400,
) -> PointSets:
    """
    Draw the training point sets for a problem.

    Interior points come from a Latin hypercube; boundary and initial points are
    uniform on their faces. Everything is reproducible from the seed.

    Args:
        problem: Target problem
        n_interior: Collocation points
        n_boundary: Boundary points in total, balanced over the faces
        n_initial: Points on t = 0 (time problems only)
        seed: Random seed
        n_test: Requested size of the evaluation grid

    Returns:
        PointSets for the run
    """
    if n_interior < 1:
        raise ValueError(f"n_interior must be positive, got {n_interior}")
    if n_boundary < 1:
        raise ValueError(f"n_boundary must be positive, got {n_boundary}")
    if n_initial < 0:
        raise ValueError(f"n_initial must be nonnegative, got {n_initial}")
    if n_initial > 0 and not problem.is_time_dependent:
        raise ValueError(f"n_initial must be 0 for steady problem '{problem.name}'")

    interior = latin_hypercube(n_interior, problem.dim, seed)
    # Separate streams for boundary and initial draws so counts do not shift each other
    boundary_rng, initial_rng = [
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
    ]
    boundary, faces = _boundary_points(problem.kind, n_boundary, boundary_rng)

    if problem.is_time_dependent:
        x0 = initial_rng.random(n_initial)
        x0[x0 == 0.0] = 0.5
        initial = np.column_stack([x0, np.zeros(n_initial)])
    else:
        initial = np.empty((0, problem.dim))

    points = PointSets(
        interior=interior,
        boundary=boundary,
        boundary_faces=faces,
        initial=initial,
        test=test_grid(problem, n_test),
    )
    logger.debug(
        f"Sampled {problem.name}: {points.n_interior} interior, {points.n_boundary} boundary, "
        f"{points.n_initial} initial, {points.test.shape[0]} test points (seed={seed})"
    )
    return points
