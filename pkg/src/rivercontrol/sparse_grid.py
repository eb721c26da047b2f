"""Hierarchical sparse grids on the unit cube.

One-dimensional hierarchy (nested, Clenshaw-Curtis type):

* level 1: the midpoint 0.5 with the constant basis 1,
* level 2: the two end points 0 and 1 with the half-domain hats ``(1 - 2x)_+`` and ``(2x - 1)_+``,
* level ``l >= 3``: the points ``(2i + 1) / 2^(l-1)`` with hats of half width ``2^-(l-1)``.

A level-``l`` grid in ``d`` dimensions keeps the tensor subspaces with
multi-level ``k`` (all ``k_j >= 1``) and ``|k|_1 <= l``.  This convention gives
6,017 points at ``d = 3, l = 11`` and a finest axis spacing of ``1/256``
(level 9 along one axis).  Every basis function of level ``>= 2`` vanishes at
all coarser points, so the interpolation matrix is unit lower triangular in
subspace order and hierarchization is one sparse triangular solve.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from . import _kernels
from .errors import ConfigurationError, DomainError


def level_size(level: int) -> int:
    """Number of points contributed by one 1-D level."""
    if level == 1:
        return 1
    if level == 2:
        return 2
    return 2 ** (level - 2)


def level_points(level: int) -> np.ndarray:
    if level == 1:
        return np.array([0.5])
    if level == 2:
        return np.array([0.0, 1.0])
    m = 2 ** (level - 1)
    return (2 * np.arange(m // 2) + 1) / m


def multi_levels(dim: int, level: int) -> np.ndarray:
    """Selected multi-levels ordered by ``|k|_1`` (then lexicographically)."""
    if dim < 1 or level < dim:
        raise ConfigurationError(f"need dim >= 1 and level >= dim, got dim={dim}, level={level}")
    out = [k for k in itertools.product(range(1, level - dim + 2), repeat=dim) if sum(k) <= level]
    out.sort(key=lambda k: (sum(k), k))
    return np.array(out, dtype=np.int64).reshape(len(out), dim)


def count_points(dim: int, level: int) -> int:
    """Point count by a recursion over dimensions (no enumeration of points)."""
    if dim < 1 or level < dim:
        raise ConfigurationError(f"need dim >= 1 and level >= dim, got dim={dim}, level={level}")
    # ways[s] = number of points in (dim so far) with |k|_1 == s
    ways = {0: 1}
    for _ in range(dim):
        nxt: dict[int, int] = {}
        for s, c in ways.items():
            for k in range(1, level - s + 1):
                nxt[s + k] = nxt.get(s + k, 0) + c * level_size(k)
        ways = nxt
    return sum(c for s, c in ways.items() if s <= level)


@dataclass(frozen=True)
class SparseGrid:
    dim: int
    level: int

    def __post_init__(self):
        multi_levels(self.dim, self.level)

    @cached_property
    def levels(self) -> np.ndarray:
        return multi_levels(self.dim, self.level)

    @cached_property
    def offsets(self) -> np.ndarray:
        sizes = [int(np.prod([level_size(int(k)) for k in row])) for row in self.levels]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)

    @property
    def n_points(self) -> int:
        return int(self.offsets[-1])

    @cached_property
    def points(self) -> np.ndarray:
        blocks = []
        for row in self.levels:
            axes = [level_points(int(k)) for k in row]
            mesh = np.meshgrid(*axes, indexing="ij")
            blocks.append(np.stack([m.ravel() for m in mesh], axis=1))
        pts = np.concatenate(blocks, axis=0)
        pts.setflags(write=False)
        return pts

    @cached_property
    def indices(self) -> np.ndarray:
        """Per-point 1-D index vectors (position within each axis level)."""
        blocks = []
        for row in self.levels:
            axes = [np.arange(level_size(int(k))) for k in row]
            mesh = np.meshgrid(*axes, indexing="ij")
            blocks.append(np.stack([m.ravel() for m in mesh], axis=1))
        return np.concatenate(blocks, axis=0)

    @cached_property
    def point_levels(self) -> np.ndarray:
        reps = np.diff(self.offsets)
        return np.repeat(self.levels, reps, axis=0)

    @cached_property
    def _triangular(self) -> sp.csr_matrix:
        return self.basis_matrix(self.points)

    def basis_matrix(self, x) -> sp.csr_matrix:
        """Sparse matrix mapping surpluses to values at the rows of ``x``."""
        x = self._check(x)
        rows, cols, vals = _kernels.sg_basis_coo(x, self.levels, self.offsets, len(self.levels))
        return sp.csr_matrix((vals, (rows, cols)), shape=(x.shape[0], self.n_points))

    def min_spacing(self) -> float:
        """Smallest gap between distinct coordinates along any axis."""
        gaps = [np.min(np.diff(np.unique(self.points[:, j]))) for j in range(self.dim) if self.n_points > 1]
        return float(min(gaps)) if gaps else float("nan")

    def _check(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ConfigurationError(f"expected points with {self.dim} coordinates, got {x.shape[1]}")
        if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
            raise DomainError("query outside the unit cube")
        return np.clip(x, 0.0, 1.0)


def build(dim: int, level: int) -> SparseGrid:
    return SparseGrid(dim, level)


def hierarchize(grid: SparseGrid, nodal_values) -> np.ndarray:
    """Surpluses reproducing ``nodal_values`` at the grid points.

    ``nodal_values`` may be 1-D (one function) or 2-D with one column per function.
    """
    v = np.asarray(nodal_values, dtype=float)
    if v.shape[0] != grid.n_points:
        raise ConfigurationError(f"expected {grid.n_points} nodal values, got {v.shape[0]}")
    return spsolve_triangular(grid._triangular, v, lower=True, unit_diagonal=True)


def evaluate(grid: SparseGrid, surpluses, x):
    """Interpolant at ``x`` (one point or an array of points)."""
    a = np.asarray(surpluses, dtype=float)
    single = np.ndim(x) == 1
    pts = grid._check(x)
    if a.ndim == 1:
        out = _kernels.sg_evaluate(pts, a, grid.levels, grid.offsets, len(grid.levels))
    else:
        out = grid.basis_matrix(pts) @ a
    return out[0] if single else out


def write_csv(grid: SparseGrid, path) -> None:
    """One row per point: index, level vector, index vector, coordinates."""
    d = grid.dim
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["point"] + [f"level_{j}" for j in range(d)] + [f"index_{j}" for j in range(d)] + [f"x_{j}" for j in range(d)]
        )
        for k, (lv, ix, x) in enumerate(zip(grid.point_levels, grid.indices, grid.points)):
            w.writerow([k, *map(int, lv), *map(int, ix), *map(repr, map(float, x))])
