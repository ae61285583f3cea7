"""Uniform simplicial meshes of boxes in one or two dimensions.

Nodal fields are plain 1-D float arrays aligned with ``Grid.nodes``.  Fields
that belong to the solution space carry exact zeros on boundary nodes.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from finslap.norms import FinslerNorm


@dataclass(frozen=True, eq=False)
class Grid:
    dim: int
    extents: tuple
    resolution: tuple
    nodes: np.ndarray
    boundary_mask: np.ndarray
    simplices: np.ndarray
    volumes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_simplices(self) -> int:
        return self.simplices.shape[0]

    @property
    def measure(self) -> float:
        return float(np.prod([b - a for a, b in self.extents]))

    @cached_property
    def interior(self) -> np.ndarray:
        return np.nonzero(~self.boundary_mask)[0]

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the barycentric hat functions, shape ``(m, dim + 1, dim)``."""
        v = self.nodes[self.simplices]  # (m, d+1, d)
        edges = v[:, 1:, :] - v[:, :1, :]  # (m, d, d)
        inv = np.linalg.inv(edges)  # columns: gradients of lambda_1..lambda_d
        g = np.swapaxes(inv, 1, 2)
        g0 = -g.sum(axis=1, keepdims=True)
        return np.concatenate([g0, g], axis=1)

    @cached_property
    def gradient_operator(self) -> sp.csr_matrix:
        """Sparse map from nodal values to stacked per-simplex gradients (``m * dim`` rows)."""
        m, k = self.simplices.shape
        d = self.dim
        rows = (np.arange(m)[:, None, None] * d + np.arange(d)[None, None, :])
        rows = np.broadcast_to(rows, (m, k, d))
        cols = np.broadcast_to(self.simplices[:, :, None], (m, k, d))
        return sp.csr_matrix((self.basis_gradients.ravel(), (rows.ravel(), cols.ravel())),
                             shape=(m * d, self.n_nodes))

    @cached_property
    def lump(self) -> np.ndarray:
        """Lumped quadrature weights: each simplex gives ``volume / (dim + 1)`` to its vertices."""
        w = np.repeat(self.volumes / (self.dim + 1), self.dim + 1)
        return np.bincount(self.simplices.ravel(), weights=w, minlength=self.n_nodes)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """P1 Laplacian stiffness matrix (all nodes, no boundary treatment)."""
        gop = self.gradient_operator
        vol = np.repeat(self.volumes, self.dim)
        return (gop.T @ sp.diags(vol) @ gop).tocsr()

    @cached_property
    def boundary_distance(self) -> np.ndarray:
        """Euclidean distance of every node to the box boundary."""
        d = np.full(self.n_nodes, np.inf)
        for ax, (a, b) in enumerate(self.extents):
            c = self.nodes[:, ax]
            d = np.minimum(d, np.minimum(c - a, b - c))
        return np.maximum(d, 0.0)

    def strip_mask(self, delta: float) -> np.ndarray:
        """Nodes at distance ``< delta`` from the boundary (the strip Omega_delta)."""
        return self.boundary_distance < delta

    def check_field(self, u, zero_boundary: bool = False) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_nodes,):
            raise ValueError(f"field has shape {u.shape}, grid has {self.n_nodes} nodes")
        if not np.all(np.isfinite(u)):
            raise ValueError("field contains non-finite values")
        if zero_boundary and np.any(u[self.boundary_mask] != 0):
            raise ValueError("field must vanish on boundary nodes")
        return u

    def zero_boundary(self, u) -> np.ndarray:
        u = np.array(u, dtype=float)
        u[self.boundary_mask] = 0.0
        return u

    def coords(self):
        """Coordinate columns ``(x,)`` or ``(x, y)``."""
        return tuple(self.nodes[:, i] for i in range(self.dim))

    def scaled(self, factor: float) -> "Grid":
        """Same mesh topology on the box dilated by ``factor`` about the origin."""
        return build_grid(self.dim, [(a * factor, b * factor) for a, b in self.extents], self.resolution)


def build_grid(dim: int, extents, resolution) -> Grid:
    """Uniform mesh of a box; squares are split along the (0,0)-(1,1) diagonal.

    Nodes are ordered lexicographically with the x index varying slowest.
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if np.ndim(extents) == 1 and len(extents) == 2 and dim == 1:
        extents = [extents]
    extents = tuple((float(a), float(b)) for a, b in extents)
    if isinstance(resolution, (int, np.integer)):
        resolution = (int(resolution),) * dim
    resolution = tuple(int(r) for r in resolution)
    if len(extents) != dim or len(resolution) != dim:
        raise ValueError("extents and resolution must have one entry per axis")
    for a, b in extents:
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise ValueError(f"degenerate extent ({a}, {b})")
    for r in resolution:
        if r < 2:
            raise ValueError(f"resolution must be >= 2 per axis, got {r}")

    axes = [np.linspace(a, b, r + 1) for (a, b), r in zip(extents, resolution)]
    if dim == 1:
        nodes = axes[0][:, None]
        n = resolution[0]
        simplices = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
        boundary = np.zeros(n + 1, dtype=bool)
        boundary[[0, -1]] = True
        volumes = np.diff(axes[0])
    else:
        nx, ny = resolution
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
        idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
        a = idx[:-1, :-1].ravel()
        b = idx[1:, :-1].ravel()
        c = idx[:-1, 1:].ravel()
        d = idx[1:, 1:].ravel()
        tri = np.empty((2 * a.size, 3), dtype=np.int64)
        tri[0::2] = np.stack([a, b, d], axis=1)
        tri[1::2] = np.stack([a, d, c], axis=1)
        simplices = tri
        ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
        boundary = ((ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)).ravel()
        v = nodes[simplices]
        e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        volumes = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    for arr in (nodes, boundary, simplices, volumes):
        arr.setflags(write=False)
    return Grid(dim, extents, resolution, nodes, boundary, simplices, volumes)


def gradient_field(grid: Grid, u) -> np.ndarray:
    """Constant gradient of the P1 interpolant on each simplex, shape ``(m, dim)``."""
    u = grid.check_field(u)
    return (grid.gradient_operator @ u).reshape(grid.n_simplices, grid.dim)


def integrate_nodal(grid: Grid, w) -> float:
    """Lumped quadrature ``sum_i w_i lump_i``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (grid.n_nodes,):
        raise ValueError(f"weights have shape {w.shape}, grid has {grid.n_nodes} nodes")
    return float(np.dot(w, grid.lump))


def seminorm_X(grid: Grid, norm: FinslerNorm, p: float, u) -> float:
    """``(sum_T vol(T) H(grad u|_T)^p)^(1/p)``."""
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    g = gradient_field(grid, u)
    return float(np.dot(grid.volumes, norm.value(g) ** p) ** (1.0 / p))


# -- consistent quadrature --------------------------------------------------


def simplex_quadrature(dim: int, order: int = 4):
    """Reference-simplex rule: barycentric points ``(Q, dim + 1)`` and weights summing to 1.

    Gauss-Legendre in 1D; collapsed (Duffy) Gauss-Legendre product rule in 2D.
    """
    t, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    if dim == 1:
        bary = np.stack([1 - t, t], axis=1)
        return bary, w
    s, ws = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (s + 1.0)
    ws = 0.5 * ws
    a, b = np.meshgrid(t, s, indexing="ij")
    wa, wb = np.meshgrid(w, ws, indexing="ij")
    l1 = a.ravel()
    l2 = (b * (1 - a)).ravel()
    weights = (wa * wb * (1 - a)).ravel() * 2.0
    bary = np.stack([1 - l1 - l2, l1, l2], axis=1)
    return bary, weights


def integrate_power(grid: Grid, u, p: float, order: int = 4) -> float:
    """``int |u|^p`` for the P1 interpolant using the consistent quadrature rule."""
    u = grid.check_field(u)
    bary, w = simplex_quadrature(grid.dim, order)
    vals = u[grid.simplices] @ bary.T  # (m, Q)
    return float(np.sum(grid.volumes[:, None] * w[None, :] * np.abs(vals) ** p))


def power_gradient(grid: Grid, u, p: float, order: int = 4) -> np.ndarray:
    """Nodal gradient of ``(1/p) int |u|^p`` under the consistent rule."""
    u = grid.check_field(u)
    bary, w = simplex_quadrature(grid.dim, order)
    vals = u[grid.simplices] @ bary.T
    dens = grid.volumes[:, None] * w[None, :] * np.sign(vals) * np.abs(vals) ** (p - 1.0)
    local = dens @ bary  # (m, d+1)
    return np.bincount(grid.simplices.ravel(), weights=local.ravel(), minlength=grid.n_nodes)


# -- export ------------------------------------------------------------------


def format_float(v: float) -> str:
    return f"{float(v):.17g}"


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def field_csv(grid: Grid, u) -> str:
    u = grid.check_field(u)
    header = ",".join(["x", "y"][: grid.dim] + ["u"])
    lines = [header]
    for row, val in zip(grid.nodes, u):
        lines.append(",".join([format_float(c) for c in row] + [format_float(val)]))
    return "\n".join(lines) + "\n"


def write_field_csv(grid: Grid, u, path) -> None:
    atomic_write(path, field_csv(grid, u))


def read_field_csv(grid: Grid, path) -> np.ndarray:
    """Load a field written by :func:`write_field_csv`; coordinates must match ``grid``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape != (grid.n_nodes, grid.dim + 1):
        raise ValueError(f"{path}: expected {grid.n_nodes} rows of {grid.dim + 1} columns")
    if not np.allclose(data[:, : grid.dim], grid.nodes, rtol=0, atol=1e-12):
        raise ValueError(f"{path}: node coordinates do not match the grid")
    return data[:, grid.dim]
