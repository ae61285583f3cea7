"""Discrete energies of the convex Dirichlet problem and of the regularised perturbed problem.

Gradients are exact derivatives of the discrete functionals (P1 gradients,
lumped zeroth-order terms), with boundary entries set to zero so that they
act on the solution space directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from finslap.grid import Grid
from finslap.norms import FinslerNorm

Q_MARGIN = 1e-6


def dirichlet_part(grid: Grid, norm: FinslerNorm, p: float, u: np.ndarray):
    """``((1/p) sum vol H(grad u)^p, nodal gradient)`` of the p-Dirichlet energy."""
    g = (grid.gradient_operator @ u).reshape(grid.n_simplices, grid.dim)
    h = norm.value(g)
    value = float(np.dot(grid.volumes, h**p)) / p
    flux = norm.flux(g, p) * grid.volumes[:, None]
    grad = grid.gradient_operator.T @ flux.ravel()
    grad[grid.boundary_mask] = 0.0
    return value, grad


@dataclass(frozen=True, eq=False)
class ConvexEnergy:
    """``J(u) = (1/p) int H(grad u)^p - int g u``."""

    grid: Grid
    norm: FinslerNorm
    p: float
    g: np.ndarray

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        object.__setattr__(self, "g", self.grid.check_field(self.g))

    def value(self, u) -> float:
        u = self.grid.check_field(u)
        d, _ = dirichlet_part(self.grid, self.norm, self.p, u)
        return d - float(np.dot(self.g * self.grid.lump, u))

    def gradient(self, u) -> np.ndarray:
        return self.value_and_gradient(u)[1]

    def value_and_gradient(self, u):
        u = self.grid.check_field(u)
        d, grad = dirichlet_part(self.grid, self.norm, self.p, u)
        load = self.g * self.grid.lump
        grad -= load
        grad[self.grid.boundary_mask] = 0.0
        return d - float(np.dot(load, u)), grad


@dataclass(frozen=True, eq=False)
class PerturbedEnergy:
    """Regularised energy of the singular problem with a superlinear term.

    ``I(u) = (1/p) int H(grad u)^p
             - lam int [(u+ + eps)^(1-q) - eps^(1-q)] / (1-q)
             - 1/(r+1) int (u+)^(r+1)``
    """

    grid: Grid
    norm: FinslerNorm
    p: float
    lam: float
    epsilon: float
    q: np.ndarray
    r: float

    def __post_init__(self):
        q = self.grid.check_field(self.q)
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.r > self.p - 1:
            raise ValueError(f"need r > p - 1, got r={self.r}, p={self.p}")
        if np.any(q <= 0) or np.any(q > 1 - Q_MARGIN):
            raise ValueError("need 0 < q <= 1 - 1e-6 at every node")
        object.__setattr__(self, "q", q)

    def with_lambda(self, lam: float) -> "PerturbedEnergy":
        return PerturbedEnergy(self.grid, self.norm, self.p, lam, self.epsilon, self.q, self.r)

    def with_epsilon(self, epsilon: float) -> "PerturbedEnergy":
        return PerturbedEnergy(self.grid, self.norm, self.p, self.lam, epsilon, self.q, self.r)

    def potential(self, u: np.ndarray) -> float:
        """``lam * singular + superlinear`` potential (the subtracted part of ``I``)."""
        up = np.maximum(u, 0.0)
        e, q, r = self.epsilon, self.q, self.r
        sing = ((up + e) ** (1 - q) - e ** (1 - q)) / (1 - q)
        dens = self.lam * sing + up ** (r + 1) / (r + 1)
        return float(np.dot(dens, self.grid.lump))

    def nonlinearity(self, u: np.ndarray) -> np.ndarray:
        """Nodal right-hand side ``lam (u+ + eps)^(-q) + (u+)^r`` for ``u >= 0``; zero singular part below.

        At ``u_i = 0`` the right derivative is used for the singular term.
        """
        up = np.maximum(u, 0.0)
        sing = np.where(u >= 0, (up + self.epsilon) ** (-self.q), 0.0)
        return self.lam * sing + up**self.r

    def value(self, u) -> float:
        u = self.grid.check_field(u)
        d, _ = dirichlet_part(self.grid, self.norm, self.p, u)
        return d - self.potential(u)

    def gradient(self, u) -> np.ndarray:
        return self.value_and_gradient(u)[1]

    def value_and_gradient(self, u):
        u = self.grid.check_field(u)
        d, grad = dirichlet_part(self.grid, self.norm, self.p, u)
        grad -= self.nonlinearity(u) * self.grid.lump
        grad[self.grid.boundary_mask] = 0.0
        return d - self.potential(u), grad

    def weak_residual(self, u, epsilon: float | None = None) -> np.ndarray:
        """Residual against interior hat functions with ``(u + eps)^(-q)`` (``eps = 0`` is the limit problem)."""
        u = self.grid.check_field(u)
        e = self.epsilon if epsilon is None else epsilon
        _, grad = dirichlet_part(self.grid, self.norm, self.p, u)
        inner = self.grid.interior
        if np.any(u[inner] + e <= 0):
            raise ValueError("residual of the limit problem needs u > 0 at interior nodes")
        rhs = np.zeros_like(u)
        up = np.maximum(u[inner], 0.0)
        rhs[inner] = self.lam * (up + e) ** (-self.q[inner]) + up**self.r
        res = grad - rhs * self.grid.lump
        res[self.grid.boundary_mask] = 0.0
        return res


@dataclass
class FDCheck:
    error: float
    status: str = "ok"


def fd_check(functional, u, step: float = 1e-6, directions: int = 8, seed: int = 0) -> FDCheck:
    """Compare ``<gradient, d>`` with central differences along seeded random directions.

    The error for each direction is ``|fd - an| / max(|an|, |grad| |d|)``.
    Perturbed energies are not differentiable where ``u_i = 0``; if any
    interior node lies within ``10 * step`` of zero the check is skipped.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    grid = functional.grid
    u = grid.check_field(u)
    if isinstance(functional, PerturbedEnergy) and np.any(np.abs(u[grid.interior]) < 10 * step):
        return FDCheck(float("nan"), "skipped-kink")
    rng = np.random.default_rng(seed)
    grad = functional.gradient(u)
    worst = 0.0
    for _ in range(directions):
        d = grid.zero_boundary(rng.standard_normal(grid.n_nodes))
        fd = (functional.value(u + step * d) - functional.value(u - step * d)) / (2 * step)
        an = float(np.dot(grad, d))
        scale = max(abs(an), float(np.linalg.norm(grad) * np.linalg.norm(d)), 1e-300)
        worst = max(worst, abs(fd - an) / scale)
    return FDCheck(worst)
