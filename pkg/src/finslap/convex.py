"""Convex Dirichlet solves and the first eigenpair of the anisotropic p-Laplacian.

Both problems are smooth minimisations over the interior nodal values and are
handled by one limited-memory quasi-Newton loop (:func:`lbfgs`) whose initial
inverse Hessian is a multiple of the inverse P1 Laplacian.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from finslap.energy import ConvexEnergy, dirichlet_part
from finslap.errors import ConvergenceError, UnsupportedRegime
from finslap.grid import Grid, integrate_power, power_gradient
from finslap.norms import FinslerNorm


@dataclass(frozen=True)
class SolveOptions:
    tol_grad: float = 1e-9
    max_iters: int = 10000
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    memory: int = 10
    seed: int = 0
    precondition: bool = True

    def __post_init__(self):
        if not self.tol_grad > 0:
            raise ValueError("tol_grad must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not 0 < self.sufficient_decrease < 1:
            raise ValueError("sufficient_decrease must lie in (0, 1)")
        if self.memory < 1:
            raise ValueError("memory must be at least 1")

    def with_(self, **kw) -> "SolveOptions":
        return replace(self, **kw)


@dataclass
class SolverReport:
    iterations: int = 0
    final_grad_norm: float = float("nan")
    energy_history: list = field(default_factory=list)
    grad_history: list = field(default_factory=list)
    linf_bound_check: bool = False
    positivity_min: float = float("nan")
    flags: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return "converged" in self.flags

    def log_rows(self):
        return list(zip(range(len(self.energy_history)), self.energy_history, self.grad_history))


def check_regime(norm: FinslerNorm, p: float) -> None:
    """p >= 2 for general norms; any p > 1 for the Euclidean norm and for ``t_norm(p)``."""
    if not p > 1:
        raise UnsupportedRegime(f"unsupported regime: p must exceed 1, got {p}")
    if not norm.supports_p(p):
        raise UnsupportedRegime(
            f"unsupported regime: p={p} < 2 needs the euclidean norm or t_norm(p), got {norm}")


# -- optimiser -----------------------------------------------------------------


@dataclass
class _Result:
    x: np.ndarray
    f: float
    g: np.ndarray
    report: SolverReport


def weighted_stiffness(grid: Grid, weights=None):
    """Interior block of the P1 Laplacian, optionally weighted per simplex."""
    vol = grid.volumes if weights is None else grid.volumes * weights
    gop = grid.gradient_operator
    k = gop.T @ sp.diags(np.repeat(vol, grid.dim)) @ gop
    return sp.csr_matrix(k)[grid.interior][:, grid.interior].tocsc()


def frozen_weights(grid: Grid, norm: FinslerNorm, p: float, u, floor: float = 1e-3):
    """``(p - 1) max(H(grad u), floor * max H)^(p-2)`` per simplex, or ``None`` at ``p = 2``.

    These freeze the coefficient of the p-Dirichlet operator at ``u``; the
    floor keeps the weights bounded where the gradient vanishes.
    """
    if p == 2:
        return None
    h = norm.value((grid.gradient_operator @ u).reshape(grid.n_simplices, grid.dim))
    top = float(np.max(h))
    if top == 0.0:
        return None
    return (p - 1) * np.maximum(h, floor * top) ** (p - 2)


def laplace_preconditioner(grid: Grid, weights=None):
    return factorized(weighted_stiffness(grid, weights))


def weighted_preconditioner(grid: Grid, norm: FinslerNorm, p: float):
    """Builder mapping interior values to a solver for the frozen-coefficient Laplacian."""
    if p == 2:
        solve = laplace_preconditioner(grid)
        return lambda x: solve
    inner = grid.interior

    def build(x):
        u = np.zeros(grid.n_nodes)
        u[inner] = x
        return laplace_preconditioner(grid, frozen_weights(grid, norm, p, u))

    return build


def lbfgs(fg, x0, opts: SolveOptions, precond=None, residual=None, normalize=None,
          report: SolverReport | None = None, precond_builder=None, convex=False,
          project=None) -> _Result:
    """Minimise ``fg`` (returning value and gradient) from ``x0``.

    ``precond`` applies a fixed initial inverse Hessian; ``precond_builder(x)``
    instead returns a fresh one at every iterate.

    ``residual(x, g)`` gives the quantity compared with ``opts.tol_grad``
    (default: max-norm of ``g``).  ``normalize(x)`` may return a scale ``c``;
    the iterate is replaced by ``c x`` for 0-homogeneous objectives.
    ``convex`` enables the rounding-level acceptance rule of :func:`_backtrack`;
    it is valid whenever the objective is convex along the final search
    segments, as near a nondegenerate minimiser.
    ``project(x)`` maps trial points back onto a feasible set.
    """
    report = report or SolverReport()
    residual = residual or (lambda x, g: float(np.max(np.abs(g), initial=0.0)))
    apply_p = precond or (lambda v: v.copy())
    x = np.array(x0, dtype=float)
    f, g = fg(x)
    pairs: deque = deque(maxlen=opts.memory)
    res = residual(x, g)
    report.energy_history.append(f)
    report.grad_history.append(res)
    c1 = opts.sufficient_decrease
    certified = 0
    for it in range(opts.max_iters):
        if res <= opts.tol_grad:
            report.flags.append("converged")
            break
        if precond_builder is not None:
            apply_p = precond_builder(x)
        d = -_two_loop(g, pairs, apply_p)
        slope = float(np.dot(g, d))
        if not slope < 0:
            pairs.clear()
            d = -apply_p(g)
            slope = float(np.dot(g, d))
        alpha, x_new, f_new, g_new, cert = _backtrack(fg, x, f, d, slope, c1, opts.shrink, convex, project)
        if alpha is None and pairs:
            pairs.clear()
            d = -apply_p(g)
            slope = float(np.dot(g, d))
            alpha, x_new, f_new, g_new, cert = _backtrack(fg, x, f, d, slope, c1, opts.shrink, convex, project)
        if alpha is None:
            report.flags.append("line-search-stalled")
            break
        if cert:
            certified += 1
        elif not pairs and project is None:
            alpha, f_new, g_new = _expand(fg, x, d, alpha, f_new, g_new)
            x_new = x + alpha * d
        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            pairs.append((s, y, 1.0 / sy))
        elif project is not None:
            pairs.clear()
        if normalize is not None:
            c = normalize(x_new)
            x_new = c * x_new
            g_new = g_new / c
            for i, (ps, py, rho) in enumerate(pairs):
                pairs[i] = (ps * c, py / c, rho)
        x, f, g = x_new, f_new, g_new
        res = residual(x, g)
        report.energy_history.append(f)
        report.grad_history.append(res)
        report.iterations = it + 1
    else:
        if res <= opts.tol_grad:
            report.flags.append("converged")
    report.final_grad_norm = res
    report.diagnostics["roundoff_certified_steps"] = certified
    return _Result(x, f, g, report)


def _two_loop(g, pairs, apply_p):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(np.dot(s, q))
        alphas.append(a)
        q -= a * y
    r = apply_p(q)
    if pairs:
        s, y, _ = pairs[-1]
        py = apply_p(y)
        r *= float(np.dot(s, y)) / float(np.dot(y, py))
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(np.dot(y, r))
        r += (a - b) * s
    return r


def _backtrack(fg, x, f, d, slope, c1, shrink, convex=False, project=None, max_halvings=60):
    """Armijo backtracking; returns ``(alpha, x_new, f_new, g_new, certified)``.

    Near convergence the decrease predicted by the slope drops below the
    rounding error of ``f``.  For convex objectives a step is then accepted
    when the directional derivative at the trial point is still nonpositive,
    which certifies ``f(x + alpha d) <= f(x)`` exactly.
    """
    alpha = 1.0
    noise = 64 * np.finfo(float).eps * (abs(f) + 1e-300)
    for _ in range(max_halvings):
        trial = x + alpha * d
        pred = alpha * slope
        if project is not None:
            trial = project(trial)
            pred = min(pred, 0.0) if np.array_equal(trial, x + alpha * d) else 0.0
        f_new, g_new = fg(trial)
        if np.isfinite(f_new):
            if f_new <= f + c1 * pred and f_new < f:
                return alpha, trial, f_new, g_new, False
            if convex and abs(f_new - f) <= noise and float(np.dot(g_new, d)) <= 0:
                return alpha, trial, min(f_new, f), g_new, True
        alpha *= shrink
    return None, None, None, None, False


def _expand(fg, x, d, alpha, f_a, g_a, max_doublings=40):
    """Double an accepted step while the objective keeps decreasing (cold starts only)."""
    for _ in range(max_doublings):
        f_b, g_b = fg(x + 2 * alpha * d)
        if not (np.isfinite(f_b) and f_b < f_a):
            break
        alpha, f_a, g_a = 2 * alpha, f_b, g_b
    return alpha, f_a, g_a


# -- Dirichlet problem ---------------------------------------------------------


def torsion_1d(p: float, x, a: float = 0.0, b: float = 1.0, c: float = 1.0):
    """Exact solution of ``-(|u'|^(p-2) u')' = c`` on ``(a, b)`` with zero ends."""
    x = np.asarray(x, dtype=float)
    half = 0.5 * (b - a)
    e = p / (p - 1)
    return c ** (1 / (p - 1)) * (p - 1) / p * (half**e - np.abs(x - a - half) ** e)


def _reduced(grid: Grid, full_fg):
    inner = grid.interior

    def fg(x):
        u = np.zeros(grid.n_nodes)
        u[inner] = x
        f, g = full_fg(u)
        return f, g[inner]

    return fg


def solve_dirichlet(grid: Grid, norm: FinslerNorm, p: float, g, opts: SolveOptions | None = None,
                    u0=None):
    """Minimise ``(1/p) int H(grad u)^p - int g u`` over fields vanishing on the boundary.

    Returns ``(u, report)``.  ``u0`` overrides the zero initial field.
    """
    opts = opts or SolveOptions()
    check_regime(norm, p)
    energy = ConvexEnergy(grid, norm, p, g)
    inner = grid.interior
    x0 = np.zeros(inner.size) if u0 is None else grid.check_field(u0)[inner].copy()
    builder = weighted_preconditioner(grid, norm, p) if opts.precondition else None
    result = lbfgs(_reduced(grid, energy.value_and_gradient), x0, opts, precond_builder=builder,
                   convex=True)
    u = np.zeros(grid.n_nodes)
    u[inner] = result.x
    report = result.report
    _post_checks(grid, p, energy.g, u, report)
    if not report.converged:
        raise ConvergenceError(
            f"no convergence after {report.iterations} iterations "
            f"(gradient {report.final_grad_norm:.3e} > {opts.tol_grad:.1e})", report, u)
    return u, report


def _post_checks(grid: Grid, p: float, g, u, report: SolverReport) -> None:
    linf = float(np.max(np.abs(u)))
    report.linf_bound_check = bool(np.isfinite(linf))
    report.diagnostics["linf"] = linf
    inner = grid.interior
    report.positivity_min = float(np.min(u[inner])) if inner.size else float("nan")
    if np.all(g == g[0]) and g[0] > 0:
        width = min(b - a for a, b in grid.extents)
        ref = float(torsion_1d(p, 0.5 * width, 0.0, width, float(g[0])))
        report.diagnostics["linf_torsion_ratio"] = linf / ref
    if np.all(g >= 0) and np.any(g[inner] > 0):
        report.diagnostics["minimum_principle"] = bool(np.all(u >= -1e-12) and np.all(u[inner] > 0))


# -- first eigenpair -----------------------------------------------------------


def rayleigh_quotient(grid: Grid, norm: FinslerNorm, p: float, v) -> float:
    """``|v|_X^p / int |v|^p`` (consistent quadrature in the denominator)."""
    d, _ = dirichlet_part(grid, norm, p, grid.check_field(v))
    return p * d / integrate_power(grid, v, p)


def eigen_residual(grid: Grid, norm: FinslerNorm, p: float, lam: float, v) -> np.ndarray:
    """Weak residual of ``-div flux(grad v) = lam |v|^(p-2) v`` against interior hats."""
    _, gd = dirichlet_part(grid, norm, p, v)
    r = gd - lam * power_gradient(grid, v, p)
    r[grid.boundary_mask] = 0.0
    return r


def eigenpair(grid: Grid, norm: FinslerNorm, p: float, opts: SolveOptions | None = None, v0=None):
    """First eigenpair by minimising the Rayleigh quotient from a positive start.

    Returns ``(lambda1, e1, report)`` with ``max e1 = 1``.
    """
    opts = opts or SolveOptions()
    check_regime(norm, p)
    inner = grid.interior
    n = grid.n_nodes

    def full(x):
        u = np.zeros(n)
        u[inner] = x
        return u

    def fg(x):
        u = full(x)
        d, gd = dirichlet_part(grid, norm, p, u)
        den = integrate_power(grid, u, p)
        lam = p * d / den
        grad = (p / den) * (gd - lam * power_gradient(grid, u, p))
        return lam, grad[inner]

    def residual(x, g):
        den = integrate_power(grid, full(x), p)
        return float(np.max(np.abs(g), initial=0.0)) * den / p

    def normalize(x):
        return 1.0 / float(np.max(np.abs(x)))

    x0 = np.ones(inner.size) if v0 is None else grid.check_field(v0)[inner].copy()
    x0 /= np.max(np.abs(x0))
    builder = weighted_preconditioner(grid, norm, p) if opts.precondition else None
    result = lbfgs(fg, x0, opts, precond_builder=builder, residual=residual, normalize=normalize,
                   convex=True)
    e1 = full(result.x)
    if np.sum(e1) < 0:
        e1 = -e1
    e1 /= float(np.max(e1))
    lam = rayleigh_quotient(grid, norm, p, e1)
    report = result.report
    report.positivity_min = float(np.min(e1[inner]))
    report.linf_bound_check = True
    report.diagnostics["lambda1"] = lam
    report.diagnostics["residual"] = float(np.max(np.abs(eigen_residual(grid, norm, p, lam, e1))))
    if not report.converged:
        raise ConvergenceError(
            f"eigenpair: no convergence after {report.iterations} iterations", report, (lam, e1))
    return lam, e1, report


def manufactured_sine(grid: Grid):
    """``(u*, g)`` with ``u* = prod sin(pi x_i)`` on the unit box and ``g = d pi^2 u*``."""
    u = np.prod(np.sin(math.pi * grid.nodes), axis=1)
    return u, grid.dim * math.pi**2 * u
