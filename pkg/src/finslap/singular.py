"""Monotone approximation of the purely singular problem ``-div flux(grad u) = f u^(-q)``.

The data are truncated to ``f_n = min(f, n)`` and the singularity is shifted
to ``(u + 1/n)^(-q)``.  Each truncated problem is solved by a damped fixed
point iteration whose steps are convex Dirichlet solves with a frozen
denominator; the levels ``n`` then increase along a schedule with warm starts
until consecutive solutions agree.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from finslap.convex import SolveOptions, SolverReport, check_regime, solve_dirichlet
from finslap.energy import dirichlet_part
from finslap.errors import ConvergenceError, InvariantViolation
from finslap.grid import Grid, seminorm_X
from finslap.norms import FinslerNorm

MONOTONE_SLACK = 1e-8


@dataclass(frozen=True, eq=False)
class SingularProblem:
    grid: Grid
    norm: FinslerNorm
    p: float
    f: np.ndarray
    q: np.ndarray
    delta: float
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        f = self.grid.check_field(self.f)
        q = self.grid.check_field(self.q)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "q", q)
        if not self.check:
            return
        check_regime(self.norm, self.p)
        if np.any(f < 0) or not np.any(f[self.grid.interior] > 0):
            raise ValueError("f must be nonnegative and not identically zero")
        if np.any(q <= 0):
            raise ValueError("q must be positive at every node")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        strip = self.grid.strip_mask(self.delta)
        if np.any(q[strip] > 1):
            raise ValueError(
                f"q exceeds 1 within distance delta={self.delta} of the boundary "
                f"(max {float(np.max(q[strip])):g}); Theorem 1.1(b) hypothesis needs q <= 1 there")

    @property
    def q_max(self) -> float:
        return float(np.max(self.q))

    def relaxation(self) -> float:
        """Damping ``(p - 1) / (p - 1 + max q)`` of the fixed point iteration.

        For ``v = c u`` the frozen solve returns roughly ``c^(-q/(p-1)) u``;
        this weight removes that scaling mode in one step.
        """
        return (self.p - 1) / (self.p - 1 + self.q_max)


@dataclass
class ApproxState:
    n: float
    u: np.ndarray
    inner_iterations: int
    outer_gap: float = float("nan")
    fp_gaps: list = field(default_factory=list)
    residual: float = float("nan")
    growth: dict = field(default_factory=dict)


def truncate_f(f, n: float) -> np.ndarray:
    if not n >= 1:
        raise ValueError(f"truncation level must be >= 1, got {n}")
    return np.minimum(np.asarray(f, dtype=float), float(n))


def frozen_load(prob: SingularProblem, n: float, v) -> np.ndarray:
    """``f_n / (v+ + 1/n)^q`` at every node."""
    v = prob.grid.check_field(v)
    return truncate_f(prob.f, n) / (np.maximum(v, 0.0) + 1.0 / n) ** prob.q


def fixed_point_step(prob: SingularProblem, n: float, v, opts: SolveOptions | None = None,
                     u0=None):
    """Solve the Dirichlet problem with frozen load ``f_n / (v+ + 1/n)^q``.

    Returns ``(w, report)``.  ``report.diagnostics`` holds the growth check:
    testing the equation with ``w`` gives ``|w|_X^(p-1) <= n^(1 + max q) int w / |w|_X``.
    """
    g = frozen_load(prob, n, v)
    w, report = solve_dirichlet(prob.grid, prob.norm, prob.p, g, opts, u0=u0)
    x_norm = seminorm_X(prob.grid, prob.norm, prob.p, w)
    l1 = float(np.dot(np.abs(w), prob.grid.lump))
    if x_norm > 0:
        c_hat = (l1 / x_norm) ** (1 / (prob.p - 1))
        bound = c_hat * n ** ((1 + prob.q_max) / (prob.p - 1))
    else:
        c_hat, bound = 0.0, 0.0
    report.diagnostics.update(x_norm=x_norm, growth_constant=c_hat, growth_bound=bound,
                              growth_ok=bool(x_norm <= bound * (1 + 1e-9) + 1e-300))
    return w, report


def approx_residual(prob: SingularProblem, n: float, u) -> np.ndarray:
    """Gradient of the frozen energy at ``u`` with the denominator taken at ``u`` itself."""
    _, grad = dirichlet_part(prob.grid, prob.norm, prob.p, u)
    res = grad - frozen_load(prob, n, u) * prob.grid.lump
    res[prob.grid.boundary_mask] = 0.0
    return res


def solve_approx(prob: SingularProblem, n: float, warm_start=None, tol_fp: float = 1e-10,
                 max_fp_iters: int = 200, opts: SolveOptions | None = None) -> ApproxState:
    """Fixed point of the frozen-load map for level ``n``."""
    if not tol_fp > 0:
        raise ValueError("tol_fp must be positive")
    opts = opts or SolveOptions(tol_grad=1e-12)
    grid = prob.grid
    v = np.zeros(grid.n_nodes) if warm_start is None else grid.zero_boundary(warm_start)
    theta = prob.relaxation()
    state = ApproxState(n, v, 0)
    for _ in range(max_fp_iters):
        w, rep = fixed_point_step(prob, n, v, opts, u0=v)
        state.inner_iterations += 1
        state.growth = rep.diagnostics
        v_new = (1 - theta) * v + theta * w
        gap = float(np.max(np.abs(v_new - v)))
        state.fp_gaps.append(gap)
        v = v_new
        if gap <= tol_fp:
            break
    else:
        state.u = v
        raise ConvergenceError(
            f"fixed point for n={n:g} not reached in {max_fp_iters} iterations "
            f"(last change {state.fp_gaps[-1]:.3e})", None, state)
    state.u = v
    state.residual = float(np.max(np.abs(approx_residual(prob, n, v))))
    return state


def doubling_schedule(start: float = 1, factor: float = 2, cap: float = 2.0**26):
    n = float(start)
    while n <= cap:
        yield n
        n *= factor


def interior_lower_bound(grid: Grid, u, margin: float) -> float:
    """Minimum of ``u`` over nodes at distance ``>= margin`` from the boundary."""
    half = min(b - a for a, b in grid.extents) / 2
    if not 0 < margin < half:
        raise ValueError(f"margin must lie in (0, {half:g}), got {margin}")
    mask = grid.boundary_distance >= margin - 1e-12
    if not np.any(mask):
        raise ValueError(f"no nodes at distance >= {margin} from the boundary")
    return float(np.min(grid.check_field(u)[mask]))


def weak_residual(prob: SingularProblem, u) -> np.ndarray:
    """Residual of the limit problem ``(f u^(-q))`` against interior hat functions."""
    grid = prob.grid
    inner = grid.interior
    if np.any(u[inner] <= 0):
        raise ValueError("the limit residual needs u > 0 at interior nodes")
    _, grad = dirichlet_part(grid, prob.norm, prob.p, u)
    load = np.zeros(grid.n_nodes)
    load[inner] = prob.f[inner] * u[inner] ** (-prob.q[inner])
    res = grad - load * grid.lump
    res[grid.boundary_mask] = 0.0
    return res


@dataclass
class SingularOptions:
    tol_outer: float = 1e-6
    tol_fp: float = 1e-8
    max_fp_iters: int = 200
    schedule: object = None
    margin: float | None = None
    inner: SolveOptions = field(default_factory=lambda: SolveOptions(tol_grad=1e-12))

    def __post_init__(self):
        if not self.tol_outer > 0 or not self.tol_fp > 0:
            raise ValueError("tolerances must be positive")
        if self.tol_fp >= self.tol_outer:
            raise ValueError("tol_fp must be smaller than tol_outer")


@dataclass
class LevelRecord:
    n: float
    inner_iters: int
    outer_gap: float
    interior_min: float
    seminorm: float


def solve_singular(prob: SingularProblem, opts: SingularOptions | None = None):
    """Run the truncation levels until consecutive solutions differ by ``<= tol_outer``.

    Returns ``(u, report)``; ``report.diagnostics["levels"]`` lists one
    :class:`LevelRecord` per level.  A schedule that runs out before the
    tolerance is met sets the ``schedule-exhausted`` flag.
    """
    opts = opts or SingularOptions()
    grid = prob.grid
    margin = opts.margin or min(b - a for a, b in grid.extents) / 4
    schedule = opts.schedule if opts.schedule is not None else doubling_schedule()
    report = SolverReport()
    levels = []
    worst_drop = 0.0
    u_prev = None
    for n in schedule:
        state = solve_approx(prob, n, u_prev, opts.tol_fp, opts.max_fp_iters, opts.inner)
        u = state.u
        if u_prev is not None:
            drop = float(np.max(u_prev - u))
            worst_drop = max(worst_drop, drop)
            if drop > MONOTONE_SLACK:
                report.diagnostics["levels"] = levels
                raise InvariantViolation(
                    f"monotonicity broken between levels: u_{n:g} falls {drop:.3e} below "
                    "the previous level", report)
            state.outer_gap = float(np.max(np.abs(u - u_prev)))
        rec = LevelRecord(n, state.inner_iterations, state.outer_gap,
                          interior_lower_bound(grid, u, margin),
                          seminorm_X(grid, prob.norm, prob.p, u))
        levels.append(rec)
        report.energy_history.append(rec.seminorm)
        report.grad_history.append(state.residual)
        report.iterations += state.inner_iterations
        u_prev = u
        if state.outer_gap <= opts.tol_outer:
            report.flags.append("converged")
            break
    else:
        report.flags.append("schedule-exhausted")
    u = u_prev
    inner = grid.interior
    report.positivity_min = float(np.min(u[inner]))
    report.linf_bound_check = bool(np.all(np.isfinite(u)))
    report.final_grad_norm = levels[-1].outer_gap
    res = weak_residual(prob, u) if report.positivity_min > 0 else np.array([np.inf])
    report.diagnostics.update(
        levels=levels, margin=margin, monotonicity_worst_drop=worst_drop,
        weak_residual=float(np.max(np.abs(res))), final_n=levels[-1].n,
        interior_min=levels[-1].interior_min)
    return u, report


def powers(base: float, cap: float = 2.0**26):
    """``1, base, base^2, ...`` up to ``cap``."""
    return list(itertools.takewhile(lambda n: n <= cap, (float(base) ** k for k in itertools.count())))
