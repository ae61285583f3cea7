"""Two positive solutions of the perturbed singular problem.

``-div flux(grad u) = lam u^(-q) + u^r`` is approached through the
regularised energies ``I_eps`` (see :class:`finslap.energy.PerturbedEnergy`).
For each ``eps`` the negative-energy local minimiser ``nu`` is found inside a
ball of radius ``R``; the mountain-pass point ``zeta`` is found by deforming a
path from ``0`` to ``T e1`` and then refining the top of the path along rays.
A decreasing ``eps`` schedule with warm starts approximates the limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from finslap.convex import (
    SolveOptions, SolverReport, check_regime, eigenpair, frozen_weights, lbfgs,
    solve_dirichlet, weighted_preconditioner, weighted_stiffness,
)
from finslap.energy import Q_MARGIN, PerturbedEnergy, dirichlet_part
from finslap.errors import ConvergenceError, InvariantViolation, UnsupportedRegime
from finslap.grid import Grid, seminorm_X
from finslap.norms import EUCLIDEAN, FinslerNorm

SIGN_CLEANUP = 1e-12


class MultiplicityError(InvariantViolation):
    """One of the documented failure modes: no negative well, or merged solutions."""


def critical_exponent(dim: int, p: float) -> float:
    """``N p / (N - p)`` for ``p < N``; infinite otherwise."""
    return dim * p / (dim - p) if p < dim else math.inf


def check_growth(norm: FinslerNorm, p: float, r: float, dim: int) -> float:
    """Validate ``p - 1 < r`` and the subcritical growth ``r + 1 < p*``; return ``p*``."""
    if not r > p - 1:
        raise UnsupportedRegime(f"need r > p - 1, got r={r}, p={p}")
    p_star = critical_exponent(dim, p)
    if p < dim:
        if r + 1 >= p_star:
            raise UnsupportedRegime(
                f"supercritical for this regime: r + 1 = {r + 1:g} >= p* = {p_star:g} (N={dim}, p={p:g})")
    elif not (norm.kind == EUCLIDEAN and p < 2):
        raise UnsupportedRegime(
            f"unsupported regime: p={p:g} >= N={dim} is only handled for the euclidean norm "
            "with p < 2")
    return p_star


@dataclass(frozen=True, eq=False)
class PerturbedProblem:
    grid: Grid
    norm: FinslerNorm
    p: float
    q: np.ndarray
    r: float
    lam: float

    def __post_init__(self):
        q = self.grid.check_field(self.q)
        object.__setattr__(self, "q", q)
        check_regime(self.norm, self.p)
        if np.any(q <= 0) or np.any(q > 1 - Q_MARGIN):
            raise ValueError("need 0 < q <= 1 - 1e-6 at every node")
        check_growth(self.norm, self.p, self.r, self.grid.dim)
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    @property
    def p_star(self) -> float:
        return critical_exponent(self.grid.dim, self.p)

    def energy(self, epsilon: float, lam: float | None = None) -> PerturbedEnergy:
        lam = self.lam if lam is None else lam
        return PerturbedEnergy(self.grid, self.norm, self.p, lam, epsilon, self.q, self.r)

    def with_lambda(self, lam: float) -> "PerturbedProblem":
        return PerturbedProblem(self.grid, self.norm, self.p, self.q, self.r, lam)

    def limit_energy(self, u) -> float:
        """Unregularised energy ``(1/p) int H^p - lam int (u+)^(1-q)/(1-q) - int (u+)^(r+1)/(r+1)``."""
        u = self.grid.check_field(u)
        d, _ = dirichlet_part(self.grid, self.norm, self.p, u)
        up = np.maximum(u, 0.0)
        dens = self.lam * up ** (1 - self.q) / (1 - self.q) + up ** (self.r + 1) / (self.r + 1)
        return d - float(np.dot(dens, self.grid.lump))


# -- mountain-pass geometry ----------------------------------------------------


@dataclass
class GeometryConstants:
    R: float
    rho: float
    Lambda_hat: float
    T: float
    sobolev_C_hat: float
    l: float
    k: float
    p_star: float
    T_ratio: float
    probe_ratios: list = field(default_factory=list)
    singular_sup: float = float("nan")
    e1: np.ndarray = field(default=None, repr=False)
    lambda1: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "R": self.R, "rho": self.rho, "Lambda_hat": self.Lambda_hat, "T": self.T,
            "T_ratio": self.T_ratio, "sobolev_C_hat": self.sobolev_C_hat, "l": self.l,
            "k": self.k, "p_star": self.p_star, "singular_sup": self.singular_sup,
            "lambda1": self.lambda1,
        }


def holder_factor(measure: float, p_star: float, r: float) -> float:
    """``|Omega|^(1 / s')`` with ``s = p* / (r + 1)``; equals ``|Omega|`` when ``p*`` is infinite."""
    if math.isinf(p_star):
        return measure
    s = p_star / (r + 1)
    return measure ** ((s - 1) / s)


def probe_fields(grid: Grid, count: int, seed: int = 0, e1=None) -> list:
    """``e1`` (if given), low separable sine modes, then seeded random bumps; all zero on the boundary."""
    probes = [] if e1 is None else [np.asarray(e1, dtype=float)]
    lo = np.array([a for a, _ in grid.extents])
    width = np.array([b - a for a, b in grid.extents])
    s = (grid.nodes - lo) / width
    modes = [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1)]
    for m in modes:
        if len(probes) >= min(count, 4 if grid.dim == 2 else 3):
            break
        k = m[: grid.dim]
        v = np.prod(np.sin(math.pi * np.asarray(k) * s), axis=1)
        probes.append(grid.zero_boundary(np.abs(v)))
    rng = np.random.default_rng(seed)
    while len(probes) < count:
        c = rng.uniform(0.2, 0.8, grid.dim)
        rad = rng.uniform(0.15, 0.5)
        d2 = np.sum(((s - c) / rad) ** 2, axis=1)
        v = grid.zero_boundary(np.maximum(0.0, 1.0 - d2) ** 2)
        if np.any(v > 0):
            probes.append(v)
    return probes


def mp_constants(prob: PerturbedProblem, epsilon: float, k: float = 0.5, probe_count: int = 16,
                 seed: int = 0, probes=None, e1=None, opts: SolveOptions | None = None) -> GeometryConstants:
    """Estimate ``R``, ``rho``, ``Lambda`` and ``T`` of the mountain-pass geometry.

    The embedding constant ``C`` in ``int (v+)^(r+1) <= C l |v|^(r+1)`` and the
    supremum over the sphere ``|v| = R`` are both taken over a finite probe
    family, so ``Lambda_hat`` is an estimate from above of the true threshold.
    """
    if not 0 < k < 1:
        raise ValueError(f"k must lie in (0, 1), got {k}")
    if probes is None and probe_count < 8:
        raise ValueError("probe_count must be at least 8")
    grid, p, r = prob.grid, prob.p, prob.r
    lam1 = float("nan")
    if e1 is None:
        lam1, e1, _ = eigenpair(grid, prob.norm, p, opts or SolveOptions(tol_grad=1e-10))
    if probes is None:
        probes = probe_fields(grid, probe_count, seed, e1)
    p_star = prob.p_star
    l = holder_factor(grid.measure, p_star, r)
    lump = grid.lump
    ratios, singular = [], []
    for v in probes:
        nv = seminorm_X(grid, prob.norm, p, v)
        if nv == 0:
            raise ValueError("probe field with zero seminorm")
        ratios.append(float(np.dot(np.abs(v) ** (r + 1), lump)) ** (1 / (r + 1)) / nv)
    c_hat = max(ratios) ** (r + 1) / l
    R = k * ((r + 1) / (p * c_hat * l)) ** (1 / (r + 1 - p))
    rho = 0.5 * (R**p / p - c_hat * l * R ** (r + 1) / (r + 1))
    for v in probes:
        w = np.abs(v) * (R / seminorm_X(grid, prob.norm, p, v))
        singular.append(float(np.dot(w ** (1 - prob.q) / (1 - prob.q), lump)))
    sup_sing = max(singular)
    energy0 = prob.energy(epsilon, lam=0.0)
    n1 = seminorm_X(grid, prob.norm, p, e1)
    T = R / n1
    for _ in range(200):
        T *= 2.0
        if energy0.value(T * e1) < -1:
            break
    else:
        raise ConvergenceError("no T with I_0(T e1) < -1 found")
    return GeometryConstants(R, rho, rho / sup_sing, T, c_hat, l, k, p_star, T * n1 / R,
                             ratios, sup_sing, np.asarray(e1), lam1)


# -- local minimiser -----------------------------------------------------------


@dataclass
class CriticalOptions:
    tol_grad: float = 1e-10
    max_iters: int = 5000
    memory: int = 10
    segments: int = 21
    max_deform_iters: int = 200
    redistribute_every: int = 5
    stall_window: int = 20
    stall_tol: float = 1e-6
    tol_mp: float = 1e-5

    def solve_options(self) -> SolveOptions:
        return SolveOptions(tol_grad=self.tol_grad, max_iters=self.max_iters, memory=self.memory)


def _interior_fg(grid: Grid, energy: PerturbedEnergy):
    inner = grid.interior

    def fg(x):
        u = np.zeros(grid.n_nodes)
        u[inner] = x
        f, g = energy.value_and_gradient(u)
        return f, g[inner]

    return fg


def _full(grid: Grid, x) -> np.ndarray:
    u = np.zeros(grid.n_nodes)
    u[grid.interior] = x
    return u


def sign_cleanup(u: np.ndarray) -> np.ndarray:
    """Clamp negative values of magnitude ``<= 1e-12`` to zero; larger ones are kept."""
    u = u.copy()
    u[(u < 0) & (u >= -SIGN_CLEANUP)] = 0.0
    return u


@dataclass
class LocalMinInfo:
    active: bool
    residual: float
    energy: float
    seminorm: float
    report: SolverReport


def local_minimizer(prob: PerturbedProblem, epsilon: float, R: float, opts: CriticalOptions | None = None,
                    v0=None, e1=None):
    """Minimise ``I_eps`` over ``|v|_X <= R`` by projected quasi-Newton descent.

    Returns ``(nu, info)``.  Raises :class:`MultiplicityError` if no negative
    energy is found or if the minimiser sits on the sphere (then it is not a
    critical point of ``I_eps``).
    """
    if not R > 0:
        raise ValueError("R must be positive")
    opts = opts or CriticalOptions()
    grid, norm, p = prob.grid, prob.norm, prob.p
    energy = prob.energy(epsilon)
    inner = grid.interior
    message = "negative well not found — λ may exceed Λ̂"

    def seminorm(x):
        return seminorm_X(grid, norm, p, _full(grid, x))

    def project(x):
        s = seminorm(x)
        return x * (R / s) if s > R else x

    if v0 is None:
        if e1 is None:
            _, e1, _ = eigenpair(grid, norm, p, SolveOptions(tol_grad=1e-8))
        e1 = np.asarray(e1)
        t = 0.5 * R / seminorm_X(grid, norm, p, e1)
        for _ in range(80):
            if energy.value(t * e1) < 0:
                break
            t *= 0.5
        else:
            raise MultiplicityError(message)
        x0 = t * e1[inner]
    else:
        x0 = project(grid.check_field(v0)[inner].copy())
    if not energy.value(_full(grid, x0)) < 0:
        raise MultiplicityError(message)
    result = lbfgs(_interior_fg(grid, energy), x0, opts.solve_options(),
                   precond_builder=weighted_preconditioner(grid, norm, p), project=project,
                   convex=True)
    nu = sign_cleanup(_full(grid, result.x))
    s = seminorm_X(grid, norm, p, nu)
    active = s >= R * (1 - 1e-8)
    res = float(np.max(np.abs(energy.gradient(nu))))
    value = energy.value(nu)
    info = LocalMinInfo(active, res, value, s, result.report)
    if not value < 0 or active:
        raise MultiplicityError(
            f"{message} (I={value:.3e}, constraint {'active' if active else 'inactive'})")
    if not result.report.converged:
        raise ConvergenceError(
            f"local minimiser: gradient {result.report.final_grad_norm:.3e} after "
            f"{result.report.iterations} iterations", result.report, nu)
    return nu, info


# -- mountain pass -------------------------------------------------------------


@dataclass
class MountainPassInfo:
    path: np.ndarray
    sweep_max: list
    sweep_grad: list
    deform_stalled: bool
    residual: float
    energy: float
    t_star: float
    ps_energy_tail: list
    ps_grad_tail: list
    report: SolverReport


def _redistribute(path, kmat):
    """Equal arclength (in the energy metric of ``kmat``) along the piecewise-linear path."""
    diffs = np.diff(path, axis=0)
    seg = np.sqrt(np.maximum(np.einsum("ij,ij->i", diffs, (kmat @ diffs.T).T), 0.0))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] == 0:
        return path
    target = np.linspace(0, cum[-1], path.shape[0])
    out = np.empty_like(path)
    for i, t in enumerate(target):
        j = min(np.searchsorted(cum, t, side="right") - 1, path.shape[0] - 2)
        w = 0.0 if seg[j] == 0 else (t - cum[j]) / seg[j]
        out[i] = (1 - w) * path[j] + w * path[j + 1]
    out[0], out[-1] = path[0], path[-1]
    return out


def deform_path(prob: PerturbedProblem, epsilon: float, endpoint, opts: CriticalOptions, path0=None):
    """Deformation stage: the highest knot descends orthogonally to the path.

    Each sweep takes one Armijo step at the highest interior knot along the
    preconditioned gradient with its tangential part removed; every few
    sweeps the knots are redistributed by arclength, a move kept only if the
    highest knot energy does not rise.  The recorded maxima therefore never
    increase, and the endpoints never move.  Stops when the orthogonal
    gradient at the top is below ``tol_mp``, when no step is accepted, or
    when the maximum improves by less than ``stall_tol`` (relative) over
    ``stall_window`` sweeps.
    """
    grid = prob.grid
    inner = grid.interior
    energy = prob.energy(epsilon)
    fg = _interior_fg(grid, energy)
    m = opts.segments
    end = grid.check_field(endpoint)[inner]
    if path0 is None:
        path = np.linspace(0.0, 1.0, m)[:, None] * end[None, :]
    else:
        path = np.array(path0, dtype=float)
        path[0], path[-1] = 0.0, end
    values = np.array([fg(x)[0] for x in path])
    sweep_max, sweep_grad = [], []
    stalled = False
    for sweep in range(opts.max_deform_iters):
        j = int(np.argmax(values[1:-1])) + 1
        top = values[j]
        sweep_max.append(float(top))
        _, g = fg(path[j])
        u = _full(grid, path[j])
        kmat = weighted_stiffness(grid, frozen_weights(grid, prob.norm, prob.p, u))
        tau = path[j + 1] - path[j - 1]
        ktau = kmat @ tau
        g_perp = g - (float(np.dot(g, tau)) / float(np.dot(ktau, tau))) * ktau
        d = -splu(kmat).solve(g_perp)
        proj_res = float(np.max(np.abs(g_perp)))
        sweep_grad.append(proj_res)
        if proj_res <= opts.tol_mp:
            break
        w = opts.stall_window
        if len(sweep_max) > w and sweep_max[-w - 1] - top <= opts.stall_tol * abs(top):
            stalled = True
            break
        slope = float(np.dot(g, d))
        alpha = 1.0
        for _ in range(40):
            trial = path[j] + alpha * d
            ft = fg(trial)[0]
            if ft <= top + 1e-4 * alpha * slope and ft < top:
                path[j], values[j] = trial, ft
                break
            alpha *= 0.5
        else:
            stalled = True
            break
        if opts.redistribute_every and (sweep + 1) % opts.redistribute_every == 0:
            cand = _redistribute(path, kmat)
            cvals = np.array([fg(x)[0] for x in cand])
            if np.max(cvals[1:-1]) <= np.max(values[1:-1]):
                path, values = cand, cvals
    return path, values, sweep_max, sweep_grad, stalled


class _RayMax:
    """``Phi(w) = max_t I(t w)`` over the outer branch, with envelope gradient ``t* grad I(t* w)``."""

    def __init__(self, fg, t_hint: float):
        self.fg = fg
        self.t = t_hint

    def _phi(self, w, t):
        f, g = self.fg(t * w)
        return f, float(np.dot(g, w))

    def argmax(self, w):
        ts = self.t * 1.25 ** np.arange(-4, 5)
        vals = [self._phi(w, t)[0] for t in ts]
        i = int(np.argmax(vals))
        if not (0 < i < len(ts) - 1) or vals[i] <= 0:
            ts = self.t * 1.25 ** np.arange(-60, 61)
            vals = [self._phi(w, t)[0] for t in ts]
            i = int(np.argmax(vals))
            if not (0 < i < len(ts) - 1) or vals[i] <= 0:
                return None
        lo, hi = ts[i - 1], ts[i + 1]
        dlo, dhi = self._phi(w, lo)[1], self._phi(w, hi)[1]
        if not (dlo > 0 > dhi):
            return ts[i]
        return brentq(lambda t: self._phi(w, t)[1], lo, hi, xtol=1e-15 * hi, rtol=1e-15)

    def __call__(self, w):
        t = self.argmax(w)
        if t is None:
            return math.inf, np.zeros_like(w)
        self.t = t
        f, g = self.fg(t * w)
        return f, t * g


def mountain_pass(prob: PerturbedProblem, epsilon: float, endpoint, opts: CriticalOptions | None = None,
                  path0=None, zeta0=None):
    """Mountain-pass critical point between ``0`` and ``endpoint``.

    The path deformation locates the pass; the top point is then refined by
    minimising ``max_t I(t w)`` over directions ``w`` (quasi-Newton with
    sup-normalisation), whose stationary points are critical points of
    ``I``.  Returns ``(zeta, info)``.
    """
    opts = opts or CriticalOptions()
    grid, norm, p = prob.grid, prob.norm, prob.p
    energy = prob.energy(epsilon)
    fg = _interior_fg(grid, energy)
    if not energy.value(grid.check_field(endpoint)) < -1:
        raise ValueError("endpoint must satisfy I(endpoint) < -1")
    path, values, sweep_max, sweep_grad, stalled = deform_path(prob, epsilon, endpoint, opts, path0)
    start = path[int(np.argmax(values[1:-1])) + 1] if zeta0 is None else grid.check_field(zeta0)[grid.interior]
    scale = float(np.max(np.abs(start)))
    w0 = start / scale
    ray = _RayMax(fg, scale)
    ray_report = SolverReport()

    def residual(x, g):
        return float(np.max(np.abs(g))) / ray.t

    def normalize(x):
        return 1.0 / float(np.max(np.abs(x)))

    refine_opts = SolveOptions(tol_grad=opts.tol_grad, max_iters=opts.max_iters, memory=opts.memory)
    result = lbfgs(ray, w0, refine_opts, precond_builder=weighted_preconditioner(grid, norm, p),
                   residual=residual, normalize=normalize, report=ray_report)
    t_star = ray.argmax(result.x)
    if t_star is None:
        raise ConvergenceError("mountain pass: lost the ray maximum", ray_report, path)
    zeta = sign_cleanup(_full(grid, t_star * result.x))
    res = float(np.max(np.abs(energy.gradient(zeta))))
    info = MountainPassInfo(path, sweep_max, sweep_grad, stalled, res, energy.value(zeta), t_star,
                            ray_report.energy_history[-10:], ray_report.grad_history[-10:], ray_report)
    if res > opts.tol_mp:
        raise ConvergenceError(
            f"mountain pass stalled with gradient {res:.3e} > {opts.tol_mp:.1e}", ray_report, path)
    return zeta, info


# -- continuation in eps -------------------------------------------------------


@dataclass
class CriticalPair:
    nu: np.ndarray
    zeta: np.ndarray
    I_nu: float
    I_zeta: float
    epsilon: float
    distinctness: float
    seminorm_nu: float = float("nan")
    seminorm_zeta: float = float("nan")
    residual_nu: float = float("nan")
    residual_zeta: float = float("nan")


@dataclass
class ContinuationResult:
    pairs: list
    geometry: GeometryConstants
    barrier: np.ndarray
    checks: dict
    diagnostics: dict

    @property
    def final(self) -> CriticalPair:
        return self.pairs[-1]

    @property
    def distinctness(self) -> float:
        return self.final.distinctness


def barrier_field(prob: PerturbedProblem, opts: SolveOptions | None = None) -> np.ndarray:
    """Solution of ``-div flux(grad xi) = min(1, lam / 2)`` with zero boundary values."""
    c = min(1.0, prob.lam / 2)
    xi, _ = solve_dirichlet(prob.grid, prob.norm, prob.p, np.full(prob.grid.n_nodes, c),
                            opts or SolveOptions(tol_grad=1e-12))
    return xi


def default_eps_schedule():
    return [10.0**-k for k in range(1, 6)]


def continuation(prob: PerturbedProblem, eps_schedule=None, opts: CriticalOptions | None = None,
                 geometry: GeometryConstants | None = None, k: float = 0.5, probe_count: int = 16,
                 seed: int = 0, log=None) -> ContinuationResult:
    """Critical pairs ``(nu_eps, zeta_eps)`` along a decreasing ``eps`` schedule.

    Raises :class:`InvariantViolation` when a field falls below the barrier and
    :class:`MultiplicityError` when the final fields are not distinct.
    """
    eps_schedule = list(eps_schedule or default_eps_schedule())
    if not eps_schedule or any(e <= 0 for e in eps_schedule) or any(
            b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("eps schedule must be positive and strictly decreasing")
    opts = opts or CriticalOptions()
    grid = prob.grid
    geo = geometry or mp_constants(prob, eps_schedule[0], k=k, probe_count=probe_count, seed=seed)
    xi = barrier_field(prob)
    endpoint = geo.T * geo.e1
    pairs = []
    nu = zeta = path = None
    checks = {"energy_order": True, "nonnegative": True, "barrier": True}
    worst_barrier = -math.inf
    for eps in eps_schedule:
        energy = prob.energy(eps)
        if energy.value(endpoint) >= -1:
            raise InvariantViolation(f"endpoint energy not below -1 at eps={eps:g}")
        nu, _ = local_minimizer(prob, eps, geo.R, opts, v0=nu, e1=geo.e1)
        zeta, mp = mountain_pass(prob, eps, endpoint, opts, path0=path, zeta0=zeta)
        path = mp.path
        pair = CriticalPair(nu, zeta, energy.value(nu), energy.value(zeta), eps,
                            float(np.max(np.abs(zeta - nu))),
                            seminorm_X(grid, prob.norm, prob.p, nu),
                            seminorm_X(grid, prob.norm, prob.p, zeta),
                            float(np.max(np.abs(energy.gradient(nu)))), mp.residual)
        pairs.append(pair)
        order = pair.I_nu < 0 < geo.rho <= pair.I_zeta + 1e-8
        checks["energy_order"] &= bool(order)
        checks["nonnegative"] &= bool(np.all(nu >= -SIGN_CLEANUP) and np.all(zeta >= -SIGN_CLEANUP))
        gap = float(np.max(xi - np.minimum(nu, zeta)))
        worst_barrier = max(worst_barrier, gap)
        if log is not None:
            log(f"eps={eps:g} I_nu={pair.I_nu:.6g} I_zeta={pair.I_zeta:.6g} "
                f"distinct={pair.distinctness:.4g}")
        if gap > 1e-8:
            raise InvariantViolation(
                f"barrier violated at eps={eps:g}: a critical field is {gap:.3e} below xi")
    thetas = np.maximum.accumulate([pp.seminorm_zeta for pp in pairs])
    final = pairs[-1]
    diag = {
        "theta_hat": float(thetas[-1]),
        "theta_change": float(abs(thetas[-1] - thetas[-2]) / thetas[-1]) if len(pairs) > 1 else 0.0,
        "barrier_worst_gap": worst_barrier,
        "barrier_max": float(np.max(xi)),
    }
    if len(pairs) > 1:
        a, b = pairs[-2], pairs[-1]
        diag["cauchy_nu"] = abs(prob.limit_energy(b.nu) - prob.limit_energy(a.nu))
        diag["cauchy_zeta"] = abs(prob.limit_energy(b.zeta) - prob.limit_energy(a.zeta))
        diag["cauchy_nu_regularised"] = abs(b.I_nu - a.I_nu)
        diag["cauchy_zeta_regularised"] = abs(b.I_zeta - a.I_zeta)
        diag["zeta_seminorm_change"] = abs(b.seminorm_zeta - a.seminorm_zeta) / b.seminorm_zeta
    limit = prob.energy(eps_schedule[-1])
    for name, u in (("nu", final.nu), ("zeta", final.zeta)):
        if np.all(u[grid.interior] > 0):
            diag[f"limit_residual_{name}"] = float(np.max(np.abs(limit.weak_residual(u, epsilon=0.0))))
        else:
            diag[f"limit_residual_{name}"] = math.inf
    checks["theta_stable"] = diag["theta_change"] <= 0.01
    checks["energy_cauchy"] = len(pairs) < 2 or max(diag["cauchy_nu"], diag["cauchy_zeta"]) <= 1e-4
    checks["limit_residual"] = max(diag["limit_residual_nu"], diag["limit_residual_zeta"]) <= 1e-4
    threshold = 10 * opts.tol_mp
    checks["distinct"] = final.distinctness > threshold
    result = ContinuationResult(pairs, geo, xi, checks, diag)
    if not checks["distinct"]:
        raise MultiplicityError(
            f"solutions merged — λ likely ≥ Λ (distance {final.distinctness:.3e} <= {threshold:.1e})")
    return result
