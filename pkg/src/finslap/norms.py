"""Finsler-Minkowski norms and numerical checks of their algebraic inequalities.

Three families are supported:

* ``euclidean``: ``H(x) = |x|``
* ``t_norm``: ``H_t(x) = (sum |x_i|^t)^(1/t)`` for ``t > 1``
* ``quartic``: ``H(x) = sqrt(lam * sqrt(sum x_i^4) + mu * sum x_i^2)``

All evaluation routines are vectorised over leading axes: ``x`` has shape
``(..., N)`` and scalar results have shape ``(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EUCLIDEAN = "euclidean"
T_NORM = "t_norm"
QUARTIC = "quartic"


def _as_vectors(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        raise ValueError("expected a vector, got a scalar")
    if x.shape[-1] < 1:
        raise ValueError("vector dimension must be >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite component in input vector")
    return x


@dataclass(frozen=True)
class FinslerNorm:
    kind: str
    t: float = 2.0
    lam: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if self.kind == T_NORM:
            if not self.t > 1:
                raise ValueError(f"t_norm requires t > 1, got t={self.t}")
        elif self.kind == QUARTIC:
            if not (self.lam > 0 and self.mu > 0):
                raise ValueError(f"quartic norm requires lambda > 0 and mu > 0, got {self.lam}, {self.mu}")
        elif self.kind != EUCLIDEAN:
            raise ValueError(f"unknown norm kind {self.kind!r}")

    @classmethod
    def euclidean(cls) -> "FinslerNorm":
        return cls(EUCLIDEAN)

    @classmethod
    def t_norm(cls, t: float) -> "FinslerNorm":
        return cls(T_NORM, t=float(t))

    @classmethod
    def quartic(cls, lam: float, mu: float) -> "FinslerNorm":
        return cls(QUARTIC, lam=float(lam), mu=float(mu))

    def __str__(self):
        if self.kind == T_NORM:
            return f"t_norm({self.t:g})"
        if self.kind == QUARTIC:
            return f"quartic({self.lam:g},{self.mu:g})"
        return EUCLIDEAN

    @property
    def is_euclidean_like(self) -> bool:
        return self.kind == EUCLIDEAN or (self.kind == T_NORM and self.t == 2.0)

    def supports_p(self, p: float) -> bool:
        """Whether the (norm, p) pair lies in the regime covered by the theory.

        Any ``p > 1`` works for the p-Laplacian (euclidean) and for the
        pseudo p-Laplacian ``t_norm(t = p)``; other norms need ``p >= 2``.
        """
        if p <= 1:
            return False
        if p >= 2 or self.is_euclidean_like:
            return True
        return self.kind == T_NORM and self.t == p

    # -- evaluation ---------------------------------------------------------

    def value(self, x) -> np.ndarray:
        x = _as_vectors(x)
        if self.kind == EUCLIDEAN:
            return np.linalg.norm(x, axis=-1)
        if self.kind == T_NORM:
            # scale by max |x_i| to avoid overflow for large t
            a = np.abs(x)
            m = a.max(axis=-1)
            safe = np.where(m > 0, m, 1.0)
            s = np.sum((a / safe[..., None]) ** self.t, axis=-1)
            return np.where(m > 0, safe * s ** (1.0 / self.t), 0.0)
        x2 = x * x
        s2 = np.sum(x2, axis=-1)
        s4 = np.sum(x2 * x2, axis=-1)
        return np.sqrt(self.lam * np.sqrt(s4) + self.mu * s2)

    __call__ = value

    def _grad_nonzero(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        if self.kind == EUCLIDEAN:
            return x / h[..., None]
        if self.kind == T_NORM:
            r = np.abs(x) / h[..., None]
            return np.sign(x) * r ** (self.t - 1.0)
        x2 = x * x
        r4 = np.sqrt(np.sum(x2 * x2, axis=-1))[..., None]
        return (self.lam * x2 * x / r4 + self.mu * x) / h[..., None]

    def grad(self, x) -> np.ndarray:
        """Gradient of ``H``; undefined at the origin."""
        x = _as_vectors(x)
        h = self.value(x)
        if np.any(h == 0):
            raise ValueError("gradient undefined at origin")
        return self._grad_nonzero(x, h)

    def flux(self, x, p: float) -> np.ndarray:
        """``H(x)^(p-1) grad H(x)``, extended by zero at the origin."""
        if not p > 1:
            raise ValueError(f"flux requires p > 1, got p={p}")
        x = _as_vectors(x)
        h = self.value(x)
        nz = h > 0
        safe = np.where(nz, h, 1.0)
        g = self._grad_nonzero(np.where(nz[..., None], x, 1.0), safe)
        out = safe[..., None] ** (p - 1.0) * g
        return np.where(nz[..., None], out, 0.0)

    def dual(self, xi, seed: int = 0) -> np.ndarray:
        """Dual norm ``H0(xi) = sup <x, xi> / H(x)``.

        Closed form for the euclidean and t-norms (conjugate exponent);
        numerical maximisation over the unit sphere for the quartic norm.
        """
        xi = _as_vectors(xi)
        if self.kind == EUCLIDEAN:
            return np.linalg.norm(xi, axis=-1)
        if self.kind == T_NORM:
            return FinslerNorm.t_norm(self.t / (self.t - 1.0)).value(xi)
        return dual_maximizer(self, xi, seed=seed).value


# -- dual norm by projected ascent -------------------------------------------


@dataclass
class DualResult:
    value: np.ndarray
    maximizer: np.ndarray
    certificate: np.ndarray  # tangential gradient norm at the maximiser


def dual_maximizer(norm: FinslerNorm, xi, restarts: int = 32, tol: float = 1e-10,
                   max_iters: int = 100, seed: int = 0) -> DualResult:
    """Maximise ``<x, xi>`` over the unit sphere ``{H(x) = 1}``.

    Each start climbs the strictly concave objective
    ``phi(x) = <x, xi> - H(x)^2 / 2`` by damped Newton steps (Hessian of
    ``H^2 / 2`` by central differences); its maximiser is ``H0(xi)`` times
    the sphere maximiser.  The final point is projected radially onto the
    sphere, so the returned value is a feasible objective value.
    ``restarts`` random starts plus the start ``xi`` run in lock-step.
    """
    xi = _as_vectors(xi)
    batch_shape = xi.shape[:-1]
    n = xi.shape[-1]
    flat = xi.reshape(-1, n)
    m = flat.shape[0]
    k = restarts + 1
    rng = np.random.default_rng(seed)
    starts = np.concatenate([flat[None] + 0.0, rng.standard_normal((restarts, m, n))], axis=0)
    target = np.broadcast_to(flat, (k, m, n)).reshape(-1, n)
    scale = np.linalg.norm(target, axis=1)
    active = scale > 0
    x = starts.reshape(-1, n)
    x[np.linalg.norm(x, axis=1) == 0] = 1.0
    # start on the sphere of radius |xi| / C2, the right order of magnitude
    x = x / norm.value(x)[:, None] * np.where(active, scale, 1.0)[:, None]

    def phi(z, tgt):
        return np.sum(z * tgt, axis=1) - 0.5 * norm.value(z) ** 2

    def ascent_grad(z, tgt):
        return tgt - norm.flux(z, 2.0)

    eye = np.eye(n)
    g = ascent_grad(x, target)
    gnorm = np.linalg.norm(g, axis=1)
    for _ in range(max_iters):
        live = active & (gnorm > tol * np.where(active, scale, 1.0))
        if not np.any(live):
            break
        idx = np.nonzero(live)[0]
        xl, gl, tl = x[idx], g[idx], target[idx]
        hess = hessian_half_square(norm, xl)
        hess = hess + 1e-14 * np.trace(hess, axis1=1, axis2=2)[:, None, None] * eye
        d = _solve_small(hess, gl)
        bad = ~np.all(np.isfinite(d), axis=1) | (np.sum(d * gl, axis=1) <= 0)
        d[bad] = gl[bad]
        f0 = phi(xl, tl)
        a = np.ones(idx.size)
        accepted = np.zeros(idx.size, dtype=bool)
        xnew = xl.copy()
        for _ in range(50):
            todo = np.nonzero(~accepted)[0]
            if todo.size == 0:
                break
            trial = xl[todo] + a[todo, None] * d[todo]
            ok = phi(trial, tl[todo]) >= f0[todo] + 1e-4 * a[todo] * np.sum(d[todo] * gl[todo], axis=1) \
                - 1e-15 * np.abs(f0[todo])
            xnew[todo[ok]] = trial[ok]
            accepted[todo[ok]] = True
            a[todo[~ok]] *= 0.5
        x[idx] = xnew
        g[idx] = ascent_grad(xnew, tl)
        newnorm = np.linalg.norm(g[idx], axis=1)
        # a step that could not improve phi means we sit at roundoff level
        gnorm[idx] = np.where(accepted, newnorm, 0.0)

    hx = norm.value(x)
    xs = x / np.where(hx > 0, hx, 1.0)[:, None]
    obj = np.sum(xs * target, axis=1).reshape(k, m)
    best = np.argmax(obj, axis=0)
    cols = np.arange(m)
    value = np.where(active.reshape(k, m)[0], obj[best, cols], 0.0)
    xbest = xs.reshape(k, m, n)[best, cols]
    cert = (np.linalg.norm(g, axis=1) / np.where(active, scale, 1.0)).reshape(k, m)[best, cols]
    return DualResult(value.reshape(batch_shape), xbest.reshape(batch_shape + (n,)), cert.reshape(batch_shape))


def _solve_small(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched solve of ``a x = b``; closed form for 1x1 and 2x2 systems."""
    n = b.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        if n == 1:
            return b / a[:, 0, :]
        if n == 2:
            det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
            x0 = (a[:, 1, 1] * b[:, 0] - a[:, 0, 1] * b[:, 1]) / det
            x1 = (a[:, 0, 0] * b[:, 1] - a[:, 1, 0] * b[:, 0]) / det
            return np.stack([x0, x1], axis=1)
    return np.linalg.solve(a, b[..., None])[..., 0]


def analytic_dual_maximizer(norm: FinslerNorm, xi) -> np.ndarray:
    """Unit-sphere maximiser of ``<x, xi>`` for the euclidean and t-norms."""
    xi = _as_vectors(xi)
    if norm.kind == QUARTIC:
        raise ValueError("no closed-form maximiser for the quartic norm")
    t = norm.t if norm.kind == T_NORM else 2.0
    conj = t / (t - 1.0)
    x = np.sign(xi) * np.abs(xi) ** (conj - 1.0)
    return x / norm.value(x)[..., None]


# -- norm equivalence constants ----------------------------------------------


def equivalence_constants(norm: FinslerNorm, dim: int) -> tuple[float, float]:
    """Sharp ``(C1, C2)`` with ``C1 |x| <= H(x) <= C2 |x|`` in ``R^dim``.

    Also ``|grad H(x)| <= C2`` for all ``x != 0``.
    """
    if norm.kind == EUCLIDEAN:
        return 1.0, 1.0
    if norm.kind == T_NORM:
        c = float(dim) ** (1.0 / norm.t - 0.5)
        return min(1.0, c), max(1.0, c)
    lo = np.sqrt(norm.lam / np.sqrt(dim) + norm.mu)
    hi = np.sqrt(norm.lam + norm.mu)
    return float(lo), float(hi)


# -- hypothesis checks -------------------------------------------------------


@dataclass
class HypothesisReport:
    h1_pass: bool
    h2_max_violation: float
    h4_min_hessian_eigenvalue: float
    euler_max_rel_error: float
    samples: int
    h0_pass: bool = True
    h2_pass: bool = True
    h4_pass: bool = True
    euler_pass: bool = True
    dual_max_error: float = 0.0
    dual_pass: bool = True
    h4_skipped: int = 0
    C1: float = float("nan")
    C2: float = float("nan")

    @property
    def all_pass(self) -> bool:
        return all((self.h0_pass, self.h1_pass, self.h2_pass, self.h4_pass, self.euler_pass, self.dual_pass))

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["all_pass"] = self.all_pass
        return d


def hessian_half_square(norm: FinslerNorm, x: np.ndarray) -> np.ndarray:
    """Central-difference Hessian of ``H^2 / 2`` (rows of ``x`` are points).

    Differences the analytic gradient ``H grad H`` with relative step
    ``1e-5 (1 + |x|)``.
    """
    x = np.atleast_2d(x)
    n = x.shape[1]
    h = 1e-5 * (1.0 + np.linalg.norm(x, axis=1))
    out = np.empty((x.shape[0], n, n))

    def g(z):
        return norm.flux(z, 2.0)

    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        out[:, :, j] = (g(x + h[:, None] * e) - g(x - h[:, None] * e)) / (2 * h[:, None])
    return 0.5 * (out + np.swapaxes(out, 1, 2))


def _near_hyperplane(norm: FinslerNorm, x: np.ndarray, gap: float = 1e-6) -> np.ndarray:
    # H_t (t != 2) is not C^2 with a nondegenerate Hessian on coordinate hyperplanes
    if norm.kind != T_NORM or norm.t == 2.0:
        return np.zeros(x.shape[0], dtype=bool)
    return np.any(np.abs(x) < gap, axis=1)


def verify_hypotheses(norm: FinslerNorm, samples: int = 1000, seed: int = 0, tol: float = 1e-6,
                      dim: int = 2, points=None) -> HypothesisReport:
    """Check the norm axioms, the Euler identity and ``H0(grad H) = 1`` on random samples.

    Covers nonnegativity, definiteness, absolute homogeneity and positive
    definiteness of the Hessian of ``H^2 / 2``.

    ``points`` overrides the random draw (useful for probing special
    directions such as coordinate axes).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    if points is None:
        x = rng.standard_normal((samples, dim))
    else:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        samples, dim = x.shape
    t = rng.uniform(-3.0, 3.0, size=samples)

    h = norm.value(x)
    h0_pass = bool(np.all(h >= 0))
    nonzero = np.linalg.norm(x, axis=1) > 0
    h1_pass = bool(np.all((h > 0) == nonzero)) and float(norm.value(np.zeros(dim))) == 0.0

    h2_viol = np.abs(norm.value(t[:, None] * x) - np.abs(t) * h) / np.maximum(h, 1e-300)
    h2_max = float(np.max(h2_viol))

    xs = x[nonzero]
    g = norm.grad(xs)
    euler = np.abs(np.sum(xs * g, axis=1) - h[nonzero]) / (1.0 + h[nonzero])
    euler_max = float(np.max(euler)) if euler.size else 0.0

    skip = _near_hyperplane(norm, xs)
    checked = xs[~skip]
    if checked.size:
        eig = np.linalg.eigvalsh(hessian_half_square(norm, checked))
        h4_min = float(np.min(eig[:, 0]))
    else:
        h4_min = float("nan")

    dual_err = np.abs(norm.dual(g, seed=seed) - 1.0)
    dual_max = float(np.max(dual_err)) if dual_err.size else 0.0

    c1, c2 = equivalence_constants(norm, dim)
    return HypothesisReport(
        h1_pass=h1_pass,
        h2_max_violation=h2_max,
        h4_min_hessian_eigenvalue=h4_min,
        euler_max_rel_error=euler_max,
        samples=samples,
        h0_pass=h0_pass,
        h2_pass=h2_max <= tol,
        h4_pass=bool(np.isnan(h4_min) or h4_min > 0),
        euler_pass=euler_max <= max(tol, 1e-10),
        dual_max_error=dual_max,
        dual_pass=dual_max <= tol,
        h4_skipped=int(skip.sum()),
        C1=c1,
        C2=c2,
    )


# -- monotonicity / convexity inequalities -----------------------------------


def monotonicity_gap(norm: FinslerNorm, p: float, x, y) -> tuple:
    """Return ``(lhs, hp, weak_lhs)`` for the flux monotonicity inequalities.

    ``lhs = <flux(x) - flux(y), x - y>``, ``hp = H(x - y)^p`` and
    ``weak_lhs = (H(x)^(p-1) - H(y)^(p-1)) (H(x) - H(y))``.
    """
    x = _as_vectors(x)
    y = _as_vectors(y)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    hx, hy = norm.value(x), norm.value(y)
    lhs = np.sum((norm.flux(x, p) - norm.flux(y, p)) * (x - y), axis=-1)
    hp = norm.value(x - y) ** p
    weak = (hx ** (p - 1) - hy ** (p - 1)) * (hx - hy)
    if lhs.ndim == 0:
        return float(lhs), float(hp), float(weak)
    return lhs, hp, weak


@dataclass
class InequalityReport:
    """Outcome of the algebraic inequality oracles for one ``(norm, p)`` pair."""

    norm: str
    p: float
    pairs: int
    seed: int
    violations: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)

    @property
    def total_violations(self) -> int:
        return int(sum(self.violations.values()))


def inequality_suite(norm: FinslerNorm, p: float, pairs: int = 10_000, seed: int = 0,
                     dim: int = 2, dual_values=None) -> InequalityReport:
    """Run every flux/convexity/duality inequality on ``pairs`` random pairs.

    Empirical constants (the convexity constant of the midpoint inequality,
    the monotonicity and strong-convexity infima) are estimated from the same
    sample and reported alongside the violation counts.
    """
    x, y, xi, t = draw_pairs(pairs, seed, dim)
    c1, c2 = equivalence_constants(norm, dim)
    rel = 1e-10
    v = {}
    const = {"C1": c1, "C2": c2}

    hx, hy = norm.value(x), norm.value(y)
    fx, fy = norm.flux(x, p), norm.flux(y, p)
    abs_x = np.linalg.norm(x, axis=1)

    # Euler identity
    g = norm.grad(x)
    v["euler"] = int(np.sum(np.abs(np.sum(x * g, axis=1) - hx) > rel * (1 + hx)))
    # <flux(x), x> = H^p >= C1^p |x|^p
    hpx = hx**p
    v["flux_pairing"] = int(np.sum(np.abs(np.sum(fx * x, axis=1) - hpx) > rel * (1 + hpx)))
    v["flux_coercive"] = int(np.sum(hpx < (c1 * abs_x) ** p * (1 - 1e-12)))
    # |flux(x)| <= C2^p |x|^(p-1)
    v["flux_bound"] = int(np.sum(np.linalg.norm(fx, axis=1) > c2**p * abs_x ** (p - 1) * (1 + 1e-12)))
    # flux(t x) = |t|^(p-2) t flux(x)
    ftx = norm.flux(t[:, None] * x, p)
    expect = (np.abs(t) ** (p - 2) * t)[:, None] * fx
    v["flux_homogeneity"] = int(np.sum(np.linalg.norm(ftx - expect, axis=1)
                                       > rel * (1 + np.linalg.norm(expect, axis=1))))

    # midpoint convexity of H^2, constant estimated then verified
    hd = norm.value(x - y)
    mid = norm.value(0.5 * (x + y))
    slack = 0.5 * (hx**2 + hy**2) - mid**2
    ratio = slack / hd**2
    v["midpoint_strict"] = int(np.sum(ratio <= 0))
    c_hat = max(1.0, float(np.max(0.5 / np.sqrt(np.maximum(ratio, 1e-300)))))
    const["midpoint_C"] = c_hat
    lhs24 = mid**2 + hd**2 / (4 * c_hat**2)
    v["midpoint"] = int(np.sum(lhs24 > 0.5 * (hx**2 + hy**2) * (1 + 1e-12)))

    # first-order convexity of H^p and its strong form
    resid = hpx - hy**p - p * np.sum(fy * (x - y), axis=1)
    tol5 = 1e-9 * (hpx + hy**p + 1)
    v["first_order_convexity"] = int(np.sum(resid < -tol5))
    if p >= 2:
        inf26 = float(np.min(resid / hd**p))
        const["strong_convexity_inf"] = inf26
        v["strong_convexity"] = int(inf26 <= 0)

    # flux monotonicity: strict, weak (via H values) and quantitative
    lhs, hp, weak = monotonicity_gap(norm, p, x, y)
    tol_l = 1e-9 * (np.abs(np.sum(fx * x, axis=1)) + np.abs(np.sum(fy * y, axis=1))
                    + np.abs(np.sum(fx * y, axis=1)) + np.abs(np.sum(fy * x, axis=1)) + 1e-300)
    v["strict_monotonicity"] = int(np.sum(lhs <= 0))
    v["weak_monotonicity"] = int(np.sum(lhs < weak - tol_l))
    if p >= 2:
        inf211 = float(np.min(lhs / hp))
        const["monotonicity_inf"] = inf211
        v["monotonicity"] = int(inf211 <= 0)
    elif norm.kind == EUCLIDEAN:
        d2 = np.linalg.norm(x - y, axis=1) ** 2
        inf_small = float(np.min(lhs * (abs_x + np.linalg.norm(y, axis=1)) ** (2 - p) / d2))
        const["monotonicity_inf_p_lt_2"] = inf_small
        v["monotonicity"] = int(inf_small <= 0)

    # Cauchy-Schwarz with the dual norm and H0(grad H) = 1
    if dual_values is None:
        dual_values = dual_values_for(norm, pairs, seed, dim)
    h0_xi, h0_grad = dual_values
    v["cauchy_schwarz"] = int(np.sum(np.sum(x * xi, axis=1) > hx * h0_xi + 1e-9))
    v["dual_normalisation"] = int(np.sum(np.abs(h0_grad - 1.0) > 1e-6))

    return InequalityReport(str(norm), p, pairs, seed, v, const)


def draw_pairs(pairs: int, seed: int, dim: int = 2):
    """Seeded ``(x, y, xi, t)`` draws; ``x`` and ``y`` span four decades of scale."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((pairs, dim)) * 10.0 ** rng.uniform(-2, 2, size=(pairs, 1))
    y = rng.standard_normal((pairs, dim)) * 10.0 ** rng.uniform(-2, 2, size=(pairs, 1))
    xi = rng.standard_normal((pairs, dim))
    t = rng.uniform(-3, 3, size=pairs)
    return x, y, xi, t


def dual_values_for(norm: FinslerNorm, pairs: int, seed: int, dim: int = 2):
    """``(H0(xi), H0(grad H(x)))`` for the draws of :func:`draw_pairs`.

    Independent of ``p``, so one call can be shared across several suites.
    """
    x, _, xi, _ = draw_pairs(pairs, seed, dim)
    both = np.concatenate([xi, norm.grad(x)], axis=0)
    d = norm.dual(both, seed=seed)
    return d[:pairs], d[pairs:]
