import math

import numpy as np
import pytest

from finslap.convex import (
    ConvergenceError,
    SolveOptions,
    eigen_residual,
    eigenpair,
    manufactured_sine,
    rayleigh_quotient,
    solve_dirichlet,
    torsion_1d,
)
from finslap.energy import ConvexEnergy
from finslap.errors import UnsupportedRegime
from finslap.grid import build_grid
from finslap.norms import FinslerNorm

from conftest import NORMS, random_field
from oracles import brute_force_minimizer

EUC = FinslerNorm.euclidean()
SUPPORTED = [(n, p) for n in NORMS for p in (2.0, 2.5, 3.0)] + [("euclidean", 1.5)]


def line(res, a=0.0, b=1.0):
    return build_grid(1, [(a, b)], res)


def square(res, side=1.0):
    return build_grid(2, [(0, side), (0, side)], (res, res))


def test_res2_torsion_value():
    u, rep = solve_dirichlet(line(2), EUC, 2.0, np.ones(3))
    assert u[1] == pytest.approx(1 / 8, abs=1e-12)
    assert rep.converged


def test_p3_torsion_profile():
    g = line(128)
    u, rep = solve_dirichlet(g, EUC, 3.0, np.ones(g.n_nodes))
    assert u[64] == pytest.approx((2 / 3) * 0.5 ** 1.5, abs=2e-3)
    exact = (2 / 3) * (0.5 ** 1.5 - np.abs(g.coords()[0] - 0.5) ** 1.5)
    np.testing.assert_allclose(torsion_1d(3.0, g.coords()[0]), exact, atol=1e-15)
    assert np.max(np.abs(u - exact)) <= 2e-3


@pytest.mark.parametrize("p", [1.5, 2.5, 4.0])
def test_torsion_other_exponents(p):
    g = line(128)
    u, _ = solve_dirichlet(g, EUC, p, np.ones(g.n_nodes))
    assert np.max(np.abs(u - torsion_1d(p, g.coords()[0]))) <= 5e-3


def test_manufactured_laplace_convergence():
    errs = []
    for res in (16, 32):
        g = square(res)
        exact, load = manufactured_sine(g)
        u, _ = solve_dirichlet(g, EUC, 2.0, load)
        errs.append(np.max(np.abs(u - exact)))
    assert errs[1] <= 0.01
    assert 3 <= errs[0] / errs[1] <= 5


def test_unsupported_regime():
    g = line(8)
    with pytest.raises(UnsupportedRegime, match="unsupported regime"):
        solve_dirichlet(g, NORMS["t4"], 1.8, np.ones(g.n_nodes))
    with pytest.raises(UnsupportedRegime):
        eigenpair(g, NORMS["quartic"], 1.5)


def test_non_convergence_carries_report():
    g = square(8)
    with pytest.raises(ConvergenceError) as info:
        solve_dirichlet(g, NORMS["quartic"], 3.0, np.ones(g.n_nodes), SolveOptions(max_iters=2))
    assert info.value.report is not None and info.value.report.iterations == 2
    assert info.value.state is not None


@pytest.mark.parametrize("name, p", SUPPORTED)
def test_descent_positivity_and_bounds(name, p):
    g = square(12)
    u, rep = solve_dirichlet(g, NORMS[name], p, np.ones(g.n_nodes))
    assert np.all(np.diff(rep.energy_history) <= 0)
    assert rep.final_grad_norm <= 1e-9
    assert np.min(u) >= -1e-12 and np.all(u[g.interior] > 0)
    assert rep.positivity_min > 0 and rep.linf_bound_check
    assert math.isfinite(rep.diagnostics["linf_torsion_ratio"])


@pytest.mark.parametrize("name, p", SUPPORTED)
def test_uniqueness_from_random_starts(name, p):
    g = square(16)
    load = 1.0 + np.abs(random_field(g, 11))
    sols = [solve_dirichlet(g, NORMS[name], p, load, u0=random_field(g, seed, scale=0.3))[0]
            for seed in (1, 2)]
    assert np.max(np.abs(sols[0] - sols[1])) <= 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_comparison_principle(seed):
    g = square(8)
    r = np.random.default_rng(seed)
    g1 = r.uniform(0, 2, g.n_nodes)
    g2 = g1 + r.uniform(0, 1, g.n_nodes)
    name, p = SUPPORTED[seed % len(SUPPORTED)]
    u1, _ = solve_dirichlet(g, NORMS[name], p, g1)
    u2, _ = solve_dirichlet(g, NORMS[name], p, g2)
    assert np.all(u1 <= u2 + 1e-10)


@pytest.mark.parametrize("p", [2.0, 3.0])
@pytest.mark.parametrize("name", ["euclidean", "t4"])
def test_brute_force_oracle(p, name):
    g = line(4)
    u, _ = solve_dirichlet(g, NORMS[name], p, np.ones(g.n_nodes))
    ref, ref_energy = brute_force_minimizer(p)
    assert np.max(np.abs(u[1:4] - ref)) <= 2e-3
    energy = ConvexEnergy(g, NORMS[name], p, np.ones(g.n_nodes)).value(u)
    assert abs(energy - ref_energy) <= 1e-8


def test_eigen_1d():
    g = line(64)
    lam, e1, rep = eigenpair(g, EUC, 2.0)
    assert lam == pytest.approx(math.pi**2, rel=0.01)
    assert lam >= math.pi**2
    assert np.max(np.abs(e1 - np.sin(np.pi * g.coords()[0]))) <= 1e-2
    assert np.max(e1) == 1.0 and np.all(e1[g.interior] > 0)
    assert rep.diagnostics["residual"] <= 1e-6
    assert np.max(np.abs(eigen_residual(g, EUC, 2.0, lam, e1))) <= 1e-6
    assert rayleigh_quotient(g, EUC, 2.0, e1) == pytest.approx(lam, rel=1e-12)


def test_eigen_2d_from_above():
    lams = [eigenpair(square(res), EUC, 2.0)[0] for res in (8, 16, 32)]
    target = 2 * math.pi**2
    assert lams[-1] == pytest.approx(target, rel=0.02)
    assert all(lam >= target for lam in lams)
    assert lams[0] >= lams[1] >= lams[2]


def test_eigen_p_laplacian_closed_form():
    # first Dirichlet eigenvalue of the 1D p-Laplacian on (0, 1): (p - 1) (2 pi / (p sin(pi / p)))^p
    p = 1.5
    exact = (p - 1) * (2 * math.pi / (p * math.sin(math.pi / p))) ** p
    lam, _, _ = eigenpair(line(128), EUC, p)
    assert lam == pytest.approx(exact, rel=1e-2)


@pytest.mark.parametrize("p, name", [(2.0, "euclidean"), (3.0, "quartic"), (2.5, "t4")])
def test_eigen_dilation_scaling(p, name):
    g = square(8)
    lam, _, _ = eigenpair(g, NORMS[name], p)
    lam2, _, _ = eigenpair(g.scaled(2.0), NORMS[name], p)
    assert lam2 == pytest.approx(lam / 2**p, rel=1e-6)
