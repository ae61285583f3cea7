"""End-to-end acceptance checks; each prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly as a script.
"""

import math
import os
import sys
import time

import numpy as np
import pytest

from finslap import cli
from finslap.convex import eigenpair, manufactured_sine, solve_dirichlet, torsion_1d
from finslap.energy import ConvexEnergy
from finslap.grid import build_grid, seminorm_X
from finslap.multiplicity import PerturbedProblem, continuation, mp_constants
from finslap.norms import FinslerNorm, dual_values_for, inequality_suite
from finslap.singular import SingularOptions, SingularProblem, powers, solve_singular

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from oracles import brute_force_minimizer  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

EUC = FinslerNorm.euclidean()
NORMS = {"euclidean": EUC, "t_norm(4)": FinslerNorm.t_norm(4), "quartic(1,1)": FinslerNorm.quartic(1, 1)}
SUPPORTED = [(n, p) for n in NORMS for p in (2.0, 2.5, 3.0)] + [("euclidean", 1.5)]

RESULTS = {}


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    reporter = request.config.pluginmanager.getplugin("terminalreporter")
    write = reporter.write_line if reporter else print
    write("")
    write("acceptance summary")
    for key in sorted(RESULTS):
        write(RESULTS[key])


def record(number, title, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    line = (f"criterion {number}: {'PASS' if ok else 'FAIL'} {title}: {detail} "
            f"[{elapsed:.1f} s, budget {budget:.0f} s]")
    RESULTS[number] = line
    print(line)
    assert ok, line


def test_criterion_1_inequality_suite():
    start = time.perf_counter()
    total = 0
    worst = {}
    for name, norm in NORMS.items():
        duals = dual_values_for(norm, 10_000, 0)
        ps = (1.5, 2.0, 2.5, 3.0) if name == "euclidean" else (2.0, 2.5, 3.0)
        for p in ps:
            rep = inequality_suite(norm, p, pairs=10_000, seed=0, dual_values=duals)
            total += rep.total_violations
            if rep.total_violations:
                worst[f"{name},p={p}"] = {k: v for k, v in rep.violations.items() if v}
    elapsed = time.perf_counter() - start
    record(1, "inequality suite", total == 0, f"{total} violations over 10 (norm, p) pairs x 10^4 samples"
           + (f" {worst}" if worst else ""), elapsed, 10)


def test_criterion_2_convex_exactness():
    start = time.perf_counter()
    g = build_grid(1, [(0, 1)], 128)
    u, _ = solve_dirichlet(g, EUC, 3.0, np.ones(g.n_nodes))
    err_1d = float(np.max(np.abs(u - torsion_1d(3.0, g.coords()[0]))))
    center = float(u[64])
    errs = []
    for res in (16, 32):
        sq = build_grid(2, [(0, 1), (0, 1)], (res, res))
        exact, load = manufactured_sine(sq)
        v, _ = solve_dirichlet(sq, EUC, 2.0, load)
        errs.append(float(np.max(np.abs(v - exact))))
    ratio = errs[0] / errs[1]
    ok = err_1d <= 2e-3 and abs(center - 0.235702) <= 2e-3 and errs[1] <= 0.01 and 3 <= ratio <= 5
    record(2, "convex solver exactness", ok,
           f"p-torsion err {err_1d:.2e} (u(1/2) = {center:.6f}), Laplace err {errs[1]:.2e}, ratio {ratio:.3f}",
           time.perf_counter() - start, 30)


def test_criterion_3_brute_force_oracle():
    start = time.perf_counter()
    g = build_grid(1, [(0, 1)], 4)
    worst_node = worst_energy = 0.0
    for p in (2.0, 3.0):
        ref, ref_energy = brute_force_minimizer(p)
        for name in ("euclidean", "t_norm(4)"):
            u, _ = solve_dirichlet(g, NORMS[name], p, np.ones(g.n_nodes))
            worst_node = max(worst_node, float(np.max(np.abs(u[1:4] - ref))))
            energy = ConvexEnergy(g, NORMS[name], p, np.ones(g.n_nodes)).value(u)
            worst_energy = max(worst_energy, abs(energy - ref_energy))
    record(3, "brute-force oracle", worst_node <= 2e-3 and worst_energy <= 1e-8,
           f"max nodal gap {worst_node:.2e}, max energy gap {worst_energy:.2e}",
           time.perf_counter() - start, 60)


def test_criterion_4_uniqueness_and_comparison():
    start = time.perf_counter()
    worst_unique = 0.0
    for res in (4, 16):
        g = build_grid(2, [(0, 1), (0, 1)], (res, res))
        load = np.ones(g.n_nodes)
        for name, p in SUPPORTED:
            sols = []
            for seed in (1, 2):
                r = np.random.default_rng(seed)
                u0 = g.zero_boundary(0.3 * r.standard_normal(g.n_nodes))
                sols.append(solve_dirichlet(g, NORMS[name], p, load, u0=u0)[0])
            worst_unique = max(worst_unique, float(np.max(np.abs(sols[0] - sols[1]))))
    g = build_grid(2, [(0, 1), (0, 1)], (8, 8))
    worst_cmp = -math.inf
    for seed in range(20):
        r = np.random.default_rng(100 + seed)
        g1 = r.uniform(0, 2, g.n_nodes)
        g2 = g1 + r.uniform(0, 1, g.n_nodes)
        name, p = SUPPORTED[seed % len(SUPPORTED)]
        u1, _ = solve_dirichlet(g, NORMS[name], p, g1)
        u2, _ = solve_dirichlet(g, NORMS[name], p, g2)
        worst_cmp = max(worst_cmp, float(np.max(u1 - u2)))
    record(4, "uniqueness and comparison", worst_unique <= 1e-6 and worst_cmp <= 1e-10,
           f"random-start gap {worst_unique:.2e}, max(u1 - u2) {worst_cmp:.2e} on 20 pairs",
           time.perf_counter() - start, 60)


def test_criterion_5_eigenpair():
    start = time.perf_counter()
    lam_1d, _, _ = eigenpair(build_grid(1, [(0, 1)], 64), EUC, 2.0)
    lams = [eigenpair(build_grid(2, [(0, 1), (0, 1)], (r, r)), EUC, 2.0)[0] for r in (8, 16, 32)]
    t1, t2 = math.pi**2, 2 * math.pi**2
    ok = (abs(lam_1d / t1 - 1) <= 0.01 and abs(lams[-1] / t2 - 1) <= 0.02
          and lam_1d >= t1 and all(v >= t2 for v in lams) and lams[0] >= lams[1] >= lams[2])
    record(5, "eigenpair", ok,
           f"1D {lam_1d:.5f} (+{100 * (lam_1d / t1 - 1):.3f}%), 2D res 8/16/32 "
           + "/".join(f"{v:.4f}" for v in lams) + f" (+{100 * (lams[-1] / t2 - 1):.3f}%)",
           time.perf_counter() - start, 30)


def _mixed(grid):
    x = grid.coords()[0]
    q = np.where(np.minimum(x, 1 - x) < 1 / 3, 0.8, 1.5)
    return SingularProblem(grid, EUC, 2.0, np.ones(grid.n_nodes), q, 0.2)


def test_criterion_6_singular_pipeline():
    start = time.perf_counter()
    g = build_grid(1, [(0, 1)], 64)
    prob = SingularProblem(g, EUC, 2.0, np.ones(g.n_nodes), np.full(g.n_nodes, 0.5), 0.2)
    u, rep = solve_singular(prob)
    d = rep.diagnostics
    levels = d["levels"]
    mins = [r.interior_min for r in levels]
    min_change = abs(mins[-1] - mins[-2]) / mins[-1]
    semis = []
    for res in (32, 64, 128):
        gm = build_grid(1, [(0, 1)], res)
        um, rm = solve_singular(_mixed(gm))
        semis.append(seminorm_X(gm, EUC, 2.0, um) if rm.converged else math.nan)
    spread = max(abs(b - a) / b for a, b in zip(semis, semis[1:]))
    u3, _ = solve_singular(prob, SingularOptions(schedule=powers(3)))
    sched_gap = float(np.max(np.abs(u - u3)))
    ok = (rep.converged and d["monotonicity_worst_drop"] <= 1e-10 and levels[-1].outer_gap <= 1e-6
          and d["weak_residual"] <= 1e-5 and min_change <= 1e-3 and spread <= 0.05 and sched_gap <= 1e-4)
    record(6, "singular pipeline", ok,
           f"{len(levels)} levels to n={d['final_n']:g}, gap {levels[-1].outer_gap:.2e}, "
           f"worst drop {d['monotonicity_worst_drop']:.1e}, residual {d['weak_residual']:.2e}, "
           f"interior-min change {min_change:.1e}, mixed seminorm spread {100 * spread:.2f}%, "
           f"schedule gap {sched_gap:.1e}", time.perf_counter() - start, 300)


def test_criterion_7_multiplicity_pipeline():
    start = time.perf_counter()
    g = build_grid(2, [(0, 1), (0, 1)], (32, 32))
    prob = PerturbedProblem(g, EUC, 1.5, np.full(g.n_nodes, 0.5), 2.0, 1.0)
    eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
    geo = mp_constants(prob, eps[0], seed=0)
    prob = prob.with_lambda(geo.Lambda_hat / 10)
    res = continuation(prob, eps, geometry=geo)
    order = all(pp.I_nu < 0 < geo.rho <= pp.I_zeta + 1e-8 for pp in res.pairs)
    nonneg = all(np.all(pp.nu >= -1e-12) and np.all(pp.zeta >= -1e-12) for pp in res.pairs)
    barrier = all(np.all(np.minimum(pp.nu, pp.zeta) >= res.barrier - 1e-8) for pp in res.pairs)
    d = res.diagnostics
    residual = max(d["limit_residual_nu"], d["limit_residual_zeta"])
    theta = max(d["theta_change"], d["zeta_seminorm_change"])
    ok = (order and nonneg and barrier and theta <= 0.01 and res.distinctness > 0.01
          and residual <= 1e-4 and all(res.checks.values()))
    record(7, "multiplicity pipeline", ok,
           f"Lambda_hat {geo.Lambda_hat:.4f}, rho {geo.rho:.4f}, I_nu {res.final.I_nu:.4f}, "
           f"I_zeta {res.final.I_zeta:.4f}, Theta change {100 * theta:.2e}%, "
           f"distinctness {res.distinctness:.3f}, residual {residual:.1e}, checks {res.checks}",
           time.perf_counter() - start, 600)


def test_criterion_8_determinism(tmp_path):
    start = time.perf_counter()
    runs = [("solve-singular", "singular_1d.ini"), ("solve-multiplicity", "multiplicity_2d.ini")]
    mismatched, compared = [], 0
    for command, config in runs:
        outs = []
        for k in range(2):
            out = tmp_path / f"{command}-{k}"
            code = cli.main([command, "--config", os.path.join(CONFIGS, config), "--out", str(out),
                             "--seed", "0", "--quiet"])
            assert code == 0
            outs.append(out)
        for name in sorted(os.listdir(outs[0])):
            compared += 1
            if (outs[0] / name).read_bytes() != (outs[1] / name).read_bytes():
                mismatched.append(name)
        assert sorted(os.listdir(outs[0])) == sorted(os.listdir(outs[1]))
    record(8, "determinism", not mismatched and compared >= 7,
           f"{compared} output files compared, {len(mismatched)} differ {mismatched or ''}",
           time.perf_counter() - start, 900)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
