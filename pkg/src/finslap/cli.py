"""Command line entry point: ``finslap COMMAND --config FILE``.

Exit codes: 0 success, 1 usage or configuration error, 2 invariant violation
(including failed checks), 3 non-convergence.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from finslap.config import COMMANDS, ConfigError, RunConfig, load_config
from finslap.convex import ConvergenceError, SolveOptions, eigenpair, solve_dirichlet
from finslap.errors import InvariantViolation, UnsupportedRegime
from finslap.grid import atomic_write, field_csv, format_float, seminorm_X
from finslap.norms import dual_values_for, inequality_suite, verify_hypotheses

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_CONVERGENCE = 0, 1, 2, 3


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def report_text(items) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in items)


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


class Run:
    """Collects outputs in memory and writes them once the pipeline is done."""

    def __init__(self, cfg: RunConfig, out_dir: str, quiet: bool = False):
        self.cfg = cfg
        self.out_dir = out_dir
        self.quiet = quiet
        self.files: dict = {}

    def say(self, msg: str) -> None:
        if not self.quiet:
            print(f"[{self.cfg.command}] {msg}")

    def add(self, suffix: str, text: str) -> None:
        self.files[f"{self.cfg.values['prefix']}_{suffix}"] = text

    def flush(self) -> list:
        os.makedirs(self.out_dir, exist_ok=True)
        paths = []
        for name, text in self.files.items():
            path = os.path.join(self.out_dir, name)
            atomic_write(path, text)
            paths.append(path)
        return paths


def _solve_options(v) -> SolveOptions:
    return SolveOptions(tol_grad=v["tol_grad"], max_iters=v["max_iters"], memory=v["memory"], seed=v["seed"])


def _base_report(cfg: RunConfig):
    v = cfg.values
    items = [("command", cfg.command), ("seed", v["seed"]), ("norm", str(cfg.norm))]
    if cfg.grid is not None:
        items += [("dim", cfg.grid.dim), ("resolution", " ".join(map(str, cfg.grid.resolution))),
                  ("p", v["p"])]
    return items


def run_check_norm(run: Run) -> int:
    cfg, v = run.cfg, run.cfg.values
    hyp = verify_hypotheses(cfg.norm, samples=v["samples"], seed=v["seed"], tol=v["tol"], dim=v["dim"])
    run.say(f"hypotheses on {v['samples']} samples: {'pass' if hyp.all_pass else 'FAIL'}")
    items = _base_report(cfg) + list(hyp.as_dict().items())
    ok = hyp.all_pass
    duals = None
    for p in v["check_p"]:
        if not cfg.norm.supports_p(p):
            items.append((f"inequalities_p{p:g}", "skipped (outside the supported regime)"))
            continue
        if duals is None:
            duals = dual_values_for(cfg.norm, v["pairs"], v["seed"], v["dim"])
        rep = inequality_suite(cfg.norm, p, pairs=v["pairs"], seed=v["seed"], dim=v["dim"], dual_values=duals)
        run.say(f"inequalities p={p:g}: {rep.total_violations} violations on {v['pairs']} pairs")
        items.append((f"inequalities_p{p:g}_violations", rep.total_violations))
        for name, count in sorted(rep.violations.items()):
            items.append((f"inequalities_p{p:g}_{name}", count))
        ok &= rep.total_violations == 0
    items.append(("status", "pass" if ok else "fail"))
    run.add("report.txt", report_text(items))
    return EXIT_OK if ok else EXIT_INVARIANT


def run_solve_convex(run: Run) -> int:
    cfg, v = run.cfg, run.cfg.values
    u, rep = solve_dirichlet(cfg.grid, cfg.norm, v["p"], v["g"], _solve_options(v))
    run.say(f"converged in {rep.iterations} iterations, grad {rep.final_grad_norm:.3e}")
    run.add("field.csv", field_csv(cfg.grid, u))
    run.add("log.csv", csv_text(["iter", "energy", "grad_norm"], rep.log_rows()))
    items = _base_report(cfg) + [
        ("iterations", rep.iterations), ("final_grad_norm", rep.final_grad_norm),
        ("energy", rep.energy_history[-1]), ("linf", float(np.max(np.abs(u)))),
        ("positivity_min", rep.positivity_min), ("linf_bound_check", rep.linf_bound_check),
        ("seminorm", seminorm_X(cfg.grid, cfg.norm, v["p"], u)),
    ]
    run.add("report.txt", report_text(items))
    return EXIT_OK


def run_eigen(run: Run) -> int:
    cfg, v = run.cfg, run.cfg.values
    lam, e1, rep = eigenpair(cfg.grid, cfg.norm, v["p"], _solve_options(v))
    run.say(f"lambda1 = {lam:.10g} after {rep.iterations} iterations")
    run.add("field.csv", field_csv(cfg.grid, e1))
    run.add("log.csv", csv_text(["iter", "energy", "grad_norm"], rep.log_rows()))
    items = _base_report(cfg) + [
        ("lambda1", lam), ("iterations", rep.iterations), ("residual", rep.diagnostics["residual"]),
        ("e1_min", float(np.min(e1))), ("e1_max", float(np.max(e1))),
    ]
    run.add("report.txt", report_text(items))
    return EXIT_OK


def run_solve_singular(run: Run) -> int:
    from finslap.singular import SingularOptions, SingularProblem, powers, solve_singular

    cfg, v = run.cfg, run.cfg.values
    prob = SingularProblem(cfg.grid, cfg.norm, v["p"], v["f"], v["q"], v["delta"])
    sched = v["n_schedule"]
    if isinstance(sched, tuple):
        sched = powers(sched[1])
    inner = _solve_options(v).with_(tol_grad=min(v["tol_grad"], 1e-12))
    opts = SingularOptions(tol_outer=v["tol_outer"], tol_fp=v["tol_fp"], max_fp_iters=v["max_fp_iters"],
                           schedule=sched, margin=v["margin"], inner=inner)
    u, rep = solve_singular(prob, opts)
    d = rep.diagnostics
    levels = d["levels"]
    for rec in levels:
        run.say(f"n={rec.n:g} inner={rec.inner_iters} gap={rec.outer_gap:.3e} "
                f"min={rec.interior_min:.6g}")
    run.add("field.csv", field_csv(cfg.grid, u))
    run.add("log.csv", csv_text(["n", "inner_iters", "outer_gap", "interior_min", "seminorm"],
                                [(r.n, r.inner_iters, r.outer_gap, r.interior_min, r.seminorm)
                                 for r in levels]))
    converged = rep.converged
    items = _base_report(cfg) + [
        ("q_max", prob.q_max), ("delta", v["delta"]), ("levels", len(levels)), ("final_n", d["final_n"]),
        ("outer_gap", rep.final_grad_norm), ("monotonicity_worst_drop", d["monotonicity_worst_drop"]),
        ("monotonicity_ok", True), ("weak_residual", d["weak_residual"]), ("margin", d["margin"]),
        ("interior_min", d["interior_min"]), ("positivity_min", rep.positivity_min),
        ("seminorm", levels[-1].seminorm), ("status", "converged" if converged else "schedule-exhausted"),
    ]
    run.add("report.txt", report_text(items))
    return EXIT_OK if converged else EXIT_CONVERGENCE


def run_solve_multiplicity(run: Run) -> int:
    from finslap.multiplicity import CriticalOptions, PerturbedProblem, continuation, mp_constants

    cfg, v = run.cfg, run.cfg.values
    eps = v["eps_schedule"]
    prob = PerturbedProblem(cfg.grid, cfg.norm, v["p"], v["q"], v["r"], v["lambda"] or 1.0)
    geo = mp_constants(prob, eps[0], k=v["k"], probe_count=v["probe_count"], seed=v["seed"])
    lam = v["lambda"] if v["lambda"] is not None else v["lambda_fraction"] * geo.Lambda_hat
    prob = prob.with_lambda(lam)
    run.say(f"geometry: Lambda_hat={geo.Lambda_hat:.6g} R={geo.R:.6g} rho={geo.rho:.6g} "
            f"T={geo.T:.6g}; lambda={lam:.6g}")
    opts = CriticalOptions(tol_grad=min(v["tol_grad"], 1e-10), max_iters=v["max_iters"], memory=v["memory"],
                           segments=v["segments"], max_deform_iters=v["max_deform_iters"], tol_mp=v["tol_mp"])
    res = continuation(prob, eps, opts, geometry=geo, log=run.say)
    fin = res.final
    run.add("nu_field.csv", field_csv(cfg.grid, fin.nu))
    run.add("zeta_field.csv", field_csv(cfg.grid, fin.zeta))
    run.add("log.csv", csv_text(["eps", "I_nu", "I_zeta", "rho", "seminorm_zeta", "distinctness"],
                                [(pp.epsilon, pp.I_nu, pp.I_zeta, geo.rho, pp.seminorm_zeta, pp.distinctness)
                                 for pp in res.pairs]))
    items = _base_report(cfg) + [("lambda", lam), ("r", v["r"])]
    items += [(f"geometry_{k}", val) for k, val in geo.as_dict().items()]
    items += [(f"check_{k}", val) for k, val in res.checks.items()]
    items += sorted(res.diagnostics.items())
    ok = all(res.checks.values())
    items.append(("status", "pass" if ok else "fail"))
    run.add("report.txt", report_text(items))
    return EXIT_OK if ok else EXIT_INVARIANT


PIPELINES = {
    "check-norm": run_check_norm,
    "solve-convex": run_solve_convex,
    "eigen": run_eigen,
    "solve-singular": run_solve_singular,
    "solve-multiplicity": run_solve_multiplicity,
}


def run_command(cfg: RunConfig, out_dir: str | None = None, quiet: bool = False) -> int:
    """Execute the pipeline for ``cfg`` and write its outputs; returns the exit code."""
    run = Run(cfg, out_dir or cfg.values.get("directory") or ".", quiet)
    try:
        code = PIPELINES[cfg.command](run)
    except (ConfigError, UnsupportedRegime, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    for path in run.flush():
        run.say(f"wrote {path}")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finslap", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to the run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides [output] directory)")
    parser.add_argument("--seed", type=int, default=None, help="random seed (overrides [solver] seed)")
    parser.add_argument("--quiet", action="store_true", help="suppress per-phase summaries")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.values["seed"] = args.seed
    return run_command(cfg, args.out, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
