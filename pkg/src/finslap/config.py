"""Run configuration: a small INI-like format with closed-form field expressions.

::

    # comments start with '#'
    [grid]
    dim = 1
    extents = 0 1
    resolution = 64

    [norm]
    kind = euclidean

    [problem]
    p = 2
    f = 1
    q = 0.5
    delta = 0.2

Field values (``f``, ``g``, ``q``) are expressions in ``x`` and ``y`` using
``+ - * / ^``, ``sin cos exp abs min max`` and the constant ``pi``, or
``csv:PATH`` to replay an exported field.
"""

from __future__ import annotations

import ast
import math
import os
from dataclasses import dataclass, field

import numpy as np

from finslap.grid import Grid, build_grid, read_field_csv
from finslap.norms import EUCLIDEAN, QUARTIC, T_NORM, FinslerNorm

COMMANDS = ("check-norm", "solve-convex", "eigen", "solve-singular", "solve-multiplicity")

KEYS = {
    "grid": {"dim", "extents", "resolution"},
    "norm": {"kind", "t", "lambda", "mu"},
    "problem": {"p", "f", "g", "q", "lambda", "lambda_fraction", "r", "delta"},
    "solver": {"seed", "tol_grad", "max_iters", "memory", "tol_outer", "tol_fp", "max_fp_iters",
               "n_schedule", "eps_schedule", "k", "probe_count", "segments", "max_deform_iters",
               "tol_mp", "margin"},
    "output": {"directory", "prefix"},
    "check": {"samples", "tol", "pairs", "p", "dim"},
}

REGIME_NOTE = "Remark 3.3 / Theorem 1.4 regime"


class ConfigError(ValueError):
    pass


@dataclass
class Entry:
    value: str
    line: int


@dataclass
class RunConfig:
    command: str
    sections: dict
    source: str = "<config>"
    base_dir: str = "."
    grid: Grid | None = None
    norm: FinslerNorm | None = None
    values: dict = field(default_factory=dict)

    def entry(self, section, key):
        return self.sections.get(section, {}).get(key)

    def get(self, section, key, default=None):
        e = self.entry(section, key)
        return default if e is None else e.value


# -- text format ---------------------------------------------------------------


def parse_sections(text: str, source: str = "<config>") -> dict:
    sections: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {line!r}")
            current = line[1:-1].strip().lower()
            if current not in KEYS:
                raise ConfigError(f"{where}: unknown section [{current}]")
            if current in sections:
                raise ConfigError(f"{where}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        if current is None:
            raise ConfigError(f"{where}: key outside of any section")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in KEYS[current]:
            raise ConfigError(f"{where}: unknown key '{key}' in [{current}]")
        if key in sections[current]:
            raise ConfigError(f"{where}: duplicate key '{key}' in [{current}]")
        if not value:
            raise ConfigError(f"{where}: empty value for '{key}' in [{current}]")
        sections[current][key] = Entry(value, lineno)
    return sections


# -- expressions ---------------------------------------------------------------

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs,
}
_BINOPS = {
    ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
    ast.Div: np.divide, ast.Pow: np.power,
}


def compile_expression(text: str):
    """Parse ``text`` into a function of the coordinate columns; raises ``ValueError`` on bad input."""
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {text!r}") from exc

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return check(node.left) and check(node.right)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            return check(node.operand)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return True
        if isinstance(node, ast.Name) and node.id in ("x", "y", "pi"):
            return True
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            name = node.func.id
            if name in _FUNCS and len(node.args) == 1:
                return check(node.args[0])
            if name in ("min", "max") and len(node.args) >= 2:
                return all(check(a) for a in node.args)
        raise ValueError(f"unsupported construct in expression {text!r}: {ast.dump(node)[:60]}")

    check(tree)

    def evaluate(node, env):
        if isinstance(node, ast.Expression):
            return evaluate(node.body, env)
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](evaluate(node.left, env), evaluate(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = evaluate(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        args = [evaluate(a, env) for a in node.args]
        name = node.func.id
        if name == "min":
            return np.minimum.reduce(np.broadcast_arrays(*args))
        if name == "max":
            return np.maximum.reduce(np.broadcast_arrays(*args))
        return _FUNCS[name](args[0])

    def fn(x, y=None):
        env = {"x": x, "y": np.zeros_like(x) if y is None else y, "pi": math.pi}
        with np.errstate(all="ignore"):
            out = evaluate(tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(x)).copy()

    return fn


def evaluate_field(text: str, grid: Grid, base_dir: str = ".") -> np.ndarray:
    if text.startswith("csv:"):
        path = text[4:].strip()
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return read_field_csv(grid, path)
    fn = compile_expression(text)
    if grid.dim == 1:
        uses_y = "y" in {n.id for n in ast.walk(ast.parse(text.replace("^", "**"), mode="eval"))
                         if isinstance(n, ast.Name)}
        if uses_y:
            raise ValueError("expression uses y on a 1D grid")
    values = fn(*grid.coords())
    if not np.all(np.isfinite(values)):
        raise ValueError(f"expression {text!r} is not finite at every node")
    return values


# -- validation ----------------------------------------------------------------


def _fail(cfg: RunConfig, section: str, key: str | None, rule: str):
    e = cfg.entry(section, key) if key else None
    where = f"{cfg.source}:{e.line}" if e else cfg.source
    name = f"[{section}] {key}" if key else f"[{section}]"
    raise ConfigError(f"{where}: {name}: {rule}")


def _number(cfg, section, key, default=None, kind=float, required=False):
    e = cfg.entry(section, key)
    if e is None:
        if required:
            _fail(cfg, section, None, f"missing required key '{key}'")
        return default
    try:
        v = kind(e.value) if kind is not int else int(e.value)
    except ValueError:
        _fail(cfg, section, key, f"expected a {kind.__name__}, got {e.value!r}")
    if kind is float and not math.isfinite(v):
        _fail(cfg, section, key, "must be finite")
    return v


def _number_list(cfg, section, key):
    e = cfg.entry(section, key)
    if e is None:
        return None
    try:
        return [float(s) for s in e.value.replace(",", " ").split()]
    except ValueError:
        _fail(cfg, section, key, f"expected numbers, got {e.value!r}")


def _field(cfg, section, key, default=None, required=False):
    e = cfg.entry(section, key)
    if e is None:
        if required:
            _fail(cfg, section, None, f"missing required key '{key}'")
        if default is None:
            return None
        return evaluate_field(default, cfg.grid)
    try:
        return evaluate_field(e.value, cfg.grid, cfg.base_dir)
    except (ValueError, OSError) as exc:
        _fail(cfg, section, key, str(exc))


def _build_grid(cfg):
    if "grid" not in cfg.sections:
        _fail(cfg, "grid", None, "section is required")
    dim = _number(cfg, "grid", "dim", kind=int, required=True)
    if dim not in (1, 2):
        _fail(cfg, "grid", "dim", "must be 1 or 2")
    ext = _number_list(cfg, "grid", "extents") or [0.0, 1.0] * dim
    if len(ext) != 2 * dim:
        _fail(cfg, "grid", "extents", f"needs {2 * dim} numbers (a b per axis)")
    res = [int(v) for v in (_number_list(cfg, "grid", "resolution") or [])]
    if len(res) == 1:
        res = res * dim
    if len(res) != dim:
        _fail(cfg, "grid", "resolution", f"needs 1 or {dim} integers")
    try:
        return build_grid(dim, [(ext[2 * i], ext[2 * i + 1]) for i in range(dim)], res)
    except ValueError as exc:
        _fail(cfg, "grid", None, str(exc))


def _build_norm(cfg):
    kind = cfg.get("norm", "kind", EUCLIDEAN).lower()
    try:
        if kind == EUCLIDEAN:
            return FinslerNorm.euclidean()
        if kind == T_NORM:
            return FinslerNorm.t_norm(_number(cfg, "norm", "t", required=True))
        if kind == QUARTIC:
            return FinslerNorm.quartic(_number(cfg, "norm", "lambda", 1.0), _number(cfg, "norm", "mu", 1.0))
    except ValueError as exc:
        _fail(cfg, "norm", None, str(exc))
    _fail(cfg, "norm", "kind", f"unknown norm kind {kind!r} (euclidean, t_norm, quartic)")


def _check_regime(cfg, p):
    if not p > 1:
        _fail(cfg, "problem", "p", "must exceed 1")
    if not cfg.norm.supports_p(p):
        _fail(cfg, "problem", "p",
              f"p={p:g} < 2 with norm {cfg.norm} is outside the {REGIME_NOTE} "
              "(p < 2 needs the euclidean norm or t_norm(p))")


def parse_config(text: str, command: str, source: str = "<config>", base_dir: str = ".") -> RunConfig:
    """Parse and validate a configuration for ``command``; raises :class:`ConfigError`."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    cfg = RunConfig(command, parse_sections(text, source), source, base_dir)
    v = cfg.values
    v["seed"] = _number(cfg, "solver", "seed", 0, int)
    v["prefix"] = cfg.get("output", "prefix", command.replace("-", "_"))
    if not v["prefix"].replace("_", "").replace("-", "").isalnum():
        _fail(cfg, "output", "prefix", "must be alphanumeric (with - or _)")
    v["directory"] = cfg.get("output", "directory")
    cfg.norm = _build_norm(cfg)
    if command == "check-norm":
        v["samples"] = _number(cfg, "check", "samples", 1000, int)
        v["pairs"] = _number(cfg, "check", "pairs", 10000, int)
        v["tol"] = _number(cfg, "check", "tol", 1e-6)
        v["check_p"] = _number_list(cfg, "check", "p") or [2.0, 2.5, 3.0]
        v["dim"] = _number(cfg, "check", "dim", 2, int)
        if v["samples"] < 1 or v["pairs"] < 1:
            _fail(cfg, "check", None, "samples and pairs must be positive")
        if v["dim"] < 1:
            _fail(cfg, "check", "dim", "must be positive")
        for p in v["check_p"]:
            if not p > 1:
                _fail(cfg, "check", "p", "every p must exceed 1")
        return cfg
    cfg.grid = _build_grid(cfg)
    p = _number(cfg, "problem", "p", required=True)
    _check_regime(cfg, p)
    v["p"] = p
    v["tol_grad"] = _number(cfg, "solver", "tol_grad", 1e-9)
    v["max_iters"] = _number(cfg, "solver", "max_iters", 10000, int)
    v["memory"] = _number(cfg, "solver", "memory", 10, int)
    if not v["tol_grad"] > 0 or v["max_iters"] < 1 or v["memory"] < 1:
        _fail(cfg, "solver", None, "tol_grad must be positive; max_iters and memory at least 1")
    if command == "solve-convex":
        key = "g" if cfg.entry("problem", "g") else "f"
        v["g"] = _field(cfg, "problem", key, default="1")
    elif command == "solve-singular":
        _singular(cfg)
    elif command == "solve-multiplicity":
        _multiplicity(cfg)
    return cfg


def _singular(cfg):
    v = cfg.values
    grid = cfg.grid
    f = _field(cfg, "problem", "f", required=True)
    q = _field(cfg, "problem", "q", required=True)
    delta = _number(cfg, "problem", "delta", 0.1)
    if not delta > 0:
        _fail(cfg, "problem", "delta", "must be positive")
    if np.any(f < 0) or not np.any(f[grid.interior] > 0):
        _fail(cfg, "problem", "f", "must be nonnegative and not identically zero")
    if np.any(q <= 0):
        _fail(cfg, "problem", "q", "must be positive at every node")
    strip = grid.strip_mask(delta)
    if np.any(q[strip] > 1):
        _fail(cfg, "problem", "q",
              f"exceeds 1 within distance delta={delta:g} of the boundary (max {float(np.max(q[strip])):g}); "
              "the Theorem 1.1(b) hypothesis needs q <= 1 on the boundary strip")
    v.update(f=f, q=q, delta=delta)
    v["tol_outer"] = _number(cfg, "solver", "tol_outer", 1e-6)
    v["tol_fp"] = _number(cfg, "solver", "tol_fp", 1e-8)
    v["max_fp_iters"] = _number(cfg, "solver", "max_fp_iters", 200, int)
    v["margin"] = _number(cfg, "solver", "margin", None)
    if not (v["tol_outer"] > 0 and v["tol_fp"] > 0) or v["tol_fp"] >= v["tol_outer"]:
        _fail(cfg, "solver", None, "need 0 < tol_fp < tol_outer")
    sched = cfg.get("solver", "n_schedule", "doubling").strip().lower()
    if sched == "doubling":
        v["n_schedule"] = None
    elif sched.startswith("powers:"):
        try:
            base = float(sched.split(":", 1)[1])
        except ValueError:
            _fail(cfg, "solver", "n_schedule", "powers:B needs a number B > 1")
        if not base > 1:
            _fail(cfg, "solver", "n_schedule", "powers:B needs B > 1")
        v["n_schedule"] = ("powers", base)
    else:
        levels = _number_list(cfg, "solver", "n_schedule")
        if not levels or any(n < 1 for n in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
            _fail(cfg, "solver", "n_schedule", "levels must be >= 1 and strictly increasing")
        v["n_schedule"] = levels


def _multiplicity(cfg):
    from finslap.multiplicity import check_growth
    from finslap.errors import UnsupportedRegime

    v = cfg.values
    q = _field(cfg, "problem", "q", required=True)
    if np.any(q <= 0) or np.any(q > 1 - 1e-6):
        _fail(cfg, "problem", "q", "needs 0 < q < 1 at every node")
    r = _number(cfg, "problem", "r", required=True)
    try:
        check_growth(cfg.norm, v["p"], r, cfg.grid.dim)
    except UnsupportedRegime as exc:
        _fail(cfg, "problem", "r", str(exc))
    lam = cfg.get("problem", "lambda", "auto").strip().lower()
    if lam == "auto":
        v["lambda"] = None
        v["lambda_fraction"] = _number(cfg, "problem", "lambda_fraction", 0.1)
        if not v["lambda_fraction"] > 0:
            _fail(cfg, "problem", "lambda_fraction", "must be positive")
    else:
        v["lambda"] = _number(cfg, "problem", "lambda")
        if not v["lambda"] > 0:
            _fail(cfg, "problem", "lambda", "must be positive or 'auto'")
    eps = _number_list(cfg, "solver", "eps_schedule") or [10.0**-k for k in range(1, 6)]
    if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        _fail(cfg, "solver", "eps_schedule", "must be positive and strictly decreasing")
    v.update(q=q, r=r, eps_schedule=eps)
    v["k"] = _number(cfg, "solver", "k", 0.5)
    if not 0 < v["k"] < 1:
        _fail(cfg, "solver", "k", "must lie in (0, 1)")
    v["probe_count"] = _number(cfg, "solver", "probe_count", 16, int)
    if v["probe_count"] < 8:
        _fail(cfg, "solver", "probe_count", "must be at least 8")
    v["segments"] = _number(cfg, "solver", "segments", 21, int)
    if v["segments"] < 3:
        _fail(cfg, "solver", "segments", "must be at least 3")
    v["max_deform_iters"] = _number(cfg, "solver", "max_deform_iters", 200, int)
    v["tol_mp"] = _number(cfg, "solver", "tol_mp", 1e-5)


def load_config(path: str, command: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config(text, command, source=path, base_dir=os.path.dirname(os.path.abspath(path)))
