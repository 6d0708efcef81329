"""Command-line driver.

Usage::

    lapmm solve-portfolio  --config run.json --out results/ [--workers 4]
    lapmm solve-covariance --config run.json --out results/
    lapmm reg-path         --config run.json --out results/
    lapmm validate-graph   --config run.json --out results/

The config is a JSON object. ``instance`` is either an inline object or the
path of a JSON file holding one; relative paths resolve against the config's
directory. Exit status is 0 when every solve converged, 2 when one hit
``max_iter`` and 1 on any error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import core, covest, portfolio
from .errors import ConfigParse, InstanceBuild, LapMMError
from .lapgraph import laplacian_from_edges, read_edge_file, validate
from .majorize import diagonal_majorizer

COMMANDS = ("solve-portfolio", "solve-covariance", "reg-path", "validate-graph")

# tolerance defaults per command: (eps_abs, eps_rel)
_DEFAULT_EPS = {
    "solve-portfolio": (1e-6, 0.0),
    "solve-covariance": (1e-5, 1e-3),
    "reg-path": (1e-5, 1e-3),
    "validate-graph": (1e-6, 0.0),
}

EXIT_OK, EXIT_ERROR, EXIT_MAXITER = 0, 1, 2


@dataclass
class RunConfig:
    command: str
    instance: dict = field(default_factory=dict)
    eps_abs: float = 1e-6
    eps_rel: float = 0.0
    max_iter: int = 1000
    workers: int = 1
    seed: int = 0
    out: Path = Path(".")
    record_timing: bool = True
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigParse(f"unknown command {self.command!r}")
        if not self.eps_abs > 0:
            raise ConfigParse(f"eps_abs must be positive, got {self.eps_abs}")
        if self.eps_rel < 0:
            raise ConfigParse(f"eps_rel must be nonnegative, got {self.eps_rel}")
        if self.workers < 1:
            raise ConfigParse(f"workers must be at least 1, got {self.workers}")
        if self.max_iter < 1:
            raise ConfigParse(f"max_iter must be at least 1, got {self.max_iter}")
        if not 0 <= self.seed < 2**64:
            raise ConfigParse("seed must be a 64-bit unsigned integer")

    def solve_options(self):
        return core.SolveOptions(self.eps_abs, self.eps_rel, self.max_iter, self.workers)


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigParse(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def load_config(command, path=None, out=None, workers=None):
    raw = {} if path is None else _load_json(path)
    if not isinstance(raw, dict):
        raise ConfigParse("config must be a JSON object")
    base = Path(path).parent if path is not None else Path(".")
    if raw.get("command", command) != command:
        raise ConfigParse(f"config is for {raw['command']!r}, not {command!r}")
    inst = raw.get("instance", {})
    if isinstance(inst, str):
        inst = _load_json(base / inst)
    if not isinstance(inst, dict):
        raise ConfigParse("instance must be an object or a path to one")
    eps_abs, eps_rel = _DEFAULT_EPS[command]
    known = {"command", "instance", "eps_abs", "eps_rel", "max_iter", "workers", "seed", "record_timing"}
    extra = {k: v for k, v in raw.items() if k not in known}
    if "graph" in extra:
        extra["graph"] = str(base / extra["graph"])
    try:
        return RunConfig(
            command=command,
            instance=inst,
            eps_abs=float(raw.get("eps_abs", eps_abs)),
            eps_rel=float(raw.get("eps_rel", eps_rel)),
            max_iter=int(raw.get("max_iter", 1000)),
            workers=int(workers if workers is not None else raw.get("workers", 1)),
            seed=int(raw.get("seed", 0)),
            out=Path(out) if out is not None else Path("."),
            record_timing=bool(raw.get("record_timing", True)),
            extra=extra,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigParse):
            raise
        raise ConfigParse(str(exc)) from exc


# -- instance construction ------------------------------------------------------


def _build(fn, spec, allowed, **fixed):
    unknown = set(spec) - set(allowed)
    if unknown:
        raise InstanceBuild(f"unknown instance keys: {sorted(unknown)}")
    try:
        return fn(**fixed, **spec)
    except LapMMError as exc:
        raise InstanceBuild(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise InstanceBuild(str(exc)) from exc


def build_portfolio(cfg):
    spec = dict(cfg.instance)
    if "factors" in spec:
        if "r_factors" in spec:
            raise InstanceBuild("give either 'factors' or 'r_factors', not both")
        spec["r_factors"] = spec.pop("factors")
    seed = spec.pop("seed", cfg.seed)
    spec = {"n": 50, "T": 10, "r_factors": 5, **spec}
    return _build(portfolio.generate_instance, spec, ("n", "T", "r_factors", "gamma", "s_scale"), seed=seed)


def build_covariance(cfg):
    spec = dict(cfg.instance)
    seed = spec.pop("seed", cfg.seed)
    spec = {"rows": 5, "cols": 5, "d": 8, "samples": 20, **spec}
    allowed = ("rows", "cols", "d", "samples", "kappa", "lam")
    return _build(covest.generate_instance, spec, allowed, seed=seed)


def lambda_grid(cfg):
    grid = cfg.extra.get("lambdas", {"start": -5, "stop": 4, "num": 20})
    try:
        if isinstance(grid, dict):
            lams = np.logspace(float(grid["start"]), float(grid["stop"]), int(grid["num"]))
        else:
            lams = np.asarray(grid, dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigParse(f"lambdas: {exc}") from exc
    if lams.ndim != 1 or lams.size == 0 or np.any(lams < 0) or np.any(np.diff(lams) < 0):
        raise ConfigParse("lambdas must be a nonempty ascending list of nonnegative values")
    return lams


# -- writers --------------------------------------------------------------------


def _fmt(v):
    return f"{v:.17g}"


def write_matrix(path, A):
    path.write_text("\n".join(",".join(_fmt(v) for v in row) for row in np.atleast_2d(A)) + "\n")


def write_summary(out, trace, wall_ms, **extra):
    summary = {
        "iterations": trace.iterations,
        "final_residual": trace.final_residual,
        "final_objective": trace.final_objective,
        "wall_ms": wall_ms,
        "status": trace.status,
        **extra,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


def _status(*traces):
    return EXIT_OK if all(t.converged for t in traces) else EXIT_MAXITER


# -- commands -------------------------------------------------------------------


def run_solve_portfolio(cfg):
    inst = build_portfolio(cfg)
    L, partition, problem = portfolio.build_problem(inst)
    majorizer = diagonal_majorizer(L, cfg.extra.get("factor", 3.0))
    t0 = time.perf_counter()
    x, trace = core.solve(L, partition, majorizer, problem, opts=cfg.solve_options())
    wall = 1e3 * (time.perf_counter() - t0)
    (cfg.out / "trace.csv").write_text(trace.to_csv(cfg.record_timing))
    write_matrix(cfg.out / "weights.csv", x.reshape(inst.T, inst.n))
    write_summary(cfg.out, trace, wall)
    return _status(trace)


def run_solve_covariance(cfg):
    inst = build_covariance(cfg)
    t0 = time.perf_counter()
    theta, trace = covest.solve_covariance(inst, cfg.solve_options())
    wall = 1e3 * (time.perf_counter() - t0)
    (cfg.out / "trace.csv").write_text(trace.to_csv(cfg.record_timing))
    for i, th in enumerate(theta):
        write_matrix(cfg.out / f"theta_{i:03d}.txt", th)
    write_summary(cfg.out, trace, wall, rmse=covest.rmse(theta, inst.theta_true))
    return _status(trace)


def run_reg_path(cfg):
    inst = build_covariance(cfg)
    lams = lambda_grid(cfg)
    warm = bool(cfg.extra.get("warm_start", True))
    opts = cfg.solve_options()
    t0 = time.perf_counter()
    traces = []
    prev = None
    rows = ["lambda,iterations,rmse,status"]
    for lam in lams:
        theta, trace = covest.solve_covariance(inst, opts, prev if warm else None, float(lam))
        prev = theta
        traces.append(trace)
        rows.append(f"{_fmt(lam)},{trace.iterations},{_fmt(covest.rmse(theta, inst.theta_true))},{trace.status}")
    wall = 1e3 * (time.perf_counter() - t0)
    (cfg.out / "path.csv").write_text("\n".join(rows) + "\n")
    (cfg.out / "trace.csv").write_text(traces[-1].to_csv(cfg.record_timing))
    total = sum(t.iterations for t in traces)
    write_summary(cfg.out, traces[-1], wall, total_iterations=total, warm_start=warm, points=len(lams))
    return _status(*traces)


def run_validate_graph(cfg):
    path = cfg.extra.get("graph")
    if path is None:
        raise ConfigParse("validate-graph needs a 'graph' path")
    fmt = cfg.extra.get("format", "edges")
    tol = float(cfg.extra.get("tol", 1e-12))
    if fmt == "dense":
        try:
            A = np.loadtxt(path, ndmin=2, delimiter=cfg.extra.get("delimiter"))
        except (OSError, ValueError) as exc:
            raise InstanceBuild(f"{path}: {exc}") from exc
        report = validate(A, tol)
        violations = [name for name, _ in report.violations]
        message = str(report)
    elif fmt == "edges":
        try:
            n, edges = read_edge_file(path)
        except OSError as exc:
            raise InstanceBuild(f"{path}: {exc.strerror}") from exc
        except ValueError as exc:
            raise InstanceBuild(str(exc)) from exc
        try:
            laplacian_from_edges(n, edges)
            violations, message = [], "valid Laplacian"
        except LapMMError as exc:
            violations, message = [type(exc).__name__], str(exc)
    else:
        raise ConfigParse(f"unknown graph format {fmt!r}")
    result = {"valid": not violations, "violations": violations, "message": message}
    (cfg.out / "summary.json").write_text(json.dumps(result, indent=2) + "\n")
    if violations:
        print(f"invalid Laplacian: {message}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


RUNNERS = {
    "solve-portfolio": run_solve_portfolio,
    "solve-covariance": run_solve_covariance,
    "reg-path": run_reg_path,
    "validate-graph": run_validate_graph,
}


def run(cfg):
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigParse(f"cannot create output directory {cfg.out}: {exc.strerror}") from exc
    return RUNNERS[cfg.command](cfg)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="lapmm", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--workers", type=int, help="block-update threads (overrides config)")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, args.out, args.workers)
        return run(cfg)
    except ConfigParse as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except InstanceBuild as exc:
        print(f"instance error: {exc}", file=sys.stderr)
    except LapMMError as exc:
        print(f"solver error ({type(exc).__name__}): {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
