"""Command line entry point: ``oift run | check | sweep``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import metrics_report
from .cost import CostWeights, cost_terms, instantaneous_cost
from .model import barycenter
from .potential import PotentialParams, formation_gradient, formation_hessian, sigma_prime
from .pronto import CONVERGED, MAX_ITER, SolverOptions, solve
from .projection import Curve, trajectory_defect
from .scenarios import Scenario, get_scenario

log = logging.getLogger("oift")

OUTPUT_ENV = "OIFT_OUTPUT_DIR"
OVERRIDES = ("dt", "max_iter", "epsilon", "q_p", "q_v", "r_a", "k_r", "k_a", "k_F", "seed", "safe_hessian")
_INT_KEYS = {"max_iter", "seed"}

EXIT_OK, EXIT_SOLVER, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str
    overrides: dict = field(default_factory=dict)
    output_dir: str | None = None


def _coerce(key, value):
    if key == "safe_hessian":
        if isinstance(value, bool):
            return value
        if str(value).lower() in ("on", "true", "1"):
            return True
        if str(value).lower() in ("off", "false", "0"):
            return False
        raise ConfigError(f"safe_hessian must be on or off, got {value!r}")
    if key in _INT_KEYS:
        if isinstance(value, bool) or float(value) != int(float(value)):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(float(value))
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {value!r}") from None
    if not np.isfinite(out):
        raise ConfigError(f"{key} must be finite")
    return out


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict) or "scenario" not in raw:
        raise ConfigError(f"config {path} must be an object with a 'scenario' key")
    unknown = set(raw) - {"scenario", "overrides", "output_dir"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    overrides = raw.get("overrides") or {}
    if not isinstance(overrides, dict):
        raise ConfigError("'overrides' must be an object")
    return RunConfig(str(raw["scenario"]), normalize_overrides(overrides), raw.get("output_dir"))


def normalize_overrides(overrides: dict) -> dict:
    out = {}
    for key, value in overrides.items():
        if key not in OVERRIDES:
            raise ConfigError(f"unknown parameter {key!r}; expected one of {', '.join(OVERRIDES)}")
        out[key] = _coerce(key, value)
    return out


def apply_overrides(sc: Scenario, overrides: dict) -> Scenario:
    """Return the scenario with overrides applied; invalid values raise ConfigError."""
    ov = normalize_overrides(overrides)
    try:
        w = sc.weights
        pot = PotentialParams(ov.get("k_r", w.potential.k_r), ov.get("k_a", w.potential.k_a))
        weights = CostWeights(
            q_p=ov.get("q_p", w.q_p),
            q_v=ov.get("q_v", w.q_v),
            r_a=ov.get("r_a", w.r_a),
            k_F=ov.get("k_F", w.k_F),
            potential=pot,
        )
        opt_keys = {"max_iter", "epsilon", "safe_hessian"}
        options = replace(sc.options, **{k: v for k, v in ov.items() if k in opt_keys})
        if "seed" in ov:
            sc = sc.with_seed(ov["seed"])
        return replace(sc, weights=weights, options=options, dt=ov.get("dt", sc.dt))
    except ValueError as exc:
        raise ConfigError(f"invalid override: {exc}") from None


def resolve(config: RunConfig) -> Scenario:
    try:
        sc = get_scenario(config.scenario)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    return apply_overrides(sc, config.overrides)


def _column_names(sc: Scenario) -> list[str]:
    axes = "xyz"[: sc.spec.M]
    n = sc.spec.n
    cols = ["t"]
    cols += [f"p{i}_{a}" for i in range(1, n + 1) for a in axes]
    cols += [f"v{i}_{a}" for i in range(1, n + 1) for a in axes]
    cols += [f"u{i}_{a}" for i in range(1, n + 1) for a in axes]
    cols += [f"pB_{a}" for a in axes]
    cols += [f"pBdes_{a}" for a in axes]
    return cols


def _write_csv(path: Path, comment: str, names, rows: np.ndarray):
    with open(path, "w", newline="") as f:
        f.write(f"# {comment}\n")
        f.write(",".join(names) + "\n")
        np.savetxt(f, rows, delimiter=",", fmt="%.12e")


def provenance(sc: Scenario) -> dict:
    return {
        "version": __version__,
        "scenario": sc.name,
        "seed": sc.seed,
        "T": sc.T,
        "dt": sc.dt,
        "n": sc.spec.n,
        "M": sc.spec.M,
        "x0": [float(v) for v in sc.x0],
        "weights": asdict(sc.weights),
        "gains": asdict(sc.gains),
        "options": asdict(sc.options),
        "desired": {"kind": sc.desired_kind, **{k: v for k, v in sc.desired_params.items()}},
        "edges": [list(e) for e in sc.formation.edges],
    }


def execute(sc: Scenario, out_dir: Path | None) -> dict:
    """Solve one scenario, optionally writing the artifact files; returns the summary."""
    problem = sc.problem()
    spec = problem.spec
    t0 = time.perf_counter()
    res = solve(problem, sc.options)
    elapsed = time.perf_counter() - t0
    xi = res.xi_star
    report = metrics_report(xi, problem, sc.subspace)
    summary = {
        "scenario": sc.name,
        "status": res.status,
        "message": res.message,
        "iterations": res.iterations,
        "g_star": res.g_star,
        "final_dg": res.final_dg,
        **report.to_dict(xi.t),
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        M = spec.M
        pB = barycenter(xi.x, spec)[:, :M]
        pBdes = problem.desired(xi.t)[:, :M]
        rows = np.column_stack([xi.t, xi.x, xi.u, pB, pBdes])
        _write_csv(
            out_dir / "trajectory.csv",
            "t [s]; agent positions p (m), velocities v (m/s), inputs u (m/s^2) per agent and axis;"
            " barycenter position pB and its desired value pBdes (m)",
            _column_names(sc),
            rows,
        )
        hist = np.array([[r.k, r.g, r.dg, r.gamma, r.backtracks] for r in res.history]).reshape(-1, 5)
        _write_csv(
            out_dir / "iterations.csv",
            "k: iteration; g: cost before the step; dg: directional derivative; gamma: accepted step; backtracks",
            ["k", "g", "dg", "gamma", "backtracks"],
            hist,
        )
        terms = report.cost_terms
        _write_csv(
            out_dir / "cost_terms.csv",
            "running cost terms per node: tracking, input, formation; tracking_error = |pB - pBdes| (m)",
            ["t", "tracking", "input", "formation", "tracking_error"],
            np.column_stack([xi.t, terms["tracking"], terms["input"], terms["formation"], report.tracking_error]),
        )
        metrics = {**summary, "elapsed_s": elapsed, "provenance": provenance(sc)}
        (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2, default=float) + "\n")
    return summary


def _default_out(config: RunConfig, name: str) -> Path:
    if config.output_dir:
        return Path(config.output_dir)
    return Path(os.environ.get(OUTPUT_ENV, "runs")) / name


def cmd_run(config: RunConfig) -> int:
    sc = resolve(config)
    out = _default_out(config, sc.name)
    summary = execute(sc, out)
    print(
        f"{sc.name}: {summary['status']} after {summary['iterations']} iterations, "
        f"g = {summary['g_star']:.10g}, phi_c = {summary['phi_c']}, "
        f"terminal tracking = {summary['terminal_tracking_error']:.3g} m"
    )
    if summary["subspace_residual"] is not None:
        print(f"out-of-subspace residual = {summary['subspace_residual']:.3g} m")
    print(f"wrote {out}")
    if summary["status"] in (CONVERGED, MAX_ITER):
        return EXIT_OK
    print(f"error: {summary['message']}", file=sys.stderr)
    return EXIT_SOLVER


def _central_diff(f, x, h):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def run_checks(sc: Scenario) -> list[tuple[str, str, str]]:
    """Validation suite at the initial trajectory. Rows are (name, PASS|FAIL|XFAIL, detail)."""
    problem = sc.problem()
    spec, w, form = problem.spec, problem.weights, problem.formation
    N = spec.N
    xi = problem.initial_trajectory()
    lq_safe = problem.lq_data(xi, safe=True)
    lq_exact = problem.lq_data(xi, safe=False)
    rows = []

    def verdict(name, ok, detail):
        rows.append((name, "PASS" if ok else "FAIL", detail))

    # gradient of the running cost at a few nodes
    nodes = sorted({0, xi.t.size // 2, xi.t.size - 1})
    err = 0.0
    for k in nodes:
        f = lambda x: float(instantaneous_cost(x, xi.u[k], xi.t[k], w, spec, form, problem.desired))
        fd = _central_diff(f, xi.x[k].copy(), 1e-6)
        err = max(err, np.max(np.abs(fd - lq_safe.a[k])) / max(1.0, np.max(np.abs(fd))))
    verdict("gradient (finite differences)", err < 1e-5, f"rel err {err:.2e}")

    p = xi.x[0, :N].copy()
    grad = lambda q: formation_gradient(q, form, w.k_F, w.potential)
    H = formation_hessian(p, form, w.k_F, w.potential, safe=False)
    fdH = np.column_stack([_central_diff(lambda q: grad(q)[i], p, 1e-6) for i in range(N)])
    herr = np.max(np.abs(H - fdH)) / max(1.0, np.max(np.abs(H)))
    verdict("exact Hessian (finite differences)", herr < 1e-4, f"rel err {herr:.2e}")

    safe_min = min(np.linalg.eigvalsh(Q).min() for Q in lq_safe.Q)
    verdict("safe Q_o PSD", safe_min >= -1e-8, f"min eig {safe_min:.3g}")

    exact_min = min(np.linalg.eigvalsh(Q).min() for Q in lq_exact.Q)
    s = np.array(
        [np.sum((p[(i - 1) * spec.M : i * spec.M] - p[(j - 1) * spec.M : j * spec.M]) ** 2) for i, j, _ in form.edges]
    )
    d = np.array([e[2] for e in form.edges])
    repelling = bool(np.any(s < d**2))
    if exact_min >= -1e-8:
        verdict("exact Q_o PSD", True, f"min eig {exact_min:.3g}")
    elif repelling or np.any(sigma_prime(s, d, w.potential) < 0):
        rows.append(("exact Q_o PSD", "XFAIL", f"min eig {exact_min:.3g}; repelling pair present (expected)"))
    else:
        verdict("exact Q_o PSD", False, f"min eig {exact_min:.3g} with no repelling pair")

    rng = np.random.default_rng(0 if sc.seed is None else sc.seed)
    curve = Curve(xi.t, xi.x + rng.normal(size=xi.x.shape), xi.u + rng.normal(size=xi.u.shape))
    once = problem.project(curve)
    twice = problem.project(once.as_curve())
    idem = max(np.max(np.abs(twice.x - once.x)), np.max(np.abs(twice.u - once.u)))
    verdict("projection idempotence", idem < 1e-6, f"max diff {idem:.2e}")

    defect = trajectory_defect(once, problem.sys)
    verdict("trajectory defect", defect < 1e-9, f"max defect {defect:.2e}")

    return rows


def cmd_check(config: RunConfig) -> int:
    sc = resolve(config)
    rows = run_checks(sc)
    width = max(len(r[0]) for r in rows)
    for name, status, detail in rows:
        print(f"{status:5s}  {name:<{width}}  {detail}")
    failed = [r for r in rows if r[1] == "FAIL"]
    print(f"{len(rows) - len(failed)}/{len(rows)} checks ok")
    return EXIT_CHECK if failed else EXIT_OK


def _sweep_one(args):
    sc, out_dir = args
    return execute(sc, out_dir)


def cmd_sweep(config: RunConfig, parameter: str, values, jobs: int = 1) -> int:
    if parameter not in OVERRIDES:
        raise ConfigError(f"unknown parameter {parameter!r}; expected one of {', '.join(OVERRIDES)}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    values = [_coerce(parameter, v) for v in values]
    base = resolve(config)
    root = _default_out(config, f"{base.name}_sweep_{parameter}")
    tasks = []
    for v in values:
        sc = apply_overrides(base, {**config.overrides, parameter: v})
        tasks.append((sc, root / f"{parameter}={v}"))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(task) for task in tasks]

    root.mkdir(parents=True, exist_ok=True)
    header = [parameter, "status", "iterations", "g_star", "phi_c", "terminal_tracking_error"]
    lines = [",".join(header)]
    for v, r in zip(values, results):
        lines.append(
            f"{v},{r['status']},{r['iterations']},{r['g_star']:.10g},{r['phi_c']},{r['terminal_tracking_error']:.6e}"
        )
    (root / "summary.csv").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line.replace(",", "\t"))
    print(f"wrote {root / 'summary.csv'}")
    bad = [r for r in results if r["status"] not in (CONVERGED, MAX_ITER)]
    return EXIT_SOLVER if bad else EXIT_OK


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("scenario", help="catalog scenario name or path to a JSON config file")
    p.add_argument("--dt", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--q-p", dest="q_p", type=float)
    p.add_argument("--q-v", dest="q_v", type=float)
    p.add_argument("--r-a", dest="r_a", type=float)
    p.add_argument("--k-r", dest="k_r", type=float)
    p.add_argument("--k-a", dest="k_a", type=float)
    p.add_argument("--k-F", dest="k_F", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--safe-hessian", dest="safe_hessian", choices=("on", "off"))
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or ./runs)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oift", description="Formation tracking with a projection operator Newton solver.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("run", help="solve a scenario and write trajectory, iterations and metrics"))
    _add_common(sub.add_parser("check", help="gradient, Hessian, PSD and projection checks at iteration 0"))
    sweep = sub.add_parser("sweep", help="repeat a run over values of one parameter")
    _add_common(sweep)
    sweep.add_argument("--param", required=True, help=f"one of: {', '.join(OVERRIDES)}")
    sweep.add_argument("--values", nargs="*", default=[], help="values to sweep")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel runs")
    sub.add_parser("list", help="list catalog scenarios")
    return parser


def config_from_args(args) -> RunConfig:
    if args.scenario.endswith(".json") or Path(args.scenario).is_file():
        config = load_config(args.scenario)
    else:
        config = RunConfig(args.scenario)
    cli = {k: getattr(args, k) for k in OVERRIDES if getattr(args, k, None) is not None}
    config.overrides = {**config.overrides, **normalize_overrides(cli)}
    if args.out:
        config.output_dir = args.out
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        from .scenarios import catalog_scenarios

        for name in catalog_scenarios():
            print(name)
        return EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = config_from_args(args)
        if args.command == "run":
            return cmd_run(config)
        if args.command == "check":
            return cmd_check(config)
        return cmd_sweep(config, args.param, args.values, args.jobs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
