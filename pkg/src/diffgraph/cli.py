"""Command-line entry points.

Every command reads a flat ``key = value`` config file (flags override keys),
writes its outputs plus the fully-resolved config into the output directory,
and is deterministic given (config, seed). Exit codes: 0 success, 1 runtime
failure, 2 usage or input error, 3 policy refusal (theory size cap).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bench, blockmat, ingest, modelsel, synth, theory
from .blockmat import BlockMatrix, TracySinghCapError
from .loss import CovariancePair, sample_covariance
from .penalty import PenaltySpec
from .solver import SolverConfig, SolverDivergenceError, estimate


class UsageError(ValueError):
    pass


def parse_config_file(path) -> dict:
    """Flat key = value lines; '#' starts a comment; values stay strings."""
    cfg = {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    for lineno, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


class Resolved(dict):
    """Config dict with typed lookups; records every resolved value."""

    def __init__(self, base):
        super().__init__(base)
        self.resolved = {}

    def _note(self, key, value):
        self.resolved[key] = value
        return value

    def str(self, key, default=None, required=False):
        if key in self:
            return self._note(key, self[key])
        if required and default is None:
            raise UsageError(f"missing required config key {key!r}")
        return self._note(key, default)

    def int(self, key, default=None, required=False):
        v = self.str(key, None if default is None else str(default), required)
        try:
            return None if v is None else self._note(key, int(v))
        except ValueError:
            raise UsageError(f"config key {key!r} must be an integer, got {v!r}")

    def float(self, key, default=None, required=False):
        v = self.str(key, None if default is None else str(default), required)
        try:
            return None if v is None else self._note(key, float(v))
        except ValueError:
            raise UsageError(f"config key {key!r} must be a number, got {v!r}")

    def bool(self, key, default=False):
        v = self.str(key, str(default))
        if isinstance(v, bool):
            return v
        low = str(v).lower()
        if low in ("true", "1", "yes", "on"):
            return self._note(key, True)
        if low in ("false", "0", "no", "off"):
            return self._note(key, False)
        raise UsageError(f"config key {key!r} must be boolean, got {v!r}")

    def list(self, key, default=""):
        v = self.str(key, default)
        items = [t.strip() for t in str(v).split(",") if t.strip()]
        return self._note(key, items)


def _outdir(cfg: Resolved) -> Path:
    out = Path(cfg.str("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(cfg: Resolved, out: Path, command: str) -> None:
    payload = {"command": command, **cfg.resolved}
    (out / "resolved_config.json").write_text(json.dumps(payload, indent=2, default=str))


def _solver_config(cfg: Resolved) -> SolverConfig:
    algorithm = cfg.str("algorithm", "auto")
    if algorithm in ("auto", None, ""):
        algorithm = None
    return SolverConfig(
        algorithm=algorithm,
        i_max=cfg.int("i_max", 200),
        delta_tol=cfg.float("delta_tol", 1e-3),
        lla_rounds=cfg.int("lla_rounds", 2),
    )


def _penalty_spec(cfg: Resolved, lam: float | None = None) -> PenaltySpec:
    kind = cfg.str("penalty", required=True)
    lam = cfg.float("lambda", 1.0) if lam is None else lam
    return PenaltySpec(kind, lam, epsilon=cfg.float("epsilon", 0.001),
                       a=cfg.float("a", 3.7))


def _load_cov(cfg: Resolved) -> CovariancePair:
    m = cfg.int("m", required=True)
    paths = [cfg.str("data_x", required=True), cfg.str("data_y", required=True)]
    mats = []
    for path in paths:
        if not Path(path).exists():
            raise UsageError(f"input file not found: {path}")
        mats.append(np.loadtxt(path, delimiter=",", ndmin=2))
    center = cfg.bool("center", False)
    n_x, n_y = mats[0].shape[0], mats[1].shape[0]
    return CovariancePair(sample_covariance(mats[0], m, center=center),
                          sample_covariance(mats[1], m, center=center),
                          n_x, n_y)


def _write_edges(path, delta_sym: BlockMatrix, edge_set) -> None:
    norms = blockmat.block_norms(delta_sym)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "l", "block_norm"])
        for k, l in edge_set:
            writer.writerow([k, l, f"{norms[k, l]:.12g}"])


def cmd_simulate(cfg: Resolved) -> int:
    kind = cfg.str("kind", "er")
    p = cfg.int("p", required=True)
    m = cfg.int("m", required=True)
    n = cfg.int("n", required=True)
    seed = cfg.int("seed", 0)
    if n < 1 or p < 2 or m < 1:
        raise UsageError(f"invalid dimensions: p={p}, m={m}, n={n}")
    model = synth.generate_model(
        kind, p, m, seed,
        p_er=cfg.float("p_er", 0.5),
        mean_degree=cfg.int("mean_degree", 2),
        p_er_delta=cfg.float("p_er_delta", 0.05),
        independent_support=cfg.bool("independent_support", True),
        margin=cfg.float("margin", 0.1),
    )
    x = synth.sample(model, n, rng=np.random.default_rng([seed, 1]), which="x")
    y = synth.sample(model, n, rng=np.random.default_rng([seed, 2]), which="y")
    out = _outdir(cfg)
    synth.save_model(model, out / "model.json")
    np.savetxt(out / "data_x.csv", x, delimiter=",", fmt="%.17g")
    np.savetxt(out / "data_y.csv", y, delimiter=",", fmt="%.17g")
    _echo_config(cfg, out, "simulate")
    print(f"simulate: wrote model.json and {n} x {m * p} data to {out}")
    return 0


def cmd_estimate(cfg: Resolved) -> int:
    cov = _load_cov(cfg)
    spec = _penalty_spec(cfg)
    out = _outdir(cfg)
    config = _solver_config(cfg)
    config.collect_block_stats = True
    config.trace_path = str(out / "trace.csv")
    result = estimate(cov, spec, config)
    blockmat.save_csv(result.delta_hat_sym, out / "delta_hat.csv")
    _write_edges(out / "edges.csv", result.delta_hat_sym, result.edge_set)
    meta = {
        "penalty": spec.kind, "lambda": spec.lam,
        "algorithm": result.algorithm,
        "iterations": result.iterations,
        "total_iterations": result.total_iterations,
        "converged": result.converged,
        "wall_time": result.wall_time,
        "objective_final": result.objective_trace[-1],
        "edges": len(result.edge_set),
        "trace_file": "trace.csv",
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2))
    _echo_config(cfg, out, "estimate")
    print(f"estimate: {len(result.edge_set)} edges, converged={result.converged}, "
          f"{result.total_iterations} iterations")
    return 0


def cmd_select(cfg: Resolved) -> int:
    cov = _load_cov(cfg)
    spec = _penalty_spec(cfg, lam=1.0)
    config = _solver_config(cfg)
    grid = modelsel.build_grid(cov, spec, config,
                               mode=cfg.str("grid_mode", "real"),
                               grid_size=cfg.int("grid_size", 20))
    lam_star, result, curve = modelsel.select(cov, spec, config, grid)
    out = _outdir(cfg)
    with open(out / "bic_curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "bic", "edges", "objective"])
        for pt in curve:
            writer.writerow([pt.lam, pt.bic, pt.edges, pt.objective])
    blockmat.save_csv(result.delta_hat_sym, out / "delta_hat.csv")
    _write_edges(out / "edges.csv", result.delta_hat_sym, result.edge_set)
    meta = {"lambda_star": lam_star, "lambda_sm": grid.lambda_sm,
            "edges": len(result.edge_set), "converged": result.converged}
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2))
    _echo_config(cfg, out, "select")
    print(f"select: lambda* = {lam_star:.6g} with {len(result.edge_set)} edges")
    return 0


def cmd_benchmark(cfg: Resolved) -> int:
    mode = cfg.str("select", "maxf1")
    modes = ("maxf1", "bic") if mode == "both" else (mode,)
    if any(md not in ("maxf1", "bic") for md in modes):
        raise UsageError(f"select must be maxf1, bic or both, got {mode!r}")
    n_list = cfg.list("n_values", "")
    result = bench.run_benchmark(
        kind=cfg.str("kind", "er"),
        p=cfg.int("p", required=True),
        m=cfg.int("m", required=True),
        n_values=[int(v) for v in n_list] if n_list else [cfg.int("n", required=True)],
        penalties=cfg.list("penalties", "lasso,logsum,scad"),
        runs=cfg.int("runs", 10),
        seed_base=cfg.int("seed", 0),
        modes=modes,
        grid_size=cfg.int("grid_size", 20),
        config=_solver_config(cfg),
        workers=cfg.int("workers", 1),
        independent_support=cfg.bool("independent_support", True),
    )
    out = _outdir(cfg)
    bench.write_records_csv(out / "runs.csv", result["records"])
    bench.write_aggregate_csv(out / "aggregate.csv", result)
    table = bench.format_table(result)
    (out / "table.txt").write_text(table)
    _echo_config(cfg, out, "benchmark")
    print(table)
    if result["failures"]:
        print(f"benchmark: {len(result['failures'])} run(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_theory(cfg: Resolved) -> int:
    model_path = cfg.str("model", None)
    if model_path:
        if not Path(model_path).exists():
            raise UsageError(f"model file not found: {model_path}")
        model = synth.load_model(model_path)
    else:
        model = synth.generate_model(
            cfg.str("kind", "er"), cfg.int("p", required=True),
            cfg.int("m", required=True), cfg.int("seed", 0),
            p_er=cfg.float("p_er", 0.5),
            p_er_delta=cfg.float("p_er_delta", 0.05),
        )
    sigma_x = BlockMatrix(np.linalg.inv(model.omega_x.data), model.m)
    sigma_y = BlockMatrix(np.linalg.inv(model.omega_y.data), model.m)
    tau = cfg.float("tau", 3.0)
    n = cfg.int("n", 1000)
    constants = theory.compute_constants(sigma_x, sigma_y, model.support, tau=tau)
    thm1 = theory.theorem1_conditions(constants, len(model.support), model.p, n)
    lam_n = thm1.lambda_n if np.isfinite(thm1.lambda_n) else cfg.float("lambda", 0.1)
    eps = cfg.float("epsilon", 0.001)
    a = cfg.float("a", 3.7)
    thm2 = {
        "lasso": theory.theorem2_convexity(sigma_x, sigma_y, PenaltySpec("lasso", 1.0)),
        "scad": theory.theorem2_convexity(sigma_x, sigma_y, PenaltySpec("scad", 1.0, a=a)),
        "logsum": theory.theorem2_convexity(
            sigma_x, sigma_y, PenaltySpec("logsum", 1.0, epsilon=eps), lambda_n=lam_n),
    }
    report = {
        "constants": asdict(constants),
        "theorem1": asdict(thm1),
        "theorem2": thm2,
        "support_size": len(model.support),
        "n": n,
    }
    rsc_trials = cfg.int("rsc_trials", 0)
    if rsc_trials > 0:
        seed = cfg.int("seed", 0)
        x = synth.sample(model, n, rng=np.random.default_rng([seed, 1]), which="x")
        y = synth.sample(model, n, rng=np.random.default_rng([seed, 2]), which="y")
        cov = CovariancePair(sample_covariance(x, model.m),
                             sample_covariance(y, model.m), n, n)
        rsc = theory.rsc_check(cov, sigma_x, sigma_y, model.support,
                               trials=rsc_trials, tau=tau, seed=seed)
        report["rsc"] = asdict(rsc)
    out = _outdir(cfg)
    (out / "theory_report.json").write_text(json.dumps(report, indent=2))
    _echo_config(cfg, out, "theory")
    print(f"theory: alpha={constants.alpha:.4f}, "
          f"irrepresentable={constants.irrepresentable}, "
          f"theorem1 satisfied={thm1.satisfied}")
    return 0


def cmd_preprocess(cfg: Resolved) -> int:
    path = cfg.str("input", required=True)
    if not Path(path).exists():
        raise UsageError(f"input file not found: {path}")
    features = cfg.list("features", "")
    sites = cfg.list("sites", "")
    if not features or not sites:
        raise UsageError("preprocess requires 'features' and 'sites' lists")
    daily = cfg.str("daily_average", "auto")
    daily_flag = None if daily == "auto" else daily.lower() in ("true", "1", "yes")
    panel = ingest.load_panel(
        path, features, sites,
        timestamp_column=cfg.str("timestamp_column", "timestamp"),
        site_column=cfg.str("site_column", None),
        daily_average=daily_flag,
    )
    matrix, report = ingest.preprocess(panel, zero_offset=cfg.float("zero_offset", 1e-4))
    out = _outdir(cfg)
    np.savetxt(out / "matrix.csv", matrix, delimiter=",", fmt="%.17g")
    payload = {
        "n_in": report.n_in, "n_out": report.n_out,
        "zero_offsets": report.zero_offsets,
        "degenerate_columns": report.degenerate_columns,
        "imputed_cells": report.imputed_cells,
        "zero_offset_value": report.zero_offset_value,
        "columns": panel.column_names(),
        "m": panel.m, "p": panel.p,
    }
    (out / "preprocess_report.json").write_text(json.dumps(payload, indent=2))
    _echo_config(cfg, out, "preprocess")
    print(f"preprocess: {report.n_in} rows in, {report.n_out} rows out, "
          f"{len(report.degenerate_columns)} degenerate column(s)")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "select": cmd_select,
    "benchmark": cmd_benchmark,
    "theory": cmd_theory,
    "preprocess": cmd_preprocess,
}

# flag name -> config key (only set when given on the command line)
FLAG_KEYS = {
    "seed": "seed", "out": "out", "penalty": "penalty",
    "algorithm": "algorithm", "lam": "lambda", "select": "select",
    "kind": "kind", "p": "p", "m": "m", "n": "n", "runs": "runs",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffgraph",
        description="Differential graph estimation via penalized D-trace loss",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default=None, help="flat key=value config file")
        cmd.add_argument("--out", default=None)
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--penalty", choices=["lasso", "logsum", "scad"], default=None)
        cmd.add_argument("--algorithm", choices=["auto", "lla", "redistribution"],
                         default=None)
        cmd.add_argument("--lambda", dest="lam", type=float, default=None)
        cmd.add_argument("--select", choices=["bic", "maxf1", "both"], default=None)
        cmd.add_argument("--kind", choices=["er", "ba"], default=None)
        cmd.add_argument("--p", type=int, default=None)
        cmd.add_argument("--m", type=int, default=None)
        cmd.add_argument("--n", type=int, default=None)
        cmd.add_argument("--runs", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        base = parse_config_file(args.config) if args.config else {}
        for flag, key in FLAG_KEYS.items():
            value = getattr(args, flag)
            if value is not None:
                base[key] = str(value)
        cfg = Resolved(base)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TracySinghCapError as exc:
        print(f"refused: {exc} (theory checks are restricted to small models)",
              file=sys.stderr)
        return 3
    except SolverDivergenceError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:   # runtime failure
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
