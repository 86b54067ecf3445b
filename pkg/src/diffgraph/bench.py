"""Synthetic benchmark scenarios: generate, sweep a lambda grid, score.

One run draws a ground-truth model and data at a given seed, builds the
penalty's lambda grid, estimates at every grid point and reports metrics at
the F1-maximizing lambda and/or at the BIC minimizer. Run r of a scenario uses
seed ``seed_base + r``, so a rerun reproduces the table exactly.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .loss import CovariancePair, sample_covariance
from .metrics import EvalReport, aggregate, evaluate
from .modelsel import bic, build_grid, rescale_for_bic
from .penalty import PenaltySpec
from .solver import SolverConfig, estimate
from .synth import generate_model, sample

METRICS = ("f1", "hamming", "frob_error")


@dataclass
class RunRecord:
    penalty: str
    n: int
    run_index: int
    seed: int
    mode: str                  # "maxf1" | "bic"
    lambda_chosen: float
    f1: float
    hamming: int
    frob_error: float
    edges: int
    solver_seconds: float
    lambda_sm: float
    max_trace_increase: float  # largest per-step objective increase seen (descent check)
    converged_all: bool


def make_spec(penalty: str, lam: float = 1.0, epsilon: float = 0.001, a: float = 3.7) -> PenaltySpec:
    return PenaltySpec(penalty, lam, epsilon=epsilon, a=a)


def _trace_increase(result) -> float:
    worst = 0.0
    for trace in result.inner_traces:
        arr = np.asarray(trace)
        if arr.size > 1:
            worst = max(worst, float(np.max(np.diff(arr), initial=0.0)))
    return worst


def run_single(kind: str, p: int, m: int, n: int, penalty: str, seed: int,
               modes=("maxf1",), grid_size: int = 20,
               config: SolverConfig | None = None,
               independent_support: bool = True,
               epsilon: float = 0.001, a: float = 3.7) -> dict:
    """One benchmark run; returns {mode: RunRecord}."""
    config = config or SolverConfig()
    model = generate_model(kind, p, m, seed, independent_support=independent_support)
    x = sample(model, n, rng=np.random.default_rng([seed, 1]), which="x")
    y = sample(model, n, rng=np.random.default_rng([seed, 2]), which="y")
    cov = CovariancePair(sample_covariance(x, m), sample_covariance(y, m), n, n)
    spec = make_spec(penalty, epsilon=epsilon, a=a)
    grid = build_grid(cov, spec, config, mode="synthetic", grid_size=grid_size)

    reports, scores, solver_seconds, worst_increase = [], [], 0.0, 0.0
    converged_all = True
    for lam in grid.points:
        result = estimate(cov, spec.with_lambda(lam), config)
        solver_seconds += result.wall_time
        worst_increase = max(worst_increase, _trace_increase(result))
        converged_all = converged_all and result.converged
        reports.append(evaluate(result, model))
        scaled_cov, scaled_delta = rescale_for_bic(cov, result.delta_hat_sym)
        scores.append(bic(scaled_delta, scaled_cov))

    out = {}
    for mode in modes:
        if mode == "maxf1":
            best = 0
            for i in range(1, len(grid.points)):
                if reports[i].f1 >= reports[best].f1:
                    best = i    # ties toward the larger lambda (sparser model)
        elif mode == "bic":
            best = 0
            for i in range(1, len(grid.points)):
                if scores[i] <= scores[best]:
                    best = i
        else:
            raise ValueError(f"unknown selection mode {mode!r}")
        rep = reports[best]
        out[mode] = RunRecord(
            penalty=penalty, n=n, run_index=-1, seed=seed, mode=mode,
            lambda_chosen=grid.points[best], f1=rep.f1, hamming=rep.hamming,
            frob_error=rep.frob_error, edges=rep.tp + rep.fp,
            solver_seconds=solver_seconds, lambda_sm=grid.lambda_sm,
            max_trace_increase=worst_increase, converged_all=converged_all,
        )
    return out


def _task(args):
    kind, p, m, n, penalty, seed, run_index, modes, grid_size, cfg_kwargs, extra = args
    records = run_single(kind, p, m, n, penalty, seed, modes=modes,
                         grid_size=grid_size, config=SolverConfig(**cfg_kwargs),
                         **extra)
    for rec in records.values():
        rec.run_index = run_index
    return records


def run_benchmark(kind: str, p: int, m: int, n_values, penalties, runs: int,
                  seed_base: int = 0, modes=("maxf1",), grid_size: int = 20,
                  config: SolverConfig | None = None, workers: int = 1,
                  independent_support: bool = True) -> dict:
    """Full scenario sweep; returns {"records": [...], "aggregates": {...}}.

    Aggregates are keyed "penalty|n|mode" with mean and population standard
    deviation per metric. Failed runs are recorded and excluded from the
    aggregate, which is marked incomplete for that cell.
    """
    config = config or SolverConfig()
    cfg_kwargs = dict(algorithm=config.algorithm, i_max=config.i_max,
                      delta_tol=config.delta_tol, lla_rounds=config.lla_rounds,
                      reweight_i_max=config.reweight_i_max)
    extra = {"independent_support": independent_support}
    tasks = []
    for n in n_values:
        for penalty in penalties:
            for r in range(runs):
                tasks.append((kind, p, m, n, penalty, seed_base + r, r,
                              tuple(modes), grid_size, cfg_kwargs, extra))

    records, failures = [], []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks))
        for task, res in zip(tasks, results):
            records.extend(res.values())
    else:
        for task in tasks:
            try:
                records.extend(_task(task).values())
            except Exception as exc:   # partial failure: record and continue
                failures.append({"task": str(task[:6]), "error": repr(exc)})

    aggregates = {}
    for n in n_values:
        for penalty in penalties:
            for mode in modes:
                cell = [r for r in records
                        if r.n == n and r.penalty == penalty and r.mode == mode]
                key = f"{penalty}|{n}|{mode}"
                if not cell:
                    aggregates[key] = {"runs": 0, "incomplete": True}
                    continue
                reps = [EvalReport(r.f1, r.hamming, r.frob_error,
                                   r.hamming == 0, 0, 0, 0) for r in cell]
                agg = aggregate(reps)
                times = np.array([r.solver_seconds for r in cell])
                agg["timing"] = {"mean": float(times.mean()), "std": float(times.std())}
                agg["incomplete"] = len(cell) < runs
                aggregates[key] = agg
    return {
        "scenario": {"kind": kind, "p": p, "m": m, "n_values": list(n_values),
                     "penalties": list(penalties), "runs": runs,
                     "seed_base": seed_base, "modes": list(modes),
                     "grid_size": grid_size,
                     "independent_support": independent_support},
        "records": records,
        "aggregates": aggregates,
        "failures": failures,
    }


def write_records_csv(path, records) -> None:
    fields = list(RunRecord.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for rec in records:
            writer.writerow(asdict(rec))


def write_aggregate_csv(path, result) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["penalty", "n", "mode", "metric", "mean", "std", "runs"])
        for key, agg in result["aggregates"].items():
            penalty, n, mode = key.split("|")
            if agg.get("runs", 0) == 0:
                writer.writerow([penalty, n, mode, "-", "", "", 0])
                continue
            for metric in METRICS + ("timing",):
                writer.writerow([penalty, n, mode, metric,
                                 f"{agg[metric]['mean']:.6g}",
                                 f"{agg[metric]['std']:.6g}", agg["runs"]])


def format_table(result) -> str:
    """Plain-text summary laid out metric-section by metric-section,
    penalties as rows and sample sizes as columns, mean (std) per cell."""
    scenario = result["scenario"]
    n_values = scenario["n_values"]
    lines = [f"{scenario['kind'].upper()} graph, p={scenario['p']}, m={scenario['m']}, "
             f"{scenario['runs']} runs (std in parentheses)"]
    labels = {"f1": "F1 score", "hamming": "Hamming distance",
              "frob_error": "Est. error", "timing": "Timing (s)"}
    for mode in scenario["modes"]:
        for metric in ("f1", "hamming", "frob_error", "timing"):
            lines.append("")
            sel = "max-F1 lambda" if mode == "maxf1" else "BIC lambda"
            lines.append(f"{labels[metric]} ({sel})")
            header = "penalty".ljust(10) + "".join(f"n={n}".rjust(18) for n in n_values)
            lines.append(header)
            for penalty in scenario["penalties"]:
                row = penalty.ljust(10)
                for n in n_values:
                    agg = result["aggregates"].get(f"{penalty}|{n}|{mode}", {})
                    if agg.get("runs", 0) == 0:
                        row += "missing".rjust(18)
                    else:
                        cell = f"{agg[metric]['mean']:.3f} ({agg[metric]['std']:.3f})"
                        row += cell.rjust(18)
                lines.append(row)
    return "\n".join(lines) + "\n"
