"""Edge-recovery and estimation-quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockmat import EdgeSet
from .solver import EstimationResult
from .synth import SyntheticModel


@dataclass(frozen=True)
class EvalReport:
    f1: float
    hamming: int
    frob_error: float
    support_recovered: bool
    tp: int
    fp: int
    fn: int


def evaluate_edges(estimated: EdgeSet, truth: EdgeSet) -> tuple:
    """(tp, fp, fn) over unordered node pairs."""
    est = set(estimated.edges)
    tru = set(truth.edges)
    tp = len(est & tru)
    return tp, len(est - tru), len(tru - est)


def evaluate(estimate: EstimationResult, truth: SyntheticModel) -> EvalReport:
    """Score an estimate against ground truth.

    F1 uses the both-empty convention 1.0; the Frobenius error is normalized
    by ||delta_star||_F (absolute when the truth is exactly zero, so that the
    error vanishes iff the estimate matches element-wise).
    """
    if estimate.delta_hat_sym.side != truth.delta_star.side:
        raise ValueError("estimate and truth have mismatched dimensions")
    tp, fp, fn = evaluate_edges(estimate.edge_set, truth.support)
    if tp + fp + fn == 0:
        f1 = 1.0
    else:
        f1 = 2.0 * tp / (2.0 * tp + fp + fn)
    diff = float(np.linalg.norm(estimate.delta_hat_sym.data - truth.delta_star.data))
    denom = float(np.linalg.norm(truth.delta_star.data))
    frob_error = diff / denom if denom > 0 else diff
    return EvalReport(
        f1=f1,
        hamming=fp + fn,
        frob_error=frob_error,
        support_recovered=(fp == 0 and fn == 0),
        tp=tp,
        fp=fp,
        fn=fn,
    )


def aggregate(reports) -> dict:
    """Per-metric mean and population standard deviation over runs."""
    reports = list(reports)
    if not reports:
        raise ValueError("cannot aggregate an empty report list")
    out = {"runs": len(reports)}
    for name in ("f1", "hamming", "frob_error"):
        vals = np.array([getattr(r, name) for r in reports], dtype=float)
        out[name] = {"mean": float(vals.mean()), "std": float(vals.std())}
    out["support_recovery_rate"] = float(
        np.mean([r.support_recovered for r in reports])
    )
    return out
