"""Time-series CSV ingestion and preprocessing into the sample layout.

Features act as graph nodes and measurement sites as attributes, so a panel
with p features over m sites becomes an n x (m*p) matrix with columns ordered
site-major within feature. Each scalar series goes through log-ratio,
linear detrend and unit mean-square scaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

DEFAULT_ZERO_OFFSET = 1e-4
DEGENERATE_REL_TOL = 1e-9


class IngestError(ValueError):
    pass


@dataclass
class FeaturePanel:
    values: np.ndarray            # n_raw x (m*p)
    feature_names: list
    site_names: list
    timestamps: list
    imputed_cells: dict = field(default_factory=dict)   # column name -> count

    @property
    def m(self) -> int:
        return len(self.site_names)

    @property
    def p(self) -> int:
        return len(self.feature_names)

    def column_names(self) -> list:
        return [f"{f}__{s}" for f in self.feature_names for s in self.site_names]


@dataclass
class PreprocessReport:
    n_in: int
    n_out: int
    zero_offsets: dict            # column name -> number of zero entries offset
    degenerate_columns: list      # columns left as zeros (no scaling possible)
    imputed_cells: dict
    zero_offset_value: float


def load_panel(path, features, sites, timestamp_column: str = "timestamp",
               site_column: str | None = None,
               daily_average: bool | None = None) -> FeaturePanel:
    """Load a CSV into a feature panel.

    Wide layout (default): one row per timestamp, one column per
    feature/site pair named ``feature__site``. Long layout (``site_column``
    given): one row per (timestamp, site) with one column per feature.
    Rows are averaged per calendar date when the input has multiple rows per
    date (``daily_average=None`` auto-detects; pass False to forbid).
    Missing cells are forward- then back-filled per column.
    """
    df = pd.read_csv(path)
    if timestamp_column not in df.columns:
        raise IngestError(f"missing timestamp column {timestamp_column!r}")
    df[timestamp_column] = pd.to_datetime(df[timestamp_column])

    if site_column is not None:
        if site_column not in df.columns:
            raise IngestError(f"missing site column {site_column!r}")
        for f in features:
            if f not in df.columns:
                raise IngestError(f"unknown feature column {f!r}")
        unknown = set(df[site_column].unique()) - set(sites)
        if unknown:
            raise IngestError(f"unexpected sites in data: {sorted(unknown)}")
        wide = df.pivot_table(index=timestamp_column, columns=site_column,
                              values=list(features), aggfunc="mean")
        # pivot gives (feature, site) column tuples; order site-major per feature
        cols = {}
        for f in features:
            for s in sites:
                if (f, s) not in wide.columns:
                    raise IngestError(f"no data for feature {f!r} at site {s!r}")
                cols[f"{f}__{s}"] = wide[(f, s)]
        df = pd.DataFrame(cols, index=wide.index).reset_index()
        df = df.rename(columns={df.columns[0]: timestamp_column})

    expected = [f"{f}__{s}" for f in features for s in sites]
    missing = [c for c in expected if c not in df.columns]
    if missing:
        raise IngestError(f"unknown columns: {missing}")

    ts = df[timestamp_column]
    if not ts.is_monotonic_increasing:
        raise IngestError("timestamps are not monotone non-decreasing")

    dates = ts.dt.normalize()
    multiple_per_day = dates.duplicated().any()
    if daily_average is None:
        daily_average = bool(multiple_per_day)
    if multiple_per_day and not daily_average:
        raise IngestError("multiple rows per date but daily averaging disabled")

    data = df[[timestamp_column] + expected].copy()
    if daily_average:
        data = data.groupby(dates.values)[expected].mean()
        timestamps = [pd.Timestamp(t).isoformat() for t in data.index]
        frame = data
    else:
        frame = data.set_index(timestamp_column)[expected]
        timestamps = [t.isoformat() for t in frame.index]

    imputed = {}
    for c in expected:
        n_missing = int(frame[c].isna().sum())
        if n_missing == len(frame):
            raise IngestError(f"column {c!r} has no data at all")
        if n_missing:
            imputed[c] = n_missing
    frame = frame.ffill().bfill()

    return FeaturePanel(
        values=frame.to_numpy(dtype=float),
        feature_names=list(features),
        site_names=list(sites),
        timestamps=timestamps,
        imputed_cells=imputed,
    )


def _detrend(z: np.ndarray) -> np.ndarray:
    t = np.arange(z.size, dtype=float)
    design = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(design, z, rcond=None)
    return z - design @ coef


def preprocess(panel: FeaturePanel,
               zero_offset: float = DEFAULT_ZERO_OFFSET):
    """Per-column log-ratio, detrend and unit mean-square scaling.

    Zero entries get ``zero_offset`` added before the log transform (negative
    entries are an error; convert units upstream). A column whose detrended
    log-ratios are numerically zero (constant or exactly geometric series) is
    left as zeros and flagged. Output has one row fewer than the panel.
    Returns (matrix, PreprocessReport).
    """
    values = panel.values
    n_raw, n_cols = values.shape
    if n_raw < 3:
        raise IngestError(f"need at least 3 rows, got {n_raw}")
    names = panel.column_names()
    out = np.empty((n_raw - 1, n_cols))
    offsets = {}
    degenerate = []
    for j in range(n_cols):
        z = values[:, j].copy()
        zeros = z == 0.0
        if zeros.any():
            z[zeros] += zero_offset
            offsets[names[j]] = int(zeros.sum())
        if np.any(z <= 0.0):
            raise IngestError(
                f"column {names[j]!r} has non-positive values after the zero-offset rule"
            )
        ratios = np.log(z[1:] / z[:-1])
        detrended = _detrend(ratios)
        rms = float(np.sqrt(np.mean(detrended ** 2)))
        raw_rms = float(np.sqrt(np.mean(ratios ** 2)))
        if rms <= DEGENERATE_REL_TOL * max(raw_rms, 1e-300):
            out[:, j] = 0.0
            degenerate.append(names[j])
        else:
            out[:, j] = detrended / rms
    report = PreprocessReport(
        n_in=n_raw,
        n_out=n_raw - 1,
        zero_offsets=offsets,
        degenerate_columns=degenerate,
        imputed_cells=dict(panel.imputed_cells),
        zero_offset_value=zero_offset,
    )
    return out, report
