"""Checkpointed error traces, their CSV form, and log-log slope fitting."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from genoja.errors import NotFittable

DIV = "div"


def log_checkpoints(horizon, count=200):
    """Log-spaced integer checkpoints in ``[1, horizon]``, both ends included, no duplicates."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if count < 1:
        raise ValueError("checkpoint count must be >= 1")
    if horizon == 1 or count == 1:
        return np.array([horizon], dtype=np.int64)
    grid = np.unique(np.rint(np.geomspace(1, horizon, count)).astype(np.int64))
    grid[0], grid[-1] = 1, horizon
    return np.unique(grid)


@dataclass
class Trace:
    """Errors of one or more trials at a shared set of checkpoints.

    ``errors`` has shape ``(n_checkpoints, n_trials)``; NaN marks a trial that
    diverged at or before that checkpoint.
    """

    t: np.ndarray
    errors: np.ndarray
    avg_errors: np.ndarray = None
    samples_consumed: int = 0
    diverged_at: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_trials(self):
        return self.errors.shape[1]

    def mean(self):
        return _nanmean_rows(self.errors)

    def avg_mean(self):
        return None if self.avg_errors is None else _nanmean_rows(self.avg_errors)

    @property
    def all_diverged(self):
        return bool(np.all(np.isnan(self.errors[-1])))

    def to_csv(self, include_meta=True):
        buf = io.StringIO()
        if include_meta:
            for key, value in self.meta.items():
                buf.write(f"# meta: {key}={value}\n")
        cols = ["t"] + [f"trial_{i}" for i in range(self.n_trials)] + ["mean"]
        if self.avg_errors is not None:
            cols.append("avg_mean")
        buf.write(",".join(cols) + "\n")
        mean = self.mean()
        avg = self.avg_mean()
        for i, t in enumerate(self.t):
            cells = [str(int(t))] + [_cell(x) for x in self.errors[i]] + [_cell(mean[i])]
            if avg is not None:
                cells.append(_cell(avg[i]))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        meta = {}
        rows = []
        header = None
        for line in text.splitlines():
            if line.startswith("# meta:"):
                key, _, value = line[len("# meta:") :].strip().partition("=")
                meta[key] = value
            elif header is None:
                header = line.split(",")
            elif line:
                rows.append(line.split(","))
        trial_cols = [i for i, c in enumerate(header) if c.startswith("trial_")]
        t = np.array([int(r[0]) for r in rows], dtype=np.int64)
        errors = np.array([[_parse(r[i]) for i in trial_cols] for r in rows]).reshape(len(rows), len(trial_cols))
        trace = cls(t=t, errors=errors, meta=meta)
        if "avg_mean" in header:
            j = header.index("avg_mean")
            # per-trial averaged errors are not written; keep the mean as a single column
            trace.avg_errors = np.array([[_parse(r[j])] for r in rows])
        return trace


def _nanmean_rows(M):
    out = np.full(M.shape[0], np.nan)
    ok = ~np.isnan(M)
    counts = ok.sum(axis=1)
    sums = np.where(ok, M, 0.0).sum(axis=1)
    np.divide(sums, counts, out=out, where=counts > 0)
    return out


def _cell(x):
    return DIV if np.isnan(x) else repr(float(x))


def _parse(s):
    return np.nan if s == DIV else float(s)


def fit_tail_slope(trace, tail_fraction=0.5, column=None):
    """Least-squares slope of ``log(error)`` against ``log(t)`` over the last checkpoints.

    ``column`` picks the series: trial-mean error by default, or any 1-D
    array aligned with ``trace.t``. Needs at least 10 checkpoints in the
    window, all positive and finite.
    """
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    y = trace.mean() if column is None else np.asarray(column, dtype=float)
    t = np.asarray(trace.t, dtype=float)
    n = int(np.ceil(tail_fraction * len(t)))
    if n < 10:
        raise NotFittable(f"only {n} checkpoints in the tail window; need >= 10")
    t, y = t[-n:], y[-n:]
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise NotFittable("tail window contains zero, negative or diverged errors")
    slope, _ = np.polyfit(np.log(t), np.log(y), 1)
    return float(slope)
