"""CSV output for trajectories, iteration histories and rate tables."""

from __future__ import annotations

import csv
from dataclasses import fields
from pathlib import Path

import numpy as np

from .engine import IterationRecord, SolveReport
from .rate import RateEstimate

TRAJECTORY_COLUMNS = ("node", "time", "p1", "p2", "p3", "v1", "v2", "v3", "T1", "T2", "T3", "Gamma")
# wall_time is left out so that the table is byte-identical across runs
RECORD_COLUMNS = tuple(f.name for f in fields(IterationRecord) if f.name != "wall_time")
HISTORY_COLUMNS = RECORD_COLUMNS + ("err",)
RATE_COLUMNS = ("k", "e_k", "q_k")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def _write(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_trajectory(path, x, u, dt: float) -> None:
    """One row per node: index, time, position, velocity, thrust and Gamma."""
    x, u = np.asarray(x), np.asarray(u)
    _write(path, TRAJECTORY_COLUMNS,
           ([i, i * dt, *x[i, :6], *u[i, :4]] for i in range(x.shape[0])))


def iterate_errors(report: SolveReport, ord=1) -> np.ndarray:
    """``|X^k - X*|`` for every accepted iterate, ``X*`` being the final one."""
    X = np.array([t.z for t in report.iterates])
    return np.linalg.norm(X - X[-1], ord=ord, axis=1)


def write_history(path, report: SolveReport) -> None:
    err = iterate_errors(report)
    rows = []
    for rec in report.history:
        rows.append([getattr(rec, name) for name in RECORD_COLUMNS] + [err[rec.k] if rec.k < err.size else np.nan])
    _write(path, HISTORY_COLUMNS, rows)


def write_rate(path, est: RateEstimate | np.ndarray) -> None:
    """Rate table from an estimate, or from raw errors when too short to classify."""
    if not isinstance(est, RateEstimate):
        e = np.asarray(est, dtype=float)
        q = np.full(e.size, np.nan)
        if e.size > 2:
            with np.errstate(divide="ignore", invalid="ignore"):
                q[: e.size - 2] = e[1:-1] / e[:-2]
        _write(path, RATE_COLUMNS, zip(range(e.size), e, q))
        return
    _write(path, RATE_COLUMNS, zip(est.k, est.e, est.q))


def read_history(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and not {"k", "accepted", "err"} <= set(rows[0]):
        raise ValueError(f"{path} is not a history table")
    return rows


def errors_from_history(rows: list[dict]) -> np.ndarray:
    """Accepted-iterate errors recovered from history rows.

    Each distinct ``k`` contributes the error of ``X^k``; the iterate produced
    by an accepted final row is ``X*`` itself and contributes zero.
    """
    seen: dict[int, float] = {}
    for row in rows:
        seen.setdefault(int(row["k"]), float(row["err"]))
    e = [seen[k] for k in sorted(seen)]
    if rows and int(rows[-1]["accepted"]):
        e.append(0.0)
    return np.asarray(e)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
