"""Empirical convergence-rate diagnostics for an iterate sequence.

The limit is taken to be the final accepted iterate, so ``e_k = |X^k - X*|``
is exactly zero for the last entry and that entry is excluded from the ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RateEstimate:
    k: np.ndarray
    e: np.ndarray
    q: np.ndarray  # q[k] = e[k+1] / e[k]; nan where undefined
    classification: str  # "sublinear", "linear" or "superlinear"
    q_estimate: float  # last computable ratio

    @property
    def label(self) -> str:
        if self.classification == "linear":
            return f"linear({self.q_estimate:.3g})"
        return self.classification


def error_sequence(iterates, ord=1) -> np.ndarray:
    """``|X^k - X*|`` for stacked iterates (K, n), with ``X*`` the last row."""
    X = np.asarray(iterates, dtype=float)
    if X.ndim != 2:
        raise ValueError("iterates must be a 2-D array")
    return np.linalg.norm(X - X[-1], ord=ord, axis=1)


def estimate_rate(errors, window: int = 3, superlinear_below: float = 0.5) -> RateEstimate:
    """Classify the decay of ``errors`` (``e_k`` over accepted iterations).

    The final entry is the reference point and is dropped from the ratios.
    Superlinear means the last ``window`` computable ratios strictly decrease
    and the last one is below ``superlinear_below``. Linear means the last
    ratio is below one; anything else is sublinear.
    """
    e = np.asarray(errors, dtype=float).ravel()
    if e.size < 4:
        raise ValueError("at least 4 accepted iterates are needed")
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be finite and nonnegative")
    q = np.full(e.size, np.nan)
    body = e[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        q[: body.size - 1] = np.where(body[:-1] > 0, body[1:] / body[:-1], np.nan)
    comp = q[np.isfinite(q)]
    if comp.size == 0:
        raise ValueError("no computable ratios")
    last = float(comp[-1])
    tail = comp[-window:]
    if tail.size == window and np.all(np.diff(tail) < 0) and last < superlinear_below:
        cls = "superlinear"
    elif last < 1.0:
        cls = "linear"
    else:
        cls = "sublinear"
    return RateEstimate(np.arange(e.size), e, q, cls, last)
