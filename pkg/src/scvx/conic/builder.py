"""Incremental assembly of a :class:`ConicProgram` from named variable blocks."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .program import ConeSpec, ConicProgram


class ConicBuilder:
    """Collects variables, a linear objective and cone-constrained row blocks.

    Every constraint block is ``rhs - M x  in  cone`` where ``M`` is a sparse
    matrix over the variables created so far. Rows are re-ordered into the
    canonical zero / nonneg / soc layout by :meth:`build`, which also returns a
    map from block tag to row indices so duals can be recovered per block.
    """

    def __init__(self):
        self.n = 0
        self.layout: dict[str, np.ndarray] = {}
        self._cost: list[tuple[np.ndarray, np.ndarray]] = []
        self._blocks = {"zero": [], "nonneg": [], "soc": []}

    def variables(self, shape, name: str | None = None) -> np.ndarray:
        count = int(np.prod(shape))
        idx = np.arange(self.n, self.n + count).reshape(shape)
        self.n += count
        if name is not None:
            self.layout[name] = idx
        return idx

    def select(self, idx, coef=1.0) -> sp.csr_matrix:
        """Rows ``coef_k * x[idx_k]``, one row per selected variable."""
        idx = np.asarray(idx).ravel()
        vals = _flat_coef(coef, idx.size)
        return sp.csr_matrix((vals, (np.arange(idx.size), idx)), shape=(idx.size, self.n))

    def matrix(self, cols, M) -> sp.csr_matrix:
        """Embed a dense or sparse block ``M`` acting on variables ``cols``."""
        M = sp.coo_matrix(M)
        cols = np.asarray(cols).ravel()
        return sp.csr_matrix((M.data, (M.row, cols[M.col])), shape=(M.shape[0], self.n))

    def cost(self, idx, coef) -> None:
        idx = np.asarray(idx).ravel()
        self._cost.append((idx, _flat_coef(coef, idx.size)))

    def eq(self, M, rhs, tag: str | None = None) -> None:
        """``M x = rhs``."""
        self._add("zero", M, rhs, tag)

    def le(self, M, rhs, tag: str | None = None) -> None:
        """``M x <= rhs`` componentwise."""
        self._add("nonneg", M, rhs, tag)

    def soc(self, M, rhs, tag: str | None = None) -> None:
        """``rhs - M x`` in the second-order cone (first entry is the bound)."""
        self._add("soc", M, rhs, tag)

    def _add(self, kind, M, rhs, tag):
        M = sp.csr_matrix(M)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (M.shape[0],)).copy()
        self._blocks[kind].append((M, rhs, tag))

    def build(self) -> tuple[ConicProgram, dict[str, np.ndarray]]:
        c = np.zeros(self.n)
        for idx, coef in self._cost:
            np.add.at(c, idx, coef)
        mats, rhss, rows = [], [], {}
        soc_sizes = []
        offset = 0
        counts = {}
        for kind in ("zero", "nonneg", "soc"):
            counts[kind] = 0
            for M, rhs, tag in self._blocks[kind]:
                k = M.shape[0]
                if M.shape[1] < self.n:
                    M = sp.hstack([M, sp.csr_matrix((k, self.n - M.shape[1]))], format="csr")
                mats.append(M)
                rhss.append(rhs)
                if tag is not None:
                    prev = rows.get(tag, np.empty(0, dtype=int))
                    rows[tag] = np.concatenate([prev, np.arange(offset, offset + k)])
                if kind == "soc":
                    soc_sizes.append(k)
                offset += k
                counts[kind] += k
        A = sp.vstack(mats, format="csc") if mats else sp.csc_matrix((0, self.n))
        b = np.concatenate(rhss) if rhss else np.zeros(0)
        cones = ConeSpec(counts["zero"], counts["nonneg"], tuple(soc_sizes))
        return ConicProgram(c, A, b, cones), rows


def _flat_coef(coef, size):
    coef = np.asarray(coef, dtype=float)
    if coef.size == size:
        return coef.ravel().copy()
    return np.broadcast_to(coef, (size,)).copy()
