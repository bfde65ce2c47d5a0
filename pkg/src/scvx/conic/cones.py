"""Jordan-algebra helpers and Nesterov-Todd scaling for R_+^l x SOC_1 x ... x SOC_k.

All functions operate on the inequality part of a cone vector only (the zero
cone is handled as linear equalities by the solver).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Blocks:
    nonneg: int
    soc: tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.nonneg + sum(self.soc)

    @property
    def degree(self) -> int:
        return self.nonneg + len(self.soc)

    def soc_slices(self):
        start = self.nonneg
        for q in self.soc:
            yield slice(start, start + q)
            start += q


def identity(blocks: Blocks) -> np.ndarray:
    e = np.zeros(blocks.dim)
    e[: blocks.nonneg] = 1.0
    for sl in blocks.soc_slices():
        e[sl.start] = 1.0
    return e


def jprod(blocks: Blocks, u, v):
    """Jordan product u o v."""
    out = np.empty(blocks.dim)
    l = blocks.nonneg
    out[:l] = u[:l] * v[:l]
    for sl in blocks.soc_slices():
        a, b = u[sl], v[sl]
        out[sl.start] = a @ b
        out[sl.start + 1 : sl.stop] = a[0] * b[1:] + b[0] * a[1:]
    return out


def jdiv(blocks: Blocks, u, d):
    """Solve u o x = d for x (u strictly inside the cone)."""
    out = np.empty(blocks.dim)
    l = blocks.nonneg
    out[:l] = d[:l] / u[:l]
    for sl in blocks.soc_slices():
        a, r = u[sl], d[sl]
        det = (a[0] - np.linalg.norm(a[1:])) * (a[0] + np.linalg.norm(a[1:]))
        x0 = (a[0] * r[0] - a[1:] @ r[1:]) / det
        out[sl.start] = x0
        out[sl.start + 1 : sl.stop] = (r[1:] - x0 * a[1:]) / a[0]
    return out


def max_shift(blocks: Blocks, v) -> float:
    """Smallest t with v + t e in the closed cone, i.e. minus the smallest eigenvalue."""
    t = -np.inf
    l = blocks.nonneg
    if l:
        t = max(t, float(np.max(-v[:l])))
    for sl in blocks.soc_slices():
        blk = v[sl]
        t = max(t, float(np.linalg.norm(blk[1:]) - blk[0]))
    return t


def max_step(blocks: Blocks, v, dv) -> float:
    """Largest alpha >= 0 with v + alpha*dv in the cone (v strictly interior); inf if unbounded."""
    alpha = np.inf
    l = blocks.nonneg
    if l:
        neg = dv[:l] < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-v[:l][neg] / dv[:l][neg])))
    for sl in blocks.soc_slices():
        alpha = min(alpha, _soc_step(v[sl], dv[sl]))
    return alpha


def _soc_step(x, d):
    if x.size == 1:
        return -x[0] / d[0] if d[0] < 0 else np.inf
    # Reduce to the identity-centred case: step of x + a d equals step of e + a P d,
    # with P the NT-like hyperbolic map sending x/sqrt(x'Jx) to e.
    nx1 = np.linalg.norm(x[1:])
    detx = (x[0] - nx1) * (x[0] + nx1)
    if detx <= 0:
        return 0.0
    rx = np.sqrt(detx)
    xb = x / rx
    # P = [[xb0, -xb1'], [-xb1, I + xb1 xb1'/(1+xb0)]] maps xb to e.
    xb0, xb1 = xb[0], xb[1:]
    t = xb1 @ d[1:]
    p0 = (xb0 * d[0] - t) / rx
    p1 = (d[1:] - xb1 * d[0] + xb1 * t / (1.0 + xb0)) / rx
    # smallest eigenvalue of p is p0 - |p1|; e + a p leaves the cone at 1 + a*lmin = 0
    lmin = p0 - np.linalg.norm(p1)
    return -1.0 / lmin if lmin < 0 else np.inf


class NTScaling:
    """Nesterov-Todd scaling W with W z = W^{-1} s = lambda (W symmetric)."""

    def __init__(self, blocks: Blocks, s, z):
        self.blocks = blocks
        l = blocks.nonneg
        self.d = np.sqrt(s[:l] / z[:l])
        self.soc = []
        for sl in blocks.soc_slices():
            self.soc.append(_soc_nt(s[sl], z[sl]))
        self.lam = self.apply(z)

    def apply(self, v):
        out = np.empty_like(v)
        l = self.blocks.nonneg
        out[:l] = self.d * v[:l]
        for sl, (eta, Wb, _) in zip(self.blocks.soc_slices(), self.soc):
            out[sl] = eta * (Wb @ v[sl])
        return out

    def apply_inv(self, v):
        out = np.empty_like(v)
        l = self.blocks.nonneg
        out[:l] = v[:l] / self.d
        for sl, (eta, _, Wbi) in zip(self.blocks.soc_slices(), self.soc):
            out[sl] = (Wbi @ v[sl]) / eta
        return out

    def squared(self) -> sp.csc_matrix:
        parts = [sp.diags(self.d**2)] if self.blocks.nonneg else []
        for eta, Wb, _ in self.soc:
            parts.append(sp.csc_matrix(eta**2 * (Wb @ Wb)))
        if not parts:
            return sp.csc_matrix((0, 0))
        return sp.block_diag(parts, format="csc")


def _soc_nt(s, z):
    if s.size == 1:
        w = np.sqrt(s[0] / z[0])
        return 1.0, np.array([[w]]), np.array([[1.0 / w]])
    ns1, nz1 = np.linalg.norm(s[1:]), np.linalg.norm(z[1:])
    sdet = np.sqrt((s[0] - ns1) * (s[0] + ns1))
    zdet = np.sqrt((z[0] - nz1) * (z[0] + nz1))
    sb = s / sdet
    zb = z / zdet
    gamma = np.sqrt(0.5 * (1.0 + sb @ zb))
    w = np.empty_like(s)
    w[0] = (sb[0] + zb[0]) / (2.0 * gamma)
    w[1:] = (sb[1:] - zb[1:]) / (2.0 * gamma)
    eta = np.sqrt(sdet / zdet)
    q = s.size
    Wb = np.empty((q, q))
    Wb[0, 0] = w[0]
    Wb[0, 1:] = w[1:]
    Wb[1:, 0] = w[1:]
    Wb[1:, 1:] = np.eye(q - 1) + np.outer(w[1:], w[1:]) / (1.0 + w[0])
    Wbi = Wb.copy()
    Wbi[0, 1:] *= -1.0
    Wbi[1:, 0] *= -1.0
    return eta, Wb, Wbi
