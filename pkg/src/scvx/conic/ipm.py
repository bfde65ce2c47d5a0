"""Primal-dual interior-point method on the homogeneous self-dual embedding.

Mehrotra predictor-corrector with Nesterov-Todd scaling. The data are first
equilibrated (Ruiz scaling, uniform within each second-order cone) and all
stopping tests are made on the unscaled iterate. Zero-cone rows are
treated as linear equalities, the remaining rows as ``G x + s = h``. The KKT
system is factored with a sparse LU after static regularisation and refined
iteratively against the unregularised matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import Blocks, NTScaling, identity, jdiv, jprod, max_shift, max_step
from .program import ConicProgram, ConicSolution, Residuals, Status, residuals, validate_program

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-8
    max_iters: int = 100
    infeas_tol: float = 1e-8
    step_fraction: float = 0.99
    reg: float = 1e-10
    refine_steps: int = 6
    equilibrate_iters: int = 10


class _KKT:
    """Factored ``[[0, A', G'], [A, 0, 0], [G, 0, -W^2]]``."""

    def __init__(self, A, G, W2, reg, refine_steps):
        n, p, mc = A.shape[1], A.shape[0], G.shape[0]
        self.sizes = (n, p, mc)
        K = sp.bmat([[None, A.T, G.T], [A, None, None], [G, None, -W2]], format="csc")
        if K.shape != (n + p + mc,) * 2:
            K = _pad(K, n + p + mc)
        R = sp.diags(np.concatenate([np.full(n, reg), np.full(p + mc, -reg)]))
        self.K = K
        Kr = sp.csc_matrix(K + R)
        # symmetric Ruiz scaling keeps pivots comparable when W^2 spans many decades
        S = np.ones(K.shape[0])
        for _ in range(8):
            M = sp.diags(S) @ Kr @ sp.diags(S)
            rn = np.asarray(abs(M).max(axis=1).todense()).ravel()
            rn[rn == 0] = 1.0
            S = S / np.sqrt(rn)
        self.S = S
        Ks = sp.csc_matrix(sp.diags(S) @ Kr @ sp.diags(S))
        self.lu = spla.splu(Ks, permc_spec="COLAMD", options={"SymmetricMode": False})
        self.refine_steps = refine_steps
        self.worst = 0.0  # largest relative residual left after refinement

    def _base(self, rhs):
        return self.S * self.lu.solve(self.S * rhs)

    def solve(self, rhs):
        x = self._base(rhs)
        scale = max(1.0, float(np.max(np.abs(rhs))))
        for _ in range(self.refine_steps):
            r = rhs - self.K @ x
            if np.max(np.abs(r)) <= 1e-15 * scale:
                break
            x = x + self._base(r)
        r = rhs - self.K @ x
        self.worst = max(self.worst, float(np.max(np.abs(r))) / scale)
        return x


def _pad(K, size):
    K = K.tocoo()
    return sp.csc_matrix((K.data, (K.row, K.col)), shape=(size, size))


def solve(prog: ConicProgram, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve ``min c'x s.t. A x + s = b, s in K``.

    Returns a :class:`ConicSolution`; never raises on a well-formed program.
    """
    settings = settings or SolverSettings()
    findings = validate_program(prog)
    if findings:
        raise ValueError("; ".join(findings))
    try:
        return _solve(prog, settings)
    except (np.linalg.LinAlgError, RuntimeError, FloatingPointError, ZeroDivisionError) as exc:
        log.debug("conic solve failed: %s", exc)
        n, m = prog.n, prog.m
        nan = float("nan")
        return ConicSolution(
            Status.NUMERICAL_FAILURE, np.full(n, nan), np.full(m, nan), np.full(m, nan), nan,
            Residuals(nan, nan, nan), info={"error": str(exc)},
        )


def _equilibrate(prog: ConicProgram, iters: int):
    """Scaled copy ``(E A D, E b, sc D c)`` and the factors ``D, E, sc``."""
    n, m = prog.n, prog.m
    D, E = np.ones(n), np.ones(m)
    A = prog.A.tocsc()
    starts = prog.cones.zero + prog.cones.nonneg + np.concatenate([[0], np.cumsum(prog.cones.soc)])
    for _ in range(iters):
        M = sp.diags(E) @ A @ sp.diags(D)
        col = np.asarray(abs(M).max(axis=0).todense()).ravel() if m else np.zeros(n)
        row = np.asarray(abs(M).max(axis=1).todense()).ravel() if n else np.zeros(m)
        for a, z in zip(starts[:-1], starts[1:]):
            row[a:z] = row[a:z].max()
        col[col == 0] = 1.0
        row[row == 0] = 1.0
        D = np.clip(D / np.sqrt(col), 1e-4, 1e4)
        E = np.clip(E / np.sqrt(row), 1e-4, 1e4)
        if max(abs(1 - col).max(initial=0), abs(1 - row).max(initial=0)) < 1e-3:
            break
    cmax = float(np.max(np.abs(D * prog.c), initial=0.0))
    sc = float(np.clip(1.0 / cmax, 1e-4, 1e4)) if cmax > 0 else 1.0
    scaled = ConicProgram(sc * D * prog.c, sp.diags(E) @ A @ sp.diags(D), E * prog.b, prog.cones)
    return scaled, D, E, sc


def _solve(orig: ConicProgram, st: SolverSettings) -> ConicSolution:
    prog, D, E, sc = _equilibrate(orig, st.equilibrate_iters)
    cones = prog.cones
    p = cones.zero
    A = prog.A[:p, :].tocsc() if p else sp.csc_matrix((0, prog.n))
    G = prog.A[p:, :].tocsc()
    b, h, c = prog.b[:p], prog.b[p:], prog.c
    n, mc = prog.n, h.size
    blocks = Blocks(cones.nonneg, cones.soc)
    e = identity(blocks)
    deg = blocks.degree

    # Starting point from two least-squares-like solves with W = I.
    kkt0 = _KKT(A, G, sp.identity(mc, format="csc"), st.reg, st.refine_steps)
    sol = kkt0.solve(np.concatenate([np.zeros(n), b, h]))
    x = sol[:n]
    s = -sol[n + p :]
    sol = kkt0.solve(np.concatenate([-c, np.zeros(p), np.zeros(mc)]))
    y = sol[n : n + p]
    z = sol[n + p :]
    if mc:
        a = max_shift(blocks, s)
        if a >= -1e-8:
            s = s + (1.0 + a) * e
        a = max_shift(blocks, z)
        if a >= -1e-8:
            z = z + (1.0 + a) * e
    tau, kappa = 1.0, 1.0

    best = None
    status = Status.MAX_ITERS
    it = 0
    for it in range(st.max_iters + 1):
        rx = A.T @ y + G.T @ z + c * tau
        ry = -(A @ x) + b * tau
        rz = s + G @ x - h * tau
        rt = kappa + c @ x + b @ y + h @ z
        mu = (s @ z + tau * kappa) / (deg + 1)

        cand = _candidate(orig, D, E, sc, x, y, z, s, tau)
        if best is None or cand.residuals.max() < best.residuals.max():
            best = cand
        if cand.residuals.max() <= st.tol:
            status = Status.OPTIMAL
            best = cand
            break
        cert = _certificate(A, G, b, h, c, x, y, z, s, st.infeas_tol)
        if cert is not None:
            status = cert
            break
        if it == st.max_iters:
            break

        W = NTScaling(blocks, s, z)
        lam = W.lam
        W2 = W.squared()
        # escalate the static regularisation when refinement cannot recover accuracy
        for reg in (st.reg, max(st.reg, 1e-8), max(st.reg, 1e-6)):
            kkt = _KKT(A, G, W2, reg, st.refine_steps)
            d, alpha = _direction(kkt, blocks, W, lam, e, mu, x, y, z, s, tau, kappa, rx, ry, rz, rt, b, h, c, st)
            if kkt.worst <= 1e-6:
                break
        else:
            log.debug("KKT solve lost accuracy (%.1e) at iteration %d", kkt.worst, it)
            status = Status.NUMERICAL_FAILURE
            break
        if not np.isfinite(alpha) or alpha <= 1e-12:
            status = Status.NUMERICAL_FAILURE
            break
        x = x + alpha * d[0]
        y = y + alpha * d[1]
        z = z + alpha * d[2]
        tau = tau + alpha * d[3]
        s = s + alpha * d[4]
        kappa = kappa + alpha * d[5]
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            status = Status.NUMERICAL_FAILURE
            break

    if status in (Status.PRIMAL_INFEASIBLE, Status.DUAL_INFEASIBLE):
        out = _candidate(orig, D, E, sc, x, y, z, s, 1.0)
        out.status = status
        out.iterations = it
        return out
    best.status = status
    best.iterations = it
    best.info["tau"] = tau
    best.info["kappa"] = kappa
    return best


def _direction(kkt, blocks, W, lam, e, mu, x, y, z, s, tau, kappa, rx, ry, rz, rt, b, h, c, st):
    """Mehrotra predictor-corrector search direction and its step length."""
    n, p = x.size, y.size
    u1 = kkt.solve(np.concatenate([-c, b, h]))
    x1, y1, z1 = u1[:n], u1[n : n + p], u1[n + p :]
    den = -kappa / tau + c @ x1 + b @ y1 + h @ z1

    def newton(dx, dy, dz, dt, ds, dk):
        q = jdiv(blocks, lam, ds)
        u2 = kkt.solve(np.concatenate([dx, -dy, dz - W.apply(q)]))
        x2, y2, z2 = u2[:n], u2[n : n + p], u2[n + p :]
        dtau = (dt - dk / tau - c @ x2 - b @ y2 - h @ z2) / den
        ddz = z2 + dtau * z1
        dds = W.apply(q - W.apply(ddz))
        dkap = (dk - kappa * dtau) / tau
        return x2 + dtau * x1, y2 + dtau * y1, ddz, dtau, dds, dkap

    def step_len(d):
        _, _, ddz, dtau, dds, dkap = d
        a = min(max_step(blocks, s, dds), max_step(blocks, z, ddz))
        if dtau < 0:
            a = min(a, -tau / dtau)
        if dkap < 0:
            a = min(a, -kappa / dkap)
        return a

    aff = newton(-rx, -ry, -rz, -rt, -jprod(blocks, lam, lam), -tau * kappa)
    a_aff = min(1.0, step_len(aff))
    sigma = (1.0 - a_aff) ** 3
    corr = jprod(blocks, W.apply_inv(aff[4]), W.apply(aff[2]))
    ds = -jprod(blocks, lam, lam) - corr + sigma * mu * e
    dk = -tau * kappa - aff[3] * aff[5] + sigma * mu
    f = 1.0 - sigma
    d = newton(-f * rx, -f * ry, -f * rz, -f * rt, ds, dk)
    return d, min(1.0, st.step_fraction * step_len(d))


def _candidate(prog, D, E, sc, x, y, z, s, tau) -> ConicSolution:
    p = prog.cones.zero
    xs = D * x / tau
    ys = E * np.concatenate([y, z]) / (sc * tau)
    ss = np.concatenate([np.zeros(p), s]) / (E * tau)
    sol = ConicSolution(Status.MAX_ITERS, xs, ys, ss, float(prog.c @ xs), Residuals(0.0, 0.0, 0.0))
    sol.residuals = residuals(prog, sol)
    return sol


def _certificate(A, G, b, h, c, x, y, z, s, tol):
    by = b @ y + h @ z
    if by < 0:
        dres = np.linalg.norm(np.concatenate([A.T @ y + G.T @ z])) / -by
        if dres <= tol:
            return Status.PRIMAL_INFEASIBLE
    cx = c @ x
    if cx < 0:
        pres = np.linalg.norm(np.concatenate([A @ x, G @ x + s])) / -cx
        if pres <= tol:
            return Status.DUAL_INFEASIBLE
    return None
