"""The SCvx trust-region loop: convex subproblem, ratio test, radius update."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, TextIO

import numpy as np
import scipy.sparse as sp

from .conic import ConicBuilder, ConicProgram, ConicSolution, SolverSettings, Status, solve
from .ocp import (
    Linearization,
    OCProblem,
    PenaltyWeights,
    Trajectory,
    convex_violation,
    linearize,
    linearized_cost,
    penalty_cost,
)

log = logging.getLogger(__name__)


class TrustRegionNorm(str, enum.Enum):
    ONE = "1"
    TWO = "2"
    INF = "inf"


@dataclass(frozen=True)
class SCvxParams:
    r1: float = 1.0
    lam: float = 1e5
    rho0: float = 0.0
    rho1: float = 0.25
    rho2: float = 0.7
    alpha: float = 2.0
    beta: float = 3.2
    r_l: float = 1e-6
    eps_tol: float = 1e-3
    max_iters: int = 50
    tr_norm: TrustRegionNorm = TrustRegionNorm.ONE
    tr_controls_only: bool = False
    stop_on: str = "dL"  # "dL": predicted reduction, "dJ": realised reduction
    max_rejections: int = 30
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if not isinstance(self.tr_norm, TrustRegionNorm):
            object.__setattr__(self, "tr_norm", TrustRegionNorm(str(self.tr_norm)))
        if not (0.0 <= self.rho0 < self.rho1 < self.rho2 < 1.0):
            raise ValueError("need 0 <= rho0 < rho1 < rho2 < 1")
        if self.alpha <= 1.0 or self.beta <= 1.0:
            raise ValueError("alpha and beta must exceed 1")
        if self.lam <= 0 or self.r_l <= 0 or self.eps_tol <= 0:
            raise ValueError("lam, r_l and eps_tol must be positive")
        if self.r1 < self.r_l:
            raise ValueError("initial radius below the radius floor")
        if self.stop_on not in ("dL", "dJ"):
            raise ValueError("stop_on must be 'dL' or 'dJ'")

    @property
    def weights(self) -> PenaltyWeights:
        return PenaltyWeights(lam=self.lam)


@dataclass
class SCvxState:
    k: int
    z: Trajectory
    r: float
    J: float


@dataclass(frozen=True)
class IterationRecord:
    k: int
    dJ: float
    dL: float
    rho: float
    r_before: float
    r_after: float
    accepted: bool
    status: str
    vc_norm: float
    buffer_norm: float
    step_norm: float
    J: float
    L: float
    wall_time: float

    FIELDS = ("k", "dJ", "dL", "rho", "r", "accepted", "vc_norm", "buffer_norm")

    def log_line(self) -> str:
        return (
            f"{self.k} {self.dJ:.17g} {self.dL:.17g} {self.rho:.17g} {self.r_before:.17g} "
            f"{int(self.accepted)} {self.vc_norm:.17g} {self.buffer_norm:.17g}"
        )


@dataclass
class Subproblem:
    """A built convex subproblem together with where its pieces live."""

    program: ConicProgram
    layout: dict[str, np.ndarray]
    rows: dict[str, np.ndarray]
    lin: Linearization
    radius: float

    def increment(self, sol: ConicSolution) -> np.ndarray:
        return sol.x[self.layout["z"]] - self.lin.ref.z

    def virtual_control(self, sol: ConicSolution) -> np.ndarray:
        return sol.x[self.layout["v"]]

    def buffers(self, sol: ConicSolution) -> np.ndarray:
        return sol.x[self.layout["s_buf"]]


def build_subproblem(prob: OCProblem, ref: Trajectory, r: float, params: SCvxParams, lin: Linearization | None = None) -> Subproblem:
    """Assemble the penalised convex subproblem about ``ref`` with trust-region radius ``r``.

    Variables are the absolute trajectory ``z``, virtual controls ``v``
    (identity channel) with l1 epigraph ``t_v``, nonnegative buffers on the
    linearized path constraints and the trust-region epigraph ``t_d``.
    """
    lin = lin or linearize(prob, ref)
    w = params.weights
    N, nx, ns = prob.N, prob.nx, prob.ns
    z_ref = ref.z
    nz = prob.nz

    b = ConicBuilder()
    X = b.variables((N, nx), "x")
    U = b.variables((prob.n_controls, prob.nu), "u")
    Z = np.arange(nz)
    b.layout["z"] = Z
    V = b.variables((N - 1, nx), "v")
    Tv = b.variables((N - 1, nx), "t_v")
    Sb = b.variables((N, ns), "s_buf")

    # v = defect + G_dyn (z - z_ref)
    b.eq(b.matrix(Z, lin.G_dyn) - b.select(V), lin.G_dyn @ z_ref - lin.defect.ravel(), tag="dynamics")
    b.le(b.select(V) - b.select(Tv), 0.0, tag="vc_epigraph")
    b.le(-b.select(V) - b.select(Tv), 0.0, tag="vc_epigraph")
    if ns:
        b.le(b.matrix(Z, lin.G_con) - b.select(Sb), lin.G_con @ z_ref - lin.con.ravel(), tag="constraints")
        b.le(-b.select(Sb), 0.0, tag="buffer_sign")

    prob.add_convex_constraints(b, X, U)
    n_before_tr = b.n
    tr_idx = U.ravel() if params.tr_controls_only else Z
    _trust_region(b, tr_idx, z_ref[tr_idx], r, params.tr_norm)
    b.layout["tr_aux"] = np.arange(n_before_tr, b.n)

    prob.add_cost(b, X, U, ref)
    b.cost(Tv, w.dynamics(prob))
    if ns:
        b.cost(Sb, w.constraints(prob))
    program, rows = b.build()
    return Subproblem(program, dict(b.layout), rows, lin, r)


def _trust_region(b: ConicBuilder, idx, center, r, norm: TrustRegionNorm):
    if norm is TrustRegionNorm.ONE:
        T = b.variables(idx.size, "t_d")
        b.le(b.select(idx) - b.select(T), center, tag="trust_region")
        b.le(-b.select(idx) - b.select(T), -center, tag="trust_region")
        b.le(b.matrix(T, np.ones((1, T.size))), r, tag="trust_region")
    elif norm is TrustRegionNorm.INF:
        b.le(b.select(idx), center + r, tag="trust_region")
        b.le(-b.select(idx), -center + r, tag="trust_region")
    else:
        M = sp.vstack([sp.csr_matrix((1, b.n)), -b.select(idx)])
        b.soc(M, np.concatenate([[r], -center]), tag="trust_region")


def tr_norm(d, norm: TrustRegionNorm) -> float:
    if norm is TrustRegionNorm.ONE:
        return float(np.sum(np.abs(d)))
    if norm is TrustRegionNorm.INF:
        return float(np.max(np.abs(d), initial=0.0))
    return float(np.linalg.norm(d))


def ratio(dJ: float, dL: float) -> float:
    """Realised over predicted reduction; ``dL`` must be positive."""
    if not dL > 0:
        raise ValueError(f"predicted reduction must be positive, got {dL!r}")
    return dJ / dL


def update_radius(r: float, rho: float, params: SCvxParams) -> tuple[bool, float]:
    """Accept/reject decision and the new radius for ratio ``rho``."""
    if rho < params.rho0:
        return False, max(r / params.alpha, params.r_l)
    if rho < params.rho1:
        r = r / params.alpha
    elif rho >= params.rho2:
        r = params.beta * r
    return True, max(r, params.r_l)


class StopReason(str, enum.Enum):
    CONVERGED = "converged"
    EXACT_STOP = "exact_stop"
    MAX_ITERS = "max_iters"
    SOLVER_FAILURE = "solver_failure"
    REJECTION_CAP = "rejection_cap"
    CONTINUE = "continue"


@dataclass
class StepResult:
    state: SCvxState
    records: list[IterationRecord]
    reason: StopReason
    subproblem: Subproblem | None = None
    solution: ConicSolution | None = None


def step(state: SCvxState, prob: OCProblem, params: SCvxParams, sink: Callable[[IterationRecord], None] | None = None) -> StepResult:
    """One succession, including any rejected retries at a shrinking radius."""
    w = params.weights
    z, r = state.z, state.r
    lin = linearize(prob, z)
    records = []
    rejections = 0
    while True:
        t0 = time.perf_counter()
        sub = build_subproblem(prob, z, r, params, lin)
        sol = solve(sub.program, params.solver)
        if not sol.optimal:
            rec = IterationRecord(state.k, np.nan, np.nan, np.nan, r, r, False, sol.status.value,
                                  np.nan, np.nan, np.nan, state.J, np.nan, time.perf_counter() - t0)
            _emit(records, rec, sink)
            log.warning("subproblem %d ended with status %s", state.k, sol.status.value)
            return StepResult(state, records, StopReason.SOLVER_FAILURE, sub, sol)
        d = sub.increment(sol)
        z_new = z.with_z(z.z + d)
        J_new = penalty_cost(prob, z_new, w)
        L = linearized_cost(prob, lin, d, w)
        dJ = state.J - J_new
        dL = state.J - L
        vc = float(np.sum(np.abs(sub.virtual_control(sol))))
        buf = float(np.sum(np.maximum(0.0, sub.buffers(sol))))
        dn = tr_norm(d if not params.tr_controls_only else d[sub.layout["u"].ravel()], params.tr_norm)

        if params.stop_on == "dL" and dL <= params.eps_tol:
            # converged; the final step is kept only if it passes the ratio test and does not raise J
            rho = dJ / dL if dL > 0 else np.nan
            accepted = bool(dL > 0 and dJ >= 0 and rho >= params.rho0)
            rec = IterationRecord(state.k, dJ, dL, rho, r, r, accepted, sol.status.value, vc, buf, dn,
                                  state.J, L, time.perf_counter() - t0)
            _emit(records, rec, sink)
            new = SCvxState(state.k + 1, z_new, r, J_new) if accepted else state
            return StepResult(new, records, StopReason.CONVERGED, sub, sol)
        if dJ == 0.0:
            rec = IterationRecord(state.k, dJ, dL, np.nan, r, r, False, sol.status.value, vc, buf, dn,
                                  state.J, L, time.perf_counter() - t0)
            _emit(records, rec, sink)
            return StepResult(state, records, StopReason.EXACT_STOP, sub, sol)
        if not dL > 0:
            log.warning("non-positive predicted reduction %.3e at iteration %d", dL, state.k)
            rho = -np.inf
        else:
            rho = ratio(dJ, dL)
        accepted, r_new = update_radius(r, rho, params)
        rec = IterationRecord(state.k, dJ, dL, rho, r, r_new, accepted, sol.status.value, vc, buf, dn,
                              state.J, L, time.perf_counter() - t0)
        _emit(records, rec, sink)
        if accepted:
            new = SCvxState(state.k + 1, z_new, r_new, J_new)
            reason = StopReason.CONTINUE
            if params.stop_on == "dJ" and dJ <= params.eps_tol:
                reason = StopReason.CONVERGED
            return StepResult(new, records, reason, sub, sol)
        rejections += 1
        if rejections >= params.max_rejections:
            log.warning("%d consecutive rejections at iteration %d", rejections, state.k)
            return StepResult(replace(state, r=r_new), records, StopReason.REJECTION_CAP, sub, sol)
        r = r_new


def _emit(records, rec, sink):
    records.append(rec)
    if sink is not None:
        sink(rec)


@dataclass
class KKTReport:
    stationarity: float
    dynamics_defect: float
    constraint_violation: float
    convex_violation: float
    vc_norm: float
    buffer_norm: float
    trust_region_active: bool
    multipliers_dynamics: np.ndarray
    multipliers_constraints: np.ndarray

    @property
    def max_violation(self) -> float:
        return max(self.dynamics_defect, self.constraint_violation, self.convex_violation)


@dataclass
class SolveReport:
    trajectory: Trajectory
    converged: bool
    reason: StopReason
    history: list[IterationRecord]
    iterates: list[Trajectory]
    kkt: KKTReport | None
    subproblem: Subproblem | None = None
    solution: ConicSolution | None = None

    @property
    def accepted(self) -> list[IterationRecord]:
        return [h for h in self.history if h.accepted]


def run(prob: OCProblem, z_init: Trajectory, params: SCvxParams, log_sink: TextIO | None = None) -> SolveReport:
    """Iterate successions from ``z_init`` until convergence, failure or ``max_iters``.

    ``z_init`` must lie in the convex sets but need not satisfy the dynamics.
    When ``log_sink`` is given, every record is written to it as one line.
    """
    w = params.weights
    state = SCvxState(0, z_init.copy(), params.r1, penalty_cost(prob, z_init, w))
    history: list[IterationRecord] = []
    iterates = [state.z]
    sink = None
    if log_sink is not None:
        log_sink.write(" ".join(IterationRecord.FIELDS) + "\n")

        def sink(rec):
            log_sink.write(rec.log_line() + "\n")

    reason = StopReason.MAX_ITERS
    last: StepResult | None = None
    for _ in range(params.max_iters):
        res = step(state, prob, params, sink)
        history.extend(res.records)
        if res.state is not state and res.state.k > state.k:
            iterates.append(res.state.z)
        state = res.state
        last = res
        for rec in res.records:
            log.info("k=%d dJ=%.3e dL=%.3e rho=%.3f r=%.3g accepted=%s vc=%.2e", rec.k, rec.dJ, rec.dL,
                     rec.rho, rec.r_before, rec.accepted, rec.vc_norm)
        if res.reason is not StopReason.CONTINUE:
            reason = res.reason
            break
    converged = reason in (StopReason.CONVERGED, StopReason.EXACT_STOP)
    kkt = None
    if last is not None and last.solution is not None and last.solution.optimal:
        kkt = kkt_report(prob, state.z, last.subproblem, last.solution, params)
    return SolveReport(state.z, converged, reason, history, iterates, kkt,
                       last.subproblem if last else None, last.solution if last else None)


def kkt_report(prob: OCProblem, z_final: Trajectory, sub: Subproblem, sol: ConicSolution, params: SCvxParams) -> KKTReport:
    """First-order optimality residual at ``z_final`` using the last subproblem's duals.

    The subproblem is rebuilt about ``z_final`` (same structure, Jacobians
    re-evaluated) and ``c + A' y`` is measured with the trust-region rows and
    their auxiliary columns removed.
    """
    if sol.y is None or not np.all(np.isfinite(sol.y)):
        raise ValueError("subproblem duals are missing")
    lin = linearize(prob, z_final)
    rebuilt = build_subproblem(prob, z_final, sub.radius, params, lin)
    prog = rebuilt.program
    y = sol.y.copy()
    tr_rows = rebuilt.rows.get("trust_region", np.empty(0, dtype=int))
    tr_active = bool(np.max(np.abs(y[tr_rows]), initial=0.0) > 1e-6 * max(1.0, np.max(np.abs(y))))
    y[tr_rows] = 0.0
    grad = prog.c + prog.A.T @ y
    keep = np.ones(prog.n, dtype=bool)
    keep[rebuilt.layout["tr_aux"]] = False
    stationarity = float(np.max(np.abs(grad[keep]), initial=0.0))

    F, _, _, _ = prob.dynamics(z_final)
    s, _, _ = prob.constraints(z_final)
    cv = convex_violation(prob, z_final)
    mu_dyn = y[rebuilt.rows["dynamics"]].reshape(prob.N - 1, prob.nx)
    mu_con = y[rebuilt.rows["constraints"]].reshape(prob.N, prob.ns) if prob.ns else np.zeros((prob.N, 0))
    return KKTReport(
        stationarity=stationarity,
        dynamics_defect=float(np.max(np.abs(z_final.x[1:] - F), initial=0.0)),
        constraint_violation=float(np.max(s, initial=0.0)) if prob.ns else 0.0,
        convex_violation=float(np.max(cv, initial=0.0)),
        vc_norm=float(np.sum(np.abs(sub.virtual_control(sol)))),
        buffer_norm=float(np.sum(np.maximum(0.0, sub.buffers(sol)))),
        trust_region_active=tr_active,
        multipliers_dynamics=mu_dyn,
        multipliers_constraints=mu_con,
    )
