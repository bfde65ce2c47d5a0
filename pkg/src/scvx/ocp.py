"""Discrete-time non-convex optimal control problems and their exact penalty costs.

A problem is described by oracles: a convex stage cost, dynamics
``x_{i+1} = f(x_i, u_i[, u_{i+1}])`` and non-convex path constraints
``s(x_i, u_i) <= 0``, all with analytic Jacobians, plus convex state/control
sets written directly as conic rows. Everything is also available in the
stacked variable ``z = [x; u]`` used by the algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic import ConicBuilder


@dataclass
class Trajectory:
    x: np.ndarray  # (N, nx)
    u: np.ndarray  # (N - 1, nu), or (N, nu) for first-order-hold problems

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x.ravel(), self.u.ravel()])

    def with_z(self, z) -> "Trajectory":
        z = np.asarray(z, dtype=float)
        k = self.x.size
        return Trajectory(z[:k].reshape(self.x.shape), z[k:].reshape(self.u.shape))

    def copy(self) -> "Trajectory":
        return Trajectory(self.x.copy(), self.u.copy())


@dataclass
class PenaltyWeights:
    """Exact-penalty weights.

    ``lam`` applies to every dynamics defect and non-convex constraint unless
    overridden per entry by ``lam_dyn`` (N-1, nx) or ``lam_con`` (N, ns).
    ``tau`` penalises violation of the convex sets, which are otherwise kept as
    explicit constraints; it is ``None`` by default.
    """

    lam: float = 1e5
    lam_dyn: np.ndarray | None = None
    lam_con: np.ndarray | None = None
    tau: float | None = None

    def __post_init__(self):
        for w in (self.lam, self.lam_dyn, self.lam_con, self.tau):
            if w is not None and np.any(np.asarray(w) < 0):
                raise ValueError("penalty weights must be nonnegative")

    def dynamics(self, prob: "OCProblem") -> np.ndarray:
        if self.lam_dyn is not None:
            return np.broadcast_to(self.lam_dyn, (prob.N - 1, prob.nx))
        return np.full((prob.N - 1, prob.nx), float(self.lam))

    def constraints(self, prob: "OCProblem") -> np.ndarray:
        if self.lam_con is not None:
            return np.broadcast_to(self.lam_con, (prob.N, prob.ns))
        return np.full((prob.N, prob.ns), float(self.lam))


class OCProblem:
    """Base class for a non-convex optimal control problem.

    Subclasses set ``N``, ``nx``, ``nu``, ``ns`` and implement :meth:`step`,
    :meth:`stage_cost` and, when ``ns > 0``, :meth:`path_constraint`. With
    ``foh = True`` controls live on all N nodes and the dynamics of interval
    ``i`` also depend on ``u_{i+1}``.
    """

    N: int
    nx: int
    nu: int
    ns: int = 0
    foh: bool = False

    @property
    def n_controls(self) -> int:
        return self.N if self.foh else self.N - 1

    @property
    def nz(self) -> int:
        return self.nx * self.N + self.nu * self.n_controls

    def control_at(self, traj: Trajectory, i: int):
        return traj.u[i] if i < self.n_controls else None

    # -- oracles -----------------------------------------------------------
    def step(self, i, x, u, u_next):
        """Return ``f``, ``A = df/dx``, ``B = df/du`` and ``B_next = df/du_next`` (or None)."""
        raise NotImplementedError

    def stage_cost(self, i, x, u):
        """Return ``phi(x_i, u_i)`` and its gradients; ``u`` is None at a node without control."""
        raise NotImplementedError

    def path_constraint(self, i, x, u):
        """Return ``s`` (ns,), ``S`` (ns, nx) and ``Q`` (ns, nu)."""
        return np.zeros(0), np.zeros((0, self.nx)), np.zeros((0, self.nu))

    def add_convex_constraints(self, builder: ConicBuilder, X, U) -> None:
        """Add the convex sets X_i, U_i as conic rows on variable index arrays."""

    def add_cost(self, builder: ConicBuilder, X, U, ref: Trajectory) -> None:
        """Add the (convex) cost to the subproblem objective.

        The default adds the first-order expansion at ``ref`` up to a constant,
        which is exact for linear costs. Nonlinear convex costs should override
        this with an exact conic representation.
        """
        gx, gu = self.cost_gradient(ref)
        builder.cost(X, gx)
        builder.cost(U, gu)

    # -- batch evaluation ----------------------------------------------------
    def dynamics(self, traj: Trajectory):
        """Stacked ``F`` (N-1, nx), ``A``, ``B`` and ``B_next`` over all intervals."""
        K, nx, nu = self.N - 1, self.nx, self.nu
        F = np.empty((K, nx))
        A = np.empty((K, nx, nx))
        B = np.empty((K, nx, nu))
        Bn = np.zeros((K, nx, nu)) if self.foh else None
        for i in range(K):
            u_next = traj.u[i + 1] if self.foh else None
            f, a, b, bn = self.step(i, traj.x[i], traj.u[i], u_next)
            F[i], A[i], B[i] = f, a, b
            if self.foh:
                Bn[i] = bn
        return F, A, B, Bn

    def constraints(self, traj: Trajectory):
        N, ns = self.N, self.ns
        s = np.empty((N, ns))
        S = np.empty((N, ns, self.nx))
        Q = np.zeros((N, ns, self.nu))
        for i in range(N):
            u = self.control_at(traj, i)
            si, Si, Qi = self.path_constraint(i, traj.x[i], u)
            s[i], S[i] = si, Si
            if u is not None:
                Q[i] = Qi
        return s, S, Q

    def cost(self, traj: Trajectory) -> float:
        return float(sum(self.stage_cost(i, traj.x[i], self.control_at(traj, i))[0] for i in range(self.N)))

    def cost_gradient(self, traj: Trajectory):
        gx = np.zeros_like(traj.x)
        gu = np.zeros_like(traj.u)
        for i in range(self.N):
            u = self.control_at(traj, i)
            _, gxi, gui = self.stage_cost(i, traj.x[i], u)
            gx[i] = gxi
            if u is not None:
                gu[i] = gui
        return gx, gu

    def initial_guess(self) -> Trajectory:
        raise NotImplementedError


# -- stacked-variable view ----------------------------------------------------


@dataclass
class Linearization:
    """Values and z-space Jacobians of the dynamics defect and path constraints at a point."""

    ref: Trajectory
    defect: np.ndarray  # (N-1, nx): x_{i+1} - f(...)
    G_dyn: sp.csr_matrix  # ((N-1) nx, nz)
    con: np.ndarray  # (N, ns)
    G_con: sp.csr_matrix  # (N ns, nz)
    F: np.ndarray
    A: np.ndarray
    B: np.ndarray
    B_next: np.ndarray | None
    S: np.ndarray
    Q: np.ndarray


def linearize(prob: OCProblem, traj: Trajectory) -> Linearization:
    F, A, B, Bn = prob.dynamics(traj)
    s, S, Q = prob.constraints(traj)
    for name, arr in (("A", A), ("B", B), ("S", S), ("Q", Q)):
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite Jacobian {name}")
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(s))):
        raise FloatingPointError("non-finite oracle output")
    N, nx, nu, ns = prob.N, prob.nx, prob.nu, prob.ns
    xoff = lambda i: i * nx  # noqa: E731
    uoff = lambda i: N * nx + i * nu  # noqa: E731

    rows, cols, vals = [], [], []

    def put(r0, c0, M):
        rr, cc = np.indices(M.shape)
        rows.append((r0 + rr).ravel())
        cols.append((c0 + cc).ravel())
        vals.append(M.ravel())

    eye = np.eye(nx)
    for i in range(N - 1):
        r0 = i * nx
        put(r0, xoff(i + 1), eye)
        put(r0, xoff(i), -A[i])
        put(r0, uoff(i), -B[i])
        if prob.foh:
            put(r0, uoff(i + 1), -Bn[i])
    G_dyn = _csr(rows, cols, vals, ((N - 1) * nx, prob.nz))

    rows, cols, vals = [], [], []
    if ns:
        for i in range(N):
            put(i * ns, xoff(i), S[i])
            if i < prob.n_controls:
                put(i * ns, uoff(i), Q[i])
    G_con = _csr(rows, cols, vals, (N * ns, prob.nz))
    return Linearization(traj, traj.x[1:] - F, G_dyn, s, G_con, F, A, B, Bn, S, Q)


def _csr(rows, cols, vals, shape):
    if not rows:
        return sp.csr_matrix(shape)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape)


def convex_violation(prob: OCProblem, traj: Trajectory) -> np.ndarray:
    """Per-row (linear) or per-cone (SOC) violation of the convex sets at ``traj``.

    Computed by writing the convex sets over fixed variables and measuring
    ``b - A z`` against the cones.
    """
    prog, _ = _convex_rows(prob)
    return _cone_residual(prog, traj.z)


def _convex_rows(prob: OCProblem):
    builder = ConicBuilder()
    X = builder.variables((prob.N, prob.nx), "x")
    U = builder.variables((prob.n_controls, prob.nu), "u")
    prob.add_convex_constraints(builder, X, U)
    return builder.build()


def _cone_residual(prog, z):
    s = prog.b - prog.A @ z
    cones = prog.cones
    out = [np.abs(s[: cones.zero]), np.maximum(0.0, -s[cones.zero : cones.zero + cones.nonneg])]
    start = cones.zero + cones.nonneg
    for q in cones.soc:
        blk = s[start : start + q]
        out.append(np.array([max(0.0, np.linalg.norm(blk[1:]) - blk[0])]))
        start += q
    return np.concatenate(out) if out else np.zeros(0)


def _convex_linearized(prog, z, d):
    """First-order model of :func:`_cone_residual` at ``z`` in direction ``d`` (inside max/abs)."""
    s = prog.b - prog.A @ z
    ds = -(prog.A @ d)
    cones = prog.cones
    zc, nn = cones.zero, cones.nonneg
    out = [np.abs(s[:zc] + ds[:zc]), np.maximum(0.0, -(s[zc : zc + nn] + ds[zc : zc + nn]))]
    start = zc + nn
    for q in cones.soc:
        blk, dblk = s[start : start + q], ds[start : start + q]
        nrm = np.linalg.norm(blk[1:])
        grad1 = blk[1:] / nrm if nrm > 0 else np.zeros(q - 1)
        lin = nrm - blk[0] + grad1 @ dblk[1:] - dblk[0]
        out.append(np.array([max(0.0, lin)]))
        start += q
    return np.concatenate(out)


# -- penalty costs --------------------------------------------------------------


def penalty_cost(prob: OCProblem, traj: Trajectory, w: PenaltyWeights) -> float:
    """Nonlinear exact-penalty cost J: cost + weighted l1 dynamics defect + weighted hinge of s."""
    F, _, _, _ = prob.dynamics(traj)
    s, _, _ = prob.constraints(traj)
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(s))):
        raise FloatingPointError("non-finite oracle output")
    J = prob.cost(traj)
    J += float(np.sum(w.dynamics(prob) * np.abs(traj.x[1:] - F)))
    if prob.ns:
        J += float(np.sum(w.constraints(prob) * np.maximum(0.0, s)))
    if w.tau is not None:
        J += float(w.tau * np.sum(convex_violation(prob, traj)))
    return J


def linearized_cost(
    prob: OCProblem,
    ref: Trajectory | Linearization,
    d,
    w: PenaltyWeights,
    linearize_cost: bool = False,
) -> float:
    """Convex penalty model L^k(d) about ``ref`` with constraints linearized inside |.| and max(0, .).

    The cost term is evaluated exactly at ``ref + d`` (as in the convex
    subproblem) unless ``linearize_cost`` is set, in which case its first-order
    expansion is used.
    """
    lin = ref if isinstance(ref, Linearization) else linearize(prob, ref)
    traj = lin.ref
    d = np.asarray(d, dtype=float).ravel()
    if d.size != prob.nz:
        raise ValueError(f"increment has length {d.size}, expected {prob.nz}")
    if not np.all(np.isfinite(d)):
        raise FloatingPointError("non-finite increment")
    if linearize_cost:
        gx, gu = prob.cost_gradient(traj)
        L = prob.cost(traj) + float(np.concatenate([gx.ravel(), gu.ravel()]) @ d)
    else:
        L = prob.cost(traj.with_z(traj.z + d))
    v = lin.defect.ravel() + lin.G_dyn @ d
    L += float(np.sum(w.dynamics(prob).ravel() * np.abs(v)))
    if prob.ns:
        sl = lin.con.ravel() + lin.G_con @ d
        L += float(np.sum(w.constraints(prob).ravel() * np.maximum(0.0, sl)))
    if w.tau is not None:
        prog, _ = _convex_rows(prob)
        L += float(w.tau * np.sum(_convex_linearized(prog, traj.z, d)))
    return L


# -- derivative checks ------------------------------------------------------------


def check_jacobians(prob: OCProblem, traj: Trajectory, h: float = 1e-6) -> float:
    """Worst relative error between analytic z-space Jacobians and central differences.

    Covers the dynamics map, the path constraints and the cost gradient. The
    relative error of each Jacobian is ``max|J_fd - J| / max(1, max|J|)``.
    """
    lin = linearize(prob, traj)
    z0 = traj.z
    nz = prob.nz

    def values(z):
        t = traj.with_z(z)
        F, _, _, _ = prob.dynamics(t)
        s, _, _ = prob.constraints(t)
        return (t.x[1:] - F).ravel(), s.ravel(), np.array([prob.cost(t)])

    base = values(z0)
    fd = [np.empty((v.size, nz)) for v in base]
    for j in range(nz):
        e = np.zeros(nz)
        e[j] = h
        plus, minus = values(z0 + e), values(z0 - e)
        for k in range(3):
            fd[k][:, j] = (plus[k] - minus[k]) / (2 * h)
    gx, gu = prob.cost_gradient(traj)
    analytic = [lin.G_dyn.toarray(), lin.G_con.toarray(), np.concatenate([gx.ravel(), gu.ravel()])[None, :]]
    worst = 0.0
    for a, f in zip(analytic, fd):
        if a.size:
            worst = max(worst, float(np.max(np.abs(f - a)) / max(1.0, np.max(np.abs(a)))))
    return worst
