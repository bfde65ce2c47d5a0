"""Quad-rotor minimum-fuel path planning with obstacle keep-out zones.

Three-DoF translational dynamics with quadratic drag, first-order-hold
controls, lossless convexification of the thrust lower bound through the
slack ``Gamma`` and an up-east-north frame (axis 0 is up).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .conic import ConicBuilder
from .discretization import ContinuousModel, foh_discretize
from .engine import SCvxParams, SolveReport, Subproblem, build_subproblem, run
from .ocp import OCProblem, Trajectory

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

DRAG_GUARD = 1e-9
DEFAULT_CONFIG = Path(__file__).with_name("data") / "benchmark.toml"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Obstacle:
    R: float
    p: tuple[float, float, float]


def _default_obstacles():
    return (Obstacle(1.0, (0.0, 3.0, 0.45)), Obstacle(1.0, (0.0, 7.0, -0.45)))


@dataclass(frozen=True)
class QuadrotorConfig:
    # algorithm
    lam: float = 1e5
    r0: float = 1.0
    alpha: float = 2.0
    beta: float = 3.2
    eps_tol: float = 1e-3
    rho0: float = 0.0
    rho1: float = 0.25
    rho2: float = 0.7
    r_l: float = 1e-6
    max_iters: int = 50
    # problem
    N: int = 31
    tf: float = 3.0
    m: float = 0.3
    Tmin: float = 1.0
    Tmax: float = 4.0
    theta_max_deg: float = 45.0
    kD: float = 0.5
    g: tuple[float, float, float] = (-9.81, 0.0, 0.0)
    obstacles: tuple[Obstacle, ...] = field(default_factory=_default_obstacles)
    # boundary conditions; None thrust means hover thrust -m g
    p_ic: tuple[float, float, float] = (0.0, 0.0, 0.0)
    v_ic: tuple[float, float, float] = (0.0, 0.5, 0.0)
    T_ic: tuple[float, float, float] | None = None
    p_fc: tuple[float, float, float] = (0.0, 10.0, 0.0)
    v_fc: tuple[float, float, float] = (0.0, 0.5, 0.0)
    T_fc: tuple[float, float, float] | None = None
    substeps: int = 10

    def __post_init__(self):
        errors = []
        if self.m <= 0:
            errors.append("m must be positive")
        if self.kD < 0:
            errors.append("kD must be nonnegative")
        if not self.Tmin <= self.Tmax:
            errors.append(f"Tmin ({self.Tmin}) exceeds Tmax ({self.Tmax})")
        if self.Tmin < 0:
            errors.append("Tmin must be nonnegative")
        if not 0 <= self.theta_max_deg < 90:
            errors.append("theta_max_deg must lie in [0, 90)")
        if self.N < 2 or self.tf <= 0:
            errors.append("need N >= 2 and tf > 0")
        if self.substeps < 1:
            errors.append("substeps must be positive")
        for ob in self.obstacles:
            if ob.R <= 0:
                errors.append("obstacle radii must be positive")
        try:
            self.params()
        except ValueError as exc:
            errors.append(str(exc))
        if errors:
            raise ConfigError("; ".join(errors))

    @property
    def dt(self) -> float:
        return self.tf / (self.N - 1)

    @property
    def hover_thrust(self) -> np.ndarray:
        return -self.m * np.asarray(self.g, dtype=float)

    @property
    def thrust_ic(self) -> np.ndarray:
        return self.hover_thrust if self.T_ic is None else np.asarray(self.T_ic, dtype=float)

    @property
    def thrust_fc(self) -> np.ndarray:
        return self.hover_thrust if self.T_fc is None else np.asarray(self.T_fc, dtype=float)

    def params(self, **overrides) -> SCvxParams:
        kw = dict(r1=self.r0, lam=self.lam, rho0=self.rho0, rho1=self.rho1, rho2=self.rho2, alpha=self.alpha,
                  beta=self.beta, r_l=self.r_l, eps_tol=self.eps_tol, max_iters=self.max_iters)
        kw.update(overrides)
        return SCvxParams(**kw)


_VECTOR_KEYS = {"g", "p_ic", "v_ic", "p_fc", "v_fc", "T_ic", "T_fc"}
_KEY_ALIASES = {"lambda": "lam"}


def config_from_dict(data: dict) -> QuadrotorConfig:
    names = {f.name for f in fields(QuadrotorConfig)}
    kw = {}
    for key, value in data.items():
        name = _KEY_ALIASES.get(key, key)
        if name not in names:
            raise ConfigError(f"unknown config key {key!r}")
        if name == "obstacles":
            try:
                value = tuple(Obstacle(float(o["R"]), _vec3(o["p"], "obstacles.p")) for o in value)
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"malformed obstacle entry: {exc}") from exc
        elif name in ("T_ic", "T_fc") and isinstance(value, str):
            if value.replace(" ", "") != "-mg":
                raise ConfigError(f"{key} must be a 3-vector or the string '-mg'")
            value = None
        elif name in _VECTOR_KEYS:
            value = _vec3(value, key)
        elif name in ("N", "max_iters", "substeps"):
            value = int(value)
        else:
            value = float(value)
        kw[name] = value
    return QuadrotorConfig(**kw)


def _vec3(value, key):
    try:
        vec = tuple(float(v) for v in value)
    except TypeError as exc:
        raise ConfigError(f"{key} must be a list of three numbers") from exc
    if len(vec) != 3:
        raise ConfigError(f"{key} must have three components")
    return vec


def load_config(path=None) -> QuadrotorConfig:
    path = Path(path) if path is not None else DEFAULT_CONFIG
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(data)


# -- dynamics ------------------------------------------------------------------


def dynamics(x, u, cfg: QuadrotorConfig):
    """State derivative and Jacobians; ``x = [p, v]``, ``u`` starts with the thrust vector.

    Vectorised over leading axes. Returns ``(xdot, A, B)`` with ``B`` taken
    with respect to the thrust only.
    """
    x = np.asarray(x, dtype=float)
    T = np.asarray(u, dtype=float)[..., :3]
    v = x[..., 3:]
    speed = np.linalg.norm(v, axis=-1, keepdims=True)
    xdot = np.concatenate([v, T / cfg.m - cfg.kD * speed * v + np.asarray(cfg.g)], axis=-1)

    batch = x.shape[:-1]
    A = np.zeros(batch + (6, 6))
    A[..., :3, 3:] = np.eye(3)
    safe = np.where(speed < DRAG_GUARD, 1.0, speed)[..., None]
    drag = -cfg.kD * (speed[..., None] * np.eye(3) + v[..., :, None] * v[..., None, :] / safe)
    drag = np.where((speed < DRAG_GUARD)[..., None], 0.0, drag)
    A[..., 3:, 3:] = drag
    B = np.zeros(batch + (6, 3))
    B[..., 3:, :] = np.eye(3) / cfg.m
    return xdot, A, B


def continuous_model(cfg: QuadrotorConfig) -> ContinuousModel:
    return ContinuousModel(
        f=lambda x, u: dynamics(x, u, cfg)[0],
        jacobians=lambda x, u: dynamics(x, u, cfg)[1:],
        nx=6,
        nu=3,
        tf=cfg.tf,
        N=cfg.N,
    )


def obstacle_rows(p_bar, obstacles):
    """Linearized keep-out rows ``R - |dp_bar| - n' (p - p_bar) <= eta`` about ``p_bar``.

    Returns the row value at ``p = p_bar`` (``R - |dp_bar|``) and the outward
    unit normals ``n`` as arrays of shape (n_obs,) and (n_obs, 3).
    """
    p_bar = np.asarray(p_bar, dtype=float)
    vals = np.empty(len(obstacles))
    normals = np.empty((len(obstacles), 3))
    for j, ob in enumerate(obstacles):
        dp = p_bar - np.asarray(ob.p)
        dist = np.linalg.norm(dp)
        if dist < 1e-12:
            normals[j] = (0.0, 1.0, 0.0)
        else:
            normals[j] = dp / dist
        vals[j] = ob.R - dist
    return vals, normals


# -- problem -------------------------------------------------------------------


class QuadrotorProblem(OCProblem):
    """State ``[p, v]`` (6), control ``[T, Gamma]`` (4) on all N nodes."""

    nx = 6
    nu = 4
    foh = True

    def __init__(self, cfg: QuadrotorConfig):
        self.cfg = cfg
        self.N = cfg.N
        self.ns = len(cfg.obstacles)
        self.model = continuous_model(cfg)
        self._cache = None

    def discretize(self, traj: Trajectory):
        key = traj.z.tobytes()
        if self._cache is not None and self._cache[0] == key:
            return self._cache[1]
        blocks = foh_discretize(self.model, traj.x, traj.u[:, :3], self.cfg.substeps)
        self._cache = (key, blocks)
        return blocks

    def dynamics(self, traj: Trajectory):
        blk = self.discretize(traj)
        K = self.N - 1
        B = np.zeros((K, 6, 4))
        Bn = np.zeros((K, 6, 4))
        B[:, :, :3] = blk.B_minus
        Bn[:, :, :3] = blk.B_plus
        return blk.x_next, blk.A_d, B, Bn

    def constraints(self, traj: Trajectory):
        N, ns = self.N, self.ns
        s = np.empty((N, ns))
        S = np.zeros((N, ns, 6))
        for i in range(N):
            vals, normals = obstacle_rows(traj.x[i, :3], self.cfg.obstacles)
            s[i] = vals
            S[i, :, :3] = -normals
        return s, S, np.zeros((N, ns, 4))

    def path_constraint(self, i, x, u):
        vals, normals = obstacle_rows(x[:3], self.cfg.obstacles)
        S = np.zeros((self.ns, 6))
        S[:, :3] = -normals
        return vals, S, np.zeros((self.ns, 4))

    def stage_cost(self, i, x, u):
        dt = self.cfg.dt
        gu = np.zeros(4)
        gu[3] = dt
        return u[3] * dt, np.zeros(6), gu

    def cost(self, traj: Trajectory) -> float:
        return float(np.sum(traj.u[:, 3]) * self.cfg.dt)

    def cost_gradient(self, traj: Trajectory):
        gu = np.zeros_like(traj.u)
        gu[:, 3] = self.cfg.dt
        return np.zeros_like(traj.x), gu

    def add_convex_constraints(self, b: ConicBuilder, X, U) -> None:
        cfg = self.cfg
        N = self.N
        b.eq(b.select(X[0, :3]), cfg.p_ic, tag="boundary")
        b.eq(b.select(X[0, 3:]), cfg.v_ic, tag="boundary")
        b.eq(b.select(U[0, :3]), cfg.thrust_ic, tag="boundary")
        b.eq(b.select(X[-1, :3]), cfg.p_fc, tag="boundary")
        b.eq(b.select(X[-1, 3:]), cfg.v_fc, tag="boundary")
        b.eq(b.select(U[-1, :3]), cfg.thrust_fc, tag="boundary")
        if N > 2:
            # end nodes are pinned by the boundary conditions
            b.eq(b.select(X[1:-1, 0]), 0.0, tag="planar")
        gam = U[:, 3]
        for i in range(N):
            b.soc(-b.select(np.concatenate([[U[i, 3]], U[i, :3]])), 0.0, tag="thrust_cone")
        b.le(-b.select(gam), -cfg.Tmin, tag="thrust_bounds")
        b.le(b.select(gam), cfg.Tmax, tag="thrust_bounds")
        cos_t = math.cos(math.radians(cfg.theta_max_deg))
        b.le(b.select(gam, cos_t) - b.select(U[:, 0]), 0.0, tag="tilt")

    def initial_guess(self) -> Trajectory:
        """Straight line between the boundary positions at the initial velocity, hover thrust."""
        cfg = self.cfg
        s = np.linspace(0.0, 1.0, self.N)[:, None]
        p = (1 - s) * np.asarray(cfg.p_ic) + s * np.asarray(cfg.p_fc)
        v = np.broadcast_to(np.asarray(cfg.v_ic, dtype=float), (self.N, 3))
        T = np.broadcast_to(cfg.hover_thrust, (self.N, 3))
        gam = np.full((self.N, 1), np.linalg.norm(cfg.hover_thrust))
        return Trajectory(np.hstack([p, v]), np.hstack([T, gam]))


def build_benchmark_subproblem(traj: Trajectory, cfg: QuadrotorConfig, r: float, prob: QuadrotorProblem | None = None) -> Subproblem:
    """Convex subproblem of one succession about ``traj`` with 1-norm trust region ``r``."""
    prob = prob or QuadrotorProblem(cfg)
    return build_subproblem(prob, traj, r, cfg.params())


@dataclass
class BenchmarkReport:
    report: SolveReport
    cfg: QuadrotorConfig
    clearance: np.ndarray  # (N, n_obs): |p_i - p_obs| - R
    thrust_norm: np.ndarray
    gamma: np.ndarray
    tilt_deg: np.ndarray

    @property
    def max_penetration(self) -> float:
        return float(max(0.0, -np.min(self.clearance))) if self.clearance.size else 0.0

    @property
    def trajectory(self) -> Trajectory:
        return self.report.trajectory

    def boundary_error(self) -> float:
        cfg, t = self.cfg, self.report.trajectory
        errs = [
            t.x[0, :3] - cfg.p_ic, t.x[0, 3:] - cfg.v_ic, t.u[0, :3] - cfg.thrust_ic,
            t.x[-1, :3] - cfg.p_fc, t.x[-1, 3:] - cfg.v_fc, t.u[-1, :3] - cfg.thrust_fc,
        ]
        return float(np.max(np.abs(np.concatenate(errs))))


def solve_benchmark(cfg: QuadrotorConfig | None = None, params: SCvxParams | None = None, log_sink=None) -> BenchmarkReport:
    cfg = cfg or QuadrotorConfig()
    prob = QuadrotorProblem(cfg)
    report = run(prob, prob.initial_guess(), params or cfg.params(), log_sink=log_sink)
    return summarize(report, cfg)


def summarize(report: SolveReport, cfg: QuadrotorConfig) -> BenchmarkReport:
    t = report.trajectory
    p = t.x[:, :3]
    clearance = np.stack(
        [np.linalg.norm(p - np.asarray(ob.p), axis=1) - ob.R for ob in cfg.obstacles], axis=1
    ) if cfg.obstacles else np.zeros((cfg.N, 0))
    T = t.u[:, :3]
    tn = np.linalg.norm(T, axis=1)
    tilt = np.degrees(np.arccos(np.clip(T[:, 0] / np.where(tn > 0, tn, 1.0), -1.0, 1.0)))
    return BenchmarkReport(report, cfg, clearance, tn, t.u[:, 3].copy(), tilt)
