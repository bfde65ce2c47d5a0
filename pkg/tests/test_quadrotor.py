import math

import numpy as np
import pytest

from scvx.conic import Status, solve, validate_program
from scvx.quadrotor import (
    ConfigError,
    Obstacle,
    QuadrotorConfig,
    QuadrotorProblem,
    build_benchmark_subproblem,
    config_from_dict,
    dynamics,
    load_config,
    obstacle_rows,
    solve_benchmark,
)

CFG = QuadrotorConfig()


def test_hover_is_equilibrium():
    xdot, _, _ = dynamics(np.zeros(6), CFG.hover_thrust, CFG)
    np.testing.assert_allclose(xdot, 0.0, atol=1e-15)


def test_drag_substitution():
    x = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    xdot, _, _ = dynamics(x, np.zeros(3), CFG)
    np.testing.assert_allclose(xdot, [0.0, 1.0, 0.0, -9.81, -0.5, 0.0], atol=1e-15)


def test_dynamics_jacobian_central_differences():
    x = np.array([0.3, -1.0, 0.2, 0.0, 2.0, 1.0])
    u = np.array([3.0, 0.4, -0.2])
    _, A, B = dynamics(x, u, CFG)
    h = 1e-6
    A_fd = np.column_stack([(dynamics(x + h * e, u, CFG)[0] - dynamics(x - h * e, u, CFG)[0]) / (2 * h) for e in np.eye(6)])
    B_fd = np.column_stack([(dynamics(x, u + h * e, CFG)[0] - dynamics(x, u - h * e, CFG)[0]) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(A, A_fd, atol=1e-6)
    np.testing.assert_allclose(B, B_fd, atol=1e-6)


def test_zero_velocity_guard():
    _, A, _ = dynamics(np.zeros(6), CFG.hover_thrust, CFG)
    assert np.all(np.isfinite(A))
    np.testing.assert_array_equal(A[3:, 3:], 0.0)


def test_dynamics_vectorised():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 6))
    u = rng.normal(size=(5, 3))
    xd, A, B = dynamics(x, u, CFG)
    for k in range(5):
        xk, Ak, Bk = dynamics(x[k], u[k], CFG)
        np.testing.assert_allclose(xd[k], xk)
        np.testing.assert_allclose(A[k], Ak)
        np.testing.assert_allclose(B[k], Bk)


@pytest.mark.parametrize("dist, value", [(2.0, -1.0), (1.0, 0.0), (0.5, 0.5)])
def test_obstacle_rows(dist, value):
    R = 1.0
    obs = (Obstacle(R, (0.0, 3.0, 0.45)),)
    direction = np.array([0.0, 0.6, 0.8])
    vals, normals = obstacle_rows(np.array(obs[0].p) + dist * R * direction, obs)
    assert vals[0] == pytest.approx(value, abs=1e-15)
    np.testing.assert_allclose(normals[0], direction, atol=1e-15)


def test_obstacle_rows_degenerate_center():
    obs = (Obstacle(1.5, (0.0, 3.0, 0.45)),)
    vals, normals = obstacle_rows(np.array(obs[0].p), obs)
    assert vals[0] == 1.5
    np.testing.assert_array_equal(normals[0], [0.0, 1.0, 0.0])


def test_default_config_matches_shipped_file():
    assert load_config() == CFG
    assert CFG.lam == 1e5 and CFG.r0 == 1.0 and CFG.alpha == 2.0 and CFG.beta == 3.2
    assert (CFG.rho0, CFG.rho1, CFG.rho2) == (0.0, 0.25, 0.7)
    assert (CFG.N, CFG.tf, CFG.m, CFG.Tmin, CFG.Tmax, CFG.theta_max_deg, CFG.kD) == (31, 3.0, 0.3, 1.0, 4.0, 45.0, 0.5)
    assert CFG.obstacles == (Obstacle(1.0, (0.0, 3.0, 0.45)), Obstacle(1.0, (0.0, 7.0, -0.45)))
    assert CFG.dt == pytest.approx(0.1)


def test_config_validation():
    with pytest.raises(ConfigError, match="Tmin"):
        QuadrotorConfig(Tmin=5.0, Tmax=4.0)
    with pytest.raises(ConfigError):
        QuadrotorConfig(m=0.0)
    with pytest.raises(ConfigError):
        QuadrotorConfig(obstacles=(Obstacle(-1.0, (0.0, 0.0, 0.0)),))
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({"mass": 1.0})
    with pytest.raises(ConfigError):
        config_from_dict({"T_ic": "hover"})
    with pytest.raises(ConfigError):
        config_from_dict({"g": [0.0, 1.0]})
    assert config_from_dict({"lambda": 10.0, "T_fc": "-mg"}).lam == 10.0


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("N = [\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_benchmark_subproblem_boundary_rows_and_objective():
    prob = QuadrotorProblem(CFG)
    sub = build_benchmark_subproblem(prob.initial_guess(), CFG, 1.0, prob)
    prog = sub.program
    assert validate_program(prog) == []
    hover = [0.3 * 9.81, 0.0, 0.0]
    expected = np.concatenate([[0, 0, 0], [0, 0.5, 0], hover, [0, 10, 0], [0, 0.5, 0], hover])
    np.testing.assert_allclose(prog.b[sub.rows["boundary"]], expected, atol=1e-15)
    gamma_cols = sub.layout["u"][:, 3]
    np.testing.assert_allclose(prog.c[gamma_cols], 0.1, atol=1e-15)
    np.testing.assert_allclose(prog.c[sub.layout["t_v"]], 1e5)
    np.testing.assert_allclose(prog.c[sub.layout["s_buf"]], 1e5)


def test_benchmark_subproblem_solves_and_respects_convex_sets():
    prob = QuadrotorProblem(CFG)
    sub = build_benchmark_subproblem(prob.initial_guess(), CFG, 1.0, prob)
    sol = solve(sub.program)
    assert sol.status is Status.OPTIMAL
    u = sol.x[sub.layout["u"]]
    T, gam = u[:, :3], u[:, 3]
    assert np.all(np.linalg.norm(T, axis=1) <= gam + 1e-7)
    assert np.all(gam >= CFG.Tmin - 1e-7) and np.all(gam <= CFG.Tmax + 1e-7)
    assert np.all(math.cos(math.radians(45)) * gam <= T[:, 0] + 1e-7)
    assert np.sum(np.abs(sub.increment(sol))) <= 1.0 + 1e-7


def test_far_obstacle_never_needs_buffers():
    cfg = QuadrotorConfig(obstacles=(Obstacle(1.0, (0.0, 5.0, 20.0)),))
    br = solve_benchmark(cfg)
    assert br.report.converged
    assert all(h.buffer_norm <= 1e-9 for h in br.report.history)


def test_lossless_relaxation_tight_without_obstacles_or_drag():
    cfg = QuadrotorConfig(obstacles=(), kD=0.0)
    br = solve_benchmark(cfg)
    assert br.report.converged
    assert np.all(br.gamma >= cfg.Tmin - 1e-7) and np.all(br.gamma <= cfg.Tmax + 1e-7)
    np.testing.assert_allclose(br.thrust_norm, br.gamma, atol=1e-4)


def test_benchmark_solution_properties(benchmark):
    rep = benchmark.report
    t = rep.trajectory
    assert rep.converged
    assert len(rep.accepted) <= 20
    assert benchmark.max_penetration <= 1e-3
    assert benchmark.boundary_error() <= 1e-6
    assert np.max(np.abs(t.x[:, 0])) <= 1e-8
    assert np.all(benchmark.tilt_deg <= 45.0 + 1e-4)
    assert np.all(benchmark.gamma <= CFG.Tmax + 1e-7) and np.all(benchmark.gamma >= CFG.Tmin - 1e-7)
    # relaxation tightness where the lower bound is slack
    slack = benchmark.gamma > CFG.Tmin + 1e-4
    np.testing.assert_allclose(benchmark.thrust_norm[slack], benchmark.gamma[slack], atol=1e-4)
    # thrust rides the upper bound over most of the horizon
    assert np.mean(benchmark.gamma >= CFG.Tmax - 1e-3) >= 0.75


def test_benchmark_active_obstacles_have_positive_multipliers(benchmark):
    mu = benchmark.report.kkt.multipliers_constraints
    touching = benchmark.clearance <= 1e-6
    assert np.any(touching)
    for j in range(mu.shape[1]):
        if np.any(touching[:, j]):
            assert np.max(mu[touching[:, j], j]) > 0
    # multipliers vanish well clear of the obstacles
    assert np.all(np.abs(mu[benchmark.clearance > 0.1]) <= 1e-6)
