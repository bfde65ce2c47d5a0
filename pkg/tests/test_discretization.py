import numpy as np
import pytest
from scipy.integrate import quad_vec, solve_ivp
from scipy.linalg import expm

from scvx.discretization import ContinuousModel, DiscreteBlocks, foh_discretize, propagate
from scvx.quadrotor import QuadrotorConfig, QuadrotorProblem, continuous_model


def linear_model(A, B, tf, N, c=None):
    A, B = np.asarray(A, float), np.asarray(B, float)
    c = np.zeros(A.shape[0]) if c is None else np.asarray(c, float)

    def f(x, u):
        return x @ A.T + u @ B.T + c

    def jac(x, u):
        K = x.shape[0]
        return np.broadcast_to(A, (K,) + A.shape).copy(), np.broadcast_to(B, (K,) + B.shape).copy()

    return ContinuousModel(f, jac, A.shape[0], B.shape[1], tf, N)


def foh_oracle(A, B, dt):
    """FOH blocks by adaptive quadrature of the matrix exponential."""
    Bm = quad_vec(lambda s: expm(A * (dt - s)) @ B * (1 - s / dt), 0, dt, epsabs=1e-14)[0]
    Bp = quad_vec(lambda s: expm(A * (dt - s)) @ B * (s / dt), 0, dt, epsabs=1e-14)[0]
    return expm(A * dt), Bm, Bp


DI_A = np.array([[0.0, 1.0], [0.0, 0.0]])
DI_B = np.array([[0.0], [1.0]])


def test_pure_integrator_blocks():
    model = linear_model(np.zeros((2, 2)), np.eye(2), tf=2.0, N=3)
    blk = foh_discretize(model, np.zeros((3, 2)), np.ones((3, 2)))
    assert len(blk) == 2
    np.testing.assert_allclose(blk.A_d, np.broadcast_to(np.eye(2), (2, 2, 2)), atol=1e-14)
    np.testing.assert_allclose(blk.B_minus, np.broadcast_to(0.5 * np.eye(2), (2, 2, 2)), atol=1e-14)
    np.testing.assert_allclose(blk.B_plus, np.broadcast_to(0.5 * np.eye(2), (2, 2, 2)), atol=1e-14)


@pytest.mark.parametrize("dt", [1.0, 0.1, 0.37])
def test_double_integrator_closed_form(dt):
    model = linear_model(DI_A, DI_B, tf=dt, N=2)
    blk = foh_discretize(model, np.zeros((2, 2)), np.zeros((2, 1)))
    # B- = int (dt-s, 1)(1 - s/dt) ds, B+ = int (dt-s, 1)(s/dt) ds
    np.testing.assert_allclose(blk.A_d[0], [[1.0, dt], [0.0, 1.0]], atol=1e-10)
    np.testing.assert_allclose(blk.B_minus[0].ravel(), [dt**2 / 3, dt / 2], atol=1e-10)
    np.testing.assert_allclose(blk.B_plus[0].ravel(), [dt**2 / 6, dt / 2], atol=1e-10)
    A_o, Bm_o, Bp_o = foh_oracle(DI_A, DI_B, dt)
    np.testing.assert_allclose(blk.A_d[0], A_o, atol=1e-10)
    np.testing.assert_allclose(blk.B_minus[0], Bm_o, atol=1e-10)
    np.testing.assert_allclose(blk.B_plus[0], Bp_o, atol=1e-10)


def test_foh_sum_equals_zoh():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(3, 3))
    B = rng.normal(size=(3, 2))
    dt = 0.2
    blk = foh_discretize(linear_model(A, B, tf=dt, N=2), np.zeros((2, 3)), np.zeros((2, 2)))
    M = np.zeros((5, 5))
    M[:3, :3], M[:3, 3:] = A, B
    zoh = expm(M * dt)[:3, 3:]
    np.testing.assert_allclose(blk.B_minus[0] + blk.B_plus[0], zoh, atol=1e-10)


def test_hover_without_drag_matches_expm():
    cfg = QuadrotorConfig(kD=0.0)
    model = continuous_model(cfg)
    N = cfg.N
    x = np.zeros((N, 6))
    u = np.broadcast_to(cfg.hover_thrust, (N, 3))
    blk = foh_discretize(model, x, u)
    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    B = np.vstack([np.zeros((3, 3)), np.eye(3) / cfg.m])
    A_o, Bm_o, Bp_o = foh_oracle(A, B, cfg.dt)
    gdrift = quad_vec(lambda s: expm(A * (cfg.dt - s)) @ np.r_[0, 0, 0, cfg.g], 0, cfg.dt)[0]
    for i in range(N - 1):
        np.testing.assert_allclose(blk.A_d[i], A_o, atol=1e-8)
        np.testing.assert_allclose(blk.B_minus[i], Bm_o, atol=1e-8)
        np.testing.assert_allclose(blk.B_plus[i], Bp_o, atol=1e-8)
        np.testing.assert_allclose(blk.z_d[i], gdrift, atol=1e-8)
    # hover is an equilibrium
    np.testing.assert_allclose(blk.x_next, 0.0, atol=1e-12)


def test_propagate_identity_keeps_state():
    K, nx, nu = 4, 3, 2
    blk = DiscreteBlocks(np.broadcast_to(np.eye(nx), (K, nx, nx)), np.zeros((K, nx, nu)), np.zeros((K, nx, nu)),
                         np.zeros((K, nx)), np.zeros((K, nx)))
    xs = propagate(blk, [1.0, -2.0, 3.0], np.ones((K + 1, nu)))
    np.testing.assert_allclose(xs, np.tile([1.0, -2.0, 3.0], (K + 1, 1)))


def test_propagate_double_integrator_parabola():
    N, tf = 11, 2.0
    model = linear_model(DI_A, DI_B, tf=tf, N=N)
    blk = foh_discretize(model, np.zeros((N, 2)), np.zeros((N, 1)))
    xs = propagate(blk, [0.5, -1.0], np.ones((N, 1)))
    t = np.linspace(0, tf, N)
    np.testing.assert_allclose(xs[:, 0], 0.5 - t + t**2 / 2, atol=1e-12)
    np.testing.assert_allclose(xs[:, 1], -1.0 + t, atol=1e-12)


def test_propagate_shape_mismatch():
    model = linear_model(DI_A, DI_B, tf=1.0, N=3)
    blk = foh_discretize(model, np.zeros((3, 2)), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        propagate(blk, [0.0, 0.0], np.zeros((2, 1)))


def interval_flow(cfg, x_start, u0, u1, rtol=1e-12):
    """Nonlinear flow over one interval under FOH control, adaptive high-order integrator."""
    model = continuous_model(cfg)
    dt = cfg.dt

    def rhs(t, y):
        uu = (1 - t / dt) * u0 + (t / dt) * u1
        return model.f(y[None], uu[None])[0]

    return solve_ivp(rhs, (0, dt), x_start, method="DOP853", rtol=rtol, atol=1e-14).y[:, -1]


def flow_reference(cfg, x, u):
    return np.array([interval_flow(cfg, x[i], u[i], u[i + 1]) for i in range(cfg.N - 1)])


def perturbed_reference(cfg, seed=0):
    prob = QuadrotorProblem(cfg)
    t = prob.initial_guess()
    rng = np.random.default_rng(seed)
    x = t.x + 0.5 * rng.normal(size=t.x.shape)
    u = t.u[:, :3] + 0.5 * rng.normal(size=(cfg.N, 3))
    return x, u


def test_feasible_reference_is_reproduced():
    cfg = QuadrotorConfig()
    x, u = perturbed_reference(cfg)
    # chain the accurate flow so the reference is dynamically feasible
    xs = [x[0]]
    for i in range(cfg.N - 1):
        xs.append(interval_flow(cfg, xs[-1], u[i], u[i + 1]))
    xs = np.array(xs)
    blk = foh_discretize(continuous_model(cfg), xs, u)
    np.testing.assert_allclose(propagate(blk, xs[0], u), xs, atol=1e-6)


def test_substep_halving_is_fourth_order():
    cfg = QuadrotorConfig()
    x, u = perturbed_reference(cfg, seed=1)
    ref = flow_reference(cfg, x, u)
    model = continuous_model(cfg)
    err = {n: np.max(np.abs(foh_discretize(model, x, u, substeps=n).x_next - ref)) for n in (5, 10)}
    assert err[5] / err[10] >= 12.0


def test_input_validation():
    model = linear_model(DI_A, DI_B, tf=1.0, N=3)
    with pytest.raises(ValueError):
        foh_discretize(model, np.zeros((3, 2)), np.zeros((3, 1)), substeps=0)
    with pytest.raises(ValueError):
        foh_discretize(model, np.zeros((2, 2)), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        ContinuousModel(model.f, model.jacobians, 2, 1, tf=1.0, N=1)
    with pytest.raises(ValueError):
        ContinuousModel(model.f, model.jacobians, 2, 1, tf=0.0, N=3)


def test_non_finite_jacobian_raises():
    bad = ContinuousModel(lambda x, u: x, lambda x, u: (np.full((x.shape[0], 1, 1), np.nan), np.zeros((x.shape[0], 1, 1))),
                          1, 1, 1.0, 2)
    with pytest.raises(FloatingPointError):
        foh_discretize(bad, np.zeros((2, 1)), np.zeros((2, 1)))


def test_zero_velocity_reference_is_finite():
    cfg = QuadrotorConfig()
    N = cfg.N
    blk = foh_discretize(continuous_model(cfg), np.zeros((N, 6)), np.broadcast_to(cfg.hover_thrust, (N, 3)))
    for arr in (blk.A_d, blk.B_minus, blk.B_plus, blk.z_d, blk.x_next):
        assert np.all(np.isfinite(arr))
