"""Small problems shared by the test modules."""

import numpy as np

from scvx.ocp import OCProblem, Trajectory


class ScalarStep(OCProblem):
    """x_{i+1} = x_i + u_i, phi = u^2, optional s(x) = x - 1.5."""

    nx = 1
    nu = 1

    def __init__(self, N=2, with_constraint=False):
        self.N = N
        self.ns = 1 if with_constraint else 0

    def step(self, i, x, u, u_next):
        return x + u, np.eye(1), np.eye(1), None

    def stage_cost(self, i, x, u):
        if u is None:
            return 0.0, np.zeros(1), np.zeros(1)
        return float(u[0] ** 2), np.zeros(1), 2 * u

    def path_constraint(self, i, x, u):
        return x - 1.5, np.eye(1), np.zeros((1, 1))


class DoubleIntegrator(OCProblem):
    """Exactly discretized double integrator per axis with a linear cost and box constraints.

    Everything is affine, so the convex subproblem reproduces the penalty cost exactly.
    """

    def __init__(self, rng, N=8, axes=2):
        self.N = N
        self.nx = 2 * axes
        self.nu = axes
        self.dt = float(rng.uniform(0.2, 1.0))
        dt = self.dt
        a = np.array([[1.0, dt], [0.0, 1.0]])
        b = np.array([[dt * dt / 2], [dt]])
        self.A = np.kron(np.eye(axes), a)
        self.B = np.kron(np.eye(axes), b)
        self.c_u = rng.normal(size=(N - 1, axes))
        self.c_x = rng.normal(size=(N, self.nx))
        self.umax = float(rng.uniform(0.5, 2.0))
        self.xmax = float(rng.uniform(3.0, 6.0))
        self.x0 = rng.uniform(-1, 1, size=self.nx)

    def step(self, i, x, u, u_next):
        return self.A @ x + self.B @ u, self.A, self.B, None

    def stage_cost(self, i, x, u):
        gu = self.c_u[i] if u is not None else np.zeros(self.nu)
        val = float(self.c_x[i] @ x) + (float(self.c_u[i] @ u) if u is not None else 0.0)
        return val, self.c_x[i], gu

    def add_convex_constraints(self, b, X, U):
        b.eq(b.select(X[0]), self.x0, tag="initial")
        b.le(b.select(U), self.umax)
        b.le(-b.select(U), self.umax)
        b.le(b.select(X), self.xmax)
        b.le(-b.select(X), self.xmax)

    def random_feasible(self, rng) -> Trajectory:
        """A point inside the boxes with the right initial state, generally not dynamically feasible."""
        x = rng.uniform(-self.xmax, self.xmax, size=(self.N, self.nx)) * 0.5
        x[0] = self.x0
        u = rng.uniform(-self.umax, self.umax, size=(self.N - 1, self.nu))
        return Trajectory(x, u)


class Parabola(OCProblem):
    """min x2 s.t. x2 = x1^2, written as one step: state_1 = u - x^2 pinned to 0.

    ``x_0`` plays x1 and ``u_0`` plays x2; the linearized equality alone gives an
    unbounded linear program, so only the trust region keeps it bounded.
    """

    N = 2
    nx = 1
    nu = 1

    def step(self, i, x, u, u_next):
        return u - x**2, np.array([[-2.0 * x[0]]]), np.eye(1), None

    def stage_cost(self, i, x, u):
        if u is None:
            return 0.0, np.zeros(1), np.zeros(1)
        return float(u[0]), np.zeros(1), np.ones(1)

    def add_convex_constraints(self, b, X, U):
        b.eq(b.select(X[1]), 0.0, tag="terminal")

    def initial_guess(self) -> Trajectory:
        return Trajectory(np.array([[1.0], [0.0]]), np.array([[1.0]]))
