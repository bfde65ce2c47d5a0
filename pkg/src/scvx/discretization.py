"""First-order-hold discretization of linearized continuous-time dynamics.

Along a reference trajectory the nonlinear state, the state transition matrix
and the three FOH convolution integrals are integrated together with fixed-step
RK4, all intervals at once. The integrals are carried in variational form,

    d/dt P-  = A P- + beta-(t) B        P-(t_i) = 0
    d/dt P+  = A P+ + beta+(t) B        P+(t_i) = 0
    d/dt z_d = A z_d + (f - A x - B u)  z_d(t_i) = 0

which avoids inverting the transition matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class ContinuousModel:
    """``xdot = f(x, u)`` with Jacobians, both vectorised over a leading batch axis.

    ``f(x, u)`` maps ``(K, nx), (K, nu)`` to ``(K, nx)``; ``jacobians(x, u)``
    returns ``A`` of shape ``(K, nx, nx)`` and ``B`` of shape ``(K, nx, nu)``.
    """

    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobians: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    nx: int
    nu: int
    tf: float
    N: int

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("need at least two nodes")
        if self.tf <= 0:
            raise ValueError("horizon must be positive")

    @property
    def dt(self) -> float:
        return self.tf / (self.N - 1)


@dataclass
class DiscreteBlocks:
    """Per-interval ``x_{i+1} = A_d x_i + B_minus u_i + B_plus u_{i+1} + z_d``."""

    A_d: np.ndarray
    B_minus: np.ndarray
    B_plus: np.ndarray
    z_d: np.ndarray
    x_next: np.ndarray  # nonlinear flow from each reference node under FOH control

    def __len__(self):
        return self.A_d.shape[0]


def foh_discretize(model: ContinuousModel, x_ref, u_ref, substeps: int = 10) -> DiscreteBlocks:
    """Discretize ``model`` about the reference nodes ``x_ref`` (N, nx), ``u_ref`` (N, nu)."""
    if substeps < 1:
        raise ValueError("substeps must be positive")
    x_ref = np.asarray(x_ref, dtype=float)
    u_ref = np.asarray(u_ref, dtype=float)
    N, nx, nu = model.N, model.nx, model.nu
    if x_ref.shape != (N, nx) or u_ref.shape != (N, nu):
        raise ValueError(f"reference must have shapes {(N, nx)} and {(N, nu)}")
    K = N - 1
    dt = model.dt
    u0, u1 = u_ref[:-1], u_ref[1:]

    def rhs(t, y):
        x, Phi, Pm, Pp, zd = y
        bm = 1.0 - t / dt
        bp = t / dt
        u = bm * u0 + bp * u1
        fx = model.f(x, u)
        A, B = model.jacobians(x, u)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise FloatingPointError("non-finite Jacobian along the reference")
        zt = fx - np.einsum("kij,kj->ki", A, x) - np.einsum("kij,kj->ki", B, u)
        return (
            fx,
            A @ Phi,
            A @ Pm + bm * B,
            A @ Pp + bp * B,
            np.einsum("kij,kj->ki", A, zd) + zt,
        )

    y = [
        x_ref[:-1].copy(),
        np.broadcast_to(np.eye(nx), (K, nx, nx)).copy(),
        np.zeros((K, nx, nu)),
        np.zeros((K, nx, nu)),
        np.zeros((K, nx)),
    ]
    h = dt / substeps
    t = 0.0
    for _ in range(substeps):
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, [a + h / 2 * b for a, b in zip(y, k1)])
        k3 = rhs(t + h / 2, [a + h / 2 * b for a, b in zip(y, k2)])
        k4 = rhs(t + h, [a + h * b for a, b in zip(y, k3)])
        y = [a + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
        t += h
    x_end, Phi, Pm, Pp, zd = y
    return DiscreteBlocks(Phi, Pm, Pp, zd, x_end)


def propagate(blocks: DiscreteBlocks, x1, u) -> np.ndarray:
    """Roll the discrete FOH recursion forward from ``x1`` with controls ``u`` (N, nu)."""
    u = np.asarray(u, dtype=float)
    K = len(blocks)
    if u.shape[0] != K + 1:
        raise ValueError(f"expected {K + 1} control nodes, got {u.shape[0]}")
    xs = np.empty((K + 1, blocks.A_d.shape[1]))
    xs[0] = x1
    for i in range(K):
        xs[i + 1] = blocks.A_d[i] @ xs[i] + blocks.B_minus[i] @ u[i] + blocks.B_plus[i] @ u[i + 1] + blocks.z_d[i]
    return xs
