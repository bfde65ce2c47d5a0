"""Canonical conic program ``min c'x  s.t.  A x + s = b,  s in K``.

``K`` is a product of a zero cone, a nonnegative orthant and second-order
cones, stacked in that order along the rows of ``A``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class ConeSpec:
    zero: int = 0
    nonneg: int = 0
    soc: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "soc", tuple(int(q) for q in self.soc))
        if self.zero < 0 or self.nonneg < 0:
            raise ValueError("cone dimensions must be nonnegative")
        if any(q < 1 for q in self.soc):
            raise ValueError("second-order cone sizes must be >= 1")

    @property
    def dim(self) -> int:
        return self.zero + self.nonneg + sum(self.soc)

    @property
    def degree(self) -> int:
        """Barrier degree of the inequality part (nonneg + number of SOCs)."""
        return self.nonneg + len(self.soc)


@dataclass
class ConicProgram:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: ConeSpec

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.A = sp.csc_matrix(self.A, dtype=float)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    MAX_ITERS = "MaxIters"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class Residuals:
    primal: float
    dual: float
    gap: float

    def max(self) -> float:
        return max(self.primal, self.dual, self.gap)


@dataclass
class ConicSolution:
    status: Status
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    obj: float
    residuals: Residuals
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def validate_program(prog: ConicProgram) -> list[str]:
    """Return a list of findings; an empty list means the program is well formed."""
    findings = []
    m, n = prog.A.shape
    if n != prog.c.size:
        findings.append(f"dimension mismatch: A has {n} columns but c has length {prog.c.size}")
    if m != prog.b.size:
        findings.append(f"dimension mismatch: A has {m} rows but b has length {prog.b.size}")
    if prog.cones.dim != prog.b.size:
        findings.append(
            f"dimension mismatch: cone blocks cover {prog.cones.dim} rows but b has length {prog.b.size}"
        )
    for name, arr in (("c", prog.c), ("b", prog.b), ("A", prog.A.data)):
        if not np.all(np.isfinite(arr)):
            findings.append(f"non-finite data in {name}")
    return findings


def residuals(prog: ConicProgram, sol: ConicSolution) -> Residuals:
    """Infinity-norm primal/dual residuals and the scaled duality gap.

    The primal residual is divided by ``max(1, |b|_inf)`` and the dual residual
    by ``max(1, |c|_inf)`` so that penalty-weighted objectives are judged on the
    same footing as unit-scale ones.
    """
    x, y, s = sol.x, sol.y, sol.s
    if x.size != prog.n or y.size != prog.m or s.size != prog.m:
        raise ValueError("solution dimensions do not match the program")
    primal = _inf_norm(prog.A @ x + s - prog.b) / max(1.0, _inf_norm(prog.b))
    dual = _inf_norm(prog.A.T @ y + prog.c) / max(1.0, _inf_norm(prog.c))
    pobj = float(prog.c @ x)
    gap = abs(pobj + float(prog.b @ y)) / (1.0 + abs(pobj))
    return Residuals(primal, dual, gap)


def _inf_norm(v):
    return float(np.max(np.abs(v))) if v.size else 0.0


def cone_violation(v: np.ndarray, cones: ConeSpec, include_zero: bool = True) -> float:
    """Largest distance-style violation of ``v`` against ``K`` (zero rows optional)."""
    worst = 0.0
    z = cones.zero
    if include_zero and z:
        worst = max(worst, _inf_norm(v[:z]))
    lo = v[z : z + cones.nonneg]
    if lo.size:
        worst = max(worst, float(np.max(-lo, initial=0.0)))
    start = z + cones.nonneg
    for q in cones.soc:
        blk = v[start : start + q]
        worst = max(worst, float(np.linalg.norm(blk[1:]) - blk[0]))
        start += q
    return worst


def dual_cone_violation(y: np.ndarray, cones: ConeSpec) -> float:
    """Violation of ``y`` against ``K*`` (the zero cone's dual is free)."""
    return cone_violation(y, cones, include_zero=False)


def dump_program(prog: ConicProgram, path) -> None:
    """Write a plain-text dump: sizes, cone spec, c, b and the triplets of A."""
    A = prog.A.tocoo()
    lines = [
        f"n {prog.n}",
        f"m {prog.m}",
        f"zero {prog.cones.zero}",
        f"nonneg {prog.cones.nonneg}",
        "soc " + " ".join(str(q) for q in prog.cones.soc),
        "c " + " ".join(repr(float(v)) for v in prog.c),
        "b " + " ".join(repr(float(v)) for v in prog.b),
        f"nnz {A.nnz}",
    ]
    lines += [f"{i} {j} {float(v)!r}" for i, j, v in zip(A.row, A.col, A.data)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_program(path) -> ConicProgram:
    lines = Path(path).read_text().splitlines()
    head = {}
    for line in lines[:8]:
        key, _, rest = line.partition(" ")
        head[key] = rest.split()
    n, m = int(head["n"][0]), int(head["m"][0])
    cones = ConeSpec(int(head["zero"][0]), int(head["nonneg"][0]), tuple(int(q) for q in head["soc"]))
    trip = np.array([ln.split() for ln in lines[8:] if ln.strip()], dtype=float).reshape(-1, 3)
    A = sp.csc_matrix((trip[:, 2], (trip[:, 0].astype(int), trip[:, 1].astype(int))), shape=(m, n))
    c = np.array(head["c"], dtype=float)
    b = np.array(head["b"], dtype=float)
    return ConicProgram(c, A, b, cones)
