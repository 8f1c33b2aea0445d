"""Axisymmetric elliptic barrier problems on cylinders over geodesic balls.

All boundary data of interest is rotation-invariant about the ball center,
so the product-space Laplace equation reduces to a 2-D problem in
(rho, z): ``d2/dz2 + d2/drho2 + cot(rho) d/drho`` for the sphere metric and
``d2/dz2 + d2/drho2 + (1/rho) d/drho`` for the flat three-dimensional
reference.  Second-order central differences, symmetry condition at the
axis, sparse direct solve.

The z interval is centered at 0 (the placement is immaterial for the
quantities measured here, only its length enters).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

RESIDUAL_TOL = 1e-10


class NonConvergenceError(RuntimeError):
    """The linear solve left a residual above the configured tolerance."""


class InvalidGeometryError(ValueError):
    """Inconsistent cylinder geometry."""


@dataclass
class CylinderProblem:
    """An axisymmetric Dirichlet problem on B(radius) x [-height/2, height/2]."""

    metric: str            # "sphere" | "flat"
    radius: float          # side radius of the cylinder
    height: float          # length of the z interval
    n_rho: int = 256
    n_z: int = 256

    def __post_init__(self) -> None:
        if self.metric not in ("sphere", "flat"):
            raise InvalidGeometryError(f"metric must be 'sphere' or 'flat', got {self.metric!r}")
        if self.radius <= 0 or self.height <= 0:
            raise InvalidGeometryError("radius and height must be positive")
        if self.metric == "sphere" and self.radius >= math.pi:
            raise InvalidGeometryError(f"sphere radius must be < pi, got {self.radius}")
        if self.n_rho < 4 or self.n_z < 4:
            raise InvalidGeometryError("need at least 4 cells per direction")


@dataclass
class BarrierSolution:
    rho: np.ndarray        # n_rho + 1 radial nodes, rho[0] = 0
    z: np.ndarray          # n_z + 1 vertical nodes
    values: np.ndarray     # (n_rho + 1, n_z + 1)
    residual_norm: float

    def sup_over(self, rho_max: float, z_range: tuple[float, float] | None = None) -> float:
        """Sup of the solution over rho <= rho_max (and optionally a z band)."""
        rows = self.rho <= rho_max + 1e-12
        cols = (
            np.ones_like(self.z, dtype=bool)
            if z_range is None
            else (self.z >= z_range[0] - 1e-12) & (self.z <= z_range[1] + 1e-12)
        )
        return float(self.values[np.ix_(rows, cols)].max())


def solve_axisymmetric(
    problem: CylinderProblem,
    side: np.ndarray | float,
    top: np.ndarray | float,
    bottom: np.ndarray | float,
) -> BarrierSolution:
    """Solve the axisymmetric Laplace problem with Dirichlet data.

    ``side`` is the value on rho = radius (per z node), ``top``/``bottom``
    on z = +-height/2 (per rho node); scalars broadcast.  The axis rho = 0
    carries the symmetry condition d/drho = 0, realized by the ghost-node
    reduction 2 * laplacian_rho -> 4 (b[1] - b[0]) / drho^2.
    """
    n_rho, n_z = problem.n_rho, problem.n_z
    rho = np.linspace(0.0, problem.radius, n_rho + 1)
    z = np.linspace(-0.5 * problem.height, 0.5 * problem.height, n_z + 1)
    drho = rho[1] - rho[0]
    dz = z[1] - z[0]

    side = np.broadcast_to(np.asarray(side, dtype=np.float64), (n_z + 1,))
    top = np.broadcast_to(np.asarray(top, dtype=np.float64), (n_rho + 1,))
    bottom = np.broadcast_to(np.asarray(bottom, dtype=np.float64), (n_rho + 1,))

    # unknowns: i = 0..n_rho-1 (axis included), j = 1..n_z-1
    ni, nj = n_rho, n_z - 1

    def k(i: int | np.ndarray, j: int | np.ndarray):
        return i * nj + (j - 1)

    coef = np.zeros(n_rho)  # first-order radial coefficient at interior nodes
    if problem.metric == "sphere":
        coef[1:] = 1.0 / np.tan(rho[1:n_rho])
    else:
        coef[1:] = 1.0 / rho[1:n_rho]

    rows, cols, data = [], [], []
    rhs = np.zeros(ni * nj)

    jj = np.arange(1, n_z)
    for i in range(n_rho):
        kk = k(i, jj)
        # vertical second difference
        rows.extend(kk); cols.extend(kk); data.extend(np.full(nj, -2.0 / dz**2))
        inner = jj > 1
        rows.extend(kk[inner]); cols.extend(k(i, jj[inner] - 1)); data.extend(np.full(inner.sum(), 1.0 / dz**2))
        rhs[kk[~inner]] -= bottom[i] / dz**2
        inner = jj < n_z - 1
        rows.extend(kk[inner]); cols.extend(k(i, jj[inner] + 1)); data.extend(np.full(inner.sum(), 1.0 / dz**2))
        rhs[kk[~inner]] -= top[i] / dz**2

        if i == 0:
            # axis: 2 d2/drho2 with ghost symmetry -> 4 (b1 - b0) / drho^2
            rows.extend(kk); cols.extend(kk); data.extend(np.full(nj, -4.0 / drho**2))
            rows.extend(kk); cols.extend(k(1, jj)); data.extend(np.full(nj, 4.0 / drho**2))
        else:
            c_minus = 1.0 / drho**2 - coef[i] / (2.0 * drho)
            c_plus = 1.0 / drho**2 + coef[i] / (2.0 * drho)
            rows.extend(kk); cols.extend(kk); data.extend(np.full(nj, -2.0 / drho**2))
            rows.extend(kk); cols.extend(k(i - 1, jj)); data.extend(np.full(nj, c_minus))
            if i + 1 < n_rho:
                rows.extend(kk); cols.extend(k(i + 1, jj)); data.extend(np.full(nj, c_plus))
            else:
                rhs[kk] -= c_plus * side[jj]

    mat = scipy.sparse.csr_matrix(
        (data, (rows, cols)), shape=(ni * nj, ni * nj)
    )
    sol = scipy.sparse.linalg.spsolve(mat, rhs)
    residual = float(np.linalg.norm(mat @ sol - rhs) / max(1.0, np.linalg.norm(rhs)))
    if not np.isfinite(residual) or residual > RESIDUAL_TOL:
        raise NonConvergenceError(f"linear solve residual {residual:.3e} above {RESIDUAL_TOL}")

    values = np.empty((n_rho + 1, n_z + 1))
    values[:, 0] = bottom
    values[:, -1] = top
    values[-1, :] = side
    values[:n_rho, 1:n_z] = sol.reshape(ni, nj)
    # corners belong to top/bottom data
    values[-1, 0] = bottom[-1]
    values[-1, -1] = top[-1]
    return BarrierSolution(rho, z, values, residual)


def solve_barrier(problem: CylinderProblem, kind: str = "b1") -> BarrierSolution:
    """Barrier with sides held at 1 and top/bottom at 0.

    ``b1`` lives on the square cylinder (radius = height); ``b2`` allows
    radius != height.  The nonnegative top/bottom freedom of the second
    barrier is resolved as exactly 0, the least admissible choice.
    """
    if kind not in ("b1", "b2"):
        raise ValueError(f"kind must be 'b1' or 'b2', got {kind!r}")
    return solve_axisymmetric(problem, side=1.0, top=0.0, bottom=0.0)


@lru_cache(maxsize=8)
def flat_delta(n_rho: int = 256, n_z: int = 256) -> float:
    """Reference constant: sup over rho <= 1/2 of the flat scale-1 barrier."""
    problem = CylinderProblem("flat", radius=1.0, height=1.0, n_rho=n_rho, n_z=n_z)
    return solve_barrier(problem, "b1").sup_over(0.5)


@dataclass
class ScaleSweepResult:
    h_values: np.ndarray
    sup_values: np.ndarray
    delta: float
    slope: float           # least-squares slope of (sup - delta) vs h

    @property
    def max_ratio(self) -> float:
        return float(np.max(np.abs(self.sup_values - self.delta) / self.h_values))


def b1_scale_sweep(h_list, n_rho: int = 256, n_z: int = 256) -> ScaleSweepResult:
    """Sphere-metric barrier sup over the half ball across scales.

    For each h, solves the scale-h problem and records the sup over
    rho <= h/2 (all z); the deviation from the flat reference constant is
    fitted linearly in h.
    """
    h_arr = np.asarray(h_list, dtype=np.float64)
    if np.any(h_arr <= 0):
        raise InvalidGeometryError("all scales must be positive")
    sups = []
    for h in h_arr:
        problem = CylinderProblem("sphere", radius=float(h), height=float(h), n_rho=n_rho, n_z=n_z)
        sups.append(solve_barrier(problem, "b1").sup_over(0.5 * h))
    sups_arr = np.array(sups)
    delta = flat_delta(n_rho, n_z)
    if h_arr.size >= 2:
        slope = float(np.polyfit(h_arr, sups_arr - delta, 1)[0])
    else:
        slope = float((sups_arr[0] - delta) / h_arr[0])
    return ScaleSweepResult(h_arr, sups_arr, delta, slope)


@dataclass
class B2Check:
    r: float
    h: float
    r1: float
    sup_inner: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.sup_inner / self.bound


def b2_bound_check(
    r: float, h: float, r1: float, n_rho: int = 192, n_z: int = 192, metric: str = "sphere"
) -> B2Check:
    """Measured constant in sup_{B(r1) x I(h)} b2 <= C (h r / (r - r1)^2 + r).

    The bound's exponent pattern is the three-dimensional one (N = 3).
    """
    if not 0 < h <= r:
        raise InvalidGeometryError(f"need 0 < h <= r, got h={h}, r={r}")
    if not 0 <= r1 < r:
        raise InvalidGeometryError(f"need 0 <= r1 < r, got r1={r1}, r={r}")
    problem = CylinderProblem(metric, radius=r, height=h, n_rho=n_rho, n_z=n_z)
    solution = solve_barrier(problem, "b2")
    sup_inner = solution.sup_over(r1)
    bound = h * r / (r - r1) ** 2 + r
    return B2Check(r, h, r1, sup_inner, bound)
