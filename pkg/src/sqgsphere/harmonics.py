"""Real spherical-harmonic basis, quadrature grid and transforms on the unit sphere.

Conventions
-----------
* Real, 4*pi-orthonormal harmonics: ``integral(Y[l,m] * Y[l',m']) = delta``.
  For m > 0 the basis function carries cos(m*lon), for m < 0 it carries
  sin(|m|*lon); no Condon-Shortley phase.
* Coefficients are stored in a flat array ordered by degree l (outer) and
  order m = -l..l (inner), so a field truncated at degree L has (L+1)**2
  coefficients.
* The grid is Gauss-Legendre in colatitude (interior nodes only, so
  sin(colat) never vanishes) and equispaced in longitude.  Quadrature
  weights sum to 4*pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FOUR_PI = 4.0 * math.pi
TWO_PI = 2.0 * math.pi


class GridTooSmallError(ValueError):
    """Grid cannot resolve (or exactly integrate) the requested degree."""


class InvalidIndexError(ValueError):
    """Basis index outside |m| <= l, l >= 0."""


def num_coeffs(lmax: int) -> int:
    """Number of real basis functions up to degree ``lmax``."""
    return (lmax + 1) ** 2


def flat_index(l: int, m: int) -> int:
    """Position of (l, m) in the canonical (l outer, m = -l..l) ordering."""
    if l < 0 or abs(m) > l:
        raise InvalidIndexError(f"invalid basis index (l={l}, m={m})")
    return l * l + l + m


def degrees(lmax: int) -> np.ndarray:
    """Per-coefficient degree array: degrees(L)[flat_index(l, m)] == l."""
    out = np.empty(num_coeffs(lmax), dtype=np.int64)
    for l in range(lmax + 1):
        out[l * l : (l + 1) ** 2] = l
    return out


def laplace_eigenvalue(l: int) -> float:
    """Eigenvalue of -Laplace-Beltrami on degree-l harmonics: l*(l+1)."""
    if l < 0:
        raise InvalidIndexError(f"degree must be >= 0, got {l}")
    return float(l * (l + 1))


@dataclass(frozen=True)
class BasisIndex:
    """Degree/order pair identifying one real basis function."""

    l: int
    m: int

    def __post_init__(self) -> None:
        if self.l < 0 or abs(self.m) > self.l:
            raise InvalidIndexError(f"invalid basis index (l={self.l}, m={self.m})")

    @property
    def flat(self) -> int:
        return flat_index(self.l, self.m)


@dataclass
class SphereGrid:
    """Gauss-Legendre x equispaced-longitude quadrature grid.

    ``colat`` holds the nlat Gauss-Legendre colatitudes (radians, increasing
    from the north pole), ``lon`` the nlon equispaced longitudes in [0, 2*pi).
    ``lat_weights`` are scaled so that ``sum(lat_weights) * nlon == 4*pi``
    when combined with the uniform longitude weight ``2*pi / nlon``.
    """

    nlat: int
    nlon: int
    colat: np.ndarray
    lon: np.ndarray
    lat_weights: np.ndarray
    _plans: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def cos_colat(self) -> np.ndarray:
        return np.cos(self.colat)

    @property
    def sin_colat(self) -> np.ndarray:
        return np.sin(self.colat)

    @property
    def node_weights(self) -> np.ndarray:
        """Full (nlat, nlon) quadrature weight array, summing to 4*pi."""
        return np.repeat(self.lat_weights[:, None], self.nlon, axis=1) * (TWO_PI / self.nlon)

    @property
    def max_degree(self) -> int:
        """Largest degree whose analysis/synthesis this grid supports exactly."""
        return min(self.nlat - 1, (self.nlon - 1) // 2)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid of (colat, lon) node coordinates, each (nlat, nlon)."""
        return np.meshgrid(self.colat, self.lon, indexing="ij")


@dataclass
class SpectralField:
    """Real spherical-harmonic coefficients of a scalar field up to ``lmax``."""

    lmax: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (num_coeffs(self.lmax),):
            raise ValueError(
                f"expected {num_coeffs(self.lmax)} coefficients for lmax={self.lmax}, "
                f"got shape {self.coeffs.shape}"
            )

    def copy(self) -> "SpectralField":
        return SpectralField(self.lmax, self.coeffs.copy())

    @property
    def mean(self) -> float:
        """Sphere average: the (0,0) coefficient times Y00 = 1/sqrt(4*pi)."""
        return float(self.coeffs[0]) / math.sqrt(FOUR_PI)

    def l2_norm(self) -> float:
        """L2(S^2) norm; by orthonormality the euclidean coefficient norm."""
        return float(np.linalg.norm(self.coeffs))

    def coeff(self, l: int, m: int) -> float:
        return float(self.coeffs[flat_index(l, m)])


@dataclass
class GridField:
    """Scalar samples on a SphereGrid."""

    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.nlat, self.grid.nlon):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.nlat}, {self.grid.nlon})"
            )


def make_grid(L: int) -> SphereGrid:
    """Quadrature grid padded for alias-free quadratic nonlinearities at degree L.

    Sizes follow the 3/2-type padding rule nlat >= ceil(3(L+1)/2),
    nlon >= 3L+1 (rounded up to even for the real FFT), which makes products
    of three degree-L factors exactly integrable.
    """
    if L < 0:
        raise ValueError(f"degree must be >= 0, got {L}")
    nlat = max((3 * (L + 1) + 1) // 2, 2)
    nlon = 3 * L + 1
    nlon += nlon % 2
    x, w = np.polynomial.legendre.leggauss(nlat)
    # leggauss returns x ascending in [-1, 1]; colat = arccos(x) descending,
    # so flip to get colatitudes increasing from the north pole.
    colat = np.arccos(x[::-1]).copy()
    lat_weights = w[::-1].copy()
    lon = TWO_PI * np.arange(nlon) / nlon
    return SphereGrid(nlat=nlat, nlon=nlon, colat=colat, lon=lon, lat_weights=lat_weights)


# ---------------------------------------------------------------------------
# Associated Legendre recurrences
# ---------------------------------------------------------------------------

def _legendre_blocks(lmax: int, x: np.ndarray, with_derivative: bool = False):
    """Normalized associated Legendre values per order m at abscissae x.

    Returns a list over m = 0..lmax of arrays with shape (len(x), lmax+1-m)
    holding Q[l, m](x) for l = m..lmax, where Q is normalized so that
    2*pi * integral(Q[l,m] * Q[l',m'], x=-1..1) = delta.  If requested, a
    parallel list of d/d(colat) values is returned as well (x = cos(colat),
    valid only for interior nodes where sin(colat) > 0).
    """
    x = np.asarray(x, dtype=np.float64)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    blocks: list[np.ndarray] = []
    dblocks: list[np.ndarray] = []

    # sectoral seed Q[m, m], built up multiplicatively
    qmm = np.full_like(x, 1.0 / math.sqrt(FOUR_PI))
    for m in range(lmax + 1):
        nl = lmax + 1 - m
        q = np.empty((x.size, nl))
        q[:, 0] = qmm
        if nl > 1:
            # first off-sectoral value: Q[m+1, m] = sqrt(2m+3) * x * Q[m, m]
            q[:, 1] = math.sqrt(2 * m + 3) * x * qmm
        for l in range(m + 2, lmax + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            q[:, l - m] = a * (x * q[:, l - m - 1] - b * q[:, l - m - 2])
        blocks.append(q)

        if with_derivative:
            dq = np.empty_like(q)
            for l in range(m, lmax + 1):
                e = math.sqrt((l * l - m * m) * (2.0 * l + 1.0) / (2.0 * l - 1.0)) if l > m else 0.0
                prev = q[:, l - m - 1] if l > m else 0.0
                dq[:, l - m] = (l * x * q[:, l - m] - e * prev) / sin_t
            dblocks.append(dq)

        if m < lmax:
            qmm = qmm * sin_t * math.sqrt((2.0 * m + 3.0) / (2.0 * m + 2.0))

    if with_derivative:
        return blocks, dblocks
    return blocks


class TransformPlan:
    """Precomputed Legendre blocks for one (grid, lmax) pair."""

    def __init__(self, grid: SphereGrid, lmax: int):
        self.lmax = lmax
        self.p, self.dp = _legendre_blocks(lmax, grid.cos_colat, with_derivative=True)


def _plan(grid: SphereGrid, lmax: int) -> TransformPlan:
    plan = grid._plans.get(lmax)
    if plan is None:
        plan = TransformPlan(grid, lmax)
        grid._plans[lmax] = plan
    return plan


def _check_capacity(grid: SphereGrid, lmax: int) -> None:
    if lmax > grid.max_degree:
        raise GridTooSmallError(
            f"grid ({grid.nlat} x {grid.nlon}) supports degree <= {grid.max_degree}, "
            f"requested {lmax}"
        )


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------

def sht_forward(f: GridField, lmax: int) -> SpectralField:
    """Analysis: project grid samples onto the basis up to degree ``lmax``.

    Exact (to roundoff) for band-limited inputs within the grid's capacity;
    for general inputs this is the discrete L2 projection.
    """
    grid = f.grid
    _check_capacity(grid, lmax)
    plan = _plan(grid, lmax)
    fourier = np.fft.rfft(f.values, axis=1)
    scale = TWO_PI / grid.nlon
    coeffs = np.zeros(num_coeffs(lmax))
    wlat = grid.lat_weights
    for m in range(lmax + 1):
        ls = np.arange(m, lmax + 1)
        idx_cos = ls * ls + ls + m
        block = plan.p[m]
        if m == 0:
            coeffs[idx_cos] = scale * (block.T @ (wlat * fourier[:, 0].real))
        else:
            fac = scale * math.sqrt(2.0)
            coeffs[idx_cos] = fac * (block.T @ (wlat * fourier[:, m].real))
            idx_sin = ls * ls + ls - m
            coeffs[idx_sin] = fac * (block.T @ (wlat * (-fourier[:, m].imag)))
    return SpectralField(lmax, coeffs)


def _fourier_rows(f: SpectralField, plan: TransformPlan, nlon: int, use_derivative: bool = False):
    """Complex longitude-mode rows F[:, m] of the synthesis (or its d/dcolat)."""
    lmax = f.lmax
    blocks = plan.dp if use_derivative else plan.p
    nlat = blocks[0].shape[0]
    rows = np.zeros((nlat, nlon // 2 + 1), dtype=np.complex128)
    for m in range(lmax + 1):
        ls = np.arange(m, lmax + 1)
        block = blocks[m]
        if m == 0:
            rows[:, 0] = nlon * (block @ f.coeffs[ls * ls + ls])
        else:
            a = math.sqrt(2.0) * (block @ f.coeffs[ls * ls + ls + m])
            b = math.sqrt(2.0) * (block @ f.coeffs[ls * ls + ls - m])
            rows[:, m] = 0.5 * nlon * (a - 1j * b)
    return rows


def sht_inverse(f: SpectralField, grid: SphereGrid) -> GridField:
    """Synthesis: evaluate the coefficient field at the grid nodes."""
    _check_capacity(grid, f.lmax)
    plan = _plan(grid, f.lmax)
    rows = _fourier_rows(f, plan, grid.nlon)
    values = np.fft.irfft(rows, n=grid.nlon, axis=1)
    return GridField(grid, values)


def integrate(f: GridField) -> float:
    """Quadrature of f over the sphere (exact within grid capacity)."""
    return float((TWO_PI / f.grid.nlon) * (f.grid.lat_weights @ f.values.sum(axis=1)))


def evaluate_harmonic(idx: BasisIndex, point: tuple[float, float]) -> float:
    """Value of one basis function at a (colat, lon) point."""
    colat, lon = point
    x = np.array([math.cos(colat)])
    blocks = _legendre_blocks(idx.l, x)
    q = blocks[abs(idx.m)][0, idx.l - abs(idx.m)]
    if idx.m == 0:
        return float(q)
    if idx.m > 0:
        return float(math.sqrt(2.0) * q * math.cos(idx.m * lon))
    return float(math.sqrt(2.0) * q * math.sin(-idx.m * lon))


def synthesize_at_points(f: SpectralField, colat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    """Evaluate a coefficient field at arbitrary points (vectorized).

    ``colat`` and ``lon`` are broadcast-compatible arrays; the result has
    their common shape.  Cost is O(npoints * lmax^2).
    """
    colat = np.asarray(colat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    shape = np.broadcast_shapes(colat.shape, lon.shape)
    colat_f = np.broadcast_to(colat, shape).ravel()
    lon_f = np.broadcast_to(lon, shape).ravel()
    blocks = _legendre_blocks(f.lmax, np.cos(colat_f))
    out = np.zeros(colat_f.size)
    for m in range(f.lmax + 1):
        ls = np.arange(m, f.lmax + 1)
        if m == 0:
            out += blocks[0] @ f.coeffs[ls * ls + ls]
        else:
            ca = blocks[m] @ f.coeffs[ls * ls + ls + m]
            cb = blocks[m] @ f.coeffs[ls * ls + ls - m]
            out += math.sqrt(2.0) * (ca * np.cos(m * lon_f) + cb * np.sin(m * lon_f))
    return out.reshape(shape)
