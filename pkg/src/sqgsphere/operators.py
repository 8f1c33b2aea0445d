"""Spectral and pseudospectral differential operators on the sphere.

Fractional powers of the Laplace-Beltrami operator act diagonally on the
coefficients (multiplier ``(l(l+1))**(alpha/2)``); gradients are synthesized
from analytic derivatives of the associated Legendre functions, never finite
differences, so the transport term's skew-symmetry holds to roundoff.

Orientation convention: ``perp_gradient`` rotates the surface gradient by
+90 degrees in the tangent plane, u = n x grad(psi).  The opposite sign is
equally consistent; this one is fixed here once and for all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .harmonics import (
    GridField,
    SpectralField,
    SphereGrid,
    TWO_PI,
    _check_capacity,
    _fourier_rows,
    _plan,
    degrees,
    make_grid,
    num_coeffs,
    sht_forward,
    sht_inverse,
)


class NonZeroMeanError(ValueError):
    """Inverting Lambda on a field with nonzero sphere average is ill-posed."""


@dataclass
class VectorGridField:
    """Tangential vector field in the local orthonormal (colat, lon) frame."""

    grid: SphereGrid
    u_colat: np.ndarray
    u_lon: np.ndarray

    def __post_init__(self) -> None:
        shape = (self.grid.nlat, self.grid.nlon)
        self.u_colat = np.asarray(self.u_colat, dtype=np.float64)
        self.u_lon = np.asarray(self.u_lon, dtype=np.float64)
        if self.u_colat.shape != shape or self.u_lon.shape != shape:
            raise ValueError("component shapes do not match grid")


def multiplier(lmax: int, alpha: float) -> np.ndarray:
    """Per-coefficient multiplier (l(l+1))**(alpha/2)."""
    lam2 = degrees(lmax) * (degrees(lmax) + 1)
    return np.power(lam2.astype(np.float64), 0.5 * alpha)


def fractional_laplacian(f: SpectralField, alpha: float) -> SpectralField:
    """Lambda^alpha: scale the (l, m) coefficient by (l(l+1))**(alpha/2)."""
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    return SpectralField(f.lmax, f.coeffs * multiplier(f.lmax, alpha))


def inverse_lambda(f: SpectralField) -> SpectralField:
    """Lambda^{-1} on mean-zero fields; the mean slot stays zero."""
    norm = f.l2_norm()
    if abs(f.coeffs[0]) > 1e-10 * max(norm, 1e-300):
        raise NonZeroMeanError(
            f"mean coefficient {f.coeffs[0]:.3e} exceeds 1e-10 * norm; "
            "Lambda^-1 requires a mean-zero field"
        )
    mult = multiplier(f.lmax, 1.0)
    out = np.zeros_like(f.coeffs)
    out[1:] = f.coeffs[1:] / mult[1:]
    return SpectralField(f.lmax, out)


def h_half_seminorm_sq(f: SpectralField) -> float:
    """Squared H^{1/2} seminorm: sum of sqrt(l(l+1)) * coeff^2."""
    return float(np.dot(multiplier(f.lmax, 1.0), f.coeffs**2))


def gradient(f: SpectralField, grid: SphereGrid) -> VectorGridField:
    """Surface gradient (d/dcolat, (1/sin colat) d/dlon) at the grid nodes."""
    _check_capacity(grid, f.lmax)
    plan = _plan(grid, f.lmax)
    rows = _fourier_rows(f, plan, grid.nlon)
    drows = _fourier_rows(f, plan, grid.nlon, use_derivative=True)
    u_colat = np.fft.irfft(drows, n=grid.nlon, axis=1)
    m = np.arange(rows.shape[1])
    u_lon = np.fft.irfft(1j * m * rows, n=grid.nlon, axis=1) / grid.sin_colat[:, None]
    return VectorGridField(grid, u_colat, u_lon)


def perp_gradient(psi: SpectralField, grid: SphereGrid) -> VectorGridField:
    """Rotated gradient u = n x grad(psi); divergence-free by construction."""
    g = gradient(psi, grid)
    return VectorGridField(grid, -g.u_lon, g.u_colat)


def velocity_from_theta(theta: SpectralField, grid: SphereGrid) -> VectorGridField:
    """Constitutive law of the critical flow: u = perp_gradient(Lambda^{-1} theta)."""
    return perp_gradient(inverse_lambda(theta), grid)


def divergence(u: VectorGridField, lmax: int | None = None) -> GridField:
    """Surface divergence, computed weakly against the gradient basis.

    The coefficient of Y[l,m] is -quadrature(u . grad Y[l,m]), which for
    closed surfaces equals the divergence projection exactly when the grid
    padding covers the product degrees.
    """
    grid = u.grid
    if lmax is None:
        lmax = grid.max_degree
    _check_capacity(grid, lmax)
    plan = _plan(grid, lmax)
    scale = TWO_PI / grid.nlon
    wlat = grid.lat_weights

    f_colat = np.fft.rfft(u.u_colat, axis=1)
    f_lon_over_sin = np.fft.rfft(u.u_lon / grid.sin_colat[:, None], axis=1)

    coeffs = np.zeros(num_coeffs(lmax))
    for m in range(lmax + 1):
        ls = np.arange(m, lmax + 1)
        idx_cos = ls * ls + ls + m
        dp = plan.dp[m]
        p = plan.p[m]
        if m == 0:
            coeffs[idx_cos] = -scale * (dp.T @ (wlat * f_colat[:, 0].real))
        else:
            fac = scale * math.sqrt(2.0)
            idx_sin = ls * ls + ls - m
            # colat part pairs with d(colat) of the basis
            coeffs[idx_cos] = -fac * (dp.T @ (wlat * f_colat[:, m].real))
            coeffs[idx_sin] = -fac * (dp.T @ (wlat * (-f_colat[:, m].imag)))
            # lon part: (1/sin) d/dlon swaps cos <-> sin with factors -m, +m
            coeffs[idx_cos] += fac * m * (p.T @ (wlat * (-f_lon_over_sin[:, m].imag)))
            coeffs[idx_sin] -= fac * m * (p.T @ (wlat * f_lon_over_sin[:, m].real))
    return sht_inverse(SpectralField(lmax, coeffs), grid)


def advection(u: VectorGridField, theta: SpectralField, L_out: int) -> SpectralField:
    """Projected transport term P(u . grad theta), truncated to degree L_out.

    The grid carried by ``u`` must be padded per ``make_grid`` so the
    quadratic product is alias-free before projection.
    """
    grid = u.grid
    _check_capacity(grid, L_out)
    g = gradient(theta, grid)
    product = GridField(grid, u.u_colat * g.u_colat + u.u_lon * g.u_lon)
    return sht_forward(product, L_out)


def cordoba_check(
    theta: SpectralField,
    phi: Callable[[np.ndarray], np.ndarray],
    phi_prime: Callable[[np.ndarray], np.ndarray],
    projection_degree: int | None = None,
) -> float:
    """Worst-case residual of the convexity inequality for Lambda.

    Evaluates min over grid nodes of phi'(theta) * Lambda(theta)
    - Lambda(phi(theta)); the pointwise inequality predicts a nonnegative
    value up to the spectral truncation of phi(theta), so callers should
    compare against a small negative tolerance (1e-6 by default in tests).
    phi(theta) is re-projected at ``projection_degree`` (default 2 * lmax).
    """
    if projection_degree is None:
        projection_degree = 2 * theta.lmax
    grid = make_grid(projection_degree)
    theta_grid = sht_inverse(theta, grid)
    lam_theta = sht_inverse(fractional_laplacian(theta, 1.0), grid)
    composed = sht_forward(GridField(grid, phi(theta_grid.values)), projection_degree)
    lam_composed = sht_inverse(fractional_laplacian(composed, 1.0), grid)
    residual = phi_prime(theta_grid.values) * lam_theta.values - lam_composed.values
    return float(residual.min())
