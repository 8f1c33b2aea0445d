import math

import numpy as np
import pytest

from sqgsphere import extension as E
from sqgsphere import harmonics as H
from sqgsphere import operators as O

from conftest import random_field, unit_coeff_field

FOUR_PI = 4.0 * math.pi


def test_extend_identity_at_zero():
    field = random_field(12, seed=0)
    out = E.extend(field, 0.0)
    assert np.array_equal(out.coeffs, field.coeffs)


def test_extend_constant_unchanged():
    const = unit_coeff_field(8, 0, 0, amplitude=2.5)
    out = E.extend(const, 3.0)
    assert np.array_equal(out.coeffs, const.coeffs)


def test_extend_single_mode():
    y10 = unit_coeff_field(8, 1, 0)
    out = E.extend(y10, 1.0)
    assert abs(out.coeffs[H.flat_index(1, 0)] - math.exp(-math.sqrt(2.0))) < 1e-15


def test_extend_rejects_negative_height():
    with pytest.raises(ValueError):
        E.extend(unit_coeff_field(4, 1, 0), -0.1)


def test_semigroup_within_forward_error():
    # exp(a)exp(b) vs exp(a+b) differ by up to ~(lambda z) ulps from argument
    # rounding; the bound below is the standard forward-error budget for a
    # faithfully rounded exponential.
    field = random_field(12, seed=1, unit=False)
    composed = E.extend(E.extend(field, 0.3), 0.45)
    direct = E.extend(field, 0.75)
    lam = O.multiplier(12, 1.0)
    budget = (3.0 + lam * 0.75) * np.spacing(np.abs(direct.coeffs))
    assert np.all(np.abs(composed.coeffs - direct.coeffs) <= budget)


def test_semigroup_tight_at_small_heights():
    # at lambda * z << 1 the budget collapses to the bare product rounding
    field = random_field(8, seed=2, unit=False)
    composed = E.extend(E.extend(field, 0.005), 0.005)
    direct = E.extend(field, 0.01)
    ulp = np.spacing(np.abs(direct.coeffs))
    assert np.all(np.abs(composed.coeffs - direct.coeffs) <= 3.0 * ulp)


def test_extension_field_monotone_layers():
    field = random_field(10, seed=3)
    ext = E.extension_field(field, [0.0, 0.1, 0.3, 0.9])
    assert np.array_equal(ext.layers[0].coeffs, field.coeffs)
    mags = np.stack([np.abs(layer.coeffs) for layer in ext.layers])
    assert np.all(np.diff(mags, axis=0) <= 0.0)


class TestHarmonicity:
    def test_single_mode_small(self):
        y10 = unit_coeff_field(8, 1, 0)
        assert E.harmonicity_residual(y10, 1.0, 1e-3) < 1e-5

    def test_constant(self):
        const = unit_coeff_field(8, 0, 0, amplitude=1.5)
        assert E.harmonicity_residual(const, 1.0, 1e-2) == 0.0

    def test_second_order_in_dz(self):
        field = random_field(10, seed=4)
        r1 = E.harmonicity_residual(field, 0.5, 0.02)
        r2 = E.harmonicity_residual(field, 0.5, 0.01)
        assert 3.5 < r1 / r2 < 4.5

    def test_requires_dz_below_z(self):
        with pytest.raises(ValueError):
            E.harmonicity_residual(unit_coeff_field(4, 1, 0), 0.01, 0.1)


class TestHeatKernel:
    def test_normalization(self):
        ks = E.heat_kernel((0.7, 1.1), 0.5, 64)
        assert abs(H.integrate(ks.values) - 1.0) < 1e-8

    def test_reproducing_property(self):
        center = (0.7, 1.1)
        ks = E.heat_kernel(center, 0.5, 64)
        f = random_field(8, seed=5)
        f_grid = H.sht_inverse(f, ks.values.grid)
        conv = H.integrate(H.GridField(ks.values.grid, ks.values.values * f_grid.values))
        direct = H.synthesize_at_points(
            E.extend(f, 0.5), np.array([center[0]]), np.array([center[1]])
        )[0]
        assert abs(conv - direct) < 1e-8

    def test_positivity_at_admissible_heights(self):
        for z in (0.5, 0.8):
            ks = E.heat_kernel((0.0, 0.0), z, 64)
            assert ks.values.values.min() >= -1e-8

    def test_admissibility_floor(self):
        with pytest.raises(E.TruncationInsufficientError):
            E.heat_kernel((0.0, 0.0), 0.05, 16)


class TestKernelScaling:
    def test_sup_decreases_with_height(self):
        rows, _ = E.kernel_sup_scaling([0.5, 1.0], 64)
        assert rows[0][1] > rows[1][1]

    def test_fitted_exponent_range(self):
        _, slope = E.kernel_sup_scaling([0.5, 0.7, 1.0], 64)
        assert -2.0 <= slope < 0.0

    def test_single_height_rejected(self):
        with pytest.raises(E.InsufficientPointsError):
            E.kernel_sup_scaling([0.5], 64)


class TestKernelNorm:
    def test_large_height_limit(self):
        assert abs(E.l2_kernel_norm((0.0, 0.0), 30.0, 2) - 1.0 / math.sqrt(FOUR_PI)) < 1e-12

    def test_parseval(self):
        z = 0.6
        got = E.l2_kernel_norm((0.3, 2.0), z, 64)
        ls = np.arange(65)
        ref = math.sqrt(
            np.sum(np.exp(-2.0 * np.sqrt(ls * (ls + 1.0)) * z) * (2 * ls + 1) / FOUR_PI)
        )
        assert abs(got - ref) < 1e-8

    def test_decreasing_in_height(self):
        values = [E.l2_kernel_norm((0.0, 0.0), z, 64) for z in (0.5, 0.7, 1.0)]
        assert values[0] > values[1] > values[2]


def test_numerical_maximum_principle():
    field = random_field(12, seed=6)
    grid = H.make_grid(12)
    base = H.sht_inverse(field, grid).values
    for z in (0.6, 1.2):
        layer = H.sht_inverse(E.extend(field, z), grid).values
        assert layer.min() >= base.min() - 1e-8
        assert layer.max() <= base.max() + 1e-8


def test_dirichlet_energy_identity():
    field = random_field(12, seed=7)
    lhs = E.dirichlet_energy(field)
    rhs = E.boundary_pairing(field)
    assert abs(lhs - rhs) < 1e-8


def test_dirichlet_energy_zero_field():
    zero = H.SpectralField(8, np.zeros(H.num_coeffs(8)))
    assert E.dirichlet_energy(zero) == 0.0
