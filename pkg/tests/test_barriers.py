import math

import numpy as np
import pytest

from sqgsphere import barriers as B


def test_problem_validation():
    with pytest.raises(B.InvalidGeometryError):
        B.CylinderProblem("euclid", 1.0, 1.0)
    with pytest.raises(B.InvalidGeometryError):
        B.CylinderProblem("sphere", 3.5, 1.0)
    with pytest.raises(B.InvalidGeometryError):
        B.CylinderProblem("flat", -1.0, 1.0)


def test_maximum_principle_barrier():
    problem = B.CylinderProblem("flat", 1.0, 1.0, 96, 96)
    solution = B.solve_barrier(problem, "b1")
    assert solution.values.min() >= -1e-8
    assert solution.values.max() <= 1.0 + 1e-8
    assert solution.residual_norm <= B.RESIDUAL_TOL


def test_maximum_principle_random_smooth_data():
    rng = np.random.default_rng(0)
    problem = B.CylinderProblem("sphere", 0.8, 0.5, 96, 96)
    side = 0.3 + 0.2 * np.sin(np.linspace(0, math.pi, 97)) * rng.uniform(0.5, 1.0)
    top = np.linspace(0.1, side[-1], 97)
    bottom = np.linspace(0.4, side[0], 97)
    solution = B.solve_axisymmetric(problem, side, top, bottom)
    lo = min(side.min(), top.min(), bottom.min())
    hi = max(side.max(), top.max(), bottom.max())
    assert solution.values.min() >= lo - 1e-9
    assert solution.values.max() <= hi + 1e-9


def test_constant_boundary_gives_constant():
    problem = B.CylinderProblem("sphere", 0.5, 0.5, 64, 64)
    solution = B.solve_axisymmetric(problem, 1.0, 1.0, 1.0)
    assert np.abs(solution.values - 1.0).max() < 1e-12


def test_boundary_monotonicity():
    problem = B.CylinderProblem("flat", 1.0, 1.0, 64, 64)
    low = B.solve_axisymmetric(problem, 0.5, 0.0, 0.0)
    high = B.solve_axisymmetric(problem, 1.0, 0.0, 0.0)
    assert np.all(high.values - low.values >= -1e-12)


@pytest.mark.parametrize("metric", ["flat", "sphere"])
def test_richardson_second_order_smooth_data(metric):
    # corner-compatible smooth side data, zero top/bottom
    def solve(n):
        problem = B.CylinderProblem(metric, 1.0, 1.0, n, n)
        z = np.linspace(-0.5, 0.5, n + 1)
        return B.solve_axisymmetric(problem, np.cos(math.pi * z), 0.0, 0.0).values

    coarse, mid, fine = solve(32), solve(64), solve(128)
    num = np.abs(coarse - mid[::2, ::2]).max()
    den = np.abs(mid[::2, ::2] - fine[::4, ::4]).max()
    assert 3.5 < num / den < 4.5


def test_flat_delta_in_unit_interval():
    delta = B.flat_delta(128, 128)
    assert 0.0 < delta < 1.0


def test_flat_delta_refinement_stability():
    assert abs(B.flat_delta(96, 96) - B.flat_delta(192, 192)) < 1e-4


def test_flat_delta_region_monotonicity():
    problem = B.CylinderProblem("flat", 1.0, 1.0, 96, 96)
    solution = B.solve_barrier(problem, "b1")
    assert solution.sup_over(0.9) > solution.sup_over(0.5)


def test_b1_scale_sweep():
    sweep = B.b1_scale_sweep([0.05, 0.1, 0.2], 96, 96)
    assert np.all(sweep.sup_values < 1.0)
    assert abs(sweep.sup_values[0] - sweep.delta) < 0.02
    assert math.isfinite(sweep.slope)
    # bound sup_h <= delta + C h with the reported per-scale constant
    c = sweep.max_ratio
    assert np.all(sweep.sup_values <= sweep.delta + c * sweep.h_values + 1e-12)


def test_b1_flat_sphere_consistency_small_scale():
    flat = B.solve_barrier(B.CylinderProblem("flat", 1.0, 1.0, 96, 96), "b1")
    h = 0.05
    sphere = B.solve_barrier(B.CylinderProblem("sphere", h, h, 96, 96), "b1")
    assert np.abs(sphere.values - flat.values).max() <= 0.05


def test_b2_nonnegative_and_bounded():
    check = B.b2_bound_check(0.6, 0.3, 0.3, 96, 96)
    assert 0.0 <= check.sup_inner <= 1.0 + 1e-8
    assert math.isfinite(check.ratio)


def test_b2_sweep_ratios_bounded():
    ratios = []
    for r in (0.4, 0.8):
        for r1_frac in (0.3, 0.7):
            check = B.b2_bound_check(r, 0.5 * r, r1_frac * r, 64, 64)
            ratios.append(check.ratio)
    assert all(math.isfinite(r) and r >= 0.0 for r in ratios)
    assert max(ratios) < 10.0


def test_b2_inner_radius_growth():
    # pushing r1 toward r grows the bound's denominator; ratio stays finite
    small = B.b2_bound_check(0.6, 0.3, 0.1, 64, 64)
    large = B.b2_bound_check(0.6, 0.3, 0.55, 64, 64)
    assert large.sup_inner > small.sup_inner
    assert math.isfinite(large.ratio)


def test_b2_geometry_validation():
    with pytest.raises(B.InvalidGeometryError):
        B.b2_bound_check(0.5, 0.6, 0.2)
    with pytest.raises(B.InvalidGeometryError):
        B.b2_bound_check(0.5, 0.3, 0.5)


def test_sup_over_z_band():
    problem = B.CylinderProblem("flat", 1.0, 1.0, 64, 64)
    solution = B.solve_barrier(problem, "b1")
    mid_band = solution.sup_over(0.5, z_range=(-0.1, 0.1))
    assert mid_band <= solution.sup_over(0.5) + 1e-15
