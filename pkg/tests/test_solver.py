import math
import warnings

import numpy as np
import pytest

from sqgsphere import harmonics as H
from sqgsphere import operators as O
from sqgsphere import solver as S

from conftest import random_field


def test_config_validation():
    with pytest.raises(ValueError):
        S.SimConfig(L=0)
    with pytest.raises(ValueError):
        S.SimConfig(alpha=0.0)
    with pytest.raises(ValueError):
        S.SimConfig(dt=-0.1)
    with pytest.raises(ValueError):
        S.SimConfig(initial_condition="vortex")


def test_default_dt():
    cfg = S.SimConfig(L=32)
    assert abs(cfg.dt - 0.5 / math.sqrt(32 * 33)) < 1e-15


@pytest.mark.parametrize("ic", S.INITIAL_CONDITIONS)
def test_initial_state_normalized_mean_zero(ic):
    state = S.initial_state(S.SimConfig(L=16, initial_condition=ic, seed=3))
    assert state.t == 0.0
    assert state.theta.coeffs[0] == 0.0
    assert abs(state.theta.l2_norm() - 1.0) < 1e-12


def test_rhs_zero_state():
    cfg = S.SimConfig(L=8)
    zero = S.SimState(0.0, H.SpectralField(8, np.zeros(H.num_coeffs(8))))
    assert S.rhs(zero, cfg).l2_norm() == 0.0


def test_rhs_zonal_is_pure_decay(grid16):
    cfg = S.SimConfig(L=16, initial_condition="zonal_jet")
    state = S.initial_state(cfg, grid16)
    out = S.rhs(state, cfg, grid16)
    expected = -cfg.kappa * O.multiplier(16, cfg.alpha) * state.theta.coeffs
    assert np.abs(out.coeffs - expected).max() < 1e-9


def test_rhs_skew_symmetry(grid24):
    cfg = S.SimConfig(L=24, seed=5)
    state = S.initial_state(cfg, grid24)
    out = S.rhs(state, cfg, grid24)
    pairing = np.dot(state.theta.coeffs, out.coeffs)
    assert abs(pairing + cfg.kappa * O.h_half_seminorm_sq(state.theta)) < 1e-9


def test_step_exact_linear_propagator(grid16):
    cfg = S.SimConfig(L=16, initial_condition="zonal_jet", dt=0.05)
    state = S.initial_state(cfg, grid16)
    out = S.step(state, cfg, grid16)
    exact = state.theta.coeffs * np.exp(-cfg.kappa * O.multiplier(16, cfg.alpha) * cfg.dt)
    assert np.abs(out.theta.coeffs - exact).max() < 1e-14
    assert out.t == cfg.dt


def test_step_keeps_mean_zero(grid24):
    cfg = S.SimConfig(L=24, seed=8, dt=0.02)
    state = S.initial_state(cfg, grid24)
    for _ in range(3):
        state = S.step(state, cfg, grid24)
        assert state.theta.coeffs[0] == 0.0


def test_step_detects_blowup(grid16):
    cfg = S.SimConfig(L=16, dt=0.05)
    huge = S.SimState(0.0, H.SpectralField(16, np.full(H.num_coeffs(16), 1e200)))
    huge.theta.coeffs[0] = 0.0
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(S.NonFiniteStateError):
            S.step(huge, cfg, grid16)


def test_richardson_fourth_order():
    def final(dt):
        cfg = S.SimConfig(L=16, seed=3, t_end=0.25, dt=dt, snapshot_every=10**9)
        traj, _ = S.run(cfg)
        return traj.states[-1].theta.coeffs

    coarse, mid, fine = final(0.25 / 8), final(0.25 / 16), final(0.25 / 32)
    ratio = np.linalg.norm(coarse - mid) / np.linalg.norm(mid - fine)
    assert 12.0 < ratio < 20.0


def test_run_zero_horizon():
    cfg = S.SimConfig(L=8, t_end=0.0)
    traj, ledger = S.run(cfg)
    assert len(traj.states) == 1
    assert len(ledger.times) == 1
    assert traj.states[0].t == 0.0


def test_run_zonal_exact_decay():
    cfg = S.SimConfig(L=16, initial_condition="zonal_jet", t_end=1.0, dt=0.01)
    traj, _ = S.run(cfg)
    theta0 = S.initial_state(cfg).theta
    exact = theta0.coeffs * np.exp(-O.multiplier(16, 1.0) * traj.states[-1].t)
    assert np.abs(traj.states[-1].theta.coeffs - exact).max() < 1e-8


def test_run_zonal_nonlinearity_stays_small(grid16):
    cfg = S.SimConfig(L=16, initial_condition="zonal_jet", t_end=0.5, dt=0.02)
    traj, _ = S.run(cfg)
    for state in traj.states[:: max(1, len(traj.states) // 5)]:
        u = O.velocity_from_theta(state.theta, grid16)
        adv = O.advection(u, state.theta, 16)
        assert adv.l2_norm() < 1e-9


def test_run_determinism():
    a = S.run(S.SimConfig(L=16, seed=9, t_end=0.2))
    b = S.run(S.SimConfig(L=16, seed=9, t_end=0.2))
    for sa, sb in zip(a[0].states, b[0].states):
        assert np.array_equal(sa.theta.coeffs, sb.theta.coeffs)
    assert a[1].as_array().tobytes() == b[1].as_array().tobytes()


def test_energy_ledger_monotone(critical_run):
    _, _, ledger, _ = critical_run
    energy = np.asarray(ledger.l2_energy)
    assert np.all(np.diff(energy) <= 1e-8 * energy[0])
    dissipation = np.asarray(ledger.dissipation_integral)
    assert np.all(np.diff(dissipation) >= 0.0)


def test_energy_margin_pure_diffusion():
    cfg = S.SimConfig(L=16, initial_condition="zonal_jet", t_end=1.0, dt=0.005)
    _, ledger = S.run(cfg)
    report = S.energy_inequality_check(ledger, cfg.kappa)
    assert report.margins[0] == 0.0
    assert np.abs(report.margins).max() < 1e-8


def test_energy_margin_nonlinear(critical_run):
    cfg, _, ledger, _ = critical_run
    report = S.energy_inequality_check(ledger, cfg.kappa)
    assert report.min_margin >= -1e-6 * report.initial_energy


def test_linf_decay_pure_diffusion():
    cfg = S.SimConfig(L=16, initial_condition="zonal_jet", t_end=1.0, dt=0.02)
    traj, _ = S.run(cfg)
    report = S.linf_decay_check(traj, t0=0.1)
    assert report.max_increase < 0.0  # strictly decreasing
    assert math.isfinite(report.overall_sup)


def test_linf_zero_data():
    zero = H.SpectralField(8, np.zeros(H.num_coeffs(8)))
    traj = S.Trajectory([S.SimState(t, zero.copy()) for t in (0.0, 0.5, 1.0)])
    report = S.linf_decay_check(traj, t0=0.5)
    assert report.overall_sup == 0.0
    assert report.max_increase == 0.0


def test_linf_nonlinear_run(critical_run):
    _, trajectory, _, _ = critical_run
    report = S.linf_decay_check(trajectory, t0=0.1)
    assert report.max_increase <= 1e-6


def test_trajectory_interpolation():
    field_a = random_field(8, seed=1)
    field_b = random_field(8, seed=2)
    traj = S.Trajectory([S.SimState(0.0, field_a), S.SimState(1.0, field_b)])
    mid = traj.interpolate(0.25)
    expected = 0.75 * field_a.coeffs + 0.25 * field_b.coeffs
    assert np.abs(mid.coeffs - expected).max() < 1e-15
    with pytest.raises(ValueError):
        traj.interpolate(2.0)
