import numpy as np
import pytest

from sqgsphere import harmonics as H
from sqgsphere import solver as S


@pytest.fixture(scope="session")
def grid16():
    return H.make_grid(16)


@pytest.fixture(scope="session")
def grid24():
    return H.make_grid(24)


@pytest.fixture(scope="session")
def grid32():
    return H.make_grid(32)


@pytest.fixture(scope="session")
def critical_run():
    """The reference nonlinear critical run: L=32, unit-norm random data."""
    import time

    config = S.SimConfig(L=32, seed=7, t_end=1.0, snapshot_every=1)
    start = time.perf_counter()
    trajectory, ledger = S.run(config)
    elapsed = time.perf_counter() - start
    return config, trajectory, ledger, elapsed


@pytest.fixture(scope="session")
def diffusion_bump_run():
    """A smooth localized run used by the local-energy and profile tests."""
    config = S.SimConfig(
        L=24, seed=2, t_end=0.6, snapshot_every=1, dt=0.0125,
        initial_condition="rotated_bump",
    )
    trajectory, ledger = S.run(config)
    return config, trajectory, ledger


def random_field(lmax: int, seed: int, mean_zero: bool = True, unit: bool = True):
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal(H.num_coeffs(lmax))
    if mean_zero:
        coeffs[0] = 0.0
    field = H.SpectralField(lmax, coeffs)
    if unit:
        field.coeffs /= field.l2_norm()
    return field


def unit_coeff_field(lmax: int, l: int, m: int, amplitude: float = 1.0):
    coeffs = np.zeros(H.num_coeffs(lmax))
    coeffs[H.flat_index(l, m)] = amplitude
    return H.SpectralField(lmax, coeffs)
