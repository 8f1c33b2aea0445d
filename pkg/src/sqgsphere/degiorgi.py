"""Quantitative diagnostics for the regularity machinery.

Everything here is read-only over simulation snapshots: truncation energy
ladders and their nonlinear recurrence, geodesic-ball quadrature, local
energy inequality residuals, the drift-moment hypothesis, level-set measures
with the isoperimetric ratio, oscillation profiles with modulus-of-
continuity fits, and the comoving rotation frame.

Discretization conventions (recorded with results where relevant):

* Truncated fields are not band-limited; their H^{1/2} seminorms are taken
  after re-projection to a fixed degree, the only consistent discrete
  analogue of the continuum object.
* Set measures use node membership only (no sub-cell interpolation); the
  resolution scale is the per-node quadrature weight.
* Any diagnostic windowed at scale h requires the snapshot cadence
  max-gap <= h/8 and raises CadenceError otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .extension import extend
from .harmonics import (
    GridField,
    SpectralField,
    SphereGrid,
    integrate,
    make_grid,
    sht_forward,
    sht_inverse,
    synthesize_at_points,
)
from .operators import (
    VectorGridField,
    gradient,
    h_half_seminorm_sq,
    velocity_from_theta,
)
from .solver import Trajectory


class EmptyBallError(ValueError):
    """No grid nodes fall inside the requested geodesic ball."""


class CadenceError(RuntimeError):
    """Snapshot spacing is too coarse for the requested diagnostic scale."""


class NothingToFitError(ValueError):
    """The energy sequence vanishes identically above level zero."""


class ZeroDenominatorError(ArithmeticError):
    """Isoperimetric denominator vanished while the left side did not."""


# ---------------------------------------------------------------------------
# Geometry helpers
# ---------------------------------------------------------------------------

def unit_vector(point: tuple[float, float]) -> np.ndarray:
    colat, lon = point
    return np.array(
        [math.sin(colat) * math.cos(lon), math.sin(colat) * math.sin(lon), math.cos(colat)]
    )


def distance_field(grid: SphereGrid, x0: tuple[float, float]) -> np.ndarray:
    """Great-circle distance from x0 to every grid node, shape (nlat, nlon)."""
    colat, lon = grid.nodes()
    colat0, lon0 = x0
    cos_d = np.cos(colat0) * np.cos(colat) + np.sin(colat0) * np.sin(colat) * np.cos(lon - lon0)
    return np.arccos(np.clip(cos_d, -1.0, 1.0))


def geodesic_ball_measure(
    grid: SphereGrid, x0: tuple[float, float], h: float
) -> tuple[np.ndarray, float]:
    """Node mask of the geodesic ball B(x0, h) and its quadrature measure."""
    if not 0.0 < h <= math.pi:
        raise ValueError(f"ball radius must lie in (0, pi], got {h}")
    mask = distance_field(grid, x0) < h
    if not mask.any():
        raise EmptyBallError(f"no grid nodes within distance {h} of {x0}")
    return mask, float(grid.node_weights[mask].sum())


def _check_cadence(times: np.ndarray, h: float) -> None:
    if times.size < 2:
        raise CadenceError(f"need at least two snapshots inside a window of length {h}")
    gap = float(np.diff(times).max())
    if gap > h / 8.0 + 1e-12:
        raise CadenceError(
            f"snapshot gap {gap:.4g} exceeds h/8 = {h / 8.0:.4g}; "
            "rerun with a finer snapshot cadence"
        )


@dataclass
class LocalGeometry:
    """A space-time-extension cylinder around one point."""

    x0: tuple[float, float]
    h: float
    t_window: tuple[float, float]
    z0: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.h < math.pi:
            raise ValueError(f"radius must lie in (0, pi), got {self.h}")
        if self.t_window[1] < self.t_window[0]:
            raise ValueError(f"empty time window {self.t_window}")
        if self.z0 < 0:
            raise ValueError(f"z0 must be >= 0, got {self.z0}")


# ---------------------------------------------------------------------------
# Truncations and the global energy ladder
# ---------------------------------------------------------------------------

def truncate(theta: GridField, level: float) -> GridField:
    """Positive part above the level: max(theta - level, 0) pointwise."""
    if not math.isfinite(level):
        raise ValueError(f"truncation level must be finite, got {level}")
    return GridField(theta.grid, np.maximum(theta.values - level, 0.0))


@dataclass
class TruncationLadder:
    """Level and time ladders l_k = C(1 - 2^-k), T_k = t0(1 - 2^-k)."""

    C: float
    t0: float
    k_max: int

    def __post_init__(self) -> None:
        if self.C <= 0 or self.t0 <= 0 or self.k_max < 1:
            raise ValueError("ladder needs C > 0, t0 > 0, k_max >= 1")

    @property
    def levels(self) -> np.ndarray:
        k = np.arange(self.k_max + 1)
        return self.C * (1.0 - 2.0 ** (-k))

    @property
    def times(self) -> np.ndarray:
        k = np.arange(self.k_max + 1)
        return self.t0 * (1.0 - 2.0 ** (-k))


@dataclass
class EnergySequence:
    values: np.ndarray
    levels: np.ndarray
    times: np.ndarray
    projection_degree: int


def _windowed_trapezoid(times: np.ndarray, samples: np.ndarray, t_start: float) -> float:
    """Trapezoid of a sampled integrand over [t_start, times[-1]].

    The first partial interval uses the linear interpolant at t_start.
    """
    if t_start >= times[-1]:
        return 0.0
    i = int(np.searchsorted(times, t_start, side="right"))
    if i == 0:
        ts, vs = times, samples
    else:
        v_start = np.interp(t_start, times, samples)
        ts = np.concatenate([[t_start], times[i:]])
        vs = np.concatenate([[v_start], samples[i:]])
    return float(np.trapezoid(vs, ts))


def global_energy_sequence(
    traj: Trajectory,
    ladder: TruncationLadder,
    grid: SphereGrid | None = None,
    projection_degree: int | None = None,
) -> EnergySequence:
    """Truncation energies E_k = sup_{t >= T_k} L2 + 2 * time-integrated H^{1/2}.

    The L2 part is grid quadrature of the truncation; the H^{1/2} part
    re-projects the truncated field to ``projection_degree`` (default: the
    trajectory's spectral degree).  Time integrals run to the end of the
    trajectory, the discrete stand-in for the infinite horizon.
    """
    lmax = traj.states[0].theta.lmax
    if projection_degree is None:
        projection_degree = lmax
    if grid is None:
        grid = make_grid(lmax)
    times = traj.times
    if times[-1] <= ladder.t0:
        raise ValueError(
            f"trajectory ends at t={times[-1]:.4g}, before the ladder time t0={ladder.t0:.4g}"
        )

    fields = [sht_inverse(s.theta, grid) for s in traj.states]
    levels = ladder.levels
    l2 = np.empty((levels.size, times.size))
    hhalf = np.empty_like(l2)
    for j, f in enumerate(fields):
        for k, lev in enumerate(levels):
            trunc = truncate(f, lev)
            l2[k, j] = integrate(GridField(grid, trunc.values**2))
            hhalf[k, j] = h_half_seminorm_sq(sht_forward(trunc, projection_degree))

    e = np.empty(levels.size)
    for k, t_k in enumerate(ladder.times):
        idx = times >= t_k - 1e-12
        sup_l2 = float(l2[k, idx].max()) if idx.any() else 0.0
        sup_l2 = max(sup_l2, float(np.interp(t_k, times, l2[k])))
        e[k] = sup_l2 + 2.0 * _windowed_trapezoid(times, hhalf[k], t_k)
    return EnergySequence(e, levels, ladder.times, projection_degree)


@dataclass
class RecurrenceFit:
    ratios: dict[int, float]
    c_prime: float
    epsilon: float

    @property
    def passed(self) -> bool:
        return all(math.isfinite(r) for r in self.ratios.values())


def recurrence_fit(seq: EnergySequence, n: int = 2) -> RecurrenceFit:
    """Per-step ratios of the nonlinear recurrence E_k <= C' 2^{k(1+2e)} E_{k-1}^{1+e}.

    epsilon = 1/n; the maximal ratio is reported as the measured constant.
    Steps with E_{k-1} = 0 are skipped (then E_k = 0 too, by monotonicity of
    truncations).
    """
    eps = 1.0 / n
    e = seq.values
    ratios: dict[int, float] = {}
    for k in range(1, e.size):
        if e[k - 1] > 0.0:
            ratios[k] = float(e[k] / (2.0 ** (k * (1 + 2 * eps)) * e[k - 1] ** (1 + eps)))
    if not ratios:
        raise NothingToFitError("all truncation energies above level zero vanish")
    return RecurrenceFit(ratios, max(ratios.values()), eps)


# ---------------------------------------------------------------------------
# Oscillation
# ---------------------------------------------------------------------------

def oscillation(theta: GridField, mask: np.ndarray) -> float:
    """max - min of the samples under the mask."""
    if not mask.any():
        raise EmptyBallError("oscillation over an empty node set")
    vals = theta.values[mask]
    return float(vals.max() - vals.min())


@dataclass
class ModulusFit:
    amplitude: float
    exponent: float
    rms_log_residual: float


@dataclass
class OscillationProfile:
    scales: np.ndarray
    osc: np.ndarray
    power_fit: ModulusFit | None
    log_fit: ModulusFit | None


def oscillation_profile(
    traj: Trajectory,
    x0: tuple[float, float],
    h0: float,
    scale_factor: float,
    levels: int,
    t_star: float | None = None,
    grid: SphereGrid | None = None,
) -> OscillationProfile:
    """Oscillation over the nested space-time cubes B(x0, h_j) x [t*-h_j, t*].

    Scales are h_j = h0 * scale_factor^j.  Both modulus models are fitted by
    least squares in log space over the scales with positive oscillation:
    ``osc ~ A h^beta`` always, ``osc ~ A log(1/h)^-alpha`` over scales h < 1.
    The profile is truncated at the first scale whose ball holds no node.
    """
    if not 0.0 < scale_factor < 1.0:
        raise ValueError(f"scale factor must lie in (0, 1), got {scale_factor}")
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    lmax = traj.states[0].theta.lmax
    if grid is None:
        grid = make_grid(lmax)
    times = traj.times
    if t_star is None:
        t_star = float(times[-1])
    if t_star - h0 < times[0] - 1e-12 or t_star > times[-1] + 1e-12:
        raise ValueError(
            f"window [{t_star - h0:.4g}, {t_star:.4g}] outside trajectory range"
        )

    fields: dict[int, np.ndarray] = {}

    def field_values(i: int) -> np.ndarray:
        if i not in fields:
            fields[i] = sht_inverse(traj.states[i].theta, grid).values
        return fields[i]

    scales, osc = [], []
    for j in range(levels):
        h = h0 * scale_factor**j
        try:
            mask, _ = geodesic_ball_measure(grid, x0, h)
        except EmptyBallError:
            break
        in_window = [i for i, t in enumerate(times) if t_star - h - 1e-12 <= t <= t_star + 1e-12]
        _check_cadence(times[in_window], h)
        hi = max(field_values(i)[mask].max() for i in in_window)
        lo = min(field_values(i)[mask].min() for i in in_window)
        scales.append(h)
        osc.append(hi - lo)
    scales_arr = np.array(scales)
    osc_arr = np.array(osc)

    def fit(xs: np.ndarray, keep: np.ndarray) -> ModulusFit | None:
        if keep.sum() < 2:
            return None
        ys = np.log(osc_arr[keep])
        slope, intercept = np.polyfit(xs[keep], ys, 1)
        resid = ys - (slope * xs[keep] + intercept)
        return ModulusFit(math.exp(intercept), float(slope), float(np.sqrt(np.mean(resid**2))))

    positive = osc_arr > 0
    power = fit(np.log(scales_arr, where=scales_arr > 0, out=np.zeros_like(scales_arr)), positive)
    loggable = positive & (scales_arr < 1.0)
    log_fit = None
    if loggable.sum() >= 2:
        xs = np.zeros_like(scales_arr)
        xs[loggable] = np.log(np.log(1.0 / scales_arr[loggable]))
        raw = fit(xs, loggable)
        if raw is not None:
            # model osc = A * log(1/h)^-alpha, so alpha = -slope
            log_fit = ModulusFit(raw.amplitude, -raw.exponent, raw.rms_log_residual)
    return OscillationProfile(scales_arr, osc_arr, power, log_fit)


# ---------------------------------------------------------------------------
# Cutoffs
# ---------------------------------------------------------------------------

@dataclass
class CutoffField:
    """A radial C^2 cutoff and the magnitude of its surface gradient."""

    values: GridField
    grad_magnitude: GridField
    inner_radius: float
    outer_radius: float


def smooth_bump(
    grid: SphereGrid, x0: tuple[float, float], h: float, inner_fraction: float = 0.5
) -> CutoffField:
    """Quintic cutoff: 1 inside inner_fraction * h, 0 outside h, C^2 between."""
    if not 0.0 < inner_fraction < 1.0:
        raise ValueError(f"inner fraction must lie in (0, 1), got {inner_fraction}")
    d = distance_field(grid, x0)
    r_in = inner_fraction * h
    width = h - r_in
    s = np.clip((d - r_in) / width, 0.0, 1.0)
    eta = 1.0 - (10.0 * s**3 - 15.0 * s**4 + 6.0 * s**5)
    grad = 30.0 * s**2 * (1.0 - s) ** 2 / width
    return CutoffField(GridField(grid, eta), GridField(grid, grad), r_in, h)


def bump_profile(s: np.ndarray) -> np.ndarray:
    """The radial profile on [0, 1]: quintic ramp from 1 down to 0."""
    s = np.clip(s, 0.0, 1.0)
    return 1.0 - (10.0 * s**3 - 15.0 * s**4 + 6.0 * s**5)


@dataclass
class ProofLadderStep:
    """Geometry of step k of the shrinking-cutoff ladder at base scale h."""

    support_radius: float
    plateau_radius: float
    z_top: float
    t_window: tuple[float, float]


def ladder_geometry(h: float, t_star: float, delta: float, k: int) -> ProofLadderStep:
    """Radii h(1+2^-k), plateau h(1+2^-k-1), z-interval [0, h delta^k],
    time window t* + [-h 2^-k-1, h]."""
    if k < 0 or not 0.0 < delta < 1.0:
        raise ValueError("need k >= 0 and delta in (0, 1)")
    return ProofLadderStep(
        support_radius=h * (1.0 + 2.0 ** (-k)),
        plateau_radius=h * (1.0 + 2.0 ** (-k - 1)),
        z_top=h * delta**k,
        t_window=(t_star - h * 2.0 ** (-k - 1), t_star + h),
    )


# ---------------------------------------------------------------------------
# Local energy inequality and the drift hypothesis
# ---------------------------------------------------------------------------

@dataclass
class LocalEnergyReport:
    lhs: float
    rhs_terms: dict[str, float]
    c_min: float | None
    level: float
    n_z: int

    @property
    def rhs_total(self) -> float:
        return sum(self.rhs_terms.values())


def local_energy_residual(
    traj: Trajectory,
    geom: LocalGeometry,
    eta: CutoffField,
    level: float = 0.0,
    n_z: int = 17,
    projection_degree: int | None = None,
) -> LocalEnergyReport:
    """Both sides of the local energy inequality on one cylinder.

    LHS: product-space Dirichlet energy of eta * truncated-extension over
    the window plus the final-time L2 term.  RHS: the four bracketed terms
    (initial L2, h-weighted cutoff-gradient terms on the boundary field and
    the extension, and the time-integrated L2).  Returns the smallest
    constant making LHS <= C * RHS, or None when both sides vanish.
    """
    lmax = traj.states[0].theta.lmax
    if projection_degree is None:
        projection_degree = lmax
    grid = eta.values.grid
    states = traj.window(*geom.t_window)
    if not states:
        raise ValueError(f"no snapshots inside window {geom.t_window}")
    _check_cadence(np.array([s.t for s in states]), geom.h)
    z_levels = np.linspace(0.0, geom.z0, n_z)
    dz = z_levels[1] - z_levels[0] if n_z > 1 else 0.0
    eta_v = eta.values.values
    grad_eta_sq = eta.grad_magnitude.values**2

    grad_energy_t = np.empty(len(states))   # per-time inner Dirichlet density
    l2_t = np.empty(len(states))            # per-time L2 of eta * truncation
    rhs_grad_x_t = np.empty(len(states))    # per-time |grad(eta) theta_k|^2
    rhs_grad_ext_t = np.empty(len(states))  # per-time z-integrated |grad(eta) theta*_k|^2

    for i, s in enumerate(states):
        boundary = sht_inverse(s.theta, grid)
        theta_k = np.maximum(boundary.values - level, 0.0)
        l2_t[i] = integrate(GridField(grid, (eta_v * theta_k) ** 2))
        rhs_grad_x_t[i] = integrate(GridField(grid, grad_eta_sq * theta_k**2))

        layer_density = np.empty(n_z)
        ext_density = np.empty(n_z)
        products = []
        trunc_layers = []
        for z in z_levels:
            layer = sht_inverse(extend(s.theta, z), grid)
            trunc = np.maximum(layer.values - level, 0.0)
            trunc_layers.append(trunc)
            products.append(eta_v * trunc)
        for j, z in enumerate(z_levels):
            w = products[j]
            g = gradient(sht_forward(GridField(grid, w), projection_degree), grid)
            if n_z == 1:
                dzw = np.zeros_like(w)
            elif j == 0:
                dzw = (products[1] - products[0]) / dz
            elif j == n_z - 1:
                dzw = (products[-1] - products[-2]) / dz
            else:
                dzw = (products[j + 1] - products[j - 1]) / (2.0 * dz)
            density = g.u_colat**2 + g.u_lon**2 + dzw**2
            layer_density[j] = integrate(GridField(grid, density))
            ext_density[j] = integrate(GridField(grid, grad_eta_sq * trunc_layers[j] ** 2))
        grad_energy_t[i] = float(np.trapezoid(layer_density, z_levels))
        rhs_grad_ext_t[i] = float(np.trapezoid(ext_density, z_levels))

    ts = np.array([s.t for s in states])
    lhs = float(np.trapezoid(grad_energy_t, ts)) + float(l2_t[-1])
    rhs_terms = {
        "initial_l2": float(l2_t[0]),
        "grad_eta_boundary": geom.h * float(np.trapezoid(rhs_grad_x_t, ts)),
        "grad_eta_extension": float(np.trapezoid(rhs_grad_ext_t, ts)),
        "time_l2": float(np.trapezoid(l2_t, ts)),
    }
    total = sum(rhs_terms.values())
    c_min = lhs / total if total > 0 else None
    return LocalEnergyReport(lhs, rhs_terms, c_min, level, n_z)


@dataclass
class DriftReport:
    c_measured: float
    sup_integral: float
    h: float
    n: int


def drift_hypothesis_check(
    traj: Trajectory, geom: LocalGeometry, n: int = 2, grid: SphereGrid | None = None
) -> DriftReport:
    """Measured constant in sup_t integral_B |u|^{2n} <= C h^n over the window."""
    lmax = traj.states[0].theta.lmax
    if grid is None:
        grid = make_grid(lmax)
    mask, _ = geodesic_ball_measure(grid, geom.x0, geom.h)
    states = traj.window(*geom.t_window)
    if not states:
        raise ValueError(f"no snapshots inside window {geom.t_window}")
    w = grid.node_weights
    sup_integral = 0.0
    for s in states:
        u = velocity_from_theta(s.theta, grid)
        speed_sq = u.u_colat**2 + u.u_lon**2
        sup_integral = max(sup_integral, float((w[mask] * speed_sq[mask] ** n).sum()))
    return DriftReport(sup_integral / geom.h**n, sup_integral, geom.h, n)


# ---------------------------------------------------------------------------
# Level sets and the isoperimetric ratio
# ---------------------------------------------------------------------------

@dataclass
class DeGiorgiSets:
    """Quadrature measures of the three level sets on one extension cylinder."""

    measure_a: float
    measure_b: float
    measure_c: float
    k_grad: float
    cylinder_measure: float
    level: float


def degiorgi_sets(
    layers: Sequence[tuple[float, GridField]],
    x0: tuple[float, float],
    h: float,
    level: float | None = None,
    projection_degree: int | None = None,
) -> DeGiorgiSets:
    """Measures of {theta* <= 0}, {theta* >= level}, the band between, and
    the cylinder Dirichlet energy K.

    ``layers`` are (z, values) pairs of the extension on an ascending ladder
    spanning the cylinder height.  The default level is half the sup of
    |theta*| over the cylinder.  Membership is exclusive: nonpositive nodes
    go to A even when level is 0.
    """
    if len(layers) < 2:
        raise ValueError("need at least two extension layers")
    zs = np.array([z for z, _ in layers])
    if np.any(np.diff(zs) <= 0):
        raise ValueError("layer heights must be ascending")
    grid = layers[0][1].grid
    if projection_degree is None:
        projection_degree = grid.max_degree
    mask, _ = geodesic_ball_measure(grid, x0, h)
    stack = np.stack([f.values for _, f in layers])

    if level is None:
        level = 0.5 * float(np.abs(stack[:, mask]).max())
    # trapezoid weights along z
    wz = np.zeros(zs.size)
    wz[:-1] += 0.5 * np.diff(zs)
    wz[1:] += 0.5 * np.diff(zs)
    w_nodes = grid.node_weights[mask]

    vals = stack[:, mask]
    in_a = vals <= 0.0
    in_b = (~in_a) & (vals >= level)
    in_c = (~in_a) & (~in_b)
    cell = wz[:, None] * w_nodes[None, :]
    cylinder_measure = float(cell.sum())
    measure_a = float(cell[in_a].sum())
    measure_b = float(cell[in_b].sum())
    measure_c = float(cell[in_c].sum())

    # Dirichlet energy over the cylinder: spectral surface gradient per
    # layer (after re-projection), second-order differences in z.
    dens = np.empty((zs.size, mask.sum()))
    for j, (_, f) in enumerate(layers):
        g = gradient(sht_forward(f, projection_degree), grid)
        if j == 0:
            dz_v = (stack[1] - stack[0]) / (zs[1] - zs[0])
        elif j == zs.size - 1:
            dz_v = (stack[-1] - stack[-2]) / (zs[-1] - zs[-2])
        else:
            dz_v = (stack[j + 1] - stack[j - 1]) / (zs[j + 1] - zs[j - 1])
        dens[j] = (g.u_colat**2 + g.u_lon**2 + dz_v**2)[mask]
    k_grad = float((cell * dens).sum())

    return DeGiorgiSets(measure_a, measure_b, measure_c, k_grad, cylinder_measure, level)


def isoperimetric_check(sets: DeGiorgiSets, h: float, n: int = 2) -> float:
    """Measured constant |A||B| / (|C|^{1/2} K^{1/2} h^{n+2})."""
    numerator = sets.measure_a * sets.measure_b
    if numerator == 0.0:
        return 0.0
    denominator = math.sqrt(sets.measure_c) * math.sqrt(sets.k_grad) * h ** (n + 2)
    if denominator == 0.0:
        raise ZeroDenominatorError(
            "level-set band has zero measure while |A||B| > 0; the inequality "
            "degenerates for non-H^1 transitions"
        )
    return numerator / denominator


# ---------------------------------------------------------------------------
# Comoving rotation frame
# ---------------------------------------------------------------------------

@dataclass
class RotationFrame:
    s_values: np.ndarray
    rotations: list[np.ndarray]
    generators: list[np.ndarray]       # ball-averaged velocity at the moving center
    comoving: list[GridField]          # F(s, x) = theta(R_s x, t0 + s)
    residual_drift: list[VectorGridField]
    x0: tuple[float, float]
    h: float
    t0: float


def _hat(omega: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -omega[2], omega[1]],
            [omega[2], 0.0, -omega[0]],
            [-omega[1], omega[0], 0.0],
        ]
    )


def _renormalize(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1.0
        out = u @ vt
    return out


class _FrameContext:
    """Grid geometry shared by the frame integration."""

    def __init__(self, grid: SphereGrid, h: float):
        colat, lon = grid.nodes()
        sin_c, cos_c = np.sin(colat), np.cos(colat)
        sin_l, cos_l = np.sin(lon), np.cos(lon)
        self.grid = grid
        self.h = h
        self.nodes = np.stack([sin_c * cos_l, sin_c * sin_l, cos_c], axis=-1)
        self.e_colat = np.stack([cos_c * cos_l, cos_c * sin_l, -sin_c], axis=-1)
        self.e_lon = np.stack([-sin_l, cos_l, np.zeros_like(lon)], axis=-1)
        self.weights = grid.node_weights

    def ball_velocity(self, u: VectorGridField, center: np.ndarray) -> np.ndarray:
        """Moment-matched ball average of the tangential part of u at center.

        Normalizing by the ball integral of cos(distance) instead of the
        plain measure makes the average reproduce rigid rotations exactly,
        which pins the recovered angular velocity for solid-body flows.
        """
        cos_d = self.nodes @ center
        mask = cos_d > math.cos(self.h)
        if not mask.any():
            raise EmptyBallError("comoving ball holds no grid node")
        u_vec = (
            u.u_colat[..., None] * self.e_colat + u.u_lon[..., None] * self.e_lon
        )
        w = self.weights[mask]
        moment = (w[:, None] * u_vec[mask]).sum(axis=0)
        moment -= (moment @ center) * center
        return moment / float((w * cos_d[mask]).sum())


def comoving_frame(
    traj: Trajectory,
    x0: tuple[float, float],
    h: float,
    t0: float,
    s_end: float,
    n_steps: int | None = None,
    n_samples: int = 3,
    grid: SphereGrid | None = None,
) -> RotationFrame:
    """Integrate the rotation frame driven by the ball-averaged velocity.

    The rotation ODE dR/ds = hat(omega) R, omega = center x v_ball, is
    advanced by midpoint RK2 with SVD renormalization; velocities at
    intermediate times come from linear interpolation of the snapshot
    coefficients.  F(0, .) is synthesized on the grid itself (R_0 is the
    identity), so it matches theta(t0) exactly.
    """
    lmax = traj.states[0].theta.lmax
    if grid is None:
        grid = make_grid(lmax)
    times = traj.times
    if t0 < times[0] - 1e-12 or t0 + s_end > times[-1] + 1e-12:
        raise ValueError(
            f"frame window [{t0}, {t0 + s_end}] exceeds trajectory range "
            f"[{times[0]}, {times[-1]}]"
        )
    window_times = times[(times >= t0 - 1e-12) & (times <= t0 + s_end + 1e-12)]
    if s_end > 0:
        _check_cadence(window_times, h)
    ctx = _FrameContext(grid, h)
    center0 = unit_vector(x0)

    if n_steps is None:
        gap = float(np.diff(times).max()) if times.size > 1 else max(s_end, 1.0)
        n_steps = max(8, int(math.ceil(4.0 * s_end / max(gap, 1e-12)))) if s_end > 0 else 0
    ds = s_end / n_steps if n_steps else 0.0

    def velocity_at(s: float) -> VectorGridField:
        return velocity_from_theta(traj.interpolate(t0 + s), grid)

    def omega(s: float, r: np.ndarray) -> np.ndarray:
        center = r @ center0
        v = ctx.ball_velocity(velocity_at(s), center)
        return np.cross(center, v)

    sample_s = np.linspace(0.0, s_end, n_samples) if s_end > 0 else np.array([0.0])
    rotations: list[np.ndarray] = []
    generators: list[np.ndarray] = []
    comoving: list[GridField] = []
    residual: list[VectorGridField] = []

    def record(s: float, r: np.ndarray) -> None:
        center = r @ center0
        u = velocity_at(s)
        v_ball = ctx.ball_velocity(u, center)
        om = np.cross(center, v_ball)
        rotations.append(r.copy())
        generators.append(v_ball)
        theta_s = traj.interpolate(t0 + s)
        if np.array_equal(r, np.eye(3)):
            comoving.append(sht_inverse(theta_s, grid))
        else:
            rotated = ctx.nodes @ r.T
            colat_r = np.arccos(np.clip(rotated[..., 2], -1.0, 1.0))
            lon_r = np.arctan2(rotated[..., 1], rotated[..., 0])
            comoving.append(GridField(grid, synthesize_at_points(theta_s, colat_r, lon_r)))
        rigid = np.cross(om, ctx.nodes)
        residual.append(
            VectorGridField(
                grid,
                u.u_colat - (rigid * ctx.e_colat).sum(axis=-1),
                u.u_lon - (rigid * ctx.e_lon).sum(axis=-1),
            )
        )

    if n_steps and n_samples > 1:
        # land integration steps exactly on the sample times
        per = max(1, math.ceil(n_steps / (n_samples - 1)))
        n_steps = per * (n_samples - 1)
        ds = s_end / n_steps

    r = np.eye(3)
    sample_iter = iter(sample_s)
    next_sample = next(sample_iter)
    tol = 1e-9 * max(1.0, s_end)
    for step_idx in range(n_steps + 1):
        s = step_idx * ds
        while next_sample is not None and s >= next_sample - tol:
            record(next_sample, r)
            next_sample = next(sample_iter, None)
        if step_idx == n_steps:
            break
        k1 = omega(s, r)
        if np.any(k1):
            r_half = _renormalize(r + 0.5 * ds * (_hat(k1) @ r))
        else:
            r_half = r
        k2 = omega(s + 0.5 * ds, r_half)
        if np.any(k2):
            r = _renormalize(r + ds * (_hat(k2) @ r_half))
    if next_sample is not None:
        record(next_sample, r)

    return RotationFrame(sample_s, rotations, generators, comoving, residual, x0, h, t0)
