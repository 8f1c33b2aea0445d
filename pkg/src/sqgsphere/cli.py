"""Command-line entry point: simulate, diagnose, barriers.

Configuration is an INI file with [sim], [diag] and [barrier] sections;
unknown keys are rejected.  Snapshots are text files: one JSON header line
followed by the (L+1)^2 coefficients in (l; m = -l..l) order, written with
shortest round-trip decimals so parse(serialize(x)) is bit-exact.

Exit codes: 0 success, 1 input/config error, 2 computational failure.
The output directory may be overridden with the SQGSPHERE_OUT environment
variable.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import degiorgi
from .barriers import (
    InvalidGeometryError,
    NonConvergenceError,
    b1_scale_sweep,
    b2_bound_check,
    flat_delta,
)
from .extension import extend
from .harmonics import SpectralField, make_grid, num_coeffs, sht_inverse
from .solver import (
    EnergyLedger,
    NonFiniteStateError,
    SimConfig,
    SimState,
    Trajectory,
    run,
)

SNAPSHOT_FORMAT_VERSION = 1

_SIM_KEYS = {"l", "alpha", "kappa", "dt", "t_end", "snapshot_every", "ic", "seed"}
_DIAG_KEYS = {
    "x0_colat",
    "x0_lon",
    "h0",
    "scale_factor",
    "levels",
    "t0",
    "trunc_c",
    "kmax",
}
_BARRIER_KEYS = {"h_list", "r_list", "r1_list", "hfrac", "n_rho", "n_z"}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def _load_ini(path: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    return parser


def _check_keys(parser: configparser.ConfigParser, section: str, allowed: set[str]) -> None:
    if not parser.has_section(section):
        raise ConfigError(f"missing [{section}] section")
    unknown = set(parser.options(section)) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")


def _require(parser: configparser.ConfigParser, section: str, key: str) -> str:
    if not parser.has_option(section, key):
        raise ConfigError(f"missing key {key!r} in [{section}]")
    return parser.get(section, key)


def load_sim_config(parser: configparser.ConfigParser, seed_override: int | None = None) -> SimConfig:
    _check_keys(parser, "sim", _SIM_KEYS)
    get = lambda key: _require(parser, "sim", key)
    try:
        cfg = SimConfig(
            L=int(get("l")),
            alpha=float(get("alpha")),
            kappa=float(get("kappa")),
            dt=float(get("dt")) if parser.get("sim", "dt", fallback="auto") != "auto" else None,
            t_end=float(get("t_end")),
            snapshot_every=int(get("snapshot_every")),
            initial_condition=get("ic"),
            seed=seed_override if seed_override is not None else int(get("seed")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_diag_config(parser: configparser.ConfigParser) -> dict:
    _check_keys(parser, "diag", _DIAG_KEYS)
    get = lambda key: _require(parser, "diag", key)
    try:
        diag = {
            "x0": (float(get("x0_colat")), float(get("x0_lon"))),
            "h0": float(get("h0")),
            "scale_factor": float(get("scale_factor")),
            "levels": int(get("levels")),
            "t0": float(get("t0")),
            "trunc_c": float(get("trunc_c")),
            "kmax": int(get("kmax")),
        }
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if diag["h0"] <= 0 or not 0 < diag["scale_factor"] < 1:
        raise ConfigError("need h0 > 0 and scale_factor in (0, 1)")
    if diag["trunc_c"] <= 0:
        raise ConfigError("trunc_c (cap as fraction of measured sup) must be > 0")
    return diag


def load_barrier_config(parser: configparser.ConfigParser) -> dict:
    _check_keys(parser, "barrier", _BARRIER_KEYS)
    get = lambda key: _require(parser, "barrier", key)

    def floats(text: str) -> list[float]:
        return [float(tok) for tok in text.replace(",", " ").split()]

    try:
        cfg = {
            "h_list": floats(get("h_list")),
            "r_list": floats(get("r_list")),
            "r1_list": floats(get("r1_list")),
            "hfrac": float(get("hfrac")),
            "n_rho": int(get("n_rho")),
            "n_z": int(get("n_z")),
        }
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not cfg["h_list"] or not cfg["r_list"] or not cfg["r1_list"]:
        raise ConfigError("barrier sweeps must be nonempty")
    if not 0 < cfg["hfrac"] <= 1:
        raise ConfigError("hfrac must lie in (0, 1]")
    for r in cfg["r_list"]:
        for r1 in cfg["r1_list"]:
            if r1 >= r:
                raise ConfigError(f"invalid inner radius r1={r1} >= r={r}")
    return cfg


# ---------------------------------------------------------------------------
# Snapshot persistence
# ---------------------------------------------------------------------------

def serialize_snapshot(state: SimState, alpha: float, kappa: float) -> str:
    header = {
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "L": state.theta.lmax,
        "t": state.t,
        "alpha": alpha,
        "kappa": kappa,
    }
    body = "\n".join(repr(v) for v in state.theta.coeffs.tolist())
    return json.dumps(header) + "\n" + body + "\n"


def parse_snapshot(text: str) -> tuple[SimState, dict]:
    lines = text.split("\n", 1)
    header = json.loads(lines[0])
    values = [float(tok) for tok in lines[1].split()]
    lmax = header["L"]
    if len(values) != num_coeffs(lmax):
        raise ConfigError(
            f"snapshot holds {len(values)} coefficients, expected {num_coeffs(lmax)}"
        )
    return SimState(header["t"], SpectralField(lmax, np.array(values))), header


def write_run_dir(out: Path, config: SimConfig, traj: Trajectory, ledger: EnergyLedger,
                  config_text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, state in enumerate(traj.states):
        name = f"snapshot_{i:06d}.txt"
        (out / name).write_text(serialize_snapshot(state, config.alpha, config.kappa))
        names.append(name)
    with (out / "ledger.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "l2_energy", "dissipation_integral", "linf"])
        for row in ledger.as_array():
            writer.writerow([repr(float(v)) for v in row])
    manifest = {
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "L": config.L,
        "alpha": config.alpha,
        "kappa": config.kappa,
        "dt": config.dt,
        "t_end": config.t_end,
        "snapshot_every": config.snapshot_every,
        "ic": config.initial_condition,
        "seed": config.seed,
        "snapshots": names,
        "ledger": "ledger.csv",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_run_dir(run_dir: Path) -> tuple[Trajectory, dict]:
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no manifest.json in {run_dir}")
    manifest = json.loads(manifest_path.read_text())
    states = []
    for name in manifest["snapshots"]:
        state, _ = parse_snapshot((run_dir / name).read_text())
        states.append(state)
    if not states:
        raise ConfigError(f"run directory {run_dir} holds no snapshots")
    return Trajectory(states), manifest


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(config_path: str, out_dir: str, seed_override: int | None = None) -> int:
    parser = _load_ini(config_path)
    config = load_sim_config(parser, seed_override)
    traj, ledger = run(config)
    write_run_dir(Path(out_dir), config, traj, ledger, Path(config_path).read_text())
    return 0


def cmd_diagnose(run_dir: str, config_path: str, out_dir: str | None = None) -> int:
    parser = _load_ini(config_path)
    diag = load_diag_config(parser)
    traj, manifest = read_run_dir(Path(run_dir))
    out = Path(out_dir) if out_dir else Path(run_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = make_grid(manifest["L"])
    times = traj.times
    x0, h0 = diag["x0"], diag["h0"]

    # truncation energy ladder
    sup_linf = max(
        float(np.abs(sht_inverse(s.theta, grid).values).max()) for s in traj.states
    )
    ladder = degiorgi.TruncationLadder(
        C=diag["trunc_c"] * sup_linf, t0=diag["t0"], k_max=diag["kmax"]
    )
    seq = degiorgi.global_energy_sequence(traj, ladder, grid)
    try:
        fit = degiorgi.recurrence_fit(seq)
        ratios = fit.ratios
    except degiorgi.NothingToFitError:
        ratios = {}
    with (out / "energies.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "e_k", "ratio"])
        for k, e_k in enumerate(seq.values):
            writer.writerow([k, repr(float(e_k)), repr(float(ratios.get(k, 0.0)))])

    # oscillation profile (t* anchored at the end of the run)
    profile = degiorgi.oscillation_profile(
        traj, x0, h0, diag["scale_factor"], diag["levels"], t_star=float(times[-1]), grid=grid
    )
    with (out / "oscillation.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["h", "osc", "power_amp", "power_exp", "power_resid", "log_amp", "log_exp", "log_resid"]
        )
        pf, lf = profile.power_fit, profile.log_fit
        p_row = (pf.amplitude, pf.exponent, pf.rms_log_residual) if pf else (0.0, 0.0, 0.0)
        l_row = (lf.amplitude, lf.exponent, lf.rms_log_residual) if lf else (0.0, 0.0, 0.0)
        for h, osc in zip(profile.scales, profile.osc):
            writer.writerow([repr(float(h)), repr(float(osc))] + [repr(float(v)) for v in p_row + l_row])

    # level sets and the isoperimetric ratio over the window [t_end - h0, t_end]
    window = (float(times[-1]) - h0, float(times[-1]))
    states = traj.window(*window)
    z_levels = np.linspace(0.0, h0, 9)
    all_layers = [
        [(float(z), sht_inverse(extend(s.theta, float(z)), grid)) for z in z_levels]
        for s in states
    ]
    mask, _ = degiorgi.geodesic_ball_measure(grid, x0, h0)
    level = 0.5 * max(
        float(np.abs(layer.values[mask]).max())
        for layers in all_layers
        for _, layer in layers
    )
    with (out / "sets.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "measure_a", "measure_b", "measure_c", "k_grad", "ratio"])
        for s, layers in zip(states, all_layers):
            sets = degiorgi.degiorgi_sets(layers, x0, h0, level=level)
            try:
                ratio = degiorgi.isoperimetric_check(sets, h0)
            except degiorgi.ZeroDenominatorError:
                ratio = math.inf
            writer.writerow(
                [repr(float(v)) for v in
                 (s.t, sets.measure_a, sets.measure_b, sets.measure_c, sets.k_grad, ratio)]
            )

    # local energy inequality + drift hypothesis on the same window
    geom = degiorgi.LocalGeometry(x0, h0, window, z0=0.5 * h0)
    eta = degiorgi.smooth_bump(grid, x0, h0, 0.5)
    report = degiorgi.local_energy_residual(traj, geom, eta)
    (out / "local_energy.json").write_text(
        json.dumps(
            {
                "lhs": report.lhs,
                "rhs_terms": report.rhs_terms,
                "c_min": report.c_min,
                "h": h0,
                "z0": geom.z0,
                "level": report.level,
                "window": window,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    drift = degiorgi.drift_hypothesis_check(traj, geom)
    (out / "drift_check.json").write_text(
        json.dumps(
            {
                "c_measured": drift.c_measured,
                "sup_integral": drift.sup_integral,
                "h": drift.h,
                "n": drift.n,
                "window": window,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    return 0


def cmd_barriers(config_path: str, out_dir: str) -> int:
    parser = _load_ini(config_path)
    cfg = load_barrier_config(parser)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_rho, n_z = cfg["n_rho"], cfg["n_z"]

    sweep = b1_scale_sweep(cfg["h_list"], n_rho, n_z)
    with (out / "b1_sweep.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["h", "sup_half_ball", "delta", "slope"])
        for h, sup in zip(sweep.h_values, sweep.sup_values):
            writer.writerow([repr(float(v)) for v in (h, sup, sweep.delta, sweep.slope)])

    with (out / "b2_sweep.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "h", "r1", "sup_inner", "bound", "ratio"])
        for r in cfg["r_list"]:
            for r1 in cfg["r1_list"]:
                check = b2_bound_check(r, cfg["hfrac"] * r, r1, n_rho, n_z)
                writer.writerow(
                    [repr(float(v)) for v in
                     (check.r, check.h, check.r1, check.sup_inner, check.bound, check.ratio)]
                )

    delta_fine = flat_delta(2 * n_rho, 2 * n_z)
    (out / "delta.json").write_text(
        json.dumps(
            {
                "delta": sweep.delta,
                "delta_refined": delta_fine,
                "n_rho": n_rho,
                "n_z": n_z,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqgsphere",
        description="critical-dissipation transport on the sphere: simulate and diagnose",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run the spectral solver")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--seed", type=int, default=None, help="override the config seed")

    p_diag = sub.add_parser("diagnose", help="run diagnostics over a finished run")
    p_diag.add_argument("--run", required=True, help="run directory with snapshots")
    p_diag.add_argument("--config", required=True)
    p_diag.add_argument("--out", default=None, help="output directory (default: run dir)")

    p_bar = sub.add_parser("barriers", help="solve the barrier sweeps")
    p_bar.add_argument("--config", required=True)
    p_bar.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_arg_parser().parse_args(argv)
    out_override = os.environ.get("SQGSPHERE_OUT")
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, out_override or args.out, args.seed)
        if args.command == "diagnose":
            return cmd_diagnose(args.run, args.config, out_override or args.out)
        return cmd_barriers(args.config, out_override or args.out)
    except (ConfigError, InvalidGeometryError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NonFiniteStateError, NonConvergenceError, degiorgi.CadenceError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
