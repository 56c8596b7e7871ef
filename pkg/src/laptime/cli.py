"""Command-line front end.

Subcommands::

    laptime fit SAMPLES --kind {alpha_m,alpha_b,psd}
    laptime solve --track FILE [--vehicle CONFIG] --transmission {sr,cvt}
    laptime sweep --track FILE [--vehicle CONFIG] --grid NxM --eta-range a:b --energy-range a:b
    laptime gen-track --segment LEN[:RADIUS[:GRADE]] ...
    laptime compare --compare A B

``--track`` accepts a CSV/JSON track file or ``builtin:NAME`` for one of the
synthetic fixtures. Without ``--vehicle`` the synthetic car is used.

Exit codes: 0 success, 2 input error, 3 infeasible, 4 not converged.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from laptime import fixtures
from laptime.config import CarSetup, ConfigError, PowertrainConfig, load_config
from laptime.fitting import FittingError, fit_alpha, fit_psd_quadratic, read_samples
from laptime.optimizer import (
    AlgorithmSettings,
    compare_trajectories,
    read_trajectory_csv,
    solve_setup,
    sweep,
    write_summary_json,
    write_sweep_csv,
    write_trajectory_csv,
)
from laptime.track import Segment, TrackError, TrackProfile, compose_track, load_track, save_track

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_CONVERGED = 4

BUILTIN_TRACKS: dict[str, Callable[[float], TrackProfile]] = {
    "flat": lambda step: fixtures.flat_track(step=step),
    "corner": fixtures.corner_track,
    "chicane": fixtures.chicane_track,
    "sweep": fixtures.sweep_track,
    "long": fixtures.long_track,
}

log = logging.getLogger("laptime")


class InputError(Exception):
    """Bad command-line input; maps to exit code 2."""


# -- argument helpers ---------------------------------------------------------


def _range(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}") from None
    if not (math.isfinite(a) and math.isfinite(b)) or a > b:
        raise argparse.ArgumentTypeError(f"expected finite a <= b, got {text!r}")
    return a, b


def _grid(text: str) -> tuple[int, int]:
    try:
        n, m = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NxM, got {text!r}") from None
    if n < 1 or m < 1:
        raise argparse.ArgumentTypeError("grid sizes must be positive")
    return n, m


def _segment(text: str) -> Segment:
    parts = text.split(":")
    try:
        length = float(parts[0])
        radius = float(parts[1]) if len(parts) > 1 and parts[1] not in ("", "inf") else None
        grade = float(parts[2]) if len(parts) > 2 else 0.0
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LEN[:RADIUS[:GRADE]], got {text!r}") from None
    if len(parts) > 3 or not length > 0 or (radius is not None and not radius > 0):
        raise argparse.ArgumentTypeError(f"invalid segment {text!r}")
    return Segment(length, radius, grade)


def _formats(args: argparse.Namespace) -> set[str]:
    return set(args.format or ("csv", "json"))


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_track(spec: str, step: float | None, a_lat_max: float | None, v_cap: float | None) -> TrackProfile:
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN_TRACKS:
            raise InputError(f"unknown builtin track {name!r}; choose from {sorted(BUILTIN_TRACKS)}")
        return BUILTIN_TRACKS[name](step or 10.0)
    path = Path(spec)
    if not path.is_file():
        raise InputError(f"track file not found: {spec}")
    fmt = "json" if path.suffix.lower() == ".json" else "csv"
    with open(path, encoding="utf-8") as fh:
        track = load_track(fh, fmt, a_lat_max, v_cap)
    return replace(track, name=path.stem)


def _read_config(path: str | None, budget_mj: float | None) -> PowertrainConfig:
    if path is None:
        cfg = fixtures.synthetic_config()
    else:
        if not Path(path).is_file():
            raise InputError(f"vehicle configuration not found: {path}")
        cfg = load_config(path)
    if budget_mj is not None:
        if not budget_mj > 0:
            raise InputError("--energy-budget-mj must be positive")
        cfg = replace(cfg, battery=cfg.battery.with_budget(budget_mj * 1e6))
    return cfg


def _apply_overrides(setup: CarSetup, args: argparse.Namespace) -> CarSetup:
    if args.eta_gb is not None:
        setup = setup.with_eta(args.eta_gb)
    if args.mass_kg is not None:
        setup = replace(setup, vehicle=replace(setup.vehicle, m_tot=args.mass_kg))
    return setup


def _settings(args: argparse.Namespace) -> AlgorithmSettings:
    kw = {}
    if args.epsilon_v is not None:
        kw["epsilon_v"] = args.epsilon_v
    if args.max_outer_iters is not None:
        kw["max_outer_iters"] = args.max_outer_iters
    return AlgorithmSettings(**kw)


# -- subcommands --------------------------------------------------------------


def cmd_fit(args: argparse.Namespace) -> int:
    path = Path(args.samples)
    if not path.is_file():
        raise InputError(f"sample file not found: {path}")
    samples = read_samples(path)
    out: dict[str, object] = {"kind": args.kind, "num_samples": len(samples)}
    if args.kind == "psd":
        Q, report = fit_psd_quadratic(samples)
        alpha, alpha_report = fit_alpha(samples)
        out.update(Q=Q.tolist(), alpha_m=alpha, rmse_alpha=alpha_report.rmse_relative)
    else:
        alpha, report = fit_alpha(samples)
        out[args.kind] = alpha
    out.update(rmse_relative=report.rmse_relative, residual_max=report.residual_max)
    dest = _out_dir(args) / f"{args.kind}_model.json"
    with open(dest, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    print(f"{args.kind}: rmse {report.rmse_relative:.4%} over {len(samples)} samples -> {dest}")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    track = _read_track(args.track, args.step, args.a_lat_max, args.v_cap)
    cfg = _read_config(args.vehicle, args.energy_budget_mj)
    setup = _apply_overrides(cfg.setup(args.transmission), args)
    settings = _settings(args)
    result = solve_setup(track, setup, settings)
    out = _out_dir(args)
    formats = _formats(args)
    extra = {"track": track.name, "transmission": args.transmission, "num_nodes": track.num_nodes}
    if result.trajectories is not None and "csv" in formats:
        write_trajectory_csv(result.trajectories, out / "trajectory.csv")
    if "json" in formats:
        write_summary_json(result, settings, out / "summary.json", extra)
    if result.status == "infeasible":
        print(f"infeasible: {result.infeasible_reason}", file=sys.stderr)
        print(json.dumps(result.certificate), file=sys.stderr)
        return EXIT_INFEASIBLE
    if not result.converged:
        print(f"not converged ({result.status}) after {result.outer_iterations} iterations", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    print(
        f"{track.name} {args.transmission}: lap time {result.lap_time:.4f} s, "
        f"{result.outer_iterations} iterations, energy {result.energy_used / 1e6:.4f} MJ"
    )
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    track = _read_track(args.track, args.step, args.a_lat_max, args.v_cap)
    cfg = _read_config(args.vehicle, None)
    n_eta, n_energy = args.grid
    eta = np.linspace(*args.eta_range, n_eta) if n_eta > 1 else np.array([args.eta_range[1]])
    energy = np.linspace(*args.energy_range, n_energy) * 1e6 if n_energy > 1 else np.array([args.energy_range[1] * 1e6])
    if not (np.all(eta > 0) and np.all(eta <= 1)):
        raise InputError("--eta-range must lie in (0, 1]")
    if not np.all(energy > 0):
        raise InputError("--energy-range must be positive")
    result = sweep(track, cfg.setup("sr"), cfg.setup("cvt"), eta, energy, _settings(args), args.workers)
    out = _out_dir(args)
    formats = _formats(args)
    if "csv" in formats:
        write_sweep_csv(result, out / "sweep.csv")
    if "json" in formats:
        doc = {
            "eta_values": result.eta_values.tolist(),
            "energy_values_J": result.energy_values.tolist(),
            "T_sr_s": _nan_to_none(result.T_sr),
            "T_cvt_s": _nan_to_none(result.T_cvt),
            "delta_T_s": _nan_to_none(result.delta_T),
            "failures": [list(f) for f in result.failures],
        }
        with open(out / "sweep.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    for kind, i, j, reason in result.failures:
        print(f"cell {kind}[{i},{j}] failed: {reason}", file=sys.stderr)
    print(f"sweep {n_eta}x{n_energy} on {track.name}: {len(result.failures)} failed cells")
    return EXIT_OK


def _nan_to_none(a: np.ndarray) -> list:
    return np.where(np.isfinite(a), a, None).tolist()


def cmd_gen_track(args: argparse.Namespace) -> int:
    track = compose_track(
        args.segment,
        step=args.step or 10.0,
        a_lat_max=args.a_lat_max if args.a_lat_max is not None else 25.0,
        v_cap=args.v_cap if args.v_cap is not None else 90.0,
        max_decel=args.max_decel,
        max_accel=args.max_accel,
        name=args.name,
    )
    if args.format:
        fmt = args.format[0]
    else:
        fmt = "json" if args.output and Path(args.output).suffix.lower() == ".json" else "csv"
    dest = Path(args.output) if args.output else _out_dir(args) / f"{args.name}.{fmt}"
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        save_track(track, fh, fmt)
    print(f"{track.num_nodes} nodes, {track.total_length:g} m -> {dest}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    paths = [Path(p) for p in args.compare]
    for p in paths:
        if not p.is_file():
            raise InputError(f"trajectory file not found: {p}")
    try:
        table = compare_trajectories(*(read_trajectory_csv(p) for p in paths))
    except (KeyError, ValueError) as exc:
        raise InputError(f"cannot compare trajectories: {exc}") from None
    dest = _out_dir(args) / "compare.csv"
    names = list(table)
    np.savetxt(dest, np.column_stack([table[c] for c in names]), delimiter=",",
               header=",".join(names), comments="", fmt="%.17g")
    print(f"accumulated time difference at lap end: {table['dt_accumulated'][-1]:+.4f} s -> {dest}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_track_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--track", required=True, help="track CSV/JSON file or builtin:NAME")
    p.add_argument("--step", type=float, help="grid step for builtin tracks (m)")
    p.add_argument("--a-lat-max", type=float, help="lateral acceleration limit for curvature tracks")
    p.add_argument("--v-cap", type=float, help="speed cap for curvature tracks")
    p.add_argument("--vehicle", help="vehicle/powertrain JSON configuration")


def _add_algorithm_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon-v", type=float, help="fixed-point tolerance on RMS speed change (m/s)")
    p.add_argument("--max-outer-iters", type=int)


def _add_output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default=".", help="output directory")
    p.add_argument("--format", action="append", choices=("csv", "json"), help="repeatable; default both")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="laptime", description="Minimum-lap-time strategies for electric race cars.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a loss model to a sample file")
    p.add_argument("samples", help="CSV with omega_radps,power_w,loss_w")
    p.add_argument("--kind", choices=("alpha_m", "alpha_b", "psd"), default="alpha_m")
    _add_output_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("solve", help="solve one lap")
    _add_track_args(p)
    p.add_argument("--transmission", choices=("sr", "cvt"), default="cvt")
    p.add_argument("--energy-budget-mj", type=float, help="per-lap battery energy (MJ)")
    p.add_argument("--eta-gb", type=float, help="gearbox efficiency override")
    p.add_argument("--mass-kg", type=float, help="vehicle mass override")
    _add_algorithm_args(p)
    _add_output_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="SR vs CVT over a gearbox-efficiency x energy grid")
    _add_track_args(p)
    p.add_argument("--grid", type=_grid, default=(15, 15), help="NxM (efficiency x energy)")
    p.add_argument("--eta-range", type=_range, default=(0.85, 0.99), help="CVT gearbox efficiency a:b")
    p.add_argument("--energy-range", type=_range, default=(0.6, 1.2), help="per-lap energy a:b in MJ")
    p.add_argument("--workers", type=int, help="process count (capped by LAPTIME_NUM_WORKERS)")
    _add_algorithm_args(p)
    _add_output_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-track", help="compose a track from straights and corners")
    p.add_argument("--segment", type=_segment, action="append", required=True,
                   help="LEN[:RADIUS[:GRADE]]; omit RADIUS for a straight (repeatable)")
    p.add_argument("--step", type=float, help="grid step (m), default 10")
    p.add_argument("--a-lat-max", type=float, help="lateral acceleration limit (m/s^2), default 25")
    p.add_argument("--v-cap", type=float, help="speed cap (m/s), default 90")
    p.add_argument("--max-decel", type=float, help="braking limit baked into the envelope (m/s^2)")
    p.add_argument("--max-accel", type=float, help="acceleration limit baked into the envelope (m/s^2)")
    p.add_argument("--name", default="track")
    p.add_argument("-o", "--output", help="output file (default OUT_DIR/NAME.FORMAT)")
    _add_output_args(p)
    p.set_defaults(func=cmd_gen_track)

    p = sub.add_parser("compare", help="accumulated time difference between two trajectory files")
    p.add_argument("--compare", nargs=2, metavar=("A", "B"), required=True)
    _add_output_args(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InputError, ConfigError, TrackError, FittingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
