"""Discretized racetracks: inclination and maximum-speed profiles on a uniform grid."""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import IO, Literal

import numpy as np

Format = Literal["csv", "json"]

_GRID_RTOL = 1e-9


class TrackError(ValueError):
    """Invalid track data (validation or parse failure)."""


@dataclass(frozen=True)
class TrackNode:
    position: float
    inclination_theta: float
    v_max: float


@dataclass(frozen=True)
class TrackProfile:
    """Position-indexed track data on a uniform grid.

    Args:
        name: Human-readable identifier.
        step_length: Grid spacing in meters.
        theta: Inclination per node in radians.
        v_max: Maximum-speed envelope per node in m/s.
        start: Position of the first node in meters.
    """

    name: str
    step_length: float
    theta: np.ndarray
    v_max: np.ndarray
    start: float = 0.0

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=float)
        v_max = np.array(self.v_max, dtype=float)
        theta.setflags(write=False)
        v_max.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "v_max", v_max)
        if not (self.step_length > 0 and math.isfinite(self.step_length)):
            raise TrackError(f"step_length must be positive, got {self.step_length}")
        if theta.ndim != 1 or theta.shape != v_max.shape:
            raise TrackError("theta and v_max must be 1-D arrays of equal length")
        if theta.size < 2:
            raise TrackError("a track needs at least 2 nodes")
        if not np.all(np.isfinite(v_max)) or np.any(v_max <= 0):
            raise TrackError("v_max must be positive and finite at every node")
        if not np.all(np.abs(theta) < math.pi / 2):
            raise TrackError("inclination must satisfy |theta| < pi/2")

    @property
    def num_nodes(self) -> int:
        return int(self.theta.size)

    @property
    def num_intervals(self) -> int:
        return self.num_nodes - 1

    @property
    def total_length(self) -> float:
        return self.step_length * self.num_intervals

    @property
    def positions(self) -> np.ndarray:
        return self.start + self.step_length * np.arange(self.num_nodes)

    @property
    def nodes(self) -> list[TrackNode]:
        return [
            TrackNode(float(s), float(t), float(v))
            for s, t, v in zip(self.positions, self.theta, self.v_max)
        ]


@dataclass(frozen=True)
class TrackTable:
    """Raw, possibly non-uniform track samples as read from a file."""

    name: str
    positions: np.ndarray
    theta: np.ndarray
    v_max: np.ndarray

    def to_profile(self, step: float | None = None) -> TrackProfile:
        """Validate a uniform table, or resample onto a grid of ``step`` meters."""
        _check_increasing(self.positions)
        if step is None:
            return _uniform_profile(self.name, self.positions, self.theta, self.v_max)
        return _resample_arrays(self.name, self.positions, self.theta, self.v_max, step)


def _check_increasing(pos: np.ndarray) -> None:
    if pos.size < 2:
        raise TrackError("a track needs at least 2 nodes")
    if not np.all(np.diff(pos) > 0):
        k = int(np.argmin(np.diff(pos) > 0))
        raise TrackError(f"positions must be strictly increasing (node {k + 1})")


def _uniform_profile(name: str, pos: np.ndarray, theta: np.ndarray, v_max: np.ndarray) -> TrackProfile:
    _check_increasing(pos)
    steps = np.diff(pos)
    step = float(steps[0])
    if not np.allclose(steps, step, rtol=_GRID_RTOL, atol=0.0):
        raise TrackError("non-uniform grid: resample the raw table first")
    return TrackProfile(name=name, step_length=step, theta=theta, v_max=v_max, start=float(pos[0]))


def precompute_vmax(curvature: Sequence[float] | np.ndarray, a_lat_max: float, v_cap: float) -> np.ndarray:
    """Cornering-limited speed ``min(v_cap, sqrt(a_lat_max / |kappa|))`` per node."""
    if not a_lat_max > 0 or not v_cap > 0:
        raise ValueError("a_lat_max and v_cap must be positive")
    kappa = np.abs(np.asarray(curvature, dtype=float))
    if not np.all(np.isfinite(kappa)):
        raise ValueError("curvature must be finite")
    with np.errstate(divide="ignore", over="ignore"):
        v = np.sqrt(a_lat_max / kappa)
    return np.minimum(v, v_cap)


def apply_accel_limits(
    v_max: np.ndarray,
    step: float,
    max_decel: float | None = None,
    max_accel: float | None = None,
    periodic: bool = True,
) -> np.ndarray:
    """Tighten an envelope so it is reachable under constant accel/decel caps.

    Uses ``v[k]^2 <= v[k+1]^2 + 2 a ds`` backwards (braking) and forwards
    (acceleration). For a closed lap the passes wrap around the start line.
    """
    v2 = np.asarray(v_max, dtype=float) ** 2
    n = v2.size
    for limit, backward in ((max_decel, True), (max_accel, False)):
        if limit is None:
            continue
        if not limit > 0:
            raise ValueError("acceleration limits must be positive")
        dv2 = 2.0 * limit * step
        order = range(n - 2, -1, -1) if backward else range(1, n)
        for _ in range(2 if periodic else 1):
            if periodic:
                # node n-1 and node 0 are the same physical point
                if backward:
                    v2[n - 1] = min(v2[n - 1], v2[0])
                else:
                    v2[0] = min(v2[0], v2[n - 1])
            for k in order:
                j = k + 1 if backward else k - 1
                v2[k] = min(v2[k], v2[j] + dv2)
            if periodic:
                if backward:
                    v2[n - 1] = min(v2[n - 1], v2[0])
                else:
                    v2[0] = min(v2[0], v2[n - 1])
    return np.sqrt(v2)


def resample(track: TrackProfile, new_step: float) -> TrackProfile:
    """Resample onto a uniform grid with spacing ``new_step``.

    Inclination is interpolated linearly. The speed envelope is conservative:
    each new node takes the minimum of the original nodes bracketing it and
    of every original node inside the interval it starts.
    """
    return _resample_arrays(track.name, track.positions, track.theta, track.v_max, new_step)


def _resample_arrays(name, pos, theta, v_max, new_step) -> TrackProfile:
    if not new_step > 0:
        raise TrackError("new step must be positive")
    length = float(pos[-1] - pos[0])
    if new_step > length:
        raise TrackError("new step exceeds track length")
    ratio = length / new_step
    n_int = int(round(ratio))
    if abs(ratio - n_int) > 1e-9 * max(1.0, ratio):
        raise TrackError("step must divide track length")
    new_pos = pos[0] + new_step * np.arange(n_int + 1)
    new_pos[-1] = pos[-1]
    new_theta = np.interp(new_pos, pos, theta)
    tol = 1e-9 * new_step
    lo = np.searchsorted(pos, new_pos + tol, side="right") - 1
    hi = np.searchsorted(pos, new_pos - tol, side="left")
    lo = np.clip(lo, 0, pos.size - 1)
    hi = np.clip(hi, 0, pos.size - 1)
    end = np.searchsorted(pos, new_pos + new_step - tol, side="left")
    new_v = np.empty(new_pos.size)
    for j in range(new_pos.size):
        a = min(lo[j], hi[j])
        b = max(hi[j], end[j] - 1, lo[j])
        new_v[j] = float(np.min(v_max[a : b + 1]))
    return TrackProfile(name=name, step_length=new_step, theta=new_theta, v_max=new_v, start=float(pos[0]))


# -- file formats -------------------------------------------------------------


def read_table(
    source: IO[str] | IO[bytes],
    format: Format,
    a_lat_max: float | None = None,
    v_cap: float | None = None,
) -> TrackTable:
    """Parse a track file into a raw table without the uniform-grid check.

    CSV files carry either ``position_m,theta_rad,v_max_mps`` or
    ``position_m,curvature_per_m`` (optionally with ``theta_rad``); the
    curvature variant needs ``a_lat_max`` and ``v_cap``.
    """
    text = source.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    if format == "json":
        return _parse_json(text)
    if format == "csv":
        return _parse_csv(text, a_lat_max, v_cap)
    raise TrackError(f"unknown track format {format!r}")


def load_track(
    source: IO[str] | IO[bytes],
    format: Format,
    a_lat_max: float | None = None,
    v_cap: float | None = None,
) -> TrackProfile:
    """Parse and validate a uniform-grid track file."""
    return read_table(source, format, a_lat_max, v_cap).to_profile()


def _parse_csv(text: str, a_lat_max: float | None, v_cap: float | None) -> TrackTable:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise TrackError("line 1: empty track file") from None
    cols = {h: i for i, h in enumerate(header)}
    if "position_m" not in cols:
        raise TrackError("line 1: missing column position_m")
    curvature = "curvature_per_m" in cols
    if not curvature and not {"theta_rad", "v_max_mps"} <= cols.keys():
        raise TrackError("line 1: expected columns theta_rad,v_max_mps or curvature_per_m")
    wanted = ["position_m", "curvature_per_m" if curvature else "v_max_mps"]
    if "theta_rad" in cols:
        wanted.append("theta_rad")
    data: list[list[float]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            if len(row) != len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(row)}")
            data.append([float(row[cols[w]]) for w in wanted])
        except ValueError as exc:
            raise TrackError(f"line {lineno}: {exc}") from None
    if not data:
        raise TrackError("track file has no data rows")
    arr = np.array(data)
    pos = arr[:, 0]
    theta = arr[:, 2] if "theta_rad" in cols else np.zeros(pos.size)
    if curvature:
        if a_lat_max is None or v_cap is None:
            raise TrackError("curvature tracks need a_lat_max and v_cap")
        v_max = precompute_vmax(arr[:, 1], a_lat_max, v_cap)
    else:
        v_max = arr[:, 1]
    _check_values(pos, v_max)
    return TrackTable(name="track", positions=pos, theta=theta, v_max=v_max)


def _parse_json(text: str) -> TrackTable:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TrackError(f"line {exc.lineno}: {exc.msg}") from None
    try:
        nodes = obj["nodes"]
        pos = np.array([float(n["s"]) for n in nodes])
        theta = np.array([float(n["theta"]) for n in nodes])
        v_max = np.array([float(n["v_max"]) for n in nodes])
    except (KeyError, TypeError, ValueError) as exc:
        raise TrackError(f"malformed JSON track: {exc}") from None
    _check_values(pos, v_max)
    table = TrackTable(name=str(obj.get("name", "track")), positions=pos, theta=theta, v_max=v_max)
    step = obj.get("step_length_m")
    if step is not None and pos.size > 1 and not math.isclose(float(step), pos[1] - pos[0], rel_tol=_GRID_RTOL):
        raise TrackError("step_length_m disagrees with node positions")
    return table


def _check_values(pos: np.ndarray, v_max: np.ndarray) -> None:
    _check_increasing(pos)
    bad = np.flatnonzero(~(v_max > 0) | ~np.isfinite(v_max))
    if bad.size:
        raise TrackError(f"v_max must be positive (node {int(bad[0])})")


def save_track(track: TrackProfile, sink: IO[str], format: Format) -> None:
    """Write ``track`` as CSV or JSON. Floats are written with ``repr`` precision."""
    if format == "json":
        obj = {
            "name": track.name,
            "step_length_m": track.step_length,
            "nodes": [
                {"s": float(s), "theta": float(t), "v_max": float(v)}
                for s, t, v in zip(track.positions, track.theta, track.v_max)
            ],
        }
        json.dump(obj, sink, indent=1)
        sink.write("\n")
    elif format == "csv":
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(["position_m", "theta_rad", "v_max_mps"])
        for s, t, v in zip(track.positions, track.theta, track.v_max):
            w.writerow([repr(float(s)), repr(float(t)), repr(float(v))])
    else:
        raise TrackError(f"unknown track format {format!r}")


# -- synthetic tracks ---------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """Piece of constant curvature (``radius=None`` for a straight)."""

    length: float
    radius: float | None = None
    theta: float = 0.0

    @property
    def curvature(self) -> float:
        return 0.0 if self.radius is None else 1.0 / self.radius


def compose_track(
    segments: Sequence[Segment],
    step: float = 10.0,
    a_lat_max: float = 25.0,
    v_cap: float = 90.0,
    max_decel: float | None = None,
    max_accel: float | None = None,
    name: str = "synthetic",
) -> TrackProfile:
    """Build a closed-lap track from straights and constant-radius corners.

    Node ``k`` takes the curvature and grade of the segment containing the
    interval ``[s_k, s_k + step)``; the last node repeats the first.
    """
    if not segments:
        raise TrackError("need at least one segment")
    total = sum(seg.length for seg in segments)
    n_int = int(round(total / step))
    if n_int < 1 or abs(total / step - n_int) > 1e-9 * max(1.0, total / step):
        raise TrackError("step must divide track length")
    bounds = np.cumsum([seg.length for seg in segments])
    mid = step * (np.arange(n_int) + 0.5)
    which = np.searchsorted(bounds, mid, side="right")
    kappa = np.array([segments[i].curvature for i in which] + [segments[which[0]].curvature])
    theta = np.array([segments[i].theta for i in which] + [segments[which[0]].theta])
    v_max = precompute_vmax(kappa, a_lat_max, v_cap)
    if max_decel is not None or max_accel is not None:
        v_max = apply_accel_limits(v_max, step, max_decel, max_accel)
    return TrackProfile(name=name, step_length=step, theta=theta, v_max=v_max)
