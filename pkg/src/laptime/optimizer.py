"""Lap-time optimization driver, nonlinear verification, oracle and sweeps.

:func:`solve_lap` runs the velocity fixed-point scheme: solve the
speed-independent program once, then repeatedly solve the speed-dependent
program at the previous speed profile until the RMS speed change drops
below ``epsilon_v``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from laptime.config import CarSetup
from laptime.conic import ConicSolution, SolverSettings, Status, solve
from laptime.powertrain import (
    BatteryModel,
    MotorModel,
    TransmissionKind,
    TransmissionSpec,
    VehicleParams,
    battery_internal_power,
    drag_force,
    em_loss_sd,
    propulsion_force_exact,
    transmission_force_exact,
)
from laptime.track import TrackProfile
from laptime.transcription import (
    LapTrajectories,
    TranscriptionOptions,
    build_problem2,
    build_problem3,
    extract_trajectories,
)

log = logging.getLogger(__name__)

INFEASIBLE_REASON = "energy budget insufficient or envelope unreachable"
ENERGY_FLAG_TOL = 1e-3


@dataclass(frozen=True)
class AlgorithmSettings:
    """Outer-loop controls.

    Args:
        epsilon_v: Fixed-point tolerance on the RMS speed change over nodes (m/s).
        max_outer_iters: Cap on speed-dependent solves.
        tightness_tol: Relative gap below which a relaxation counts as tight.
        solver: Interior-point settings used for every solve.
        transcription: Modeling options passed to the program builders.
    """

    epsilon_v: float = 0.01
    max_outer_iters: int = 10
    tightness_tol: float = 1e-4
    solver: SolverSettings = field(default_factory=SolverSettings)
    transcription: TranscriptionOptions = field(default_factory=TranscriptionOptions)

    def __post_init__(self) -> None:
        if not self.epsilon_v > 0:
            raise ValueError("epsilon_v must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if not self.tightness_tol > 0:
            raise ValueError("tightness_tol must be positive")


@dataclass
class LapResult:
    """Outcome of :func:`solve_lap`.

    ``status`` is "optimal" (converged), "not_converged", "infeasible" or
    "solver_failure". Trajectories are ``None`` only when no program was
    solved to optimality.
    """

    status: str
    trajectories: LapTrajectories | None
    outer_iterations: int
    converged: bool
    tightness_report: dict[str, float]
    sr_ratio_optimal: float | None
    energy_used: float
    infeasible_reason: str | None = None
    lap_times: list[float] = field(default_factory=list)
    speed_changes: list[float] = field(default_factory=list)
    certificate: dict[str, float] | None = None

    @property
    def lap_time(self) -> float:
        return self.trajectories.lap_time if self.trajectories is not None else math.nan

    def tight(self, tol: float = 1e-4) -> bool:
        return bool(self.tightness_report) and max(self.tightness_report.values()) <= tol


def _scale(*arrays: np.ndarray) -> float:
    return max(max(float(np.max(np.abs(a))) for a in arrays), 1e-12)


def tightness_report(
    traj: LapTrajectories,
    vehicle: VehicleParams,
    transmission: TransmissionSpec,
    motor: MotorModel,
    battery: BatteryModel,
    v_bar: np.ndarray | None = None,
) -> dict[str, float]:
    """Largest relative gap of every relaxed constraint over all nodes.

    Each gap is divided by the lap-wide magnitude of the quantity it bounds,
    so a value of 1e-4 means the slack is 0.01% of the largest force (or
    energy) of that kind on the lap. ``v_bar`` selects the speed-dependent
    motor loss; otherwise ``alpha_m P_m^2``.
    """
    m = vehicle.m_tot
    eta, egb = vehicle.eta_fd, transmission.eta_gb
    dt = traj.dtds
    out = {
        "lethargy": float(np.max(np.abs(traj.dtds * traj.v - 1.0))),
        "kinetic_energy": float(np.max(np.abs(traj.E_kin - 0.5 * m * traj.v**2)) / _scale(traj.E_kin)),
        "propulsion": float(
            np.max(np.minimum(eta * traj.F_gb, traj.F_gb / eta) - traj.F_p) / _scale(traj.F_gb, traj.F_p)
        ),
        "transmission": float(
            np.max(np.minimum(egb * traj.F_m, traj.F_m / egb) - traj.F_gb) / _scale(traj.F_m, traj.F_gb)
        ),
    }
    if v_bar is None:
        em_loss = motor.alpha_m * traj.F_m**2 / dt
    else:
        x = np.stack([np.ones_like(v_bar), traj.omega_m, traj.F_m * v_bar], axis=1)
        em_loss = np.einsum("ni,ij,nj->n", x, motor.Q, x) / v_bar
    out["motor"] = float(np.max(np.abs(traj.F_dc - traj.F_m - em_loss)) / _scale(traj.F_dc, traj.F_m))
    bat_loss = battery.alpha_b * traj.F_b**2 / dt
    out["battery"] = float(np.max(np.abs(traj.F_i - traj.F_b - bat_loss)) / _scale(traj.F_i, traj.F_b))
    return out


def lap_energy(
    traj: LapTrajectories,
    track: TrackProfile,
    vehicle: VehicleParams,
    transmission: TransmissionSpec,
    motor: MotorModel,
    battery: BatteryModel,
    v_bar: np.ndarray | None = None,
) -> float:
    """Battery energy needed to follow the optimal speed profile without wasted force.

    The propulsion force each interval needs is pushed back through the
    exact drivetrain efficiencies and loss models. Regeneration is capped at
    what the optimal controls recover. With tight relaxations this equals
    the program's battery-energy state; with an inactive budget it strips
    the slack the solver is free to leave.
    """
    N = track.num_intervals
    ds = track.step_length
    F_p = np.diff(traj.E_kin) / ds + drag_force(traj.E_kin[:N], track.theta[:N], vehicle)
    eta, egb = vehicle.eta_fd, transmission.eta_gb
    F_gb = np.where(F_p >= 0, F_p / eta, F_p * eta)
    F_m = np.where(F_gb >= 0, F_gb / egb, F_gb * egb)
    F_m = np.where(F_m >= 0, F_m, np.maximum(F_m, np.minimum(traj.F_m[:N], 0.0)))
    P_m = F_m / traj.dtds[:N]
    if v_bar is None:
        loss = motor.alpha_m * P_m**2
    else:
        x = np.stack([np.ones(N), traj.omega_m[:N], P_m], axis=1)
        loss = np.einsum("ni,ij,nj->n", x, motor.Q, x)
    P_i = battery_internal_power(P_m + loss + vehicle.P_aux, battery)
    return float(np.sum(P_i * traj.dtds[:N] * ds))


def _certificate(sol: ConicSolution) -> dict[str, float]:
    return {
        "status": sol.status.value,
        "iterations": sol.iterations,
        "dual_ray_norm": float(np.linalg.norm(np.nan_to_num(sol.z))) if sol.z.size else 0.0,
    }


def _failed(sol: ConicSolution, traj, lap_times, changes, iters) -> LapResult:
    infeasible = sol.status is Status.PRIMAL_INFEASIBLE
    return LapResult(
        status="infeasible" if infeasible else "solver_failure",
        trajectories=traj,
        outer_iterations=iters,
        converged=False,
        tightness_report={},
        sr_ratio_optimal=None,
        energy_used=math.nan if traj is None else float(traj.dE_b[-1]),
        infeasible_reason=INFEASIBLE_REASON if infeasible else f"solver returned {sol.status.value}",
        lap_times=lap_times,
        speed_changes=changes,
        certificate=_certificate(sol),
    )


def solve_lap(
    track: TrackProfile,
    vehicle: VehicleParams,
    transmission: TransmissionSpec,
    motor: MotorModel,
    battery: BatteryModel,
    settings: AlgorithmSettings | None = None,
) -> LapResult:
    """Minimum-lap-time trajectories by the velocity fixed-point iteration.

    Returns the trajectories of the last speed-dependent solve. On
    non-convergence the last iterate is returned with ``converged=False``.
    """
    st = settings or AlgorithmSettings()
    prog, vm = build_problem2(track, vehicle, transmission, motor, battery, st.transcription)
    sol = solve(prog, st.solver)
    if sol.status is not Status.OPTIMAL:
        return _failed(sol, None, [], [], 0)
    traj = extract_trajectories(sol, vm, track, vehicle)
    lap_times = [traj.lap_time]
    changes: list[float] = []
    converged = False
    v_bar = traj.v
    iters = 0
    for iters in range(1, st.max_outer_iters + 1):
        prog, vm = build_problem3(track, vehicle, transmission, motor, battery, v_bar, st.transcription)
        sol = solve(prog, st.solver)
        if sol.status is not Status.OPTIMAL:
            return _failed(sol, traj, lap_times, changes, iters)
        new = extract_trajectories(sol, vm, track, vehicle)
        change = float(np.sqrt(np.mean((new.v - v_bar) ** 2)))
        lap_times.append(new.lap_time)
        changes.append(change)
        log.info("outer iteration %d: T=%.6f s, rms dv=%.3e m/s", iters, new.lap_time, change)
        traj, v_bar_used = new, v_bar
        v_bar = new.v
        if change < st.epsilon_v:
            converged = True
            break
    if len(lap_times) >= 3 and abs(lap_times[-1] - lap_times[-2]) > abs(lap_times[-2] - lap_times[-3]):
        log.warning("lap-time changes grew over the last two outer iterations")
    report = tightness_report(traj, vehicle, transmission, motor, battery, v_bar=v_bar_used)
    return LapResult(
        status="optimal" if converged else "not_converged",
        trajectories=traj,
        outer_iterations=iters,
        converged=converged,
        tightness_report=report,
        sr_ratio_optimal=None if transmission.kind is TransmissionKind.CVT else float(traj.gamma[0]),
        energy_used=lap_energy(traj, track, vehicle, transmission, motor, battery, v_bar=v_bar_used),
        lap_times=lap_times,
        speed_changes=changes,
    )


def solve_setup(track: TrackProfile, setup: CarSetup, settings: AlgorithmSettings | None = None) -> LapResult:
    """:func:`solve_lap` for a bundled :class:`CarSetup`."""
    return solve_lap(track, setup.vehicle, setup.transmission, setup.motor, setup.battery, settings)


# ---------------------------------------------------------------------------
# forward simulation of the unrelaxed model


@dataclass(frozen=True)
class ForwardReport:
    """Nonlinear re-simulation of a control trajectory."""

    v: np.ndarray
    E_kin: np.ndarray
    max_speed_deviation: float
    energy_used: float
    energy_budget: float
    energy_flag: bool
    stalled: bool

    @property
    def energy_excess(self) -> float:
        """Relative amount by which the budget is exceeded (negative if within)."""
        if not math.isfinite(self.energy_budget) or self.energy_budget <= 0:
            return -math.inf
        return self.energy_used / self.energy_budget - 1.0


def simulate_energy(
    track: TrackProfile,
    vehicle: VehicleParams,
    E0: float,
    F_p: np.ndarray,
    method: str = "euler",
) -> np.ndarray:
    """Kinetic energy along the lap under per-interval propulsion ``F_p``.

    ``euler`` repeats the transcription's forward step; ``exact`` integrates
    ``dE/ds = F_p - a E - b`` exactly with ``F_p`` held over each interval.
    """
    m = vehicle.m_tot
    a = vehicle.aero_coeff / m
    b = m * vehicle.g * (np.sin(track.theta) + vehicle.c_r * np.cos(track.theta))
    ds = track.step_length
    E = np.empty(track.num_nodes)
    E[0] = E0
    if method == "euler":
        for k in range(track.num_intervals):
            E[k + 1] = E[k] + ds * (F_p[k] - a * E[k] - b[k])
    elif method == "exact":
        decay = math.exp(-a * ds) if a > 0 else 1.0
        for k in range(track.num_intervals):
            forcing = F_p[k] - b[k]
            if a > 0:
                E[k + 1] = E[k] * decay + forcing / a * (1.0 - decay)
            else:
                E[k + 1] = E[k] + ds * forcing
    else:
        raise ValueError(f"unknown integration method {method!r}")
    return E


def verify_forward(
    traj: LapTrajectories,
    track: TrackProfile,
    vehicle: VehicleParams,
    transmission: TransmissionSpec,
    motor: MotorModel,
    battery: BatteryModel,
    method: str = "euler",
    speed_dependent: bool = True,
) -> ForwardReport:
    """Re-simulate the optimal controls through the unrelaxed model.

    Controls are the motor force, the ratio and the recovered braking force.
    Per interval the DC draw is the larger of the commanded ``F_dc v`` and the
    exact motor power (mechanical plus loss), so slack in the commanded DC
    force shows up as extra energy.
    """
    F_gb = transmission_force_exact(traj.F_m, transmission)
    F_p = propulsion_force_exact(F_gb, np.maximum(traj.F_brk, 0.0), vehicle)
    E = simulate_energy(track, vehicle, float(traj.E_kin[0]), F_p, method)
    stalled = bool(np.any(E <= 0))
    v = np.sqrt(2.0 * np.maximum(E, 0.0) / vehicle.m_tot)
    N = track.num_intervals
    vk = np.maximum(v[:N], 1e-9)
    P_m = traj.F_m[:N] * vk
    if speed_dependent:
        omega = np.clip(traj.gamma[:N] * vk * vehicle.gamma_fd / vehicle.r_w, 0.0, None)
        loss = em_loss_sd(omega, P_m, motor)
    else:
        loss = motor.alpha_m * P_m**2
    P_dc = np.maximum(P_m + loss, traj.F_dc[:N] * vk)
    P_i = battery_internal_power(P_dc + vehicle.P_aux, battery)
    energy = float(np.sum(P_i * track.step_length / vk))
    budget = battery.delta_Eb_max
    flag = math.isfinite(budget) and energy > budget * (1.0 + ENERGY_FLAG_TOL)
    return ForwardReport(
        v=v,
        E_kin=E,
        max_speed_deviation=float(np.max(np.abs(v - traj.v))),
        energy_used=energy,
        energy_budget=budget,
        energy_flag=bool(flag),
        stalled=stalled,
    )


# ---------------------------------------------------------------------------
# forward-backward envelope oracle


def max_tractive_force(
    v: float,
    vehicle: VehicleParams,
    transmission: TransmissionSpec,
    motor: MotorModel,
    gamma: float | None = None,
    speed_limit_includes_final_drive: bool = True,
) -> float:
    """Largest motor-side force at speed ``v`` over the admissible ratios.

    The force limit ``min(gamma T gfd / r_w, c_m1 gamma gfd / r_w + c_m2 / v)``
    is concave in ``gamma``, so its maximum over an interval sits at the
    corner ratio clipped to the interval.
    """
    gfd = vehicle.gamma_fd if speed_limit_includes_final_drive else 1.0
    k = gfd / vehicle.r_w
    g_hi_speed = motor.omega_max * vehicle.r_w / (gfd * v)
    if gamma is not None:
        g = min(gamma, g_hi_speed)
    else:
        g_lo, g_hi = transmission.gamma_min, min(transmission.gamma_max, g_hi_speed)
        corner = motor.c_m2 / (v * k * (motor.T_max - motor.c_m1))
        g = float(np.clip(corner, g_lo, max(g_lo, g_hi)))
        g = min(g, g_hi_speed)
    return max(0.0, min(g * motor.T_max * k, motor.c_m1 * g * k + motor.c_m2 / v))


def _envelope_fixed(track, vehicle, transmission, motor, gamma, max_decel, include_fd) -> np.ndarray:
    m = vehicle.m_tot
    a = vehicle.aero_coeff / m
    b = m * vehicle.g * (np.sin(track.theta) + vehicle.c_r * np.cos(track.theta))
    ds = track.step_length
    N = track.num_intervals
    Emax = 0.5 * m * track.v_max**2
    E_floor = 0.5 * m * 1.0
    drive_eff = vehicle.eta_fd * transmission.eta_gb

    fwd = Emax.copy()
    for _ in range(50):
        start = fwd[0]
        for k in range(N):
            vk = math.sqrt(2.0 * fwd[k] / m)
            F = drive_eff * max_tractive_force(vk, vehicle, transmission, motor, gamma, include_fd)
            fwd[k + 1] = min(Emax[k + 1], max(E_floor, fwd[k] + ds * (F - a * fwd[k] - b[k])))
        fwd[0] = min(fwd[0], fwd[N])
        if abs(fwd[0] - start) <= 1e-12 * start:
            break

    bwd = Emax.copy()
    brake = m * max_decel
    for _ in range(50):
        end = bwd[N]
        for k in range(N - 1, -1, -1):
            bwd[k] = min(Emax[k], (bwd[k + 1] + ds * (brake + b[k])) / (1.0 - ds * a))
        bwd[N] = min(bwd[N], bwd[0])
        if abs(bwd[N] - end) <= 1e-12 * end:
            break
    E = np.minimum(fwd, bwd)
    E[N] = E[0] = min(E[0], E[N])
    return np.sqrt(2.0 * E / m)


def envelope_lap_time(v: np.ndarray, step: float) -> float:
    """Lap time of a node speed profile with the transcription's left-endpoint rule."""
    return float(step * np.sum(1.0 / v[:-1]))


def forward_backward_envelope(
    track: TrackProfile,
    vehicle: VehicleParams,
    transmission: TransmissionSpec,
    motor: MotorModel,
    max_decel: float = 30.0,
    speed_limit_includes_final_drive: bool = True,
) -> np.ndarray:
    """Speed profile of an energy-unconstrained lap by forward/backward passes.

    The forward pass accelerates with the largest tractive force the motor
    envelope allows through the driveline; the backward pass brakes at
    ``max_decel``. Both repeat around the start line until periodic. For a
    single-ratio car with a free ratio, the ratio minimizing the envelope
    lap time is used.
    """
    if not max_decel > 0:
        raise ValueError("max_decel must be positive")
    args = (track, vehicle, transmission, motor)
    if transmission.kind is TransmissionKind.CVT:
        return _envelope_fixed(*args, None, max_decel, speed_limit_includes_final_drive)
    if not transmission.optimize_sr_ratio:
        return _envelope_fixed(*args, transmission.gamma_1, max_decel, speed_limit_includes_final_drive)

    def lap(g: float) -> float:
        v = _envelope_fixed(*args, g, max_decel, speed_limit_includes_final_drive)
        return envelope_lap_time(v, track.step_length)

    grid = np.linspace(transmission.gamma_min, transmission.gamma_max, 41)
    times = [lap(g) for g in grid]
    i = int(np.argmin(times))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    best = minimize_scalar(lap, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    g = float(best.x) if best.fun <= times[i] else float(grid[i])
    return _envelope_fixed(*args, g, max_decel, speed_limit_includes_final_drive)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    """Lap times over a (gearbox efficiency x energy budget) grid.

    ``T_cvt[i, j]`` uses ``eta_values[i]`` and ``energy_values[j]``;
    ``T_sr[j]`` uses the single-ratio car's own efficiency. Failed cells are NaN.
    """

    eta_values: np.ndarray
    energy_values: np.ndarray
    T_sr: np.ndarray
    T_cvt: np.ndarray
    failures: list[tuple[str, int, int, str]] = field(default_factory=list)

    @property
    def delta_T(self) -> np.ndarray:
        """``T_SR - T_CVT`` per grid cell (positive where the CVT is faster)."""
        return self.T_sr[None, :] - self.T_cvt


def _sweep_job(job):
    kind, i, j, track, setup, settings = job
    try:
        res = solve_setup(track, setup, settings)
    except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
        return kind, i, j, math.nan, f"{type(exc).__name__}: {exc}"
    if not res.converged:
        return kind, i, j, math.nan, res.infeasible_reason or res.status
    return kind, i, j, res.lap_time, None


def num_workers(requested: int | None = None) -> int:
    """Worker count capped by ``LAPTIME_NUM_WORKERS`` and the CPU count."""
    n = requested or os.cpu_count() or 1
    env = os.environ.get("LAPTIME_NUM_WORKERS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ValueError("LAPTIME_NUM_WORKERS must be an integer") from None
    return max(1, n)


def sweep(
    track: TrackProfile,
    sr: CarSetup,
    cvt: CarSetup,
    eta_values: Sequence[float],
    energy_values: Sequence[float],
    settings: AlgorithmSettings | None = None,
    workers: int | None = None,
) -> SweepResult:
    """Solve the single-ratio car once per budget and the CVT car per grid cell."""
    eta = np.asarray(eta_values, dtype=float)
    energy = np.asarray(energy_values, dtype=float)
    if eta.size == 0 or energy.size == 0:
        raise ValueError("sweep axes must be nonempty")
    st = settings or AlgorithmSettings()
    jobs = [("sr", 0, j, track, sr.with_budget(e), st) for j, e in enumerate(energy)]
    jobs += [
        ("cvt", i, j, track, cvt.with_budget(e).with_eta(h), st)
        for i, h in enumerate(eta)
        for j, e in enumerate(energy)
    ]
    n = min(num_workers(workers), len(jobs))
    if n == 1:
        results = [_sweep_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_sweep_job, jobs, chunksize=1))
    T_sr = np.full(energy.size, math.nan)
    T_cvt = np.full((eta.size, energy.size), math.nan)
    failures = []
    for kind, i, j, T, err in results:
        if kind == "sr":
            T_sr[j] = T
        else:
            T_cvt[i, j] = T
        if err is not None:
            failures.append((kind, i, j, err))
    return SweepResult(eta, energy, T_sr, T_cvt, failures)


# ---------------------------------------------------------------------------
# outputs


def write_trajectory_csv(traj: LapTrajectories, path: str | Path) -> None:
    """Per-node table; columns include the plotted quantities s, v, t, P_m, gamma."""
    cols = traj.as_columns()
    names = list(cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for k in range(len(cols["s"])):
            w.writerow([repr(float(cols[c][k])) for c in names])


def read_trajectory_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: empty trajectory table")
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    return {name: data[:, i] for i, name in enumerate(header)}


def compare_trajectories(a: dict[str, np.ndarray], b: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Join two trajectory tables on position; ``dt = t_b - t_a`` accumulated."""
    if a["s"].shape != b["s"].shape or not np.allclose(a["s"], b["s"], rtol=0, atol=1e-9):
        raise ValueError("trajectories are on different position grids")
    return {
        "s": a["s"],
        "t_a": a["t"],
        "t_b": b["t"],
        "dt_accumulated": b["t"] - a["t"],
        "v_a": a["v"],
        "v_b": b["v"],
        "P_m_a": a["P_m"],
        "P_m_b": b["P_m"],
        "gamma_a": a["gamma"],
        "gamma_b": b["gamma"],
    }


def summary_dict(result: LapResult, settings: AlgorithmSettings, extra: dict | None = None) -> dict:
    """JSON-ready summary with a settings echo and the tightness report."""
    st = asdict(settings)
    out = {
        "status": result.status,
        "lap_time_s": result.lap_time if result.trajectories is not None else None,
        "converged": result.converged,
        "outer_iterations": result.outer_iterations,
        "lap_time_history_s": result.lap_times,
        "speed_change_history_mps": result.speed_changes,
        "energy_used_J": result.energy_used if math.isfinite(result.energy_used) else None,
        "sr_ratio_optimal": result.sr_ratio_optimal,
        "tightness_report": result.tightness_report,
        "infeasible_reason": result.infeasible_reason,
        "certificate": result.certificate,
        "settings": st,
    }
    if extra:
        out.update(extra)
    return out


def write_summary_json(result: LapResult, settings: AlgorithmSettings, path: str | Path, extra=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary_dict(result, settings, extra), fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def write_sweep_csv(result: SweepResult, path: str | Path) -> None:
    """One row per grid cell: eta_gb, energy, T_sr, T_cvt, delta_T, ok."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta_gb", "energy_budget_J", "T_sr_s", "T_cvt_s", "delta_T_s", "ok"])
        dT = result.delta_T
        for i, h in enumerate(result.eta_values):
            for j, e in enumerate(result.energy_values):
                ok = bool(np.isfinite(dT[i, j]))
                w.writerow([repr(float(h)), repr(float(e)), repr(float(result.T_sr[j])),
                            repr(float(result.T_cvt[i, j])), repr(float(dT[i, j])), int(ok)])
