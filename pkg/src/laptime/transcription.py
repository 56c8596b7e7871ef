"""Space-domain SOCP transcription of the minimum-lap-time problem.

Grid convention: a track with ``n`` nodes has ``N = n - 1`` Euler-forward
intervals of length ``ds``. States (kinetic energy, battery energy used) are
defined at every node; node ``k < N`` carries the controls acting on interval
``[s_k, s_k + ds)``. The last node is the start line again, so its per-node
quantities are tied to node 0 (kinetic energy by periodicity, the rest so
that every cone there is a copy of node 0's).

Every decision variable is stored in a nominal unit (``physical = scale *
solver``) so the interior-point iterates stay O(1); the constraints below
are written in physical units through those scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from laptime.conic import Affine, ConeKind, ConicProgram, ConicSolution, ProgramBuilder, Status
from laptime.powertrain import (
    BatteryModel,
    MotorModel,
    TransmissionKind,
    TransmissionSpec,
    VehicleParams,
    em_loss_sd,
    psd_factor,
)
from laptime.track import TrackProfile

NODE_QUANTITIES = ("dtds", "v", "E_kin", "dE_b", "F_p", "F_gb", "F_m", "F_dc", "F_b", "F_i")
# F_b at the last node follows from its own equality once F_dc and dtds are tied
_TIED = ("dtds", "v", "F_p", "F_gb", "F_m", "F_dc", "F_i")


class TranscriptionError(ValueError):
    """Inconsistent inputs for building a lap program."""


@dataclass(frozen=True)
class TranscriptionOptions:
    """Modeling choices the physical model leaves open.

    Args:
        v_floor: Lower speed bound (m/s); also caps lethargy at ``1 / v_floor``.
        speed_limit_includes_final_drive: Include the final-drive ratio in the
            motor torque, power and speed limits (dimensionally consistent
            with ``omega_m = gamma v gamma_fd / r_w``).
        tie_final_node: Tie the last node's speed, lethargy and forces to node 0.
        bound_margin: The box ``v <= margin * max(v_max)``, ``dtds >= 1 / (margin * max(v_max))``.
            Both bounds are implied by the envelope and the cones; a margin
            above one keeps them from being active together with the
            envelope, which would make the program degenerate.
    """

    v_floor: float = 1.0
    bound_margin: float = 1.05
    speed_limit_includes_final_drive: bool = True
    tie_final_node: bool = True


@dataclass
class VariableMap:
    """Where each physical quantity lives in the solver vector.

    ``index[q]`` is an int array over nodes for every name in
    :data:`NODE_QUANTITIES`. ``gamma`` is per node (CVT), a length-1 array
    (shared SR ratio) or ``None`` (fixed SR ratio ``gamma_fixed``).
    ``omega`` exists for the speed-dependent problem only.
    """

    num_nodes: int
    step: float
    index: dict[str, np.ndarray]
    scale: dict[str, float]
    gamma: np.ndarray | None
    gamma_fixed: float | None
    omega: np.ndarray | None
    num_vars: int
    problem: int
    v_bar: np.ndarray | None = None
    energy_budget: float = math.inf
    meta: dict[str, float] = field(default_factory=dict)

    def expr(self, name: str, k: int) -> Affine:
        if name == "gamma":
            if self.gamma is None:
                return Affine.constant(self.gamma_fixed)
            i = self.gamma[k] if self.gamma.size > 1 else self.gamma[0]
            return Affine.var(int(i), self.scale["gamma"])
        if name == "omega_m":
            return Affine.var(int(self.omega[k]), self.scale["omega_m"])
        return Affine.var(int(self.index[name][k]), self.scale[name])

    def values(self, x: np.ndarray, name: str) -> np.ndarray:
        """Physical node values of ``name`` from a solver vector."""
        n = self.num_nodes
        if name == "gamma":
            if self.gamma is None:
                return np.full(n, self.gamma_fixed)
            vals = self.scale["gamma"] * x[self.gamma]
            return vals if vals.size == n else np.full(n, vals[0])
        if name == "omega_m":
            return self.scale["omega_m"] * x[self.omega]
        return self.scale[name] * x[self.index[name]]


@dataclass
class LapTrajectories:
    """Per-node physical trajectories of a solved lap.

    Powers follow ``P = F v``; ``F_brk`` is the mechanical braking recovered
    from the propulsion relaxation. ``lap_time = sum(ds * dtds[:-1])``.
    """

    s: np.ndarray
    dtds: np.ndarray
    v: np.ndarray
    E_kin: np.ndarray
    dE_b: np.ndarray
    F_p: np.ndarray
    F_gb: np.ndarray
    F_m: np.ndarray
    F_dc: np.ndarray
    F_b: np.ndarray
    F_i: np.ndarray
    gamma: np.ndarray
    omega_m: np.ndarray
    P_m: np.ndarray
    P_dc: np.ndarray
    P_b: np.ndarray
    P_i: np.ndarray
    F_brk: np.ndarray
    lap_time: float
    step: float

    @property
    def time(self) -> np.ndarray:
        """Elapsed time at each node."""
        return np.concatenate([[0.0], np.cumsum(self.step * self.dtds[:-1])])

    def as_columns(self) -> dict[str, np.ndarray]:
        names = (
            "s", "v", "dtds", "E_kin", "dE_b", "F_p", "F_gb", "F_m", "F_dc", "F_b", "F_i",
            "F_brk", "gamma", "omega_m", "P_m", "P_dc", "P_b", "P_i",
        )
        cols = {"s": self.s, "t": self.time}
        cols.update({k: getattr(self, k) for k in names[1:]})
        return cols


def _rows(*exprs: Affine) -> list[Affine]:
    """Linear rows scaled to unit coefficient magnitude."""
    return [e.normalized() for e in exprs]


def _rotated(x: Affine, y: Affine | float, z: list[Affine]) -> list[Affine]:
    """Rows of ``x * y >= |z|^2, x, y >= 0`` as a standard second-order cone."""
    return [x + y, *[2.0 * zi for zi in z], x - y]


def effective_budget(track: TrackProfile, vehicle: VehicleParams, motor: MotorModel,
                     battery: BatteryModel, options: TranscriptionOptions) -> float:
    """Per-lap energy bound used in the program.

    An infinite budget is replaced by twice the energy the battery could
    deliver at peak draw over the slowest admissible lap. Some time-optimal
    solution always uses less than that, so the cap is inactive; it keeps the
    set of optimal solutions bounded (otherwise wasted DC power is a free
    direction and the interior-point central path diverges).
    """
    if math.isfinite(battery.delta_Eb_max):
        return battery.delta_Eb_max
    P = motor.c_m2
    x = np.array([1.0, motor.omega_max, P])
    loss = max(motor.alpha_m * P**2, float(x @ np.abs(motor.Q) @ x))
    P_b = P + loss + vehicle.P_aux
    P_i = P_b + battery.alpha_b * P_b**2
    return 2.0 * P_i * track.total_length / options.v_floor


def _scales(track: TrackProfile, vehicle: VehicleParams, transmission: TransmissionSpec,
            motor: MotorModel, battery: BatteryModel, budget: float) -> dict[str, float]:
    v_ref = float(np.max(track.v_max))
    F_ref = vehicle.m_tot * vehicle.g
    E_ref = 0.5 * vehicle.m_tot * v_ref**2
    dE_ref = budget
    sc = {
        "dtds": 1.0 / v_ref,
        "v": v_ref,
        "E_kin": E_ref,
        "dE_b": max(dE_ref, 1.0),
        "gamma": transmission.gamma_max if transmission.kind is TransmissionKind.CVT or transmission.optimize_sr_ratio else 1.0,
        "omega_m": motor.omega_max,
    }
    for q in ("F_p", "F_gb", "F_m", "F_dc", "F_b", "F_i"):
        sc[q] = F_ref
    return sc


def _check_inputs(track, transmission, options) -> None:
    if transmission.kind is TransmissionKind.CVT and transmission.optimize_sr_ratio:
        raise TranscriptionError("optimize_sr_ratio cannot be combined with a CVT")
    if not options.bound_margin >= 1.0:
        raise TranscriptionError("bound_margin must be at least 1")
    if not options.v_floor > 0:
        raise TranscriptionError("v_floor must be positive")
    if np.max(track.v_max) <= options.v_floor:
        raise TranscriptionError("v_max envelope lies below the speed floor")


def _allocate(track, vehicle, transmission, motor, battery, problem: int, options) -> VariableMap:
    n = track.num_nodes
    budget = effective_budget(track, vehicle, motor, battery, options)
    index: dict[str, np.ndarray] = {}
    nxt = 0
    for q in NODE_QUANTITIES:
        index[q] = np.arange(nxt, nxt + n)
        nxt += n
    gamma = None
    gamma_fixed = None
    if transmission.kind is TransmissionKind.CVT:
        gamma = np.arange(nxt, nxt + n)
        nxt += n
    elif transmission.optimize_sr_ratio:
        gamma = np.array([nxt])
        nxt += 1
    else:
        gamma_fixed = transmission.gamma_1
    omega = None
    if problem == 3:
        omega = np.arange(nxt, nxt + n)
        nxt += n
    return VariableMap(
        num_nodes=n,
        step=track.step_length,
        index=index,
        scale=_scales(track, vehicle, transmission, motor, battery, budget),
        gamma=gamma,
        gamma_fixed=gamma_fixed,
        omega=omega,
        num_vars=nxt,
        problem=problem,
        energy_budget=budget,
    )


def _common_constraints(pb: ProgramBuilder, vm: VariableMap, track: TrackProfile, vehicle: VehicleParams,
                        transmission: TransmissionSpec, motor: MotorModel, battery: BatteryModel,
                        options: TranscriptionOptions, em_cone) -> None:
    n = vm.num_nodes
    ds = track.step_length
    m = vehicle.m_tot
    v_ref = vm.scale["v"]
    v_cap = options.bound_margin * v_ref
    E_ref = vm.scale["E_kin"]
    eta_fd, eta_gb = vehicle.eta_fd, transmission.eta_gb
    gfd = vehicle.gamma_fd if options.speed_limit_includes_final_drive else 1.0
    aero = vehicle.aero_coeff / m
    resist = m * vehicle.g * (np.sin(track.theta) + vehicle.c_r * np.cos(track.theta))
    sqrt_ab = math.sqrt(battery.alpha_b)
    dt_max = 1.0 / options.v_floor

    obj = np.zeros(vm.num_vars)
    obj[vm.index["dtds"][:-1]] = ds * vm.scale["dtds"]
    pb.set_objective(obj)

    q = {name: [vm.expr(name, k) for k in range(n)] for name in NODE_QUANTITIES}
    gam = [vm.expr("gamma", k) for k in range(n)]
    dt, v, E, dEb = q["dtds"], q["v"], q["E_kin"], q["dE_b"]
    Fp, Fgb, Fm, Fdc, Fb, Fi = q["F_p"], q["F_gb"], q["F_m"], q["F_dc"], q["F_b"], q["F_i"]

    for k in range(n):
        # lethargy: dtds * v >= 1
        pb.add_cone(_rotated(dt[k] * v_ref, v[k] / v_ref, [Affine.constant(1.0)]), ConeKind.soc(3))
        # kinetic energy: E >= m v^2 / 2, normalized by E_ref
        pb.add_cone(_rotated(E[k] / E_ref, 1.0, [v[k] / v_ref]), ConeKind.soc(3))
        # propulsion and transmission relaxations
        pb.add_nonneg(_rows(
            eta_fd * Fgb[k] - Fp[k],
            Fgb[k] / eta_fd - Fp[k],
            eta_gb * Fm[k] - Fgb[k],
            Fm[k] / eta_gb - Fgb[k],
        ))
        # kinetic-energy envelope and variable bounds
        pb.add_nonneg(_rows(
            0.5 * m * track.v_max[k] ** 2 - E[k],
            dt[k] - 1.0 / v_cap,
            dt_max - dt[k],
            v[k] - options.v_floor,
            v_cap - v[k],
        ))
        # motor: torque, power and speed limits
        torque = gam[k] * (motor.T_max * gfd / vehicle.r_w)
        power = gam[k] * (motor.c_m1 * gfd / vehicle.r_w) + motor.c_m2 * dt[k]
        pb.add_nonneg(_rows(
            torque - Fm[k],
            torque + Fm[k],
            power - Fm[k],
            power + Fm[k],
            motor.omega_max * vehicle.r_w * dt[k] - gfd * gam[k],
        ))
        em_cone(pb, k, dt[k], Fm[k], Fdc[k])
        # battery terminal force and internal-power cone
        pb.add_equality(*_rows(Fb[k] - Fdc[k] - vehicle.P_aux * dt[k]))
        pb.add_cone(
            _rotated(dt[k] * v_ref, (Fi[k] - Fb[k]) / v_ref, [sqrt_ab * Fb[k]]),
            ConeKind.soc(3),
        )

    for k in range(n - 1):
        drag = aero * E[k] + resist[k]
        pb.add_equality(*_rows(E[k + 1] - E[k] - ds * (Fp[k] - drag)))
        pb.add_equality(*_rows(dEb[k + 1] - dEb[k] - ds * Fi[k]))
    pb.add_equality(*_rows(E[0] - E[n - 1]))
    pb.add_equality(*_rows(dEb[0]))
    pb.add_nonneg(_rows(vm.energy_budget - dEb[n - 1]))

    if vm.gamma is not None:
        ratios = gam if vm.gamma.size > 1 else gam[:1]
        for g in ratios:
            pb.add_nonneg(_rows(g - transmission.gamma_min, transmission.gamma_max - g))
        if vm.gamma.size > 1 and options.tie_final_node:
            pb.add_equality(*_rows(gam[n - 1] - gam[0]))
    if options.tie_final_node:
        for name in _TIED:
            pb.add_equality(*_rows(q[name][n - 1] - q[name][0]))


def build_problem2(
    track: TrackProfile,
    vehicle: VehicleParams,
    transmission: TransmissionSpec,
    motor: MotorModel,
    battery: BatteryModel,
    options: TranscriptionOptions | None = None,
) -> tuple[ConicProgram, VariableMap]:
    """Lap program with the speed-independent motor loss ``alpha_m P_m^2``."""
    options = options or TranscriptionOptions()
    _check_inputs(track, transmission, options)
    vm = _allocate(track, vehicle, transmission, motor, battery, problem=2, options=options)
    v_ref = vm.scale["v"]
    sqrt_am = math.sqrt(motor.alpha_m)

    def em_cone(pb, k, dt, Fm, Fdc):
        # dtds * (F_dc - F_m) >= alpha_m F_m^2
        pb.add_cone(_rotated(dt * v_ref, (Fdc - Fm) / v_ref, [sqrt_am * Fm]), ConeKind.soc(3))

    pb = ProgramBuilder(vm.num_vars)
    _common_constraints(pb, vm, track, vehicle, transmission, motor, battery, options, em_cone)
    return pb.finalize(), vm


def build_problem3(
    track: TrackProfile,
    vehicle: VehicleParams,
    transmission: TransmissionSpec,
    motor: MotorModel,
    battery: BatteryModel,
    v_bar: np.ndarray,
    options: TranscriptionOptions | None = None,
) -> tuple[ConicProgram, VariableMap]:
    """Lap program with the speed-dependent loss ``x'Qx`` evaluated at speeds ``v_bar``.

    The motor constraint ``F_dc >= F_m + x'Qx / v_bar`` with
    ``x = [1, omega_m, F_m v_bar]`` becomes ``v_bar (F_dc - F_m) >= |L'x|^2``
    for ``Q = L L'``, one five-dimensional cone per node.
    """
    options = options or TranscriptionOptions()
    _check_inputs(track, transmission, options)
    v_bar = np.asarray(v_bar, dtype=float)
    if v_bar.shape != (track.num_nodes,):
        raise TranscriptionError(f"v_bar must have one entry per node ({track.num_nodes})")
    if not np.all(np.isfinite(v_bar)) or np.any(v_bar <= 0):
        raise TranscriptionError("v_bar must be strictly positive")
    L = psd_factor(motor.Q)
    vm = _allocate(track, vehicle, transmission, motor, battery, problem=3, options=options)
    vm.v_bar = v_bar.copy()
    P_ref = float(em_loss_sd(motor.corner_speed, motor.c_m2, motor))
    P_ref = P_ref if P_ref > 0 else 1.0
    gfd_r = vehicle.gamma_fd / vehicle.r_w

    def em_cone(pb, k, dt, Fm, Fdc):
        vb = float(v_bar[k])
        om = vm.expr("omega_m", k)
        pb.add_equality(*_rows(om - vm.expr("gamma", k) * (vb * gfd_r)))
        pb.add_nonneg(_rows(motor.omega_max - om))
        xs = [Affine.constant(1.0), om, Fm * vb]
        lx = [sum((L[i, j] * xs[i] for i in range(3)), Affine()) for j in range(3)]
        lx = [r / math.sqrt(P_ref) for r in lx]
        pb.add_cone(_rotated((Fdc - Fm) * (vb / P_ref), 1.0, lx), ConeKind.soc(5))

    pb = ProgramBuilder(vm.num_vars)
    _common_constraints(pb, vm, track, vehicle, transmission, motor, battery, options, em_cone)
    return pb.finalize(), vm


def extract_trajectories(
    solution: ConicSolution,
    vm: VariableMap,
    track: TrackProfile,
    vehicle: VehicleParams,
) -> LapTrajectories:
    """Map an optimal solver vector back to physical trajectories."""
    if solution.status is not Status.OPTIMAL:
        raise TranscriptionError(f"cannot extract trajectories from a {solution.status.value} solution")
    x = solution.x
    val = {name: vm.values(x, name) for name in NODE_QUANTITIES}
    gamma = vm.values(x, "gamma")
    v = val["v"]
    if vm.omega is not None:
        omega = vm.values(x, "omega_m")
    else:
        omega = gamma * v * vehicle.gamma_fd / vehicle.r_w
    eta = vehicle.eta_fd
    F_gb = val["F_gb"]
    F_brk = np.maximum(0.0, np.minimum(eta * F_gb, F_gb / eta) - val["F_p"])
    dtds = val["dtds"]
    return LapTrajectories(
        s=track.positions.copy(),
        dtds=dtds,
        v=v,
        E_kin=val["E_kin"],
        dE_b=val["dE_b"],
        F_p=val["F_p"],
        F_gb=F_gb,
        F_m=val["F_m"],
        F_dc=val["F_dc"],
        F_b=val["F_b"],
        F_i=val["F_i"],
        gamma=gamma,
        omega_m=omega,
        P_m=val["F_m"] * v,
        P_dc=val["F_dc"] * v,
        P_b=val["F_b"] * v,
        P_i=val["F_i"] * v,
        F_brk=F_brk,
        lap_time=float(track.step_length * np.sum(dtds[:-1])),
        step=track.step_length,
    )
