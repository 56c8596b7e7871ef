"""Vehicle and powertrain parameters and the unrelaxed physical model.

All quantities are SI: kg, m, s, N, W, J, rad. Evaluation functions accept
scalars or NumPy arrays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

PSD_TOL = 1e-9


@dataclass(frozen=True)
class VehicleParams:
    """Point-mass vehicle with final drive.

    Args:
        m_tot: Total mass (kg).
        c_d: Drag coefficient.
        A_f: Frontal area (m^2).
        rho_air: Air density (kg/m^3).
        g: Gravitational acceleration (m/s^2).
        c_r: Rolling friction coefficient.
        eta_fd: Final-drive efficiency in (0, 1].
        r_w: Wheel radius (m).
        gamma_fd: Final-drive ratio.
        P_aux: Constant auxiliary power draw (W).
    """

    m_tot: float
    c_d: float
    A_f: float
    rho_air: float = 1.2041
    g: float = 9.81
    c_r: float = 0.01
    eta_fd: float = 1.0
    r_w: float = 0.33
    gamma_fd: float = 1.0
    P_aux: float = 0.0

    def __post_init__(self) -> None:
        for name in ("m_tot", "A_f", "rho_air", "g", "r_w", "gamma_fd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.c_d < 0 or self.c_r < 0 or self.P_aux < 0:
            raise ValueError("c_d, c_r and P_aux must be nonnegative")
        if not 0 < self.eta_fd <= 1:
            raise ValueError("eta_fd must lie in (0, 1]")

    @property
    def aero_coeff(self) -> float:
        """``c_d * A_f * rho`` so that aero drag is ``aero_coeff * E_kin / m``."""
        return self.c_d * self.A_f * self.rho_air


class TransmissionKind(enum.Enum):
    SR = "sr"
    CVT = "cvt"


@dataclass(frozen=True)
class TransmissionSpec:
    """Single-ratio or continuously variable transmission.

    For ``SR`` with ``optimize_sr_ratio`` the shared ratio is a decision
    variable bounded by ``[gamma_min, gamma_max]``; otherwise it is fixed at
    ``gamma_1``. ``CVT`` ratios vary per node within the same bounds.
    """

    kind: TransmissionKind
    eta_gb: float = 1.0
    gamma_1: float = 1.0
    gamma_min: float = 1.0
    gamma_max: float = 1.0
    optimize_sr_ratio: bool = False

    def __post_init__(self) -> None:
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", TransmissionKind(self.kind.lower()))
        if not 0 < self.eta_gb <= 1:
            raise ValueError("eta_gb must lie in (0, 1]")
        if not self.gamma_1 > 0:
            raise ValueError("gamma_1 must be positive")
        if not 0 < self.gamma_min <= self.gamma_max:
            raise ValueError("need 0 < gamma_min <= gamma_max")
        if self.kind is TransmissionKind.CVT and self.optimize_sr_ratio:
            raise ValueError("optimize_sr_ratio only applies to SR transmissions")

    @property
    def is_cvt(self) -> bool:
        return self.kind is TransmissionKind.CVT

    def with_eta(self, eta_gb: float) -> TransmissionSpec:
        return replace(self, eta_gb=eta_gb)


@dataclass(frozen=True)
class MotorModel:
    """Electric machine loss model and operating limits.

    Args:
        alpha_m: Speed-independent loss coefficient, loss = alpha_m * P_m^2 (1/W).
        Q: Symmetric PSD 3x3 matrix, loss = x'Qx with x = [1, omega_m, P_m].
        T_max: Maximum torque (N m).
        c_m1: Slope of the power limit in the power region (W s/rad, <= 0).
        c_m2: Offset of the power limit (W, >= 0).
        omega_max: Maximum motor speed (rad/s).
    """

    alpha_m: float
    T_max: float
    c_m1: float
    c_m2: float
    omega_max: float
    Q: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)), compare=False)

    def __post_init__(self) -> None:
        Q = np.array(self.Q, dtype=float)
        if Q.shape != (3, 3):
            raise ValueError("Q must be 3x3")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise ValueError("Q must be symmetric")
        Q = 0.5 * (Q + Q.T)
        if np.linalg.eigvalsh(Q).min() < -PSD_TOL * max(1.0, np.abs(Q).max()):
            raise ValueError("Q must be positive semi-definite")
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        if self.alpha_m < 0:
            raise ValueError("alpha_m must be nonnegative")
        if not self.T_max > 0 or not self.omega_max > 0:
            raise ValueError("T_max and omega_max must be positive")
        if self.c_m1 > 0 or self.c_m2 < 0:
            raise ValueError("need c_m1 <= 0 and c_m2 >= 0")

    @property
    def corner_speed(self) -> float:
        """Speed where the torque and power limits intersect."""
        return self.c_m2 / (self.T_max - self.c_m1)


@dataclass(frozen=True)
class BatteryModel:
    """Battery loss coefficient and per-lap energy budget.

    ``E_b0`` may be ``inf`` to model an inactive energy constraint.
    """

    alpha_b: float
    E_b0: float
    N_laps: int = 1
    delta_Eb_max: float = field(init=False)

    def __post_init__(self) -> None:
        if self.alpha_b < 0:
            raise ValueError("alpha_b must be nonnegative")
        if not self.E_b0 > 0:
            raise ValueError("E_b0 must be positive")
        if int(self.N_laps) != self.N_laps or self.N_laps < 1:
            raise ValueError("N_laps must be a positive integer")
        object.__setattr__(self, "delta_Eb_max", self.E_b0 / self.N_laps)

    @classmethod
    def per_lap(cls, alpha_b: float, budget: float) -> BatteryModel:
        """Battery with a single lap and ``delta_Eb_max = budget``."""
        return cls(alpha_b=alpha_b, E_b0=budget, N_laps=1)

    def with_budget(self, budget: float) -> BatteryModel:
        return BatteryModel(alpha_b=self.alpha_b, E_b0=budget * self.N_laps, N_laps=self.N_laps)


def drag_force(E_kin, theta, p: VehicleParams):
    """Aero, grade and rolling resistance at kinetic energy ``E_kin``."""
    E_kin = np.asarray(E_kin, dtype=float)
    if np.any(E_kin < 0):
        raise ValueError("E_kin must be nonnegative")
    out = p.aero_coeff * E_kin / p.m_tot + p.m_tot * p.g * (np.sin(theta) + p.c_r * np.cos(theta))
    return out if out.ndim else float(out)


def propulsion_force_exact(F_gb, F_brk, p: VehicleParams):
    """Two-branch final-drive map minus mechanical braking."""
    F_gb = np.asarray(F_gb, dtype=float)
    F_brk = np.asarray(F_brk, dtype=float)
    if np.any(F_brk < 0):
        raise ValueError("F_brk must be nonnegative")
    out = np.where(F_gb >= 0, p.eta_fd * F_gb, F_gb / p.eta_fd) - F_brk
    return out if out.ndim else float(out)


def transmission_force_exact(F_m, t: TransmissionSpec):
    """Gearbox output force for motor-side force ``F_m`` at constant efficiency."""
    F_m = np.asarray(F_m, dtype=float)
    out = np.where(F_m >= 0, t.eta_gb * F_m, F_m / t.eta_gb)
    return out if out.ndim else float(out)


def em_electrical_power_si(P_m, m: MotorModel):
    """Electrical power ``alpha_m P_m^2 + P_m``."""
    P_m = np.asarray(P_m, dtype=float)
    out = m.alpha_m * P_m**2 + P_m
    return out if out.ndim else float(out)


def _check_speed(omega_m, m: MotorModel, slack: float = 1e-9) -> np.ndarray:
    omega_m = np.asarray(omega_m, dtype=float)
    if np.any(omega_m < -slack * m.omega_max) or np.any(omega_m > m.omega_max * (1 + slack)):
        raise ValueError("motor speed outside [0, omega_max]")
    return omega_m


def em_loss_sd(omega_m, P_m, m: MotorModel):
    """Speed-dependent loss ``x'Qx`` with ``x = [1, omega_m, P_m]``."""
    omega_m = np.asarray(omega_m, dtype=float)
    P_m = np.asarray(P_m, dtype=float)
    x = np.stack(np.broadcast_arrays(np.ones_like(omega_m * P_m), omega_m, P_m), axis=-1)
    out = np.einsum("...i,ij,...j->...", x, m.Q, x)
    return out if out.ndim else float(out)


def em_electrical_power_sd(omega_m, P_m, m: MotorModel):
    """Electrical power ``P_m + x'Qx`` for forward motor speeds."""
    _check_speed(omega_m, m)
    out = np.asarray(P_m, dtype=float) + em_loss_sd(omega_m, P_m, m)
    return out if np.ndim(out) else float(out)


def em_power_limits(omega_m, m: MotorModel):
    """Symmetric mechanical power envelope ``(P_min, P_max)`` at speed ``omega_m``."""
    omega_m = _check_speed(omega_m, m)
    p_max = np.minimum(m.T_max * omega_m, m.c_m1 * omega_m + m.c_m2)
    if p_max.ndim == 0:
        return -float(p_max), float(p_max)
    return -p_max, p_max


def battery_internal_power(P_b, b: BatteryModel):
    """Internal power ``alpha_b P_b^2 + P_b`` drawn from the cells."""
    P_b = np.asarray(P_b, dtype=float)
    out = b.alpha_b * P_b**2 + P_b
    return out if out.ndim else float(out)


def motor_speed(v, gamma, p: VehicleParams):
    """Motor speed ``gamma * v * gamma_fd / r_w``."""
    v = np.asarray(v, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(v < 0) or np.any(gamma <= 0):
        raise ValueError("need v >= 0 and gamma > 0")
    out = gamma * v * p.gamma_fd / p.r_w
    return out if out.ndim else float(out)


def kinetic_energy(v, p: VehicleParams):
    return 0.5 * p.m_tot * np.asarray(v, dtype=float) ** 2


def speed_from_energy(E_kin, p: VehicleParams):
    return np.sqrt(2.0 * np.maximum(np.asarray(E_kin, dtype=float), 0.0) / p.m_tot)


def psd_factor(Q: np.ndarray) -> np.ndarray:
    """Return ``L`` with ``Q = L L'`` for a PSD matrix (eigen-based, rank-revealing)."""
    Q = 0.5 * (np.asarray(Q, dtype=float) + np.asarray(Q, dtype=float).T)
    w, V = np.linalg.eigh(Q)
    if w.min() < -PSD_TOL * max(1.0, np.abs(Q).max()):
        raise ValueError(f"matrix is not PSD (min eigenvalue {w.min():.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))[None, :]
