"""Synthetic vehicle parameters and test tracks.

Every number here is invented for testing. Magnitudes are chosen to resemble an
endurance-class electric race car (hundreds of kW, about 1.3 t).
"""

from __future__ import annotations

import math
import numpy as np

from laptime.config import CarSetup, PowertrainConfig
from laptime.powertrain import BatteryModel, MotorModel, TransmissionSpec, VehicleParams
from laptime.track import Segment, TrackProfile, compose_track

ETA_FD = 0.99
MASS_SR = 1341.0
MASS_CVT = 1395.0
# braking capability baked into the cornering envelopes (m/s^2)
DECEL = 20.0


def synthetic_vehicle(mass: float = MASS_SR, P_aux: float = 2000.0) -> VehicleParams:
    return VehicleParams(
        m_tot=mass, c_d=0.75, A_f=1.2, rho_air=1.2041, g=9.81, c_r=0.012,
        eta_fd=ETA_FD, r_w=0.33, gamma_fd=4.0, P_aux=P_aux,
    )


def synthetic_motor(alpha_m: float = 1.25e-7) -> MotorModel:
    """Motor with ~450 kW peak; ``Q`` adds a speed-dependent term on top of ``alpha_m``."""
    Q = np.array([
        [800.0, 0.0, 0.0],
        [0.0, 4e-3, 0.0],
        [0.0, 0.0, alpha_m],
    ])
    return MotorModel(alpha_m=alpha_m, T_max=450.0, c_m1=-100.0, c_m2=4.5e5, omega_max=1500.0, Q=Q)


def sr_transmission(eta_gb: float = 0.98 / ETA_FD, optimize: bool = True) -> TransmissionSpec:
    return TransmissionSpec(
        kind="sr", eta_gb=eta_gb, gamma_1=1.0, gamma_min=0.4, gamma_max=3.0, optimize_sr_ratio=optimize,
    )


def cvt_transmission(eta_gb: float = 0.96 / ETA_FD) -> TransmissionSpec:
    return TransmissionSpec(kind="cvt", eta_gb=eta_gb, gamma_1=1.0, gamma_min=0.4, gamma_max=3.0)


def sr_setup(budget: float = math.inf, optimize: bool = True, **vehicle_kw) -> CarSetup:
    return CarSetup(
        vehicle=synthetic_vehicle(mass=vehicle_kw.pop("mass", MASS_SR), **vehicle_kw),
        transmission=sr_transmission(optimize=optimize),
        motor=synthetic_motor(),
        battery=BatteryModel.per_lap(7.5e-8, budget),
    )


def cvt_setup(budget: float = math.inf, **vehicle_kw) -> CarSetup:
    return CarSetup(
        vehicle=synthetic_vehicle(mass=vehicle_kw.pop("mass", MASS_CVT), **vehicle_kw),
        transmission=cvt_transmission(),
        motor=synthetic_motor(),
        battery=BatteryModel.per_lap(7.5e-8, budget),
    )


def flat_track(length: float = 1000.0, v_max: float = 50.0, step: float = 10.0) -> TrackProfile:
    """Straight, level track with a constant speed envelope."""
    n = int(round(length / step)) + 1
    return TrackProfile(
        name=f"flat-{length:g}m", step_length=step, theta=np.zeros(n), v_max=np.full(n, v_max),
    )


def corner_track(step: float = 10.0) -> TrackProfile:
    """Two straights joined by a hairpin and a fast sweeper (1.6 km)."""
    return compose_track(
        [
            Segment(500.0),
            Segment(100.0, radius=40.0),
            Segment(400.0, theta=0.02),
            Segment(200.0, radius=150.0),
            Segment(400.0, theta=-0.02),
        ],
        step=step, max_decel=DECEL, name="corner-1600m",
    )


def chicane_track(step: float = 10.0) -> TrackProfile:
    """Short circuit with a chicane and a medium corner (1.4 km)."""
    return compose_track(
        [
            Segment(400.0),
            Segment(60.0, radius=30.0),
            Segment(60.0, radius=30.0),
            Segment(480.0),
            Segment(150.0, radius=80.0),
            Segment(250.0),
        ],
        step=step, max_decel=DECEL, name="chicane-1400m",
    )


def long_track(step: float = 10.0) -> TrackProfile:
    """Synthetic circuit of 13 570 m (1358 nodes at 10 m)."""
    segs = []
    for i in range(5):
        segs += [
            Segment(1400.0, theta=0.01 * (-1) ** i),
            Segment(120.0, radius=50.0 + 40.0 * i),
            Segment(600.0),
            Segment(300.0, radius=250.0),
        ]
    total = sum(s.length for s in segs)
    segs.append(Segment(13570.0 - total))
    return compose_track(segs, step=step, max_decel=DECEL, name="long-13570m")


def synthetic_config(budget: float = math.inf) -> PowertrainConfig:
    """Configuration holding both synthetic transmissions."""
    return PowertrainConfig(
        vehicle=synthetic_vehicle(),
        motor=synthetic_motor(),
        battery=BatteryModel.per_lap(7.5e-8, budget),
        transmissions={"sr": sr_transmission(), "cvt": cvt_transmission()},
        masses={"sr": MASS_SR, "cvt": MASS_CVT},
    )


def sweep_track(step: float = 10.0) -> TrackProfile:
    """Compact 800 m circuit used for parameter sweeps."""
    return compose_track(
        [
            Segment(300.0),
            Segment(80.0, radius=35.0),
            Segment(250.0),
            Segment(170.0, radius=110.0),
        ],
        step=step, max_decel=DECEL, name="sweep-800m",
    )
