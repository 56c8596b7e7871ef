"""JSON configuration for a vehicle, its powertrain and both transmissions.

Layout::

    {
      "vehicle":  {"m_tot_kg": ..., "c_d": ..., "A_f_m2": ..., "rho_air_kg_per_m3": ...,
                   "g_m_per_s2": ..., "c_r": ..., "eta_fd": ..., "r_w_m": ...,
                   "gamma_fd": ..., "P_aux_W": ...},
      "motor":    {"alpha_m_per_watt": ..., "Q": [[...], [...], [...]], "T_max_Nm": ...,
                   "c_m1_W_s_per_rad": ..., "c_m2_W": ..., "omega_max_rad_per_s": ...},
      "battery":  {"alpha_b_per_watt": ..., "E_b0_J": ..., "N_laps": ...},
      "transmissions": {
        "sr":  {"kind": "sr", "eta_gb": ..., "gamma_1": ..., "gamma_min": ..., "gamma_max": ...,
                "optimize_sr_ratio": true, "m_tot_kg": ...},
        "cvt": {"kind": "cvt", "eta_gb": ..., "gamma_min": ..., "gamma_max": ..., "m_tot_kg": ...}
      }
    }

A transmission entry may override the vehicle mass (the two drivetrains
weigh differently). ``E_b0_J`` may be the string ``"inf"``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np

from laptime.powertrain import BatteryModel, MotorModel, TransmissionSpec, VehicleParams


class ConfigError(ValueError):
    """Malformed or physically invalid configuration."""


@dataclass(frozen=True)
class CarSetup:
    """A complete parameter set for one lap solve."""

    vehicle: VehicleParams
    transmission: TransmissionSpec
    motor: MotorModel
    battery: BatteryModel

    def with_budget(self, budget: float) -> CarSetup:
        """Same car with a per-lap energy budget of ``budget`` joules."""
        return replace(self, battery=self.battery.with_budget(budget))

    def with_eta(self, eta_gb: float) -> CarSetup:
        return replace(self, transmission=self.transmission.with_eta(eta_gb))


_VEHICLE_KEYS = {
    "m_tot_kg": "m_tot",
    "c_d": "c_d",
    "A_f_m2": "A_f",
    "rho_air_kg_per_m3": "rho_air",
    "g_m_per_s2": "g",
    "c_r": "c_r",
    "eta_fd": "eta_fd",
    "r_w_m": "r_w",
    "gamma_fd": "gamma_fd",
    "P_aux_W": "P_aux",
}
_MOTOR_KEYS = {
    "alpha_m_per_watt": "alpha_m",
    "Q": "Q",
    "T_max_Nm": "T_max",
    "c_m1_W_s_per_rad": "c_m1",
    "c_m2_W": "c_m2",
    "omega_max_rad_per_s": "omega_max",
}
_BATTERY_KEYS = {"alpha_b_per_watt": "alpha_b", "E_b0_J": "E_b0", "N_laps": "N_laps"}
_TRANSMISSION_KEYS = ("kind", "eta_gb", "gamma_1", "gamma_min", "gamma_max", "optimize_sr_ratio")


def _number(value: Any, key: str) -> float:
    if isinstance(value, str) and value.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number")
    return float(value)


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name)
    if not isinstance(sec, dict):
        raise ConfigError(f"missing section '{name}'")
    return sec


def _map(sec: dict, keys: dict[str, str], where: str, required: tuple[str, ...]) -> dict[str, Any]:
    unknown = set(sec) - set(keys)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in sec]
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")
    out = {}
    for k, v in sec.items():
        out[keys[k]] = v if k == "Q" else _number(v, f"{where}.{k}")
    return out


@dataclass(frozen=True)
class PowertrainConfig:
    """Parsed configuration: shared components plus per-transmission overrides."""

    vehicle: VehicleParams
    motor: MotorModel
    battery: BatteryModel
    transmissions: dict[str, TransmissionSpec]
    masses: dict[str, float]

    def setup(self, name: str) -> CarSetup:
        """Car setup for transmission ``name`` ("sr" or "cvt")."""
        if name not in self.transmissions:
            raise ConfigError(f"no transmission '{name}' in configuration")
        vehicle = replace(self.vehicle, m_tot=self.masses.get(name, self.vehicle.m_tot))
        return CarSetup(vehicle, self.transmissions[name], self.motor, self.battery)

    def to_dict(self) -> dict:
        v, m, b = self.vehicle, self.motor, self.battery
        inv = {a: k for k, a in _VEHICLE_KEYS.items()}
        out = {
            "vehicle": {inv[f]: getattr(v, f) for f in _VEHICLE_KEYS.values()},
            "motor": {
                "alpha_m_per_watt": m.alpha_m,
                "Q": np.asarray(m.Q).tolist(),
                "T_max_Nm": m.T_max,
                "c_m1_W_s_per_rad": m.c_m1,
                "c_m2_W": m.c_m2,
                "omega_max_rad_per_s": m.omega_max,
            },
            "battery": {
                "alpha_b_per_watt": b.alpha_b,
                "E_b0_J": b.E_b0 if math.isfinite(b.E_b0) else "inf",
                "N_laps": b.N_laps,
            },
            "transmissions": {},
        }
        for name, t in self.transmissions.items():
            entry = {
                "kind": t.kind.value,
                "eta_gb": t.eta_gb,
                "gamma_1": t.gamma_1,
                "gamma_min": t.gamma_min,
                "gamma_max": t.gamma_max,
                "optimize_sr_ratio": t.optimize_sr_ratio,
            }
            if name in self.masses:
                entry["m_tot_kg"] = self.masses[name]
            out["transmissions"][name] = entry
        return out


def parse_config(raw: dict) -> PowertrainConfig:
    """Validate a configuration mapping."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    try:
        vkw = _map(_section(raw, "vehicle"), _VEHICLE_KEYS, "vehicle", ("m_tot_kg", "c_d", "A_f_m2"))
        mkw = _map(
            _section(raw, "motor"), _MOTOR_KEYS, "motor",
            ("alpha_m_per_watt", "T_max_Nm", "c_m1_W_s_per_rad", "c_m2_W", "omega_max_rad_per_s"),
        )
        bkw = _map(_section(raw, "battery"), _BATTERY_KEYS, "battery", ("alpha_b_per_watt", "E_b0_J"))
        if "N_laps" in bkw:
            if bkw["N_laps"] != int(bkw["N_laps"]):
                raise ConfigError("battery.N_laps must be an integer")
            bkw["N_laps"] = int(bkw["N_laps"])
        if "Q" in mkw:
            mkw["Q"] = np.asarray(mkw["Q"], dtype=float)
        vehicle = VehicleParams(**vkw)
        motor = MotorModel(**mkw)
        battery = BatteryModel(**bkw)
        trans_raw = _section(raw, "transmissions")
        transmissions: dict[str, TransmissionSpec] = {}
        masses: dict[str, float] = {}
        for name, sec in trans_raw.items():
            if not isinstance(sec, dict):
                raise ConfigError(f"transmissions.{name}: expected an object")
            unknown = set(sec) - set(_TRANSMISSION_KEYS) - {"m_tot_kg"}
            if unknown:
                raise ConfigError(f"transmissions.{name}: unknown keys {sorted(unknown)}")
            kw = {k: sec[k] for k in _TRANSMISSION_KEYS if k in sec}
            kw.setdefault("kind", name)
            for k in ("eta_gb", "gamma_1", "gamma_min", "gamma_max"):
                if k in kw:
                    kw[k] = _number(kw[k], f"transmissions.{name}.{k}")
            kw["optimize_sr_ratio"] = bool(kw.get("optimize_sr_ratio", False))
            transmissions[name] = TransmissionSpec(**kw)
            if "m_tot_kg" in sec:
                masses[name] = _number(sec["m_tot_kg"], f"transmissions.{name}.m_tot_kg")
        if not transmissions:
            raise ConfigError("no transmissions configured")
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return PowertrainConfig(vehicle, motor, battery, transmissions, masses)


def load_config(path: str | Path) -> PowertrainConfig:
    """Read a configuration file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw)


def save_config(cfg: PowertrainConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
        fh.write("\n")
