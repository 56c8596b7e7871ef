import json
import math

import pytest

from laptime.config import ConfigError, load_config, parse_config, save_config
from laptime.fixtures import MASS_CVT, MASS_SR, synthetic_config
from laptime.powertrain import TransmissionKind


def test_round_trip(tmp_path):
    cfg = synthetic_config(budget=2.5e6)
    path = tmp_path / "car.json"
    save_config(cfg, path)
    back = load_config(path)
    assert back.to_dict() == cfg.to_dict()
    sr, cvt = back.setup("sr"), back.setup("cvt")
    assert sr.vehicle.m_tot == MASS_SR and cvt.vehicle.m_tot == MASS_CVT
    assert sr.transmission.kind is TransmissionKind.SR and sr.transmission.optimize_sr_ratio
    assert cvt.battery.delta_Eb_max == 2.5e6


def test_infinite_budget_round_trip(tmp_path):
    path = tmp_path / "car.json"
    save_config(synthetic_config(), path)
    assert json.loads(path.read_text())["battery"]["E_b0_J"] == "inf"
    assert math.isinf(load_config(path).battery.delta_Eb_max)


def test_with_overrides():
    setup = synthetic_config().setup("cvt").with_budget(3e6).with_eta(0.9)
    assert setup.battery.delta_Eb_max == 3e6
    assert setup.transmission.eta_gb == 0.9


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d.pop("motor"), "missing section 'motor'"),
        (lambda d: d["vehicle"].update(wings=2), "unknown keys"),
        (lambda d: d["vehicle"].pop("c_d"), "missing keys"),
        (lambda d: d["vehicle"].update(c_d="fast"), "expected a number"),
        (lambda d: d["battery"].update(N_laps=1.5), "integer"),
        (lambda d: d["transmissions"]["sr"].update(eta_gb=1.5), "eta_gb"),
        (lambda d: d["motor"].update(Q=[[1, 0, 0], [0, -1, 0], [0, 0, 1]]), "semi-definite"),
        (lambda d: d.update(transmissions={}), "no transmissions"),
    ],
)
def test_invalid_configs(mutate, message):
    raw = synthetic_config().to_dict()
    mutate(raw)
    with pytest.raises(ConfigError, match=message):
        parse_config(raw)


def test_unknown_transmission():
    with pytest.raises(ConfigError, match="no transmission"):
        synthetic_config().setup("dct")


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(path)
