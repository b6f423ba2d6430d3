import math

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from pmp_gdth.params import (
    ConfigError,
    ParameterError,
    default_config_path,
    effective_stall,
    load_config,
    mass_ratio,
    parse_angle,
    virtual_damping,
    virtual_stiffness,
)

pos = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


def test_virtual_stiffness_examples():
    assert virtual_stiffness(200.0, 0.1016) == pytest.approx(1968.503937, abs=1e-6)
    # 53 / (pi/2); the rounded figure 33.7394 in the brief is off in the 4th decimal
    assert virtual_stiffness(53.0, math.pi / 2) == pytest.approx(33.740848, abs=1e-6)
    assert virtual_stiffness(0.0, 0.3) == 0.0


def test_virtual_stiffness_rejects_zero_stroke():
    with pytest.raises(ParameterError, match="stroke"):
        virtual_stiffness(1.0, 0.0)


def test_virtual_damping_examples():
    assert virtual_damping(1.0, 200.0, 0.1016) == pytest.approx(88.7357, abs=1e-4)
    assert virtual_damping(4.0, 200.0, 0.1016) == pytest.approx(177.4714, abs=1e-4)
    assert virtual_damping(2.5, 0.0, 0.2) == 0.0


@given(pos, pos, pos)
def test_critical_damping_identity(m, u, s):
    b = virtual_damping(m, u, s)
    assert b * b == pytest.approx(4.0 * m * virtual_stiffness(u, s), rel=1e-12)


@pytest.mark.parametrize(
    "eta, ratio, expected", [(0.85, 4, 233.4), (0.95, 2, 130.4), (0.85, 2, 116.7)]
)
def test_effective_stall_table(eta, ratio, expected):
    assert abs(effective_stall(68.64655, eta, ratio) - expected) <= 0.05


@given(pos, st.floats(0.05, 1.0), pos, st.floats(1.1, 5.0))
def test_effective_stall_linear(tau, eta, ratio, k):
    base = effective_stall(tau, eta, ratio)
    assert effective_stall(k * tau, eta, ratio) == pytest.approx(k * base, rel=1e-12)
    assert effective_stall(tau, eta, k * ratio) == pytest.approx(k * base, rel=1e-12)


def test_mass_ratio_examples():
    assert mass_ratio(0.7, 0.0) == 1.0
    assert mass_ratio(1.0, 1.0) == 0.5
    assert mass_ratio(0.5, 4.0) == pytest.approx(0.1111, abs=1e-4)


@given(pos, st.floats(0.0, 100.0), st.floats(1e-3, 100.0))
def test_mass_ratio_decreasing(m0, m, dm):
    assert mass_ratio(m0, m + dm) < mass_ratio(m0, m)


def test_mass_ratio_vanishes_for_huge_payload():
    assert mass_ratio(0.5, 1e12) < 1e-11


def test_bundled_config(params):
    assert params.gdth.eta == 0.01
    assert params.gdth.momentum_beta == (0.025, 0.025, 0.025, 0.025)
    assert params.geometry.vartheta == 0.1756
    assert params.gdth.tol_theta == pytest.approx(math.radians(2.0))
    assert params.gear.calibrated


def _raw():
    return yaml.safe_load(default_config_path().read_text())


def test_zero_stroke_is_named(tmp_path):
    raw = _raw()
    raw["geometry"]["strokes"]["theta2"] = 0.0
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(raw))
    with pytest.raises(ConfigError, match="stroke"):
        load_config(path)


def test_missing_field_is_named(tmp_path):
    raw = _raw()
    del raw["masses"]["m1"]
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(raw))
    with pytest.raises(ConfigError, match="m1"):
        load_config(path)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.yaml")


def test_parse_angle_forms():
    assert parse_angle(0.5) == 0.5
    assert parse_angle("2 deg") == pytest.approx(math.radians(2))
    assert parse_angle("pi/6") == pytest.approx(math.pi / 6)


def test_payload_changes_radial_speed_only(params):
    light = params.speed_limits
    heavy = params.with_payload(4.0).speed_limits
    assert heavy[0] == pytest.approx(light[0] * mass_ratio(params.masses.m0, 4.0))
    np.testing.assert_array_equal(heavy[1:], light[1:])
    with pytest.raises(ParameterError):
        params.with_payload(-1.0)
