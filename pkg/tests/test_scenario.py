"""Tests for scenario.py: TOML loading, SI conversion and the noise model."""

import math

import numpy as np
import pytest

from src.errors import ConfigurationError
from src.field_model import Vec3, WireKind, gradient_at, static_field
from src.scenario import ImbalanceModel, NoiseModel, load_scenario, parse_scenario

UM = 1e-6

SCENARIO_TOML = """
[scenario]
name = "toml"
seed = 7

[chip]
ioffe = "1 G"

[[chip.wires]]
kind = "dc"
x = "-80 um"
width = "50 um"
current = "1 A"

[[chip.wires]]
kind = "rf"
x = "0 um"
width = "10 um"
current = "60 mA"

[rf]
frequency_start = "500 kHz"
amplitude_end = "60 mA"
points = 6

[gpe]
grid_points = 256
atom_number = "calibrate"

[noise]
position = "calibrate"
current = 0.001

[imaging]
pixel_size = "2 um"
blur_fwhm = "3 um"

[ensemble]
shots = 4
"""


def _raw(**sections) -> dict:
    raw = {
        "scenario": {"name": "unit"},
        "chip": {
            "wires": [
                {"kind": "dc", "x": "-80 um", "width": "50 um", "current": "1 A"},
                {"kind": "rf", "x": "0 um", "width": "10 um", "current": "60 mA"},
            ],
        },
        "rf": {"amplitude_end": "60 mA"},
        "gpe": {"grid_points": 256},
    }
    raw.update(sections)
    return raw


class TestParseScenario:
    def test_si_values(self):
        s = parse_scenario(_raw())
        assert s.layout.ioffe == pytest.approx(1e-4)
        assert s.ramp.end.amplitude == pytest.approx(0.06)
        assert s.ramp.start.frequency == pytest.approx(2 * math.pi * 500e3)
        assert s.ramp.speed == pytest.approx(1.4e-3)
        assert s.gpe.dt == pytest.approx(0.2e-6)
        assert s.gpe.omega_perp == pytest.approx(2 * math.pi * 2.1e3)
        assert s.gpe.atom_number == 3000
        assert s.shots == 1

    def test_rf_wires_get_ramp_frequency(self):
        s = parse_scenario(_raw())
        rf = [w for w in s.layout.wires if w.kind is WireKind.RF]
        assert len(rf) == 1
        assert rf[0].frequency == pytest.approx(2 * math.pi * 500e3)

    def test_auto_bias_centres_trap(self):
        s = parse_scenario(_raw())
        b = static_field(s.layout, s.trap)
        assert abs(b.x) < 1e-12 and abs(b.y) < 1e-12
        assert s.trap == Vec3(0.0, 80 * UM, 0.0)

    def test_gradient_rescales_dc_current(self):
        raw = _raw()
        raw["chip"]["gradient"] = "1.9 kG/cm"
        s = parse_scenario(raw)
        assert gradient_at(s.layout, s.trap) == pytest.approx(19.0, rel=1e-5)

    def test_map_centred_on_trap_by_default(self):
        s = parse_scenario(_raw())
        assert s.map.center_x == 0.0
        assert s.map.center_y == pytest.approx(80 * UM)

    def test_invalid_raises_with_messages(self):
        raw = _raw()
        raw["chip"]["wires"] = raw["chip"]["wires"][:1]
        with pytest.raises(ConfigurationError, match="RF wire"):
            parse_scenario(raw)

    def test_digest_tracks_content(self):
        a = parse_scenario(_raw())
        b = parse_scenario(_raw())
        c = parse_scenario(_raw(ensemble={"shots": 3}))
        assert a.digest == b.digest
        assert a.digest != c.digest

    def test_with_seed_reseeds_noise(self):
        s = parse_scenario(_raw()).with_seed(99)
        assert s.seed == 99
        assert s.noise.seed == 99

    def test_default_analysis(self):
        s = parse_scenario(_raw())
        assert s.analysis.gradients == pytest.approx((11.0, 19.0, 24.0))
        assert s.analysis.imaging is None
        assert s.analysis.bin_deg == 10.0


class TestLoadScenario:
    def test_toml_file(self, tmp_path):
        path = tmp_path / "s.toml"
        path.write_text(SCENARIO_TOML, encoding="utf-8")
        s = load_scenario(path)
        assert s.name == "toml"
        assert s.seed == 7 and s.noise.seed == 7
        assert s.gpe.atom_number is None
        assert s.noise.position is None
        assert s.analysis.imaging.pixel_size == pytest.approx(2e-6)
        assert s.shots == 4

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_scenario(tmp_path / "nope.toml")

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[scenario\nname = 1", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_scenario(path)


class TestImbalanceModel:
    def test_zero_below_onset(self):
        m = ImbalanceModel(per_split=1e-30, onset=3.4 * UM, sensitivity=0.0)
        assert m.imbalance(2 * UM) == 0.0
        assert m.imbalance(4.4 * UM) == pytest.approx(1e-36)

    def test_offset_changes_slope(self):
        m = ImbalanceModel(per_split=0.0, onset=0.0, sensitivity=2e-25)
        assert m.slope(1 * UM) == pytest.approx(2e-31)
        assert m.imbalance(1 * UM, offset=-1 * UM) == pytest.approx(-2e-37)


class TestNoiseModel:
    def test_draw_is_deterministic_per_shot(self):
        noise = NoiseModel(position=1 * UM, current=1e-3, atom_number=0.1, displacement_per_current=100 * UM, seed=3)
        assert noise.draw(5) == noise.draw(5)
        assert noise.draw(5) != noise.draw(6)

    def test_seed_changes_draws(self):
        a = NoiseModel(position=1 * UM, current=0.0, atom_number=0.0, displacement_per_current=0.0, seed=1)
        b = NoiseModel(position=1 * UM, current=0.0, atom_number=0.0, displacement_per_current=0.0, seed=2)
        assert a.draw(0).offset != b.draw(0).offset

    def test_zero_noise(self):
        noise = NoiseModel(position=0.0, current=0.0, atom_number=0.0, displacement_per_current=100 * UM)
        draw = noise.draw(0)
        assert draw.offset == 0.0
        assert draw.atom_scale == 1.0

    def test_offset_spread(self):
        noise = NoiseModel(position=0.3 * UM, current=4e-3, atom_number=0.0, displacement_per_current=100 * UM)
        offsets = np.array([noise.draw(k).offset for k in range(4000)])
        assert noise.offset_sigma == pytest.approx(0.5 * UM)
        assert offsets.std() == pytest.approx(0.5 * UM, rel=0.05)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ConfigurationError):
            NoiseModel(position=-1.0, current=0.0, atom_number=0.0, displacement_per_current=0.0)
