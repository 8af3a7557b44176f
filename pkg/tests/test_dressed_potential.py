"""Tests for dressed_potential.py: dressed potential, maps, well location, splitting curves."""

import math

import numpy as np
import pytest
from scipy import constants

from src.dressed_potential import (
    HBAR,
    MU_B,
    RB87,
    AtomSpecies,
    DoubleWellGeometry,
    GridSpec,
    PotentialMap,
    RfSetting,
    effective_potential,
    larmor_frequency,
    locate_wells,
    map_potential,
    perpendicular_rf,
    splitting_curve,
)
from src.errors import ConfigurationError, DegenerateFieldError, DomainError, GridTooSmallError
from src.field_model import ChipLayout, StripWire, Vec3, current_for_gradient, gradient_at, static_field
from src.ramp import RampSchedule, linear_ramp
from src.units import angular

UM = 1e-6
KHZ_H = constants.h * 1e3
TRAP = Vec3(0, 80 * UM, 0)


def trap_grid(half_x=10 * UM, half_y=6 * UM, nx=201, ny=61):
    return GridSpec(center_x=0.0, center_y=80 * UM, half_width_x=half_x, half_width_y=half_y, nx=nx, ny=ny)


class TestSpecies:
    def test_rb87_constants(self):
        assert RB87.m_f * RB87.g_f == 1.0
        assert RB87.mass == pytest.approx(1.443e-25, rel=1e-3)

    def test_high_field_seeker_rejected(self):
        with pytest.raises(ConfigurationError):
            AtomSpecies(name="x", mass=1e-25, m_f=-1, g_f=0.5, scattering_length=0)

    def test_negative_amplitude_rejected(self):
        with pytest.raises(ConfigurationError):
            RfSetting(frequency=1.0, amplitude=-0.1)


class TestPerpendicularRf:
    def test_parallel(self):
        assert perpendicular_rf(Vec3(0, 0, 2e-4), Vec3(0, 0, 5e-5)) == 0.0

    def test_orthogonal(self):
        assert perpendicular_rf(Vec3(0, 0, 2e-4), Vec3(5e-5, 0, 0)) == pytest.approx(5e-5, rel=1e-15)

    def test_forty_five_degrees(self):
        b = perpendicular_rf(Vec3(1e-4, 0, 0), Vec3(1e-5, 1e-5, 0))
        assert b == pytest.approx(math.hypot(1e-5, 1e-5) / math.sqrt(2), rel=1e-12)

    def test_zero_static_field(self):
        with pytest.raises(DegenerateFieldError):
            perpendicular_rf(Vec3(), Vec3(1e-5, 0, 0))


class TestEffectivePotential:
    def test_bare_detuning_without_rf(self, nominal_layout):
        point = Vec3(1.3 * UM, 81 * UM, 0)
        rf = RfSetting(frequency=angular(500e3), amplitude=0.0)
        b = static_field(nominal_layout, point).norm()
        expected = RB87.m_f * abs(MU_B * RB87.g_f * b - HBAR * rf.frequency)
        assert effective_potential(nominal_layout, RB87, rf, point) == pytest.approx(expected, rel=1e-15)

    def test_resonance_leaves_coupling_term(self, nominal_layout):
        point = Vec3(0.7 * UM, 79 * UM, 0)
        b = static_field(nominal_layout, point)
        rf = RfSetting(frequency=MU_B * RB87.g_f * b.norm() / HBAR, amplitude=0.06)
        from src.field_model import rf_field_vector

        b_perp = perpendicular_rf(b, rf_field_vector(nominal_layout.with_rf(0.06, rf.frequency), point))
        expected = RB87.m_f * MU_B * RB87.g_f * b_perp / 2
        assert effective_potential(nominal_layout, RB87, rf, point) == pytest.approx(expected, rel=1e-9)

    def test_larmor_frequency_of_one_gauss(self):
        assert larmor_frequency(RB87, 1e-4) == pytest.approx(700e3, rel=0.005)

    def test_gravity_adds_linear_term(self, nominal_layout):
        from dataclasses import replace

        rf = RfSetting(frequency=angular(500e3), amplitude=0.06)
        heavy = replace(nominal_layout, gravity=True)
        lo = Vec3(0, 79 * UM, 0)
        hi = Vec3(0, 81 * UM, 0)
        shift_lo = effective_potential(heavy, RB87, rf, lo) - effective_potential(nominal_layout, RB87, rf, lo)
        shift_hi = effective_potential(heavy, RB87, rf, hi) - effective_potential(nominal_layout, RB87, rf, hi)
        assert shift_hi - shift_lo == pytest.approx(RB87.mass * constants.g * 2 * UM, rel=1e-6)


class TestMapPotential:
    def test_non_negative(self, nominal_layout):
        pmap = map_potential(nominal_layout, RB87, RfSetting(angular(500e3), 0.06), trap_grid(nx=81, ny=25))
        assert np.all(pmap.values >= 0)

    def test_zero_rf_matches_static_trap_minimum(self, nominal_layout):
        grid = trap_grid(half_x=3 * UM, half_y=3 * UM, nx=61, ny=61)
        pmap = map_potential(nominal_layout, RB87, RfSetting(angular(500e3), 0.0), grid)
        geo = locate_wells(pmap)
        assert geo.separation == 0.0
        (x, y), = geo.minima
        assert x == pytest.approx(0.0, abs=0.02 * UM)
        assert y == pytest.approx(80 * UM, abs=0.02 * UM)

    def test_zero_rf_trap_frequency(self, nominal_layout):
        grid = trap_grid(half_x=1 * UM, half_y=1 * UM, nx=41, ny=41)
        geo = locate_wells(map_potential(nominal_layout, RB87, RfSetting(angular(500e3), 0.0), grid))
        g = gradient_at(nominal_layout, TRAP)
        omega = math.sqrt(RB87.m_f * RB87.g_f * MU_B * g**2 / (nominal_layout.ioffe * RB87.mass))
        assert geo.omega_x[0] == pytest.approx(omega, rel=0.02)
        assert geo.omega_y[0] == pytest.approx(omega, rel=0.02)

    def test_symmetric_layout_gives_symmetric_map(self, symmetric_layout):
        pmap = map_potential(symmetric_layout, RB87, RfSetting(angular(500e3), 0.08), trap_grid(nx=101, ny=31))
        asym = np.max(np.abs(pmap.values - pmap.values[::-1, :])) / np.max(np.abs(pmap.values))
        assert asym < 1e-10

    def test_nominal_layout_splits_along_x(self, nominal_layout):
        pmap = map_potential(nominal_layout, RB87, RfSetting(angular(500e3), 0.06), trap_grid())
        geo = locate_wells(pmap)
        assert geo.is_split
        (xl, yl), (xr, yr) = geo.minima
        assert xl < 0 < xr
        assert abs(xr - xl) > 5 * abs(yr - yl)
        assert 2 * UM < geo.separation < 12 * UM
        assert geo.barrier > 1 * KHZ_H

    def test_grid_on_conductor(self, nominal_layout):
        grid = GridSpec(center_x=0.0, center_y=0.0, half_width_x=5 * UM, half_width_y=5 * UM, nx=11, ny=11)
        with pytest.raises(DomainError):
            map_potential(nominal_layout, RB87, RfSetting(angular(500e3), 0.06), grid)

    def test_no_rf_wire(self):
        layout = ChipLayout(wires=(StripWire(x=0, y=0, width=5e-5, current=1.0),))
        with pytest.raises(ConfigurationError):
            map_potential(layout, RB87, RfSetting(angular(500e3), 0.06), trap_grid(nx=11, ny=5))


class TestLocateWells:
    def test_quartic_double_well(self):
        a, b = 1.0, 2.0
        xs = np.linspace(-2.0, 2.1037, 2053)
        pmap = PotentialMap.from_profile(xs, a * xs**4 - b * xs**2)
        geo = locate_wells(pmap)
        assert geo.separation == pytest.approx(2 * math.sqrt(b / (2 * a)), rel=1e-3)
        assert geo.barrier == pytest.approx(b**2 / (4 * a), rel=1e-3)
        assert geo.imbalance == pytest.approx(0.0, abs=1e-6)

    def test_tilted_quartic_imbalance_sign(self):
        xs = np.linspace(-2.0, 2.0, 2001)
        pmap = PotentialMap.from_profile(xs, xs**4 - 2 * xs**2 + 0.05 * xs)
        geo = locate_wells(pmap)
        # right minimum raised by the tilt
        assert geo.imbalance > 0
        assert geo.minimum_values[1] > geo.minimum_values[0]

    def test_single_harmonic_well(self):
        omega = angular(2e3)
        xs = np.linspace(-2, 2, 401) * UM + 0.0123 * UM
        pmap = PotentialMap.from_profile(xs, 0.5 * RB87.mass * omega**2 * xs**2, species=RB87)
        geo = locate_wells(pmap)
        assert geo.separation == 0.0
        assert geo.barrier == 0.0
        assert geo.omega_x[0] == pytest.approx(omega, rel=1e-3)
        assert geo.minima[0][0] == pytest.approx(0.0, abs=1e-12)

    def test_shallow_ripples_are_merged(self):
        xs = np.linspace(-2.0, 2.0, 2001)
        ripple = 1e-4 * np.cos(2 * np.pi * xs / 0.01)
        geo = locate_wells(PotentialMap.from_profile(xs, xs**4 - 2 * xs**2 + ripple), min_prominence=0.01)
        assert geo.separation == pytest.approx(2.0, abs=0.02)
        assert geo.barrier == pytest.approx(1.0, abs=0.01)

    def test_minimum_on_boundary(self):
        xs = np.linspace(-1, 1, 101)
        with pytest.raises(GridTooSmallError):
            locate_wells(PotentialMap.from_profile(xs, (xs - 3) ** 2))

    def test_symmetric_layout_has_zero_imbalance(self, symmetric_layout):
        geo = locate_wells(map_potential(symmetric_layout, RB87, RfSetting(angular(500e3), 0.08), trap_grid(nx=201, ny=61)))
        assert geo.is_split
        (xl, yl), (xr, yr) = geo.minima
        assert xl == pytest.approx(-xr, abs=1e-12)
        assert yl == pytest.approx(yr, abs=1e-12)
        assert abs(geo.imbalance) < 1e-6 * geo.barrier

    def test_displaced_dc_wire_flips_imbalance(self, symmetric_layout):
        rf = RfSetting(angular(500e3), 0.08)
        grid = trap_grid(nx=201, ny=61)
        plus = locate_wells(map_potential(symmetric_layout.shifted_dc(0.5 * UM), RB87, rf, grid))
        minus = locate_wells(map_potential(symmetric_layout.shifted_dc(-0.5 * UM), RB87, rf, grid))
        assert plus.imbalance != 0
        assert math.copysign(1, plus.imbalance) == -math.copysign(1, minus.imbalance)
        assert plus.imbalance == pytest.approx(-minus.imbalance, rel=1e-3)


class TestLineCut:
    def test_cut_of_quadratic(self):
        xs = np.linspace(-1, 1, 41)
        ys = np.linspace(-1, 1, 21)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pmap = PotentialMap(xs=xs, ys=ys, values=gx**2 + 2 * gy**2)
        s = np.linspace(-0.5, 0.5, 11)
        cut = pmap.line_cut((0.0, 0.3), (1.0, 0.0), s)
        np.testing.assert_allclose(cut, s**2 + 2 * 0.09, atol=1e-10)

    def test_cut_outside_map(self):
        xs = np.linspace(-1, 1, 41)
        pmap = PotentialMap.from_profile(xs, xs**2)
        with pytest.raises(GridTooSmallError):
            pmap.line_cut((0.0, 0.0), (1.0, 0.0), np.linspace(-2, 2, 5))

    def test_csv_rows(self):
        pmap = PotentialMap.from_profile(np.array([0.0, 1.0, 2.0]), np.array([3.0, 4.0, 5.0]), y=7.0)
        assert pmap.csv_rows()[1] == (1.0, 7.0, 4.0)


class TestSplittingCurve:
    def test_amplitude_ramp_opens_double_well(self, nominal_layout):
        ramp = linear_ramp(RfSetting(angular(500e3), 0.0), RfSetting(angular(500e3), 0.07), 1e-3, 8)
        curve = splitting_curve(nominal_layout, RB87, ramp, trap_grid(), workers=2)
        seps = curve.separations
        assert curve.monotone
        assert seps[0] == 0.0
        assert 2 * UM < seps[-1] < 15 * UM
        assert np.all(np.diff(seps) >= -1e-9)

    def test_single_node_ramp(self, nominal_layout):
        ramp = RampSchedule(times=(0.0,), settings=(RfSetting(angular(500e3), 0.06),))
        curve = splitting_curve(nominal_layout, RB87, ramp, trap_grid(nx=101, ny=31))
        assert len(curve.points) == 1

    def test_steeper_gradient_gives_smaller_separation(self, nominal_layout):
        rf = RampSchedule(times=(0.0,), settings=(RfSetting(angular(500e3), 0.065),))
        grid = trap_grid(half_x=12 * UM, nx=241)
        seps = []
        for gradient in (11.0, 19.0, 24.0):
            layout = current_for_gradient(nominal_layout, TRAP, gradient)
            seps.append(splitting_curve(layout, RB87, rf, grid).separations[0])
        assert seps[0] > seps[1] > seps[2] > 0

    def test_non_monotone_ramp_rejected(self, nominal_layout):
        ramp = RampSchedule(
            times=(0.0, 1.0, 2.0),
            settings=(RfSetting(angular(5e5), 0.0), RfSetting(angular(5e5), 0.06), RfSetting(angular(5e5), 0.03)),
        )
        with pytest.raises(ConfigurationError):
            splitting_curve(nominal_layout, RB87, ramp, trap_grid(nx=11, ny=5))

    def test_four_megahertz_reaches_eighty_microns(self, nominal_layout):
        layout = current_for_gradient(nominal_layout, TRAP, 11.0)
        # the resonance shell is a narrow valley; shallow sampling ripples along it are merged
        grid = GridSpec(center_x=15 * UM, center_y=110 * UM, half_width_x=125 * UM, half_width_y=90 * UM, nx=1001, ny=721)
        pmap = map_potential(layout, RB87, RfSetting(angular(4e6), 0.06), grid)
        geo = locate_wells(pmap, min_prominence=20 * KHZ_H)
        assert geo.separation >= 80 * UM


class TestGeometryProperties:
    def test_unsplit_axis_and_midpoint(self):
        geo = DoubleWellGeometry(
            minima=((1.0, 2.0),), minimum_values=(0.0,), separation=0.0, barrier=0.0,
            omega_x=(1.0,), omega_y=(0.0,), imbalance=0.0,
        )
        assert geo.axis == (1.0, 0.0)
        assert geo.midpoint == (1.0, 2.0)
