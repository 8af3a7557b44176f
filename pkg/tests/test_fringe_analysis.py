"""Tests for fringe_analysis.py: fringe fits, imaging, circular statistics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.dressed_potential import RB87
from src.errors import ConfigurationError, FitError, NoFringeError
from src.fringe_analysis import (
    DensityProfile,
    FringeFit,
    ImagingSpec,
    _seed,
    circular_stats,
    fit_fringes,
    fringe_model,
    infer_separation,
    point_source_spacing,
    randomness_bounds,
    randomness_verdict,
    synth_image,
)
from src.gpe_solver import GpeParams, Grid1D, Wavefunction, time_of_flight

UM = 1e-6
NOMINAL = dict(amplitude=1.5e7, offset=1e5, center=4 * UM, width=30 * UM, spacing=18.9 * UM, phase=0.7, contrast=0.8)


def _profile(n=512, dz=0.6 * UM, **overrides) -> DensityProfile:
    params = {**NOMINAL, **overrides}
    z = (np.arange(n) - (n - 1) / 2) * dz
    return DensityProfile(positions=z, densities=fringe_model(z, **params))


def _phase_error(a: float, b: float) -> float:
    return abs(math.remainder(a - b, 2 * math.pi))


def _wrapped_gaussian(n: int, sigma_deg: float, mean: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return mean + rng.normal(0.0, math.radians(sigma_deg), size=n)


class TestDensityProfile:
    def test_non_uniform_spacing_rejected(self):
        z = np.linspace(0, 1, 16) ** 2
        with pytest.raises(ConfigurationError):
            DensityProfile(positions=z, densities=np.ones(16))

    def test_negative_density_rejected(self):
        with pytest.raises(ConfigurationError):
            DensityProfile(positions=np.arange(16.0), densities=-np.ones(16))

    def test_from_rows(self):
        rows = [(str(i * 1e-6), "2.5") for i in range(10)]
        profile = DensityProfile.from_rows(rows)
        assert profile.spacing == pytest.approx(1e-6)
        assert profile.rows()[3] == pytest.approx((3e-6, 2.5))

    def test_from_rows_bad_input(self):
        with pytest.raises(ConfigurationError):
            DensityProfile.from_rows([("a", "b")])


class TestFitFringes:
    def test_noiseless_recovery(self):
        fit = fit_fringes(_profile())
        for name in ("amplitude", "offset", "center", "width", "spacing", "contrast"):
            assert getattr(fit, name) == pytest.approx(NOMINAL[name], rel=1e-6), name
        assert _phase_error(fit.phase, NOMINAL["phase"]) < 1e-6
        assert fit.residual < 1e-8

    @settings(max_examples=25, deadline=None)
    @given(
        spacing=st.floats(8.0, 25.0),
        phase=st.floats(-3.1, 3.1),
        contrast=st.floats(0.2, 0.95),
        width=st.floats(25.0, 40.0),
        center=st.floats(-10.0, 10.0),
    )
    def test_round_trip(self, spacing, phase, contrast, width, center):
        fit = fit_fringes(
            _profile(spacing=spacing * UM, phase=phase, contrast=contrast, width=width * UM, center=center * UM)
        )
        assert fit.spacing == pytest.approx(spacing * UM, rel=1e-6)
        assert fit.contrast == pytest.approx(contrast, rel=1e-6)
        assert fit.width == pytest.approx(width * UM, rel=1e-6)
        assert _phase_error(fit.phase, phase) < 1e-6

    def test_noisy_phase_spread(self):
        clean = _profile()
        rng = np.random.default_rng(7)
        noise = 0.05 * clean.densities.max()
        phases = []
        for _ in range(100):
            noisy = np.clip(clean.densities + rng.normal(0.0, noise, clean.densities.size), 0.0, None)
            phases.append(fit_fringes(DensityProfile(clean.positions, noisy)).phase)
        errors = [math.degrees(math.remainder(p - NOMINAL["phase"], 2 * math.pi)) for p in phases]
        assert np.std(errors) < 5.0

    def test_translation_shifts_phase(self):
        profile = _profile()
        delta = 3.1 * UM
        base = fit_fringes(profile)
        moved = fit_fringes(profile.shifted(delta))
        assert moved.spacing == pytest.approx(base.spacing, rel=1e-6)
        assert _phase_error(moved.phase, base.phase - 2 * math.pi * delta / base.spacing) < 1e-6

    def test_seed_removes_offset_and_envelope(self):
        profile = _profile(offset=5e6, amplitude=3e7)
        _, offset, center, width, spacing, phase, contrast = _seed(profile.positions, profile.densities)
        assert offset == pytest.approx(5e6, rel=1e-3)
        assert center == pytest.approx(NOMINAL["center"], abs=1 * UM)
        assert width == pytest.approx(NOMINAL["width"], rel=0.1)
        assert spacing == pytest.approx(NOMINAL["spacing"], rel=0.05)
        assert _phase_error(phase, NOMINAL["phase"]) < 0.3
        assert 0.6 < contrast <= 1.0

    def test_plain_gaussian_has_no_fringes(self):
        with pytest.raises(NoFringeError):
            fit_fringes(_profile(contrast=0.0, width=15 * UM))

    def test_flat_profile_has_no_fringes(self):
        with pytest.raises(NoFringeError):
            fit_fringes(DensityProfile(positions=np.arange(64.0), densities=np.ones(64)))

    def test_fit_row(self):
        fit = fit_fringes(_profile())
        shot, spacing, phase, contrast, residual = fit.row(3)
        assert shot == 3
        assert spacing == fit.spacing and phase == fit.phase and contrast == fit.contrast

    def test_fit_rejects_bad_contrast(self):
        with pytest.raises(FitError):
            FringeFit(1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.5, 0.0)

    def test_two_source_expansion(self):
        grid = Grid1D(n=2048, dx=0.05 * UM)
        d, t, phase = 3.4 * UM, 14e-3, 1.0
        width = 0.235 * UM
        psi = np.exp(1j * phase) * np.exp(-((grid.x + d / 2) ** 2) / (2 * width**2)) + np.exp(
            -((grid.x - d / 2) ** 2) / (2 * width**2)
        )
        psi = psi / math.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx)
        source = Wavefunction(psi=psi, grid=grid, atom_number=1000.0, species=RB87)
        expanded = time_of_flight(source, t, GpeParams(g1d=0.0, atom_number=1000.0, dt=1e-6), interactions=False)

        fit = fit_fringes(DensityProfile.from_wavefunction(expanded))
        assert fit.spacing == pytest.approx(point_source_spacing(d, t, RB87), rel=1e-2)
        assert _phase_error(fit.phase, phase) < 0.02
        estimate = infer_separation(fit, t, RB87)
        assert estimate.separation == pytest.approx(d, rel=1e-2)
        assert estimate.interaction_biased


class TestPointSource:
    def test_reference_spacings(self):
        assert point_source_spacing(3.4 * UM, 14e-3, RB87) == pytest.approx(18.9 * UM, rel=5e-3)
        assert point_source_spacing(5 * UM, 14e-3, RB87) == pytest.approx(12.9 * UM, rel=5e-3)

    def test_inverse_proportional(self):
        assert point_source_spacing(2 * UM, 14e-3, RB87) == pytest.approx(
            2 * point_source_spacing(4 * UM, 14e-3, RB87)
        )

    def test_separation_inverts_spacing(self):
        for d in (3.4 * UM, 4.5 * UM, 8 * UM):
            spacing = point_source_spacing(d, 14e-3, RB87)
            fit = FringeFit(1.0, 0.0, 0.0, 1e-5, spacing, 0.0, 0.5, 0.0)
            estimate = infer_separation(fit, 14e-3, RB87)
            assert estimate.separation == pytest.approx(d)
            assert estimate.interaction_biased == (d < 5 * UM)

    def test_non_positive_inputs(self):
        with pytest.raises(ConfigurationError):
            point_source_spacing(0.0, 14e-3, RB87)


class TestSynthImage:
    def test_identity(self):
        profile = _profile()
        image = synth_image(profile, ImagingSpec(pixel_size=profile.spacing))
        np.testing.assert_allclose(image.positions, profile.positions, rtol=0, atol=1e-15)
        np.testing.assert_allclose(image.densities, profile.densities, rtol=1e-9)

    def test_pixelation_conserves_atoms(self):
        profile = _profile()
        image = synth_image(profile, ImagingSpec(pixel_size=4 * profile.spacing))
        assert image.densities.size == profile.densities.size // 4
        assert np.sum(image.densities) * image.spacing == pytest.approx(
            np.sum(profile.densities) * profile.spacing, rel=1e-10
        )

    def test_blur_kills_fine_fringes(self):
        profile = _profile(n=1024, dz=0.2 * UM, spacing=5 * UM, width=20 * UM, center=0.0)
        blurred = synth_image(profile, ImagingSpec(pixel_size=profile.spacing, blur_fwhm=6 * UM))
        try:
            contrast = fit_fringes(blurred).contrast
        except (NoFringeError, FitError):
            contrast = 0.0
        assert contrast < 0.1

    def test_blur_attenuation_factor(self):
        profile = _profile(n=1024, dz=0.4 * UM, width=40 * UM, center=0.0)
        fwhm = 6 * UM
        blurred = synth_image(profile, ImagingSpec(pixel_size=profile.spacing, blur_fwhm=fwhm))
        sigma = fwhm / (2 * math.sqrt(2 * math.log(2)))
        factor = math.exp(-2 * math.pi**2 * sigma**2 / NOMINAL["spacing"] ** 2)
        assert fit_fringes(blurred).contrast == pytest.approx(NOMINAL["contrast"] * factor, rel=2e-2)

    def test_more_blur_never_raises_contrast(self):
        profile = _profile(n=1024, dz=0.4 * UM, width=40 * UM, center=0.0)
        contrasts = [
            fit_fringes(synth_image(profile, ImagingSpec(pixel_size=profile.spacing, blur_fwhm=f * UM))).contrast
            for f in (0.0, 2.0, 4.0, 6.0, 8.0)
        ]
        assert all(b <= a for a, b in zip(contrasts, contrasts[1:]))

    def test_noise_is_seeded(self):
        profile = _profile()
        spec = ImagingSpec(pixel_size=profile.spacing, shot_noise=True, read_noise=0.02, seed=11)
        first = synth_image(profile, spec)
        again = synth_image(profile, spec)
        other = synth_image(profile, ImagingSpec(pixel_size=profile.spacing, shot_noise=True, read_noise=0.02, seed=12))
        np.testing.assert_array_equal(first.densities, again.densities)
        assert not np.array_equal(first.densities, other.densities)
        assert np.all(first.densities >= 0)

    def test_invalid_spec(self):
        with pytest.raises(ConfigurationError):
            ImagingSpec(pixel_size=0.0)
        with pytest.raises(ConfigurationError):
            ImagingSpec(pixel_size=1e-6, blur_fwhm=-1.0)


class TestCircularStats:
    def test_identical_phases(self):
        ensemble = circular_stats([0.4] * 10)
        assert ensemble.spread_deg == 0.0
        assert ensemble.resultant == pytest.approx(1.0)
        assert ensemble.mean_phase == pytest.approx(0.4)

    def test_narrow_distribution_is_non_random(self):
        ensemble = circular_stats(_wrapped_gaussian(40, 13.0, 0.3, seed=5), null_draws=20_000)
        assert ensemble.randomness.verdict == "non-random by > 3 standard deviations"
        assert ensemble.randomness.sigma_level == 3
        assert ensemble.randomness.rayleigh_p < 1e-6
        assert 5.0 < ensemble.spread_deg < 25.0
        assert 5.0 < ensemble.circular_std_deg < 25.0

    def test_evenly_spread_phases_consistent_with_random(self):
        golden = (math.sqrt(5) - 1) / 2
        phases = [2 * math.pi * ((k * golden) % 1.0) - math.pi for k in range(40)]
        ensemble = circular_stats(phases, null_draws=20_000)
        assert ensemble.randomness.verdict == "consistent with random"
        assert ensemble.randomness.sigma_level == 0
        assert ensemble.resultant < 0.1

    def test_spread_recovered(self):
        ensemble = circular_stats(_wrapped_gaussian(2000, 28.0, -2.0, seed=3), null_draws=2000)
        assert ensemble.spread_deg == pytest.approx(28.0, rel=0.1)
        assert ensemble.circular_std_deg == pytest.approx(28.0, rel=0.1)

    @pytest.mark.parametrize("rotation", [0.5, -2.0, math.pi])
    def test_spread_rotation_invariant(self, rotation):
        phases = _wrapped_gaussian(40, 20.0, 0.0, seed=9)
        base = circular_stats(phases, null_draws=2000)
        turned = circular_stats(phases + rotation, null_draws=2000)
        assert turned.spread_deg == pytest.approx(base.spread_deg, rel=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(
        phases=st.lists(st.floats(-math.pi, math.pi), min_size=2, max_size=30),
        rotation=st.floats(-math.pi, math.pi),
    )
    def test_resultant_rotation_invariant(self, phases, rotation):
        base = circular_stats(phases, null_draws=500)
        turned = circular_stats([p + rotation for p in phases], null_draws=500)
        assert turned.resultant == pytest.approx(base.resultant, abs=1e-9)
        if base.resultant > 1e-6:
            assert _phase_error(turned.mean_phase, base.mean_phase + rotation) < 1e-6

    def test_histogram_rows(self):
        ensemble = circular_stats(_wrapped_gaussian(40, 13.0, 0.0, seed=1), null_draws=1000)
        rows = ensemble.histogram_rows()
        assert len(rows) == 36
        assert sum(count for _, count, _ in rows) == 40
        assert sum(model for _, _, model in rows) == pytest.approx(40, rel=1e-6)
        assert max(rows, key=lambda r: r[1])[0] in (-10.0, 0.0, 10.0)

    def test_requires_two_phases(self):
        with pytest.raises(ConfigurationError):
            circular_stats([0.1])

    def test_bin_width_must_divide_circle(self):
        with pytest.raises(ConfigurationError):
            circular_stats([0.1, 0.2], bin_deg=7.0)


class TestRandomnessBounds:
    def test_three_sigma_bound_is_narrower(self):
        one, three = randomness_bounds(40, draws=20_000)
        assert 0.0 < three < one < 180.0

    def test_bound_sits_at_three_sigma(self):
        _, three = randomness_bounds(40, draws=20_000)
        resultant = math.exp(-0.5 * math.radians(three) ** 2)
        assert randomness_verdict(resultant, 40, draws=20_000).z_score == pytest.approx(3.0, abs=1e-6)

    def test_separates_narrow_from_spread_phases(self):
        one, three = randomness_bounds(40, draws=20_000)
        narrow = circular_stats(_wrapped_gaussian(40, 13.0, 0.3, seed=5), null_draws=20_000)
        golden = (math.sqrt(5) - 1) / 2
        spread = circular_stats([2 * math.pi * ((k * golden) % 1.0) - math.pi for k in range(40)], null_draws=20_000)
        assert narrow.circular_std_deg < three
        assert spread.circular_std_deg > one
