"""Fringe fitting and phase-ensemble statistics.

Density profiles after time of flight are fitted with a cosine under a
Gaussian envelope,

    n(z) = A·exp(−(z−z₀)²/2w²)·(1 + C·cos(2πz/Δz + φ)) + offset,

seeded from the spectrum of the envelope-subtracted profile. For two point
sources released from separation d the spacing is Δz = ht/(md) and φ equals
the relative phase φ_L − φ_R of the sources.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import constants, optimize, stats
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks

from src.config import (
    FIT_COST_TOLERANCE,
    FIT_MAX_ITERATIONS,
    FRINGE_PEAK_FACTOR,
    HISTOGRAM_BIN_DEG,
    INTERACTION_BIAS_LIMIT_UM,
    NULL_DRAWS,
    NULL_SEED,
)
from src.dressed_potential import AtomSpecies
from src.errors import ConfigurationError, FitError, NoFringeError
from src.two_mode import wrap_phase

logger = logging.getLogger(__name__)

_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
_MIN_SEED_CONTRAST = 1e-6
_WRAP_TERMS = 3


# ── Profiles ────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class DensityProfile:
    positions: np.ndarray = field(repr=False)
    densities: np.ndarray = field(repr=False)
    pixel_size: float | None = None

    def __post_init__(self):
        z = np.array(self.positions, dtype=float)
        n = np.array(self.densities, dtype=float)
        if z.ndim != 1 or z.shape != n.shape:
            raise ConfigurationError(f"Profile needs matching 1D arrays, got {z.shape} and {n.shape}")
        if z.size < 8:
            raise ConfigurationError(f"Profile needs at least 8 samples, got {z.size}")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(n))):
            raise ConfigurationError("Profile contains non-finite values")
        steps = np.diff(z)
        if steps[0] <= 0 or np.max(np.abs(steps - steps[0])) > 1e-6 * steps[0]:
            raise ConfigurationError("Profile positions must be increasing and uniformly spaced")
        if np.any(n < 0):
            raise ConfigurationError("Line densities must be non-negative")
        if self.pixel_size is not None and self.pixel_size <= 0:
            raise ConfigurationError(f"Pixel size must be > 0, got {self.pixel_size}")
        z.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "positions", z)
        object.__setattr__(self, "densities", n)

    @property
    def spacing(self) -> float:
        return float((self.positions[-1] - self.positions[0]) / (self.positions.size - 1))

    @classmethod
    def from_wavefunction(cls, psi) -> DensityProfile:
        return cls(positions=psi.grid.x, densities=psi.density)

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence]) -> DensityProfile:
        """Build from (position, density) rows, e.g. a parsed CSV."""
        try:
            pairs = [(float(r[0]), float(r[1])) for r in rows]
        except (IndexError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Profile rows must be (position, density) numbers: {e}") from e
        if not pairs:
            raise ConfigurationError("Profile has no rows")
        z, n = zip(*pairs)
        return cls(positions=np.array(z), densities=np.array(n))

    def shifted(self, delta: float) -> DensityProfile:
        return DensityProfile(self.positions + delta, self.densities, self.pixel_size)

    def rows(self) -> list[tuple[float, float]]:
        return [(float(z), float(n)) for z, n in zip(self.positions, self.densities)]


@dataclass(frozen=True)
class ImagingSpec:
    pixel_size: float
    blur_fwhm: float = 0.0
    shot_noise: bool = False
    # Gaussian noise, as a fraction of the peak density
    read_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.pixel_size > 0:
            raise ConfigurationError(f"Pixel size must be > 0, got {self.pixel_size}")
        if self.blur_fwhm < 0 or self.read_noise < 0:
            raise ConfigurationError("Blur and read noise must be >= 0")


def synth_image(profile: DensityProfile, imaging: ImagingSpec) -> DensityProfile:
    """Simulated imaging: Gaussian blur, pixel integration, then noise.

    Each sample stands for a cell of width dz centred on it, so a pixel equal
    to dz with no blur returns the input unchanged.
    """
    z, n = profile.positions, profile.densities
    dz = profile.spacing
    if imaging.blur_fwhm > 0:
        n = gaussian_filter1d(n, imaging.blur_fwhm * _FWHM_TO_SIGMA / dz, mode="nearest", truncate=8.0)

    cell_edges = np.concatenate(([z[0] - dz / 2], z + dz / 2))
    cumulative = np.concatenate(([0.0], np.cumsum(n) * dz))
    count = int(math.floor((cell_edges[-1] - cell_edges[0]) / imaging.pixel_size + 1e-9))
    if count < 8:
        raise ConfigurationError(f"Pixel size {imaging.pixel_size:.3e} m leaves {count} pixels")
    edges = cell_edges[0] + imaging.pixel_size * np.arange(count + 1)
    pixels = np.diff(np.interp(edges, cell_edges, cumulative)) / imaging.pixel_size

    rng = np.random.Generator(np.random.Philox(imaging.seed))
    if imaging.shot_noise:
        pixels = rng.poisson(np.clip(pixels, 0.0, None) * imaging.pixel_size) / imaging.pixel_size
    if imaging.read_noise > 0:
        pixels = pixels + rng.normal(0.0, imaging.read_noise * float(pixels.max()), size=pixels.size)
    centers = 0.5 * (edges[1:] + edges[:-1])
    return DensityProfile(positions=centers, densities=np.clip(pixels, 0.0, None), pixel_size=imaging.pixel_size)


# ── Fringe fit ──────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class FringeFit:
    amplitude: float
    offset: float
    center: float
    width: float
    spacing: float
    phase: float
    contrast: float
    # ‖data − model‖ / ‖data‖
    residual: float
    evaluations: int = 0

    def __post_init__(self):
        if not self.spacing > 0:
            raise FitError(f"Fitted fringe spacing must be > 0, got {self.spacing}")
        if not 0.0 <= self.contrast <= 1.0:
            raise FitError(f"Fitted contrast {self.contrast} outside [0, 1]")

    def model(self, z: np.ndarray) -> np.ndarray:
        return fringe_model(
            z, self.amplitude, self.offset, self.center, self.width, self.spacing, self.phase, self.contrast
        )

    def row(self, shot: int | str) -> tuple:
        return (shot, self.spacing, self.phase, self.contrast, self.residual)


def fringe_model(
    z: np.ndarray,
    amplitude: float,
    offset: float,
    center: float,
    width: float,
    spacing: float,
    phase: float,
    contrast: float,
) -> np.ndarray:
    envelope = amplitude * np.exp(-((np.asarray(z) - center) ** 2) / (2.0 * width**2))
    return envelope * (1.0 + contrast * np.cos(2.0 * math.pi * np.asarray(z) / spacing + phase)) + offset


def _seed(z: np.ndarray, y: np.ndarray) -> tuple[float, ...]:
    """Gaussian envelope from the moments of the profile above its edge offset.

    Spacing, phase and contrast come from the FFT peak of the profile minus
    that offset and envelope.
    """
    edge = max(1, z.size // 20)
    offset = float(np.mean(np.concatenate((y[:edge], y[-edge:]))))
    signal = np.clip(y - offset, 0.0, None)
    total = float(signal.sum())
    if total <= 0:
        raise NoFringeError("Profile carries no signal above its edges")
    dz = float(z[1] - z[0])
    center = float(np.sum(z * signal) / total)
    width = max(float(np.sqrt(np.sum((z - center) ** 2 * signal) / total)), dz)
    amplitude = total * dz / (math.sqrt(2.0 * math.pi) * width)
    envelope = amplitude * np.exp(-((z - center) ** 2) / (2.0 * width**2))

    residual = y - offset - envelope
    power = np.abs(np.fft.rfft(residual)) ** 2
    # bins 0 and 1 hold what is left of the envelope
    band = power[2:]
    peaks, _ = find_peaks(band)
    if peaks.size == 0:
        raise NoFringeError("Profile spectrum has no peak")
    top = int(peaks[np.argmax(band[peaks])])
    k = top + 2
    away = np.concatenate((band[: max(0, top - 3)], band[top + 4:]))
    floor = float(np.median(away)) if away.size else 0.0
    if power[k] < FRINGE_PEAK_FACTOR * floor:
        raise NoFringeError(f"Spectral peak is {power[k] / floor:.2f}x the noise floor")

    tiny = 1e-300
    a, b, c = (math.log(power[i] + tiny) for i in (k - 1, k, k + 1))
    curvature = a - 2.0 * b + c
    delta = float(np.clip(0.5 * (a - c) / curvature, -0.5, 0.5)) if curvature < 0 else 0.0
    frequency = (k + delta) / (z.size * dz)
    projection = complex(np.sum(residual * np.exp(-2j * math.pi * frequency * z)))
    contrast = 2.0 * abs(projection) / float(envelope.sum())
    if contrast < _MIN_SEED_CONTRAST:
        raise NoFringeError(f"Fringe modulation {contrast:.1e} is indistinguishable from zero")
    return amplitude, offset, center, width, 1.0 / frequency, math.atan2(projection.imag, projection.real), min(contrast, 1.0)


def fit_fringes(profile: DensityProfile) -> FringeFit:
    """Least-squares fringe fit, Levenberg-Marquardt from a spectral seed.

    The fit runs in coordinates centred on the seed envelope and measured in
    seed spacings, with densities scaled to the profile maximum.
    """
    z, y = profile.positions, profile.densities
    amplitude, offset, center, width, spacing, phase, contrast = _seed(z, y)
    z_ref, scale, y_scale = center, spacing, float(y.max())
    s = (z - z_ref) / scale
    data = y / y_scale
    p0 = np.array([
        amplitude / y_scale,
        offset / y_scale,
        0.0,
        width / scale,
        1.0,
        phase + 2.0 * math.pi * z_ref / spacing,
        contrast,
    ])

    def residuals(p: np.ndarray) -> np.ndarray:
        return fringe_model(s, *p) - data

    result = optimize.least_squares(
        residuals,
        p0,
        method="lm",
        ftol=FIT_COST_TOLERANCE,
        xtol=FIT_COST_TOLERANCE,
        gtol=FIT_COST_TOLERANCE,
        max_nfev=FIT_MAX_ITERATIONS * (p0.size + 1),
    )
    diagnostics = {"status": int(result.status), "message": result.message, "evaluations": int(result.nfev),
                   "cost": float(result.cost), "seed": p0.tolist()}
    if not result.success or not np.all(np.isfinite(result.x)):
        raise FitError("Fringe fit did not converge", diagnostics)

    a, off, c, w, sp, ph, con = (float(v) for v in result.x)
    spacing = sp * scale
    phase = ph - 2.0 * math.pi * z_ref / spacing
    if spacing < 0:
        spacing, phase = -spacing, -phase
    if con < 0:
        con, phase = -con, phase + math.pi
    if a <= 0 or spacing == 0:
        raise FitError("Fringe fit converged to a degenerate envelope", diagnostics)
    if con > 1.0:
        logger.warning("Fitted contrast %.4f exceeds 1, clipped", con)
        con = 1.0

    norm = float(np.linalg.norm(data))
    fit = FringeFit(
        amplitude=a * y_scale,
        offset=off * y_scale,
        center=z_ref + c * scale,
        width=abs(w) * scale,
        spacing=spacing,
        phase=wrap_phase(phase),
        contrast=con,
        residual=float(np.linalg.norm(result.fun)) / norm if norm > 0 else 0.0,
        evaluations=int(result.nfev),
    )
    logger.debug("Fringe fit: spacing %.3f um, phase %.3f rad, contrast %.3f", fit.spacing * 1e6, fit.phase, fit.contrast)
    return fit


# ── Point-source law ────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SeparationEstimate:
    separation: float
    interaction_biased: bool


def point_source_spacing(separation: float, tof: float, species: AtomSpecies) -> float:
    """Δz = ht/(md)."""
    if separation <= 0 or tof <= 0:
        raise ConfigurationError(f"Separation and TOF must be > 0, got {separation}, {tof}")
    return constants.h * tof / (species.mass * separation)


def infer_separation(fit: FringeFit, tof: float, species: AtomSpecies) -> SeparationEstimate:
    d = point_source_spacing(fit.spacing, tof, species)
    biased = d < INTERACTION_BIAS_LIMIT_UM * 1e-6
    if biased:
        logger.warning(
            "Inferred separation %.2f um is below %.1f um; mean-field expansion biases the point-source law",
            d * 1e6, INTERACTION_BIAS_LIMIT_UM,
        )
    return SeparationEstimate(separation=d, interaction_biased=biased)


# ── Phase ensembles ─────────────────────────────────────────────────────────


@dataclass(frozen=True)
class RandomnessVerdict:
    z_score: float
    sigma_level: int
    verdict: str
    rayleigh_z: float
    rayleigh_p: float


@dataclass(frozen=True)
class PhaseEnsemble:
    phases: tuple[float, ...]
    contrasts: tuple[float, ...]
    mean_phase: float
    resultant: float
    spread_deg: float
    circular_std_deg: float
    randomness: RandomnessVerdict
    # (bin centre relative to the mean in degrees, count, fitted count)
    histogram: tuple[tuple[float, int, float], ...] = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.phases)

    @property
    def mean_contrast(self) -> float | None:
        return float(np.mean(self.contrasts)) if self.contrasts else None

    def summary_row(self) -> tuple:
        return (
            self.n,
            math.degrees(self.mean_phase),
            self.spread_deg,
            self.circular_std_deg,
            self.resultant,
            self.randomness.z_score,
            self.randomness.rayleigh_p,
            self.randomness.verdict,
        )

    def histogram_rows(self) -> list[tuple[float, int, float]]:
        return sorted(self.histogram)


def _wrapped_bin_mass(sigma: float, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    mass = np.zeros_like(lower)
    for m in range(-_WRAP_TERMS, _WRAP_TERMS + 1):
        shift = 2.0 * math.pi * m
        mass += stats.norm.cdf((upper + shift) / sigma) - stats.norm.cdf((lower + shift) / sigma)
    return mass


def _fit_wrapped_gaussian(counts: np.ndarray, width: float) -> tuple[float, np.ndarray]:
    centers = width * np.arange(counts.size)
    lower, upper = centers - width / 2, centers + width / 2
    n = counts.sum()

    def cost(sigma: float) -> float:
        return float(np.sum((counts - n * _wrapped_bin_mass(sigma, lower, upper)) ** 2))

    trial = np.geomspace(1e-3, 2.0 * math.pi, 60)
    best = int(np.argmin([cost(s) for s in trial]))
    lo, hi = trial[max(best - 1, 0)], trial[min(best + 1, trial.size - 1)]
    sigma = float(optimize.minimize_scalar(cost, bounds=(lo, hi), method="bounded").x)
    return sigma, n * _wrapped_bin_mass(sigma, lower, upper)


@functools.lru_cache(maxsize=32)
def _null_resultant(n: int, draws: int, seed: int) -> tuple[float, float]:
    """Mean and standard deviation of R for ``n`` uniform phases."""
    rng = np.random.default_rng(seed)
    batch = max(1, 2_000_000 // n)
    chunks = []
    remaining = draws
    while remaining > 0:
        size = min(batch, remaining)
        angles = rng.uniform(-math.pi, math.pi, size=(size, n))
        chunks.append(np.abs(np.exp(1j * angles).mean(axis=1)))
        remaining -= size
    r = np.concatenate(chunks)
    return float(r.mean()), float(r.std())


def randomness_verdict(resultant: float, n: int, draws: int = NULL_DRAWS, seed: int = NULL_SEED) -> RandomnessVerdict:
    null_mean, null_std = _null_resultant(n, draws, seed)
    z_score = (resultant - null_mean) / null_std
    level = 3 if z_score > 3 else 1 if z_score > 1 else 0
    rn = n * resultant
    rayleigh_p = math.exp(math.sqrt(1.0 + 4.0 * n + 4.0 * (n * n - rn * rn)) - (1.0 + 2.0 * n))
    return RandomnessVerdict(
        z_score=float(z_score),
        sigma_level=level,
        verdict="non-random by > 3 standard deviations" if level == 3 else "consistent with random",
        rayleigh_z=rn * rn / n,
        rayleigh_p=min(max(rayleigh_p, 0.0), 1.0),
    )


def randomness_bounds(n: int, draws: int = NULL_DRAWS, seed: int = NULL_SEED) -> tuple[float, float]:
    """Circular std (deg) of ``n`` phases whose R sits 1σ and 3σ above the uniform null.

    A set whose circular std is below the second value is non-random by
    more than three standard deviations.
    """
    null_mean, null_std = _null_resultant(n, draws, seed)

    def std_deg(resultant: float) -> float:
        resultant = min(resultant, 1.0)
        return math.degrees(math.sqrt(-2.0 * math.log(resultant)))

    return std_deg(null_mean + null_std), std_deg(null_mean + 3.0 * null_std)


def circular_stats(
    phases: Sequence[float],
    contrasts: Sequence[float] = (),
    *,
    bin_deg: float = HISTOGRAM_BIN_DEG,
    null_draws: int = NULL_DRAWS,
    null_seed: int = NULL_SEED,
) -> PhaseEnsemble:
    """Circular mean, spread and randomness of a set of fitted phases.

    The histogram is taken relative to the circular mean, with one bin
    centred on it, and a wrapped Gaussian is fitted to the bin counts.
    """
    phi = np.asarray(phases, dtype=float)
    n = phi.size
    if n < 2:
        raise ConfigurationError(f"Need at least 2 phases, got {n}")
    if len(contrasts) and len(contrasts) != n:
        raise ConfigurationError(f"{len(contrasts)} contrasts for {n} phases")
    bins = 360.0 / bin_deg
    if bin_deg <= 0 or abs(bins - round(bins)) > 1e-9:
        raise ConfigurationError(f"Histogram bin {bin_deg} deg must divide 360")
    bins = int(round(bins))

    vector = np.exp(1j * phi).mean()
    resultant = min(float(abs(vector)), 1.0)
    mean = wrap_phase(math.atan2(vector.imag, vector.real))
    circular_std = math.sqrt(-2.0 * math.log(resultant)) if resultant > 0 else math.inf

    width = math.radians(bin_deg)
    deviations = np.array([wrap_phase(p - mean) for p in phi])
    index = np.minimum(np.floor(np.mod(deviations + width / 2, 2.0 * math.pi) / width).astype(int), bins - 1)
    counts = np.bincount(index, minlength=bins).astype(float)
    if np.ptp(deviations) < 1e-12:
        sigma, expected = 0.0, counts.copy()
    else:
        sigma, expected = _fit_wrapped_gaussian(counts, width)
    centers = [round(math.degrees(wrap_phase(i * width)), 9) for i in range(bins)]

    randomness = randomness_verdict(resultant, n, null_draws, null_seed)
    logger.info(
        "Phase ensemble: n=%d, mean %.1f deg, spread %.1f deg, R=%.3f, %s",
        n, math.degrees(mean), math.degrees(sigma), resultant, randomness.verdict,
    )
    return PhaseEnsemble(
        phases=tuple(float(p) for p in phi),
        contrasts=tuple(float(c) for c in contrasts),
        mean_phase=mean,
        resultant=resultant,
        spread_deg=math.degrees(sigma),
        circular_std_deg=math.degrees(circular_std),
        randomness=randomness,
        histogram=tuple((c, int(k), float(e)) for c, k, e in zip(centers, counts, expected)),
    )
