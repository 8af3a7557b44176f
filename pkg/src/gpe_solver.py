"""Quasi-1D Gross-Pitaevskii solver.

Split-step Fourier propagation along the splitting axis: imaginary time for
ground states, Strang-split real time for ramps, and free expansion for
time of flight. Public functions take and return SI quantities; stepping
happens in solver units (ħ = m = 1, time unit 1/ω_ref).

Wavefunctions are normalized to one (∑|ψ|² dx = 1); the atom number is
carried separately and enters only through g₁D·N.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import constants
from scipy.fft import fft, fftfreq, ifft

from src.config import (
    ALIASING_EDGE_FRACTION,
    CFL_LIMIT,
    GPE_GRID_POINTS,
    GPE_GRID_SPACING_UM,
    GROUND_STATE_MAX_ITERATIONS,
    GROUND_STATE_TOLERANCE,
    REFERENCE_FREQUENCY_HZ,
    TOF_FREE_SWITCH_PHASE,
    TOF_GRID_POINTS,
    TOF_MAX_GRID_POINTS,
    TOF_NONLINEAR_PHASE,
)
from src.dressed_potential import AtomSpecies, DoubleWellGeometry, PotentialMap, locate_wells
from src.errors import AliasingError, ConfigurationError, ConvergenceError, StepSizeError
from src.ramp import RampSchedule

logger = logging.getLogger(__name__)

HBAR = constants.hbar


def interaction_strength(species: AtomSpecies, omega_perp: float) -> float:
    """Effective 1D coupling g₁D = 2ħω⊥a_s (J·m)."""
    return 2.0 * HBAR * omega_perp * species.scattering_length


@dataclass(frozen=True)
class SolverUnits:
    mass: float
    omega: float

    @classmethod
    def for_species(cls, species: AtomSpecies, frequency_hz: float = REFERENCE_FREQUENCY_HZ) -> SolverUnits:
        return cls(mass=species.mass, omega=2.0 * math.pi * frequency_hz)

    @property
    def length(self) -> float:
        return math.sqrt(HBAR / (self.mass * self.omega))

    @property
    def time(self) -> float:
        return 1.0 / self.omega

    @property
    def energy(self) -> float:
        return HBAR * self.omega


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid, x_j = (j − (n−1)/2)·dx, symmetric about 0."""

    n: int
    dx: float

    def __post_init__(self):
        if self.n < 4 or self.n & (self.n - 1):
            raise ConfigurationError(f"Grid size must be a power of two >= 4, got {self.n}")
        if not self.dx > 0:
            raise ConfigurationError(f"Grid spacing must be > 0, got {self.dx}")

    @classmethod
    def default(cls) -> Grid1D:
        return cls(n=GPE_GRID_POINTS, dx=GPE_GRID_SPACING_UM * 1e-6)

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) - 0.5 * (self.n - 1)) * self.dx

    @property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * fftfreq(self.n, self.dx)

    @property
    def length(self) -> float:
        return self.n * self.dx


@dataclass(frozen=True)
class PotentialCut:
    grid: Grid1D
    values: np.ndarray = field(repr=False)  # J

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise ConfigurationError(f"Potential has {values.shape} samples for a grid of {self.grid.n}")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("Potential cut contains non-finite samples")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_map(cls, pmap: PotentialMap, geometry: DoubleWellGeometry, grid: Grid1D) -> PotentialCut:
        """Cut through both minima, centred on their midpoint (cubic interpolation)."""
        return cls(grid=grid, values=pmap.line_cut(geometry.midpoint, geometry.axis, grid.x))

    @classmethod
    def harmonic(cls, grid: Grid1D, mass: float, omega: float, center: float = 0.0) -> PotentialCut:
        return cls(grid=grid, values=0.5 * mass * omega**2 * (grid.x - center) ** 2)

    def symmetrized(self) -> PotentialCut:
        return PotentialCut(grid=self.grid, values=0.5 * (self.values + self.values[::-1]))

    def tilted(self, slope: float) -> PotentialCut:
        """Add slope·x (J/m); a positive slope raises the right well."""
        return PotentialCut(grid=self.grid, values=self.values + slope * self.grid.x)

    def as_map(self, species: AtomSpecies | None = None) -> PotentialMap:
        return PotentialMap.from_profile(self.grid.x, self.values, species=species)


@dataclass(frozen=True)
class GpeParams:
    g1d: float
    atom_number: float
    dt: float

    def __post_init__(self):
        if not self.g1d >= 0:
            raise ConfigurationError(f"g1D must be >= 0, got {self.g1d}")
        if not self.atom_number > 0:
            raise ConfigurationError(f"Atom number must be > 0, got {self.atom_number}")
        if not self.dt > 0:
            raise ConfigurationError(f"Time step must be > 0, got {self.dt}")

    @property
    def interaction(self) -> float:
        return self.g1d * self.atom_number


@dataclass(frozen=True)
class Wavefunction:
    psi: np.ndarray = field(repr=False)
    grid: Grid1D
    atom_number: float
    species: AtomSpecies
    time: float = 0.0
    energy: float | None = None
    chemical_potential: float | None = None

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex)
        if psi.shape != (self.grid.n,):
            raise ConfigurationError(f"Wavefunction has {psi.shape} samples for a grid of {self.grid.n}")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @property
    def density(self) -> np.ndarray:
        """Line density N|ψ|² (1/m)."""
        return self.atom_number * np.abs(self.psi) ** 2

    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dx)

    def mean_position(self) -> float:
        return float(np.sum(self.grid.x * np.abs(self.psi) ** 2) * self.grid.dx / self.norm())

    def width(self) -> float:
        """RMS width of |ψ|²."""
        prob = np.abs(self.psi) ** 2 * self.grid.dx / self.norm()
        mean = np.sum(self.grid.x * prob)
        return float(math.sqrt(np.sum((self.grid.x - mean) ** 2 * prob)))

    def density_rows(self) -> list[tuple[float, float]]:
        return [(float(x), float(n)) for x, n in zip(self.grid.x, self.density)]


@dataclass(frozen=True)
class Trajectory:
    times: tuple[float, ...]
    states: tuple[Wavefunction, ...]

    @property
    def final(self) -> Wavefunction:
        return self.states[-1]


@dataclass(frozen=True)
class TimelinePoint:
    time: float
    separation: float
    barrier: float
    imbalance: float
    chemical_potential: float
    phase: float
    population_imbalance: float
    split_position: float
    tunnel_coupling: float | None = None


@dataclass(frozen=True)
class SplitResult:
    final: Wavefunction
    trajectory: Trajectory
    timeline: tuple[TimelinePoint, ...]


# ── Split-step core ─────────────────────────────────────────────────────────


class _SplitStep:
    """Strang splitting in solver units with one FFT workspace per trajectory."""

    def __init__(self, grid: Grid1D, units: SolverUnits, interaction: float, dt: float, imaginary: bool = False):
        self.units = units
        self.scale = math.sqrt(units.length)
        self.dx = grid.dx / units.length
        self.k2 = (2.0 * np.pi * fftfreq(grid.n, self.dx)) ** 2
        self.factor = -1.0 if imaginary else -1j
        self.tau = dt / units.time
        self.kinetic = np.exp(self.factor * 0.5 * self.k2 * self.tau)
        self.g = interaction / (units.energy * units.length)

    def to_solver(self, psi: np.ndarray) -> np.ndarray:
        return np.asarray(psi, dtype=complex) * self.scale

    def from_solver(self, psi: np.ndarray) -> np.ndarray:
        return psi / self.scale

    def step(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        half = self.factor * 0.5 * self.tau
        p = p * np.exp(half * (v + self.g * np.abs(p) ** 2))
        p = ifft(self.kinetic * fft(p))
        return p * np.exp(half * (v + self.g * np.abs(p) ** 2))

    def normalize(self, p: np.ndarray) -> np.ndarray:
        return p / math.sqrt(np.sum(np.abs(p) ** 2) * self.dx)

    def energy(self, p: np.ndarray, v: np.ndarray) -> float:
        kinetic = 0.5 * np.sum(self.k2 * np.abs(fft(p)) ** 2) * self.dx / p.size
        dens = np.abs(p) ** 2
        return float(kinetic + np.sum((v + 0.5 * self.g * dens) * dens) * self.dx)

    def kinetic_cutoff(self, p: np.ndarray, fraction: float = 0.9999) -> float:
        """k² / 2 at which the spectral power reaches ``fraction``."""
        power = np.abs(fft(p)) ** 2
        order = np.argsort(self.k2)
        cumulative = np.cumsum(power[order])
        idx = int(np.searchsorted(cumulative, fraction * cumulative[-1]))
        return 0.5 * float(self.k2[order][min(idx, p.size - 1)])

    def check_step(self, p: np.ndarray, v: np.ndarray) -> None:
        dens = np.abs(p) ** 2
        occupied = dens > 1e-10 * dens.max()
        local = v[occupied] + self.g * dens[occupied]
        scale = max(float(local.max() - local.min()), self.kinetic_cutoff(p))
        if self.tau * scale >= CFL_LIMIT:
            raise StepSizeError(
                f"dt·E/ħ = {self.tau * scale:.3f} exceeds {CFL_LIMIT} "
                f"(dt = {self.tau * self.units.time:.3e} s, E = {scale * self.units.energy:.3e} J)"
            )


def _values(potential: PotentialCut | np.ndarray) -> np.ndarray:
    return potential.values if isinstance(potential, PotentialCut) else np.asarray(potential, dtype=float)


# ── Observables ─────────────────────────────────────────────────────────────


def energy(psi: Wavefunction, potential: PotentialCut | np.ndarray, params: GpeParams) -> float:
    """Energy per particle (J): kinetic (spectral) + potential + ½·g₁D·N∫|ψ|⁴."""
    v = _values(potential)
    p = psi.psi
    dx = psi.grid.dx
    kinetic = HBAR**2 / (2.0 * psi.species.mass) * np.sum(psi.grid.k**2 * np.abs(fft(p)) ** 2) * dx / p.size
    dens = np.abs(p) ** 2
    return float(kinetic + np.sum((v + 0.5 * params.interaction * dens) * dens) * dx)


def chemical_potential(psi: Wavefunction, potential: PotentialCut | np.ndarray, params: GpeParams) -> float:
    """μ = E + ½·g₁D·N∫|ψ|⁴ dx; equals the energy when g₁D = 0."""
    dens = np.abs(psi.psi) ** 2
    return energy(psi, potential, params) + 0.5 * params.interaction * float(np.sum(dens**2) * psi.grid.dx)


def relative_phase(psi: Wavefunction, split_at: float) -> float:
    """φ_L − φ_R from |ψ|-weighted projections on each side of ``split_at``."""
    x = psi.grid.x
    weighted = np.abs(psi.psi) * psi.psi
    left = np.sum(weighted[x < split_at])
    right = np.sum(weighted[x >= split_at])
    return float(np.angle(left * np.conj(right)))


def population_imbalance(psi: Wavefunction, split_at: float) -> float:
    """(N_R − N_L) / N."""
    x = psi.grid.x
    dens = np.abs(psi.psi) ** 2
    left = float(np.sum(dens[x < split_at]))
    right = float(np.sum(dens[x >= split_at]))
    return (right - left) / (right + left)


# ── Ground state ────────────────────────────────────────────────────────────


def ground_state(
    potential: PotentialCut,
    params: GpeParams,
    species: AtomSpecies,
    *,
    units: SolverUnits | None = None,
    tolerance: float = GROUND_STATE_TOLERANCE,
    max_iterations: int = GROUND_STATE_MAX_ITERATIONS,
    initial: Wavefunction | None = None,
    on_iteration: Callable[[int, float], None] | None = None,
) -> Wavefunction:
    """Imaginary-time relaxation with renormalization after every step.

    Converged when the relative energy change per step drops below
    ``tolerance``. ``on_iteration(i, energy_J)`` observes the energy sequence.
    """
    grid = potential.grid
    units = units or SolverUnits.for_species(species)
    stepper = _SplitStep(grid, units, params.interaction, params.dt, imaginary=True)
    offset = float(potential.values.min())
    v = (potential.values - offset) / units.energy

    if initial is not None:
        p = stepper.to_solver(initial.psi)
    else:
        p = np.exp(-0.5 * v).astype(complex)
    p = stepper.normalize(p)
    previous = stepper.energy(p, v)

    for iteration in range(1, max_iterations + 1):
        p = stepper.normalize(stepper.step(p, v))
        current = stepper.energy(p, v)
        if on_iteration is not None:
            on_iteration(iteration, current * units.energy + offset)
        change = abs(current - previous) / max(abs(current), 1e-300)
        previous = current
        if change < tolerance:
            break
    else:
        raise ConvergenceError(
            "Imaginary-time relaxation did not converge",
            last_energy=previous * units.energy + offset,
            iterations=max_iterations,
        )

    psi = Wavefunction(psi=stepper.from_solver(p), grid=grid, atom_number=params.atom_number, species=species)
    e = energy(psi, potential, params)
    mu = chemical_potential(psi, potential, params)
    logger.debug("Ground state after %d iterations: E = %.6e J, mu = %.6e J", iteration, e, mu)
    return replace(psi, energy=e, chemical_potential=mu)


# ── Real-time evolution ─────────────────────────────────────────────────────


def evolve(
    psi: Wavefunction,
    potential: PotentialCut | RampSchedule,
    params: GpeParams,
    duration: float,
    *,
    units: SolverUnits | None = None,
    record_every: int = 0,
) -> Trajectory:
    """Strang-split real-time propagation for ``duration`` seconds.

    A RampSchedule supplies potential snapshots on ``psi.grid``, sampled at
    the midpoint of each step on the absolute clock ``psi.time``. States are
    recorded every ``record_every`` steps (0: final only) and always at the end.
    """
    if duration < 0:
        raise ConfigurationError(f"Duration must be >= 0, got {duration}")
    if duration == 0:
        return Trajectory(times=(psi.time,), states=(psi,))

    units = units or SolverUnits.for_species(psi.species)
    steps = max(1, math.ceil(duration / params.dt - 1e-9))
    dt = duration / steps
    stepper = _SplitStep(psi.grid, units, params.interaction, dt)

    if isinstance(potential, RampSchedule):
        if not potential.snapshots:
            raise ConfigurationError("Ramp carries no potential snapshots")
        if potential.snapshots[0].shape != (psi.grid.n,):
            raise ConfigurationError("Ramp snapshots do not match the wavefunction grid")

        def v_at(t: float) -> np.ndarray:
            return potential.snapshot_at(t)
    else:
        if potential.grid != psi.grid:
            raise ConfigurationError("Potential and wavefunction grids differ")
        static = potential.values

        def v_at(t: float) -> np.ndarray:
            return static

    t0 = psi.time
    offset = float(v_at(t0).min())
    p = stepper.to_solver(psi.psi)
    stepper.check_step(p, (v_at(t0 + 0.5 * dt) - offset) / units.energy)
    check_every = max(1, steps // 20)

    times: list[float] = [t0]
    states: list[Wavefunction] = [psi]
    for s in range(steps):
        v = (v_at(t0 + (s + 0.5) * dt) - offset) / units.energy
        if s and s % check_every == 0:
            stepper.check_step(p, v)
        p = stepper.step(p, v)
        if (record_every and (s + 1) % record_every == 0) or s == steps - 1:
            t = t0 + (s + 1) * dt
            if times[-1] != t:
                times.append(t)
                states.append(replace(psi, psi=stepper.from_solver(p), time=t, energy=None, chemical_potential=None))
    return Trajectory(times=tuple(times), states=tuple(states))


# ── Time of flight ──────────────────────────────────────────────────────────


def pad_to(psi: Wavefunction, n: int) -> Wavefunction:
    """Zero-pad symmetrically to ``n`` points, keeping x positions."""
    if n < psi.grid.n:
        raise ConfigurationError(f"Cannot pad {psi.grid.n} points down to {n}")
    grid = Grid1D(n=n, dx=psi.grid.dx)
    start = (n - psi.grid.n) // 2
    padded = np.zeros(n, dtype=complex)
    padded[start:start + psi.grid.n] = psi.psi
    return replace(psi, psi=padded, grid=grid)


def _expanded_half_extent(psi: Wavefunction, duration: float, interaction: float) -> float:
    x = psi.grid.x
    dens = np.abs(psi.psi) ** 2
    occupied = x[dens > 1e-12 * dens.max()]
    reach = float(np.max(np.abs(occupied)))
    power = np.abs(fft(psi.psi)) ** 2
    k = np.abs(psi.grid.k)
    order = np.argsort(k)
    cumulative = np.cumsum(power[order])
    k_cut = float(k[order][min(int(np.searchsorted(cumulative, (1 - 1e-6) * cumulative[-1])), k.size - 1)])
    speed = HBAR * k_cut / psi.species.mass
    if interaction > 0:
        # edge of a released 1D Thomas-Fermi cloud moves at 2·sqrt(μ/m)
        speed += 2.0 * math.sqrt(interaction * float(dens.max()) / psi.species.mass)
    return reach + speed * duration


def _check_aliasing(p: np.ndarray) -> None:
    dens = np.abs(p) ** 2
    edge = max(1, p.size // 20)
    fraction = (np.sum(dens[:edge]) + np.sum(dens[-edge:])) / np.sum(dens)
    if fraction > ALIASING_EDGE_FRACTION:
        raise AliasingError(f"{fraction:.2e} of the expanded cloud sits in the outer 5% of the window")


def time_of_flight(
    psi: Wavefunction,
    duration: float,
    params: GpeParams,
    interactions: bool = True,
    *,
    units: SolverUnits | None = None,
    min_points: int = TOF_GRID_POINTS,
    max_points: int = TOF_MAX_GRID_POINTS,
) -> Wavefunction:
    """Free expansion after an instantaneous switch-off of the potential.

    The window is zero-padded to at least ``min_points`` and grown up to
    ``max_points`` when the expanded cloud needs it; a cloud that still
    reaches the window edge raises AliasingError. Without interactions one
    exact spectral step is taken; with interactions the nonlinear phase per
    substep is bounded and the remainder is done in one free step once the
    density has dropped.
    """
    if duration < 0:
        raise ConfigurationError(f"Expansion time must be >= 0, got {duration}")
    units = units or SolverUnits.for_species(psi.species)
    interaction = params.interaction if interactions else 0.0

    half_extent = _expanded_half_extent(psi, duration, interaction)
    n = max(min_points, psi.grid.n)
    while 0.5 * n * psi.grid.dx * 0.95 < 1.1 * half_extent and n < max_points:
        n *= 2
    padded = pad_to(psi, n)
    if n > min_points:
        logger.debug("TOF window grown to %d points for a %.1f um half-extent", n, half_extent * 1e6)

    stepper = _SplitStep(padded.grid, units, interaction, params.dt)
    p = stepper.to_solver(padded.psi)
    total = duration / units.time

    elapsed = 0.0
    substeps = 0
    while interaction > 0 and elapsed < total:
        peak = stepper.g * float(np.max(np.abs(p) ** 2))
        remaining = total - elapsed
        if peak * remaining < TOF_FREE_SWITCH_PHASE:
            break
        h = min(remaining, TOF_NONLINEAR_PHASE / peak)
        p = p * np.exp(-0.5j * h * stepper.g * np.abs(p) ** 2)
        p = ifft(np.exp(-0.5j * h * stepper.k2) * fft(p))
        p = p * np.exp(-0.5j * h * stepper.g * np.abs(p) ** 2)
        elapsed += h
        substeps += 1
    if elapsed < total:
        p = ifft(np.exp(-0.5j * (total - elapsed) * stepper.k2) * fft(p))
    if substeps:
        logger.debug("Interacting TOF took %d substeps", substeps)

    _check_aliasing(p)
    return replace(padded, psi=stepper.from_solver(p), time=psi.time + duration, energy=None, chemical_potential=None)


# ── Splitting sequence ──────────────────────────────────────────────────────


def timeline_point(
    psi: Wavefunction, v: np.ndarray, params: GpeParams, min_prominence: float | None = None
) -> TimelinePoint:
    """Geometry of the instantaneous potential plus the state's μ, φ and z."""
    cut = PotentialCut(grid=psi.grid, values=v)
    geo = locate_wells(cut.as_map(psi.species), min_prominence)
    split_at = geo.saddle[0] if geo.is_split and geo.saddle else geo.midpoint[0]
    return TimelinePoint(
        time=psi.time,
        separation=geo.separation,
        barrier=geo.barrier,
        imbalance=geo.imbalance,
        chemical_potential=chemical_potential(psi, v, params) - geo.lowest,
        phase=relative_phase(psi, split_at),
        population_imbalance=population_imbalance(psi, split_at),
        split_position=split_at,
    )


def split_sequence(
    initial: Wavefunction,
    ramp: RampSchedule,
    params: GpeParams,
    *,
    record_every: int = 0,
    units: SolverUnits | None = None,
    min_prominence: float | None = None,
) -> SplitResult:
    """Evolve ``initial`` through the whole ramp and record the d, V_bar, ε, μ, φ timeline.

    μ in the timeline is measured from the lower well minimum so it compares
    directly with V_bar.
    """
    if not ramp.snapshots:
        raise ConfigurationError("Splitting sequence needs potential snapshots")
    if initial.time < ramp.start or initial.time > ramp.end:
        raise ConfigurationError("Initial state time lies outside the ramp")
    trajectory = evolve(initial, ramp, params, ramp.end - initial.time, units=units, record_every=record_every)
    timeline = tuple(
        timeline_point(state, ramp.snapshot_at(state.time), params, min_prominence)
        for state in trajectory.states
    )
    last = timeline[-1]
    logger.info(
        "Split to d = %.2f um, V_bar = %.3g J, mu = %.3g J, phi = %.1f deg",
        last.separation * 1e6, last.barrier, last.chemical_potential, math.degrees(last.phase),
    )
    return SplitResult(final=trajectory.final, trajectory=trajectory, timeline=timeline)


# ── Checkpoints ─────────────────────────────────────────────────────────────

_HEADER = np.dtype([("n", "<u8"), ("dx", "<f8"), ("atoms", "<f8"), ("time", "<f8")])


def checkpoint_bytes(psi: Wavefunction) -> bytes:
    """Little-endian header (n, dx, N, t) followed by interleaved re/im float64."""
    header = np.array([(psi.grid.n, psi.grid.dx, psi.atom_number, psi.time)], dtype=_HEADER)
    return header.tobytes() + psi.psi.astype("<c16").tobytes()


def from_checkpoint(data: bytes, species: AtomSpecies) -> Wavefunction:
    if len(data) < _HEADER.itemsize:
        raise ConfigurationError("Checkpoint shorter than its header")
    header = np.frombuffer(data, dtype=_HEADER, count=1)[0]
    n = int(header["n"])
    if len(data) != _HEADER.itemsize + 16 * n:
        raise ConfigurationError(f"Checkpoint holds {len(data)} bytes, expected {_HEADER.itemsize + 16 * n}")
    psi = np.frombuffer(data, dtype="<c16", count=n, offset=_HEADER.itemsize).astype(complex)
    return Wavefunction(
        psi=psi,
        grid=Grid1D(n=n, dx=float(header["dx"])),
        atom_number=float(header["atoms"]),
        species=species,
        time=float(header["time"]),
    )
