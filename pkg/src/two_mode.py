"""Two-mode (bosonic Josephson junction) model of the split condensate.

Conventions: z = (N_R − N_L)/N, φ = φ_L − φ_R, ε = E_R − E_L. With these the
mean-field equations read

    ħ dz/dt = −2J √(1 − z²) sin φ
    ħ dφ/dt = ε + U N z + 2J z / √(1 − z²) cos φ

which derive from H(z, φ) = U N z²/2 + ε z − 2J √(1 − z²) cos φ.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import constants
from scipy.linalg import eigh_tridiagonal

from src.config import PHASE_LOCK_THRESHOLD_DEG, TWO_MODE_MAX_POINTS
from src.dressed_potential import AtomSpecies, locate_wells
from src.errors import ConfigurationError, TwoModeRegimeError
from src.gpe_solver import Grid1D, PotentialCut, TimelinePoint
from src.ramp import RampSchedule

logger = logging.getLogger(__name__)

HBAR = constants.hbar
_Z_LIMIT = 1.0 - 1e-12


@dataclass(frozen=True)
class TwoModeParams:
    tunnel_coupling: float  # J, joules
    interaction: float  # U, joules
    imbalance: float  # ε at t = 0, joules
    atom_number: float
    imbalance_rate: float = 0.0  # dε/dt, J/s

    def __post_init__(self):
        values = (self.tunnel_coupling, self.interaction, self.imbalance, self.atom_number, self.imbalance_rate)
        if not all(math.isfinite(v) for v in values):
            raise ConfigurationError("Two-mode parameters must be finite")
        if self.tunnel_coupling < 0:
            raise ConfigurationError(f"Tunnel coupling must be >= 0, got {self.tunnel_coupling}")
        if self.atom_number < 2:
            raise ConfigurationError(f"Two-mode model needs N >= 2, got {self.atom_number}")

    def imbalance_at(self, t: float) -> float:
        return self.imbalance + self.imbalance_rate * t


@dataclass(frozen=True)
class TwoModeState:
    z: float
    phi: float

    def __post_init__(self):
        if not -1.0 <= self.z <= 1.0:
            raise ConfigurationError(f"Population imbalance must lie in [-1, 1], got {self.z}")
        object.__setattr__(self, "phi", wrap_phase(self.phi))


@dataclass(frozen=True)
class TwoModeTrajectory:
    times: np.ndarray
    z: np.ndarray
    unwrapped_phase: np.ndarray
    clamped: bool = False

    @property
    def phase(self) -> np.ndarray:
        return np.angle(np.exp(1j * self.unwrapped_phase))

    @property
    def final(self) -> TwoModeState:
        return TwoModeState(z=float(self.z[-1]), phi=float(self.unwrapped_phase[-1]))

    def phase_at(self, t) -> np.ndarray:
        return np.interp(t, self.times, self.unwrapped_phase)

    def csv_rows(self) -> list[tuple[float, float, float]]:
        return [(float(t), float(z), float(p)) for t, z, p in zip(self.times, self.z, self.phase)]


@dataclass(frozen=True)
class PhaseLockingVerdict:
    crossed: bool
    crossing_time: float | None
    crossing_separation: float | None
    locked_before: bool
    max_phase_before: float  # rad
    max_phase_after: float  # rad
    grows_after: bool
    max_model_deviation: float | None = None  # rad

    @property
    def verdict(self) -> str:
        if not self.crossed:
            return "no crossing"
        return "locked" if self.locked_before else "not locked"


def wrap_phase(phi: float) -> float:
    """Map to (−π, π]."""
    wrapped = math.remainder(phi, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


# ── Extraction from a potential ─────────────────────────────────────────────


@dataclass(frozen=True)
class LocalizedModes:
    x: np.ndarray
    left: np.ndarray
    right: np.ndarray
    energies: tuple[float, float]
    tunnel_coupling: float
    split_at: float


def localized_modes(cut: PotentialCut, species: AtomSpecies, max_points: int = TWO_MODE_MAX_POINTS) -> LocalizedModes:
    """Left/right modes from the two lowest single-particle eigenstates.

    The Hamiltonian is a three-point finite-difference matrix on at most
    ``max_points`` samples of the cut. The localized pair is the rotation of
    the two eigenstates that diagonalizes the left-side projector; J is
    |⟨L|H|R⟩|, which equals (E₁ − E₀)/2 for a symmetric well.
    """
    geo = locate_wells(cut.as_map(species))
    if not geo.is_split:
        raise TwoModeRegimeError("Potential has a single minimum; no two-mode structure")

    stride = max(1, math.ceil(cut.grid.n / max_points))
    x = cut.grid.x[::stride]
    v = cut.values[::stride]
    dx = cut.grid.dx * stride
    kinetic = HBAR**2 / (2.0 * species.mass * dx**2)
    energies, vectors = eigh_tridiagonal(
        2.0 * kinetic + v, np.full(v.size - 1, -kinetic), select="i", select_range=(0, 1)
    )
    vectors = vectors / math.sqrt(dx)

    split_at = geo.saddle[0] if geo.saddle else geo.midpoint[0]
    left_side = x < split_at
    projector = np.array([
        [np.sum(vectors[left_side, i] * vectors[left_side, j]) * dx for j in range(2)] for i in range(2)
    ])
    weights, rotation = np.linalg.eigh(projector)
    right = vectors @ rotation[:, 0]
    left = vectors @ rotation[:, 1]
    if weights[1] < 0.5 or weights[0] > 0.5:
        raise TwoModeRegimeError(
            f"Lowest modes do not localize (left weights {weights[1]:.3f} / {weights[0]:.3f})"
        )
    coupling = abs(float(np.sum(rotation[:, 1] * rotation[:, 0] * energies)))
    return LocalizedModes(
        x=x, left=left, right=right, energies=(float(energies[0]), float(energies[1])),
        tunnel_coupling=coupling, split_at=split_at,
    )


def extract_two_mode(
    cut: PotentialCut,
    species: AtomSpecies,
    g1d: float,
    atom_number: float,
    imbalance_rate: float = 0.0,
) -> TwoModeParams:
    """Map a double-well cut onto J, U, ε."""
    modes = localized_modes(cut, species)
    dx = float(modes.x[1] - modes.x[0])
    u_left = g1d * float(np.sum(modes.left**4) * dx)
    u_right = g1d * float(np.sum(modes.right**4) * dx)
    geo = locate_wells(cut.as_map(species))
    params = TwoModeParams(
        tunnel_coupling=modes.tunnel_coupling,
        interaction=0.5 * (u_left + u_right),
        imbalance=geo.imbalance,
        atom_number=atom_number,
        imbalance_rate=imbalance_rate,
    )
    logger.debug(
        "Two-mode: J/h = %.4g Hz, U/h = %.4g Hz, eps/h = %.4g Hz",
        params.tunnel_coupling / (2 * math.pi * HBAR), params.interaction / (2 * math.pi * HBAR),
        params.imbalance / (2 * math.pi * HBAR),
    )
    return params


def with_tunnel_coupling(
    timeline: tuple[TimelinePoint, ...], ramp: RampSchedule, cut_grid: Grid1D, species: AtomSpecies
) -> tuple[TimelinePoint, ...]:
    """Fill J into every split timeline point; single-well points keep None."""
    points = []
    for point in timeline:
        coupling = None
        if point.separation > 0:
            cut = PotentialCut(grid=cut_grid, values=ramp.snapshot_at(point.time))
            try:
                coupling = localized_modes(cut, species).tunnel_coupling
            except TwoModeRegimeError as err:
                logger.debug("No tunnel coupling at t=%.3e s: %s", point.time, err)
        points.append(replace(point, tunnel_coupling=coupling))
    return tuple(points)


# ── Dynamics ────────────────────────────────────────────────────────────────


def two_mode_energy(state: TwoModeState, params: TwoModeParams, t: float = 0.0) -> float:
    z = state.z
    return (
        0.5 * params.interaction * params.atom_number * z * z
        + params.imbalance_at(t) * z
        - 2.0 * params.tunnel_coupling * math.sqrt(max(0.0, 1.0 - z * z)) * math.cos(state.phi)
    )


def plasma_frequency(params: TwoModeParams) -> float:
    """Small-oscillation angular frequency √(2J(2J + UN))/ħ at ε = 0."""
    j = params.tunnel_coupling
    return math.sqrt(2.0 * j * (2.0 * j + params.interaction * params.atom_number)) / HBAR


def _rates(z: float, phi: float, p: TwoModeParams, t: float) -> tuple[float, float]:
    root = math.sqrt(max(1e-24, 1.0 - z * z))
    j2 = 2.0 * p.tunnel_coupling
    dz = -j2 * root * math.sin(phi) / HBAR
    dphi = (p.imbalance_at(t) + p.interaction * p.atom_number * z + j2 * z / root * math.cos(phi)) / HBAR
    return dz, dphi


ParamSource = TwoModeParams | Callable[[float], TwoModeParams]


def evolve_two_mode(
    state: TwoModeState,
    params: ParamSource,
    dt: float,
    duration: float,
    start_time: float = 0.0,
) -> TwoModeTrajectory:
    """Fixed-step RK4 from ``start_time`` for ``duration`` seconds.

    ``params`` is either constant or a function of absolute time. States
    that reach |z| = 1 are clamped and the trajectory is flagged.
    """
    if not dt > 0:
        raise ConfigurationError(f"Time step must be > 0, got {dt}")
    if duration < 0:
        raise ConfigurationError(f"Duration must be >= 0, got {duration}")
    at = params if callable(params) else (lambda t, p=params: p)

    steps = max(1, math.ceil(duration / dt - 1e-9)) if duration > 0 else 0
    h = duration / steps if steps else 0.0
    times = start_time + h * np.arange(steps + 1)
    z = np.empty(steps + 1)
    phi = np.empty(steps + 1)
    z[0], phi[0] = state.z, state.phi
    clamped = False

    for n in range(steps):
        t = times[n]
        zn, pn = z[n], phi[n]
        p0, p_mid, p1 = at(t), at(t + 0.5 * h), at(t + h)
        k1 = _rates(zn, pn, p0, t)
        k2 = _rates(zn + 0.5 * h * k1[0], pn + 0.5 * h * k1[1], p_mid, t + 0.5 * h)
        k3 = _rates(zn + 0.5 * h * k2[0], pn + 0.5 * h * k2[1], p_mid, t + 0.5 * h)
        k4 = _rates(zn + h * k3[0], pn + h * k3[1], p1, t + h)
        z_next = zn + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        phi[n + 1] = pn + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if abs(z_next) > _Z_LIMIT:
            if not clamped:
                logger.warning("Two-mode state reached |z| = 1 at t=%.3e s; clamping", times[n + 1])
            clamped = True
            z_next = math.copysign(_Z_LIMIT, z_next)
        z[n + 1] = z_next

    return TwoModeTrajectory(times=times, z=z, unwrapped_phase=phi, clamped=clamped)


def params_from_timeline(
    timeline: tuple[TimelinePoint, ...], interaction: float, atom_number: float
) -> Callable[[float], TwoModeParams]:
    """J(t) and ε(t) interpolated linearly from a split timeline."""
    points = [p for p in timeline if p.tunnel_coupling is not None]
    if not points:
        raise TwoModeRegimeError("Timeline has no split points with a tunnel coupling")
    times = np.array([p.time for p in points])
    couplings = np.array([p.tunnel_coupling for p in points])
    imbalances = np.array([p.imbalance for p in points])

    def at(t: float) -> TwoModeParams:
        return TwoModeParams(
            tunnel_coupling=float(np.interp(t, times, couplings)),
            interaction=interaction,
            imbalance=float(np.interp(t, times, imbalances)),
            atom_number=atom_number,
        )

    return at


# ── Phase locking ───────────────────────────────────────────────────────────


def barrier_crossing(timeline: tuple[TimelinePoint, ...]) -> tuple[float, float] | None:
    """(time, separation) where V_bar first reaches μ, linearly interpolated."""
    gap = np.array([p.chemical_potential - p.barrier for p in timeline])
    below = np.flatnonzero(gap <= 0)
    if below.size == 0:
        return None
    k = int(below[0])
    if k == 0:
        return timeline[0].time, timeline[0].separation
    a, b = timeline[k - 1], timeline[k]
    w = gap[k - 1] / (gap[k - 1] - gap[k])
    return a.time + w * (b.time - a.time), a.separation + w * (b.separation - a.separation)


def phase_locking_test(
    timeline: tuple[TimelinePoint, ...],
    threshold_deg: float = PHASE_LOCK_THRESHOLD_DEG,
    model: TwoModeTrajectory | None = None,
) -> PhaseLockingVerdict:
    """Locate μ = V_bar and check |φ| stays below the threshold until then.

    With a two-mode ``model`` the largest deviation from the GPE phase after
    the crossing is reported as well.
    """
    if not timeline:
        raise ConfigurationError("Empty timeline")
    threshold = math.radians(threshold_deg)
    times = np.array([p.time for p in timeline])
    phase = np.unwrap(np.array([p.phase for p in timeline]))
    crossing = barrier_crossing(timeline)
    if crossing is None:
        largest = float(np.max(np.abs(phase)))
        logger.info("Barrier never exceeds mu; max |phi| = %.1f deg", math.degrees(largest))
        return PhaseLockingVerdict(
            crossed=False, crossing_time=None, crossing_separation=None,
            locked_before=largest < threshold, max_phase_before=largest, max_phase_after=0.0,
            grows_after=False,
        )

    t_star, d_star = crossing
    before = times < t_star
    after = ~before
    max_before = float(np.max(np.abs(phase[before]))) if before.any() else 0.0
    max_after = float(np.max(np.abs(phase[after]))) if after.any() else 0.0

    deviation = None
    if model is not None and after.any():
        deviation = float(np.max(np.abs(model.phase_at(times[after]) - phase[after])))

    verdict = PhaseLockingVerdict(
        crossed=True,
        crossing_time=float(t_star),
        crossing_separation=float(d_star),
        locked_before=max_before < threshold,
        max_phase_before=max_before,
        max_phase_after=max_after,
        grows_after=max_after > max(max_before, threshold),
        max_model_deviation=deviation,
    )
    logger.info(
        "Barrier crossing at d* = %.2f um: %s (max |phi| before %.2f deg, after %.1f deg)",
        d_star * 1e6, verdict.verdict, math.degrees(max_before), math.degrees(max_after),
    )
    return verdict
