"""Scenario orchestration: shared preparation, seeded shots, ensembles, run outputs.

A run is deterministic in (scenario, seed): every shot draws its noise from
a counter-based stream keyed on the shot index, so the thread count never
changes a result.
"""

from __future__ import annotations

import logging
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy
from scipy import constants, integrate, optimize

from src.config import SHOT_FAILURE_LIMIT, THREADS
from src.dressed_potential import DoubleWellGeometry, SplittingCurve, locate_wells, map_potential, splitting_curve
from src.errors import CalibrationError, ConfigurationError, NumericalError, SimulationError
from src.fringe_analysis import DensityProfile, FringeFit, PhaseEnsemble, circular_stats, fit_fringes, synth_image
from src.gpe_solver import (
    GpeParams,
    PotentialCut,
    SplitResult,
    TimelinePoint,
    Wavefunction,
    ground_state,
    split_sequence,
    time_of_flight,
)
from src.ramp import RampSchedule, ramp_for_speed
from src.scenario import NoiseModel, Scenario, ShotNoise
from src.store import Store

logger = logging.getLogger(__name__)

SHOT_HEADER = (
    "shot", "status", "offset_m", "atom_number", "separation_m",
    "spacing_m", "phase_rad", "contrast", "residual", "gpe_phase_rad",
)
SUMMARY_HEADER = (
    "n", "mean_phase_deg", "spread_deg", "circular_std_deg", "resultant", "z_score", "rayleigh_p", "verdict",
)
TIMELINE_HEADER = ("time_s", "separation_m", "barrier_J", "imbalance_J", "mu_J", "phase_rad", "z")

_NAN = float("nan")


# ── Preparation ──────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Preparation:
    """Everything the shots of one scenario share."""

    scenario: Scenario
    curve: SplittingCurve
    # nodes of the speed ramp, each with a symmetrized solver-grid snapshot
    schedule: RampSchedule
    separations: np.ndarray = field(repr=False)
    atom_number: float
    g1d: float

    def params(self, scale: float = 1.0) -> GpeParams:
        return GpeParams(g1d=self.g1d, atom_number=self.atom_number * scale, dt=self.scenario.gpe.dt)

    def time_at_separation(self, separation: float) -> float:
        """Ramp time at which the wells are ``separation`` apart."""
        split = self.separations > 0
        seps = self.separations[split]
        times = np.asarray(self.schedule.times)[split]
        if separation > seps[-1] * (1 + 1e-9):
            raise ConfigurationError(
                f"Ramp reaches d = {seps[-1] * 1e6:.2f} um, short of {separation * 1e6:.2f} um"
            )
        return float(np.interp(separation, seps, times))

    @property
    def split_start(self) -> float:
        """Time of the last single-well node, where the wells start to separate."""
        split = np.flatnonzero(self.separations > 0)
        if split.size == 0:
            raise ConfigurationError("The ramp never splits the trap")
        return float(self.schedule.times[max(0, split[0] - 1)])

    def cut_at(self, t: float) -> PotentialCut:
        return PotentialCut(grid=self.scenario.gpe.grid, values=self.schedule.snapshot_at(t))

    def shot_ramp(self, offset: float = 0.0, end_time: float | None = None) -> RampSchedule:
        """Snapshots tilted so the right well sits ε(d, offset) above the left one."""
        model = self.scenario.imbalance
        grid = self.scenario.gpe.grid
        snapshots = []
        for values, d in zip(self.schedule.snapshots, self.separations):
            slope = model.imbalance(d, offset) / d if d > 0 else 0.0
            snapshots.append(PotentialCut(grid=grid, values=values).tilted(slope).values)
        ramp = self.schedule.with_snapshots(snapshots)
        return ramp if end_time is None else ramp.until(end_time)


def _snapshots(scenario: Scenario, schedule: RampSchedule, geometry: dict, workers: int) -> list[np.ndarray]:
    def one(rf) -> np.ndarray:
        pmap = map_potential(scenario.layout, scenario.species, rf, scenario.map)
        return PotentialCut.from_map(pmap, geometry[rf], scenario.gpe.grid).symmetrized().values

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(one, schedule.settings))


def prepare(scenario: Scenario, workers: int = 1) -> Preparation:
    """Splitting curve, speed ramp with solver snapshots, calibrated N and noise."""
    curve = splitting_curve(
        scenario.layout, scenario.species, scenario.ramp.nodes(), scenario.map,
        workers=workers, min_prominence=scenario.min_prominence,
    )
    geometry: dict = dict(curve.points)
    schedule = ramp_for_speed(curve, scenario.ramp.speed, scenario.ramp.onset)
    schedule = schedule.with_snapshots(_snapshots(scenario, schedule, geometry, workers))
    separations = np.array([geometry[rf].separation for rf in schedule.settings])

    nominal = scenario.gpe.atom_number
    prep = Preparation(
        scenario=scenario,
        curve=curve,
        schedule=schedule,
        separations=separations,
        atom_number=1.0 if nominal is None else nominal,
        g1d=scenario.gpe.g1d(scenario.species),
    )
    if nominal is None:
        prep = replace(prep, atom_number=calibrate_atom_number(prep))
    if scenario.noise.position is None:
        prep = replace(prep, scenario=replace(scenario, noise=calibrate_noise(prep)))
    logger.info(
        "Prepared %r: %d ramp nodes over %.2f ms, d up to %.2f um, N = %.0f",
        scenario.name, len(schedule.times), schedule.duration * 1e3, separations.max() * 1e6, prep.atom_number,
    )
    return prep


def _crossing_geometry(cut: PotentialCut, prep: Preparation) -> DoubleWellGeometry:
    geo = locate_wells(cut.as_map(prep.scenario.species))
    if not geo.is_split:
        raise CalibrationError("Potential at the crossing target is not a double well")
    return geo


def calibrate_atom_number(
    prep: Preparation, target: float | None = None, bounds: tuple[float, float] = (10.0, 1e5)
) -> float:
    """N for which the ground-state μ equals V_bar at the target separation."""
    gpe = prep.scenario.gpe
    target = gpe.crossing_target if target is None else target
    cut = prep.cut_at(prep.time_at_separation(target))
    geo = _crossing_geometry(cut, prep)
    last: dict[str, Wavefunction] = {}

    def gap(log_n: float) -> float:
        params = GpeParams(g1d=prep.g1d, atom_number=math.exp(log_n), dt=gpe.dt)
        psi = ground_state(cut, params, prep.scenario.species, initial=last.get("psi"))
        last["psi"] = psi
        return psi.chemical_potential - geo.lowest - geo.barrier

    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo * g_hi > 0:
        raise CalibrationError(
            f"mu = V_bar at d = {target * 1e6:.2f} um is not reached for N in [{bounds[0]:.0f}, {bounds[1]:.0f}]"
        )
    atom_number = math.exp(optimize.brentq(gap, lo, hi, xtol=1e-4))
    logger.info("Calibrated N = %.1f for mu = V_bar at d = %.2f um", atom_number, target * 1e6)
    return atom_number


def calibrate_noise(prep: Preparation) -> NoiseModel:
    """Trap-position jitter giving the target phase spread at the first stage.

    An offset δ adds δ·sensitivity·max(0, d − d_onset) to ε, so the phase
    spread is σ_δ·|sensitivity|·∫max(0, d − d_onset)dt/ħ.
    """
    s = prep.scenario
    model = s.imbalance
    if model.sensitivity == 0:
        raise CalibrationError("Noise calibration needs a nonzero imbalance sensitivity")
    end = prep.time_at_separation(s.analysis.stages[0]) if s.analysis.stages else prep.schedule.end
    t = np.linspace(prep.schedule.start, end, 2001)
    d = np.interp(t, prep.schedule.times, prep.separations)
    exposure = float(integrate.trapezoid(np.clip(d - model.onset, 0.0, None), t))
    if not exposure > 0:
        raise CalibrationError("Wells never pass the imbalance onset before the first stage")

    total = math.radians(s.noise.target_spread) * constants.hbar / (abs(model.sensitivity) * exposure)
    from_current = s.noise.displacement_per_current * s.noise.current
    if from_current >= total:
        logger.warning("Current jitter alone exceeds the %.0f deg target spread", s.noise.target_spread)
    position = math.sqrt(max(0.0, total**2 - from_current**2))
    logger.info(
        "Calibrated position jitter %.3f um (total offset %.3f um) for a %.0f deg spread",
        position * 1e6, total * 1e6, s.noise.target_spread,
    )
    return replace(s.noise, position=position)


# ── Shots ────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class ShotResult:
    shot: int
    noise: ShotNoise
    atom_number: float
    separation: float | None = None
    gpe_phase: float | None = None
    fit: FringeFit | None = None
    timeline: tuple[TimelinePoint, ...] = field(default=(), repr=False)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def row(self) -> tuple:
        fit = self.fit
        return (
            self.shot,
            "ok" if self.ok else "failed",
            self.noise.offset,
            self.atom_number,
            _NAN if self.separation is None else self.separation,
            fit.spacing if fit else _NAN,
            fit.phase if fit else _NAN,
            fit.contrast if fit else _NAN,
            fit.residual if fit else _NAN,
            _NAN if self.gpe_phase is None else self.gpe_phase,
        )


def initial_state(prep: Preparation, ramp: RampSchedule | None = None, scale: float = 1.0) -> Wavefunction:
    """Ground state in the first snapshot of ``ramp``, placed at its start time."""
    ramp = prep.schedule if ramp is None else ramp
    cut = PotentialCut(grid=prep.scenario.gpe.grid, values=ramp.snapshots[0])
    psi = ground_state(cut, prep.params(scale), prep.scenario.species)
    return replace(psi, time=ramp.start)


def split_shot(
    prep: Preparation,
    draw: ShotNoise,
    *,
    end_time: float | None = None,
    record_every: int | None = None,
) -> tuple[RampSchedule, SplitResult]:
    """Ground state and splitting sequence for one noise draw, with the ramp used."""
    params = prep.params(draw.atom_scale)
    ramp = prep.shot_ramp(draw.offset, end_time)
    every = prep.scenario.gpe.record_every if record_every is None else record_every
    return ramp, split_sequence(initial_state(prep, ramp, draw.atom_scale), ramp, params, record_every=every)


def run_shot(
    prep: Preparation,
    shot: int,
    *,
    end_time: float | None = None,
    record_every: int | None = None,
    noise: ShotNoise | None = None,
) -> ShotResult:
    """Ground state → split → TOF → (imaging) → fringe fit for one noise draw."""
    s = prep.scenario
    draw = s.noise.draw(shot) if noise is None else noise
    params = prep.params(draw.atom_scale)
    logger.debug("Shot %d: offset %.3f um, N = %.1f", shot, draw.offset * 1e6, params.atom_number)

    _, split = split_shot(prep, draw, end_time=end_time, record_every=record_every)
    expanded = time_of_flight(split.final, s.gpe.tof, params, interactions=s.gpe.tof_interactions)
    profile = DensityProfile.from_wavefunction(expanded)
    if s.analysis.imaging is not None:
        seed = int(s.noise.generator(shot, stream=1).integers(2**32))
        profile = synth_image(profile, replace(s.analysis.imaging, seed=seed))
    fit = fit_fringes(profile)

    last = split.timeline[-1]
    logger.info(
        "Shot %d: d = %.2f um, phi = %.1f deg (GPE %.1f deg), C = %.2f",
        shot, last.separation * 1e6, math.degrees(fit.phase), math.degrees(last.phase), fit.contrast,
    )
    return ShotResult(
        shot=shot,
        noise=draw,
        atom_number=params.atom_number,
        separation=last.separation,
        gpe_phase=last.phase,
        fit=fit,
        timeline=split.timeline,
    )


def _attempt(prep: Preparation, shot: int, end_time: float | None) -> ShotResult:
    try:
        return run_shot(prep, shot, end_time=end_time)
    except SimulationError as e:
        logger.warning("Shot %d failed: %s: %s", shot, type(e).__name__, e)
        draw = prep.scenario.noise.draw(shot)
        return ShotResult(
            shot=shot, noise=draw, atom_number=prep.atom_number * draw.atom_scale, error=f"{type(e).__name__}: {e}"
        )


# ── Ensembles ────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class RunRecord:
    digest: str
    seed: int
    shots: tuple[ShotResult, ...]
    ensemble: PhaseEnsemble | None
    files: dict[str, str]
    wall_clock: float  # s, not persisted

    @property
    def failed(self) -> int:
        return sum(1 for r in self.shots if not r.ok)


def timeline_rows(timeline: tuple[TimelinePoint, ...]) -> list[tuple[float, ...]]:
    return [
        (p.time, p.separation, p.barrier, p.imbalance, p.chemical_potential, p.phase, p.population_imbalance)
        for p in timeline
    ]


def ensemble_of(prep: Preparation, shots: tuple[ShotResult, ...]) -> PhaseEnsemble | None:
    good = [r for r in shots if r.ok]
    if len(good) < 2:
        return None
    analysis = prep.scenario.analysis
    return circular_stats(
        [r.fit.phase for r in good],
        [r.fit.contrast for r in good],
        bin_deg=analysis.bin_deg,
        null_draws=analysis.null_draws,
    )


def versions() -> dict[str, str]:
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def write_run(
    store: Store,
    prep: Preparation,
    shots: tuple[ShotResult, ...],
    ensemble: PhaseEnsemble | None,
    stage: float | None = None,
    end_time: float | None = None,
) -> dict[str, str]:
    """Per-shot CSV, ensemble tables, plot columns, then the manifest."""
    s = prep.scenario
    store.write_csv("shots.csv", SHOT_HEADER, [r.row() for r in shots])
    store.write_columns(
        "phases.dat", ("shot", "phase_deg", "gpe_phase_deg"),
        [(r.shot, math.degrees(r.fit.phase), _NAN if r.gpe_phase is None else math.degrees(r.gpe_phase)) for r in shots if r.ok],
    )
    if ensemble is not None:
        store.write_csv("summary.csv", SUMMARY_HEADER, [ensemble.summary_row()])
        store.write_columns("histogram.dat", ("offset_deg", "count", "fitted"), ensemble.histogram_rows())
    if shots and shots[0].timeline:
        store.write_columns("timeline.dat", TIMELINE_HEADER, timeline_rows(shots[0].timeline))

    manifest = {
        "scenario": s.name,
        "digest": s.digest,
        "seed": s.seed,
        "stage_m": stage,
        "end_time_s": end_time,
        "atom_number": prep.atom_number,
        "noise": {
            "position_m": s.noise.position,
            "current": s.noise.current,
            "atom_number": s.noise.atom_number,
            "displacement_per_current_m": s.noise.displacement_per_current,
        },
        "versions": versions(),
        "shots": [{"shot": r.shot, "status": "ok" if r.ok else "failed", "error": r.error} for r in shots],
        "files": store.digests,
    }
    store.write_json("manifest.json", manifest)
    return store.digests


def run_scenario(
    scenario: Scenario | None = None,
    *,
    threads: int = THREADS,
    out_dir: str | Path | None = None,
    stage: float | None = None,
    end_time: float | None = None,
    prep: Preparation | None = None,
) -> RunRecord:
    """Run every shot of ``scenario`` and write its outputs to ``out_dir``.

    ``stage`` stops the ramp once the wells are that far apart and takes
    precedence over an explicit ``end_time``. Failed shots
    are recorded; more than SHOT_FAILURE_LIMIT of them raises NumericalError
    after the outputs are written.
    """
    started = time.perf_counter()
    if prep is None:
        if scenario is None:
            raise ConfigurationError("run_scenario needs a scenario or a preparation")
        prep = prepare(scenario, workers=threads)
    s = prep.scenario
    if stage is not None:
        end_time = prep.time_at_separation(stage)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        shots = tuple(pool.map(lambda k: _attempt(prep, k, end_time), range(s.shots)))
    ensemble = ensemble_of(prep, shots)
    files = write_run(Store(out_dir), prep, shots, ensemble, stage, end_time) if out_dir is not None else {}

    record = RunRecord(
        digest=s.digest, seed=s.seed, shots=shots, ensemble=ensemble, files=files,
        wall_clock=time.perf_counter() - started,
    )
    logger.info(
        "Scenario %r: %d/%d shots ok in %.1f s", s.name, len(shots) - record.failed, len(shots), record.wall_clock,
    )
    if record.failed > SHOT_FAILURE_LIMIT * len(shots):
        raise NumericalError(f"{record.failed} of {len(shots)} shots failed")
    return record
