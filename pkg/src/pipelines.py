"""Parameter sweeps behind the published-style tables.

- ``2a``: well separation against RF setting for several trap gradients
- ``2c``: fringe spacing against RF setting, point-source law and GPE
- ``3``: phase histograms of seeded ensembles at each split stage
- ``4``: φ(t) through the barrier crossing for each imbalance slope
- ``4c``: phase spread and mean contrast against time since splitting started

Each pipeline returns a FigureTable; ``run_figure`` writes it as CSV, as
gnuplot columns and with a manifest.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from src.config import (
    PHASE_FIT_WINDOW_MS,
    SPACING_MIN_SEPARATION_UM,
    SPREAD_TIME_POINTS,
    THREADS,
    TIMELINE_POINTS,
)
from src.dressed_potential import splitting_curve
from src.errors import ConfigurationError, NumericalError, TwoModeRegimeError
from src.field_model import current_for_gradient
from src.fringe_analysis import (
    DensityProfile,
    PhaseEnsemble,
    circular_stats,
    fit_fringes,
    point_source_spacing,
    randomness_bounds,
)
from src.gpe_solver import PotentialCut, TimelinePoint, ground_state, time_of_flight
from src.ramp import RampSchedule
from src.runner import Preparation, prepare, run_scenario, split_shot, versions
from src.scenario import Scenario, ShotNoise
from src.store import Store
from src.two_mode import (
    PhaseLockingVerdict,
    TwoModeState,
    TwoModeTrajectory,
    barrier_crossing,
    evolve_two_mode,
    extract_two_mode,
    params_from_timeline,
    phase_locking_test,
    with_tunnel_coupling,
)

logger = logging.getLogger(__name__)

_NAN = float("nan")
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FigureTable:
    name: str
    header: tuple[str, ...]
    rows: list[tuple] = field(repr=False)
    summary_header: tuple[str, ...] = ()
    summary: list[tuple] = field(default_factory=list)

    def write(self, store: Store) -> None:
        store.write_csv(f"fig{self.name}.csv", self.header, self.rows)
        store.write_columns(f"fig{self.name}.dat", self.header, self.rows)
        if self.summary:
            store.write_csv(f"fig{self.name}_summary.csv", self.summary_header, self.summary)


# ── Splitting against RF ─────────────────────────────────────────────────────


def splitting_vs_rf(scenario: Scenario, *, threads: int = 1) -> FigureTable:
    """d along the RF ramp with the d.c. current rescaled to each gradient."""
    rows = []
    for gradient in scenario.analysis.gradients:
        layout = current_for_gradient(scenario.layout, scenario.trap, gradient)
        curve = splitting_curve(
            layout, scenario.species, scenario.ramp.nodes(), scenario.map,
            workers=threads, min_prominence=scenario.min_prominence,
        )
        rows.extend((gradient, rf.amplitude, rf.frequency / _TWO_PI, geo.separation) for rf, geo in curve.points)
        logger.info("Gradient %.2f kG/cm: d up to %.2f um", gradient / 10, curve.separations.max() * 1e6)
    return FigureTable(
        name="2a", header=("gradient_T_per_m", "rf_amplitude_A", "rf_frequency_Hz", "separation_m"), rows=rows,
    )


# ── Fringe spacing against RF ────────────────────────────────────────────────


def spacing_vs_rf(scenario: Scenario | None = None, *, threads: int = 1, prep: Preparation | None = None) -> FigureTable:
    """Point-source Δz = ht/(md) next to the fitted spacing of an interacting TOF.

    The GPE column comes from the ground state of each split ramp node; a
    node whose expansion cannot be fitted gets NaN.
    """
    prep = prep or prepare(scenario, workers=threads)
    s = prep.scenario
    params = prep.params()
    nodes = [k for k, d in enumerate(prep.separations) if d >= SPACING_MIN_SEPARATION_UM * 1e-6]
    if not nodes:
        raise ConfigurationError(f"No ramp node reaches d = {SPACING_MIN_SEPARATION_UM} um")

    def one(k: int) -> tuple:
        d = float(prep.separations[k])
        rf = prep.schedule.settings[k]
        point = point_source_spacing(d, s.gpe.tof, s.species)
        try:
            cut = PotentialCut(grid=s.gpe.grid, values=prep.schedule.snapshots[k])
            expanded = time_of_flight(ground_state(cut, params, s.species), s.gpe.tof, params, interactions=True)
            gpe = fit_fringes(DensityProfile.from_wavefunction(expanded)).spacing
        except NumericalError as e:
            logger.warning("No GPE fringe spacing at d = %.2f um: %s", d * 1e6, e)
            gpe = _NAN
        return rf.amplitude, rf.frequency / _TWO_PI, d, point, gpe, (gpe - point) / point

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(one, nodes))
    return FigureTable(
        name="2c",
        header=("rf_amplitude_A", "rf_frequency_Hz", "separation_m", "point_source_m", "gpe_m", "deviation"),
        rows=rows,
    )


# ── Phase statistics ─────────────────────────────────────────────────────────


def random_phase_control(prep: Preparation, n: int | None = None) -> PhaseEnsemble:
    """Ensemble of uniformly random phases drawn from the scenario's seed."""
    s = prep.scenario
    n = max(s.shots, 2) if n is None else n
    phases = s.noise.generator(0, stream=2).uniform(-math.pi, math.pi, size=n)
    return circular_stats(phases, bin_deg=s.analysis.bin_deg, null_draws=s.analysis.null_draws)


def _ensemble_row(label: str, separation: float, ens: PhaseEnsemble) -> tuple:
    r = ens.randomness
    return label, separation, ens.n, ens.spread_deg, ens.circular_std_deg, ens.resultant, r.z_score, r.verdict


def _stages(scenario: Scenario) -> tuple[float, ...]:
    stages = scenario.analysis.stages
    if len(stages) < 2:
        raise ConfigurationError(f"Phase statistics need at least 2 stages, got {len(stages)}")
    return stages


def phase_statistics(
    scenario: Scenario | None = None,
    *,
    threads: int = 1,
    out_dir: str | Path | None = None,
    prep: Preparation | None = None,
) -> FigureTable:
    """One seeded ensemble per split stage, plus a random-phase control.

    Needs at least two stages: one just past the barrier crossing and one
    further out, where the phases have spread.
    """
    stages = _stages(prep.scenario if prep is not None else scenario)
    prep = prep or prepare(scenario, workers=threads)
    histograms: list[tuple] = []
    summary: list[tuple] = []
    for k, stage in enumerate(stages):
        sub = None if out_dir is None else Path(out_dir) / f"stage_{k}"
        record = run_scenario(prep=prep, threads=threads, out_dir=sub, stage=stage)
        if record.ensemble is None:
            raise NumericalError(f"Stage {k} has fewer than two fitted shots")
        histograms.extend((stage, c, n, f) for c, n, f in record.ensemble.histogram_rows())
        summary.append(_ensemble_row(f"stage_{k}", stage, record.ensemble))
        logger.info(
            "Stage %d (d = %.2f um): spread %.1f deg, %s",
            k, stage * 1e6, record.ensemble.spread_deg, record.ensemble.randomness.verdict,
        )
    summary.append(_ensemble_row("random", _NAN, random_phase_control(prep)))
    return FigureTable(
        name="3",
        header=("separation_m", "offset_deg", "count", "fitted"),
        rows=histograms,
        summary_header=("ensemble", "separation_m", "n", "spread_deg", "circular_std_deg", "resultant", "z_score", "verdict"),
        summary=summary,
    )


def _split_times(prep: Preparation) -> np.ndarray:
    start = prep.split_start
    available = prep.schedule.end - start
    times = prep.scenario.analysis.split_times
    if not times:
        return np.linspace(0.0, available, SPREAD_TIME_POINTS + 1)[1:]
    late = [t for t in times if t > available * (1 + 1e-9)]
    if late:
        raise ConfigurationError(
            f"Split time {max(late) * 1e3:.3f} ms is past the end of the ramp ({available * 1e3:.3f} ms after splitting starts)"
        )
    return np.asarray(times, dtype=float)


def spread_vs_time(
    scenario: Scenario | None = None,
    *,
    threads: int = 1,
    out_dir: str | Path | None = None,
    prep: Preparation | None = None,
) -> FigureTable:
    """Phase spread and mean contrast of seeded ensembles against time since splitting started.

    Each row carries the circular std that would put the ensemble 1σ and 3σ
    above the uniform-phase null, so the spread can be read against them.
    """
    prep = prep or prepare(scenario, workers=threads)
    s = prep.scenario
    if s.shots < 2:
        raise ConfigurationError(f"Spread against time needs at least 2 shots, got {s.shots}")
    times = np.asarray(prep.schedule.times)
    rows: list[tuple] = []
    for k, split_time in enumerate(_split_times(prep)):
        end = min(prep.split_start + float(split_time), prep.schedule.end)
        sub = None if out_dir is None else Path(out_dir) / f"point_{k}"
        record = run_scenario(prep=prep, threads=threads, out_dir=sub, end_time=end)
        ens = record.ensemble
        if ens is None:
            raise NumericalError(f"Split time {split_time * 1e3:.3f} ms has fewer than two fitted shots")
        separation = float(np.interp(end, times, prep.separations))
        bound_1, bound_3 = randomness_bounds(ens.n, s.analysis.null_draws)
        contrast = _NAN if ens.mean_contrast is None else ens.mean_contrast
        rows.append((
            float(split_time), end, separation, ens.n, ens.circular_std_deg, ens.spread_deg, contrast,
            ens.randomness.z_score, bound_1, bound_3, ens.randomness.sigma_level,
        ))
        logger.info(
            "t = %.3f ms (d = %.2f um): circular std %.1f deg, contrast %.2f",
            split_time * 1e3, separation * 1e6, ens.circular_std_deg, contrast,
        )
    return FigureTable(
        name="4c",
        header=(
            "split_time_s", "end_time_s", "separation_m", "n", "circular_std_deg", "spread_deg",
            "mean_contrast", "z_score", "bound_1sigma_deg", "bound_3sigma_deg", "sigma_level",
        ),
        rows=rows,
    )


# ── Phase evolution through the crossing ─────────────────────────────────────


@dataclass(frozen=True)
class PhaseEvolution:
    slope: float  # J/m
    timeline: tuple[TimelinePoint, ...] = field(repr=False)
    verdict: PhaseLockingVerdict
    model: TwoModeTrajectory | None = field(default=None, repr=False)
    linear_rss: float = _NAN
    quadratic_rss: float = _NAN
    curvature: float = _NAN  # d²φ/dt², rad/s²

    @property
    def times(self) -> np.ndarray:
        return np.array([p.time for p in self.timeline])

    @property
    def phase(self) -> np.ndarray:
        """Unwrapped GPE phase."""
        return np.unwrap(np.array([p.phase for p in self.timeline]))


def _two_mode_model(
    prep: Preparation, ramp: RampSchedule, timeline: tuple[TimelinePoint, ...]
) -> TwoModeTrajectory | None:
    """Two-mode prediction started from the GPE state just after the crossing."""
    crossing = barrier_crossing(timeline)
    if crossing is None:
        return None
    after = [p for p in timeline if p.time >= crossing[0] and p.tunnel_coupling is not None]
    if not after:
        return None
    start = after[0]
    s = prep.scenario
    try:
        cut = PotentialCut(grid=s.gpe.grid, values=ramp.snapshot_at(start.time))
        interaction = extract_two_mode(cut, s.species, prep.g1d, prep.atom_number).interaction
        source = params_from_timeline(timeline, interaction, prep.atom_number)
    except TwoModeRegimeError as e:
        logger.warning("No two-mode model after the crossing: %s", e)
        return None
    state = TwoModeState(z=start.population_imbalance, phi=start.phase)
    return evolve_two_mode(
        state, source, dt=10 * s.gpe.dt, duration=timeline[-1].time - start.time, start_time=start.time,
    )


def polynomial_residuals(times: np.ndarray, phase: np.ndarray, t_start: float | None) -> tuple[float, float, float]:
    """Linear and quadratic residual sums of φ(t) over the window after ``t_start``, and d²φ/dt²."""
    if t_start is None:
        return _NAN, _NAN, _NAN
    window = (times >= t_start) & (times <= t_start + PHASE_FIT_WINDOW_MS * 1e-3)
    if np.count_nonzero(window) < 4:
        return _NAN, _NAN, _NAN
    t, y = times[window] - t_start, phase[window]
    linear = np.polyfit(t, y, 1)
    quadratic = np.polyfit(t, y, 2)

    def rss(coeffs: np.ndarray) -> float:
        return float(np.sum((np.polyval(coeffs, t) - y) ** 2))

    return rss(linear), rss(quadratic), 2.0 * float(quadratic[0])


def phase_evolution(prep: Preparation, slope: float, *, record_every: int | None = None) -> PhaseEvolution:
    """Noise-free split with ε growing at ``slope`` per unit of extra separation."""
    s = prep.scenario
    quiet = replace(s.noise, position=0.0, current=0.0, atom_number=0.0)
    prep = replace(prep, scenario=replace(s, imbalance=replace(s.imbalance, per_split=slope), noise=quiet))
    if record_every is None:
        steps = math.ceil(prep.schedule.duration / s.gpe.dt)
        record_every = max(1, steps // TIMELINE_POINTS)

    ramp, split = split_shot(prep, ShotNoise(offset=0.0, atom_scale=1.0), record_every=record_every)
    timeline = with_tunnel_coupling(split.timeline, ramp, s.gpe.grid, s.species)
    model = _two_mode_model(prep, ramp, timeline)
    verdict = phase_locking_test(timeline, s.analysis.lock_threshold_deg, model=model)
    evolution = PhaseEvolution(slope=slope, timeline=timeline, verdict=verdict, model=model)
    linear, quadratic, curvature = polynomial_residuals(evolution.times, evolution.phase, verdict.crossing_time)
    return replace(evolution, linear_rss=linear, quadratic_rss=quadratic, curvature=curvature)


def phase_vs_time(
    scenario: Scenario | None = None,
    *,
    threads: int = 1,
    prep: Preparation | None = None,
    record_every: int | None = None,
) -> FigureTable:
    prep = prep or prepare(scenario, workers=threads)
    slopes = prep.scenario.analysis.imbalance_slopes
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        evolutions = list(pool.map(lambda eta: phase_evolution(prep, eta, record_every=record_every), slopes))

    rows, summary = [], []
    for ev in evolutions:
        model = ev.model.phase_at(ev.times) if ev.model is not None else np.full(len(ev.timeline), _NAN)
        before = ev.times < ev.model.times[0] if ev.model is not None else np.ones(len(ev.timeline), dtype=bool)
        model = np.where(before, _NAN, model)
        for p, phi, m in zip(ev.timeline, ev.phase, model):
            rows.append((ev.slope, p.time, phi, float(m), p.separation, p.barrier, p.chemical_potential))
        v = ev.verdict
        summary.append((
            ev.slope,
            _NAN if v.crossing_separation is None else v.crossing_separation,
            _NAN if v.crossing_time is None else v.crossing_time,
            int(v.locked_before),
            math.degrees(v.max_phase_before),
            _NAN if v.max_model_deviation is None else math.degrees(v.max_model_deviation),
            ev.linear_rss,
            ev.quadratic_rss,
            ev.curvature,
        ))
    return FigureTable(
        name="4",
        header=("slope_J_per_m", "time_s", "phase_rad", "two_mode_phase_rad", "separation_m", "barrier_J", "mu_J"),
        rows=rows,
        summary_header=(
            "slope_J_per_m", "crossing_separation_m", "crossing_time_s", "locked", "max_phase_before_deg",
            "max_model_deviation_deg", "linear_rss", "quadratic_rss", "curvature_rad_per_s2",
        ),
        summary=summary,
    )


# ── Dispatch ─────────────────────────────────────────────────────────────────

FIGURES = ("2a", "2c", "3", "4", "4c")


def run_figure(
    name: str, scenario: Scenario, *, threads: int = THREADS, out_dir: str | Path | None = None
) -> FigureTable:
    if name not in FIGURES:
        raise ConfigurationError(f"Unknown figure {name!r} (expected one of {', '.join(FIGURES)})")
    if name == "2a":
        table = splitting_vs_rf(scenario, threads=threads)
    elif name == "2c":
        table = spacing_vs_rf(scenario, threads=threads)
    elif name == "3":
        table = phase_statistics(scenario, threads=threads, out_dir=out_dir)
    elif name == "4":
        table = phase_vs_time(scenario, threads=threads)
    else:
        table = spread_vs_time(scenario, threads=threads, out_dir=out_dir)

    if out_dir is not None:
        store = Store(out_dir)
        table.write(store)
        store.write_json("manifest.json", {
            "figure": name,
            "scenario": scenario.name,
            "digest": scenario.digest,
            "seed": scenario.seed,
            "versions": versions(),
            "files": store.digests,
        })
    logger.info("Figure %s: %d rows", name, len(table.rows))
    return table
