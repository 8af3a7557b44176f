"""Scenario files: TOML → validated, frozen, SI-valued dataclasses."""

from __future__ import annotations

import hashlib
import json
import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from src.dressed_potential import SPECIES, AtomSpecies, GridSpec, RfSetting
from src.errors import ConfigurationError
from src.field_model import ChipLayout, StripWire, Vec3, WireKind, bias_for_trap, current_for_gradient
from src.fringe_analysis import ImagingSpec
from src.gpe_solver import Grid1D, interaction_strength
from src.ramp import RampSchedule, linear_ramp
from src.units import angular
from src.validator import CALIBRATE, SCHEMA, WIRE_FIELDS, validate_scenario, value_of

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RampSpec:
    start: RfSetting
    end: RfSetting
    points: int
    speed: float  # m/s
    onset: float  # s

    def nodes(self) -> RampSchedule:
        """RF nodes for the splitting curve; their times are placeholders."""
        return linear_ramp(self.start, self.end, float(max(self.points - 1, 1)), self.points)


@dataclass(frozen=True)
class GpeSpec:
    grid: Grid1D
    dt: float
    omega_perp: float
    atom_number: float | None  # None: calibrate to the crossing target
    crossing_target: float
    record_every: int
    tof: float
    tof_interactions: bool

    def g1d(self, species: AtomSpecies) -> float:
        return interaction_strength(species, self.omega_perp)


@dataclass(frozen=True)
class ImbalanceModel:
    """ε = η·max(0, d − d_onset) with η = per_split + offset·sensitivity."""

    per_split: float  # J/m
    onset: float  # m
    sensitivity: float  # J/m²

    def slope(self, offset: float = 0.0) -> float:
        return self.per_split + offset * self.sensitivity

    def imbalance(self, separation: float, offset: float = 0.0) -> float:
        return self.slope(offset) * max(0.0, separation - self.onset)


@dataclass(frozen=True)
class ShotNoise:
    offset: float  # m
    atom_scale: float


@dataclass(frozen=True)
class NoiseModel:
    position: float | None  # m; None: calibrate to target_spread
    current: float  # relative
    atom_number: float  # relative
    displacement_per_current: float  # m per unit relative current
    target_spread: float = 13.0  # deg
    seed: int = 0

    def __post_init__(self):
        sigmas = (self.current, self.atom_number, self.displacement_per_current)
        if any(s < 0 for s in sigmas) or (self.position is not None and self.position < 0):
            raise ConfigurationError("Noise amplitudes must be >= 0")

    @property
    def offset_sigma(self) -> float:
        position = self.position or 0.0
        return math.hypot(position, self.displacement_per_current * self.current)

    def generator(self, shot: int, stream: int = 0) -> np.random.Generator:
        """Counter-based stream for one shot, independent of execution order."""
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, shot, stream])))

    def draw(self, shot: int) -> ShotNoise:
        rng = self.generator(shot)
        position, current, atoms = rng.standard_normal(3)
        offset = (self.position or 0.0) * position + self.displacement_per_current * self.current * current
        scale = max(1.0 + self.atom_number * atoms, 0.05)
        return ShotNoise(offset=float(offset), atom_scale=float(scale))


@dataclass(frozen=True)
class AnalysisSpec:
    imaging: ImagingSpec | None
    stages: tuple[float, ...]
    gradients: tuple[float, ...]
    imbalance_slopes: tuple[float, ...]
    lock_threshold_deg: float
    bin_deg: float
    null_draws: int
    split_times: tuple[float, ...] = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    species: AtomSpecies
    layout: ChipLayout
    trap: Vec3
    map: GridSpec
    min_prominence: float | None
    ramp: RampSpec
    gpe: GpeSpec
    imbalance: ImbalanceModel
    noise: NoiseModel
    shots: int
    analysis: AnalysisSpec
    output_dir: str | None = None
    digest: str = ""

    def with_seed(self, seed: int) -> Scenario:
        return replace(self, seed=seed, noise=replace(self.noise, seed=seed))


def _section(raw: dict, name: str) -> dict[str, object]:
    """Converted values of one section, defaults filled in."""
    table = raw.get(name, {})
    values = {}
    for key, spec in SCHEMA[name].items():
        source = table.get(key, spec.default)
        values[key] = None if source is None else value_of(spec, source)
    return values


def _wire(raw: dict, rf_frequency: float) -> StripWire:
    w = {key: (value_of(spec, raw[key]) if key in raw else (None if spec.default is None else value_of(spec, spec.default)))
         for key, spec in WIRE_FIELDS.items()}
    if w["kind"] == "rf":
        return StripWire(x=w["x"], y=w["y"], width=w["width"], current=w["current"],
                         kind=WireKind.RF, frequency=angular(w["frequency"]) if w["frequency"] else rf_frequency)
    return StripWire(x=w["x"], y=w["y"], width=w["width"], current=w["current"])


def _layout(raw: dict, chip: dict, rf_frequency: float) -> tuple[ChipLayout, Vec3]:
    trap = Vec3(chip["trap_x"], chip["trap_y"], 0.0)
    wires = tuple(_wire(w, rf_frequency) for w in raw["chip"].get("wires", []))
    layout = ChipLayout(wires=wires, ioffe=chip["ioffe"], gravity=chip["gravity"])
    if chip["bias"] == "auto":
        layout = replace(layout, bias=bias_for_trap(layout, trap))
    else:
        layout = replace(layout, bias=Vec3(*chip["bias"]))
    if chip["gradient"] is not None:
        layout = current_for_gradient(layout, trap, chip["gradient"])
    return layout, trap


def _digest(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, default=str).encode("utf-8")).hexdigest()


def parse_scenario(raw: dict) -> Scenario:
    """Validate a raw mapping and build the Scenario; raises ConfigurationError."""
    report = validate_scenario(raw)
    if not report.ok:
        raise ConfigurationError(f"Invalid scenario: {'; '.join(i.message for i in report.errors)}")
    for issue in report.issues:
        if issue not in report.errors:
            logger.warning("Scenario: %s", issue.message)

    head = _section(raw, "scenario")
    chip = _section(raw, "chip")
    rf = _section(raw, "rf")
    pmap = _section(raw, "map")
    ramp = _section(raw, "ramp")
    gpe = _section(raw, "gpe")
    tof = _section(raw, "tof")
    imbalance = _section(raw, "imbalance")
    noise = _section(raw, "noise")
    analysis = _section(raw, "analysis")

    layout, trap = _layout(raw, chip, angular(rf["frequency_start"]))
    imaging = None
    if "imaging" in raw:
        img = _section(raw, "imaging")
        imaging = ImagingSpec(
            pixel_size=img["pixel_size"], blur_fwhm=img["blur_fwhm"],
            shot_noise=img["shot_noise"], read_noise=img["read_noise"],
        )

    scenario = Scenario(
        name=head["name"],
        seed=head["seed"],
        species=SPECIES[_section(raw, "species")["preset"]],
        layout=layout,
        trap=trap,
        map=GridSpec(
            center_x=trap.x if pmap["center_x"] is None else pmap["center_x"],
            center_y=trap.y if pmap["center_y"] is None else pmap["center_y"],
            half_width_x=pmap["half_width_x"],
            half_width_y=pmap["half_width_y"],
            nx=pmap["nx"],
            ny=pmap["ny"],
        ),
        min_prominence=pmap["min_prominence"],
        ramp=RampSpec(
            start=RfSetting(angular(rf["frequency_start"]), rf["amplitude_start"]),
            end=RfSetting(angular(rf["frequency_end"] or rf["frequency_start"]), rf["amplitude_end"]),
            points=rf["points"],
            speed=ramp["speed"],
            onset=ramp["onset"],
        ),
        gpe=GpeSpec(
            grid=Grid1D(n=gpe["grid_points"], dx=gpe["grid_spacing"]),
            dt=gpe["dt"],
            omega_perp=2.0 * math.pi * gpe["transverse_frequency"],
            atom_number=None if gpe["atom_number"] == CALIBRATE else gpe["atom_number"],
            crossing_target=gpe["crossing_target"],
            record_every=gpe["record_every"],
            tof=tof["duration"],
            tof_interactions=tof["interactions"],
        ),
        imbalance=ImbalanceModel(
            per_split=imbalance["per_split"], onset=imbalance["onset"], sensitivity=imbalance["sensitivity"],
        ),
        noise=NoiseModel(
            position=None if noise["position"] == CALIBRATE else noise["position"],
            current=noise["current"],
            atom_number=noise["atom_number"],
            displacement_per_current=noise["displacement_per_current"],
            target_spread=noise["target_spread"],
            seed=head["seed"],
        ),
        shots=_section(raw, "ensemble")["shots"],
        analysis=AnalysisSpec(
            imaging=imaging,
            stages=analysis["stages"],
            gradients=analysis["gradients"],
            imbalance_slopes=analysis["imbalance_slopes"],
            lock_threshold_deg=analysis["lock_threshold"],
            bin_deg=analysis["bin_deg"],
            null_draws=analysis["null_draws"],
            split_times=analysis["split_times"],
        ),
        output_dir=head["output_dir"],
        digest=_digest(raw),
    )
    logger.info("Scenario %r loaded (%d wires, %d shots)", scenario.name, len(layout.wires), scenario.shots)
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        with path.open("rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigurationError(f"Scenario file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"{path}: {e}") from e
    return parse_scenario(raw)
