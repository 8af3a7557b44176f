"""Deterministic validation of raw scenario mappings (parsed TOML).

Blocking problems make ``ok`` false; unknown keys are reported as warnings
and do not block.
"""

from __future__ import annotations

from dataclasses import dataclass

from src.config import (
    CROSSING_TARGET_UM,
    GPE_GRID_POINTS,
    GPE_GRID_SPACING_UM,
    HISTOGRAM_BIN_DEG,
    NULL_DRAWS,
    PHASE_LOCK_THRESHOLD_DEG,
)
from src.dressed_potential import SPECIES
from src.errors import ConfigurationError
from src.units import parse_quantity


@dataclass
class ValidationIssue:
    code: str
    message: str


@dataclass
class ValidationReport:
    ok: bool
    issues: list[ValidationIssue]

    @property
    def errors(self) -> list[ValidationIssue]:
        return [i for i in self.issues if not i.code.startswith("unknown_")]

    def summary(self) -> str:
        return "; ".join(f"{i.code}: {i.message}" for i in self.issues)


@dataclass(frozen=True)
class Field:
    """One scenario key: a units dimension, or "int", "bool", "str"."""

    kind: str
    default: object = None
    required: bool = False
    literals: tuple[str, ...] = ()
    many: bool = False
    minimum: float | None = None
    positive: bool = False


CALIBRATE = "calibrate"

SCHEMA: dict[str, dict[str, Field]] = {
    "scenario": {
        "name": Field("str", required=True),
        "seed": Field("int", 0, minimum=0),
        "output_dir": Field("str"),
    },
    "species": {
        "preset": Field("str", "Rb87", literals=tuple(SPECIES)),
    },
    "chip": {
        "ioffe": Field("field", "1 G", positive=True),
        "bias": Field("field", "auto", literals=("auto",), many=True),
        "trap_x": Field("length", "0 um"),
        "trap_y": Field("length", "80 um"),
        "gravity": Field("bool", False),
        "gradient": Field("gradient", positive=True),
    },
    "rf": {
        "frequency_start": Field("frequency", "500 kHz", positive=True),
        "frequency_end": Field("frequency", positive=True),
        "amplitude_start": Field("current", "0 mA", minimum=0.0),
        "amplitude_end": Field("current", required=True, minimum=0.0),
        "points": Field("int", 12, minimum=1),
    },
    "map": {
        "center_x": Field("length"),
        "center_y": Field("length"),
        "half_width_x": Field("length", "26 um", positive=True),
        "half_width_y": Field("length", "4 um", positive=True),
        "nx": Field("int", 521, minimum=3),
        "ny": Field("int", 41, minimum=1),
        "min_prominence": Field("energy", positive=True),
    },
    "ramp": {
        "speed": Field("speed", "1.4 um/ms", positive=True),
        "onset": Field("time", "1 ms", positive=True),
    },
    "gpe": {
        "grid_points": Field("int", GPE_GRID_POINTS, minimum=4),
        "grid_spacing": Field("length", f"{GPE_GRID_SPACING_UM} um", positive=True),
        "dt": Field("time", "0.2 us", positive=True),
        "transverse_frequency": Field("frequency", "2.1 kHz", positive=True),
        "atom_number": Field("dimensionless", 3000, literals=(CALIBRATE,), positive=True),
        "crossing_target": Field("length", f"{CROSSING_TARGET_UM} um", positive=True),
        "record_every": Field("int", 0, minimum=0),
    },
    "tof": {
        "duration": Field("time", "14 ms", minimum=0.0),
        "interactions": Field("bool", True),
    },
    "imaging": {
        "pixel_size": Field("length", positive=True),
        "blur_fwhm": Field("length", "0 um", minimum=0.0),
        "shot_noise": Field("bool", False),
        "read_noise": Field("dimensionless", 0.0, minimum=0.0),
    },
    "imbalance": {
        "per_split": Field("force", "0 Hz/um"),
        "onset": Field("length", f"{CROSSING_TARGET_UM} um", minimum=0.0),
        "sensitivity": Field("stiffness", "0 Hz/um/um"),
    },
    "noise": {
        "position": Field("length", "0 um", literals=(CALIBRATE,), minimum=0.0),
        "current": Field("dimensionless", 0.0, minimum=0.0),
        "atom_number": Field("dimensionless", 0.0, minimum=0.0),
        "displacement_per_current": Field("length", "100 um", minimum=0.0),
        "target_spread": Field("dimensionless", 13.0, positive=True),
    },
    "ensemble": {
        "shots": Field("int", 1, minimum=1),
    },
    "analysis": {
        "stages": Field("length", (), many=True, positive=True),
        "gradients": Field("gradient", ("1.1 kG/cm", "1.9 kG/cm", "2.4 kG/cm"), many=True, positive=True),
        "imbalance_slopes": Field("force", ("1 kHz/um", "-1 kHz/um"), many=True),
        "lock_threshold": Field("dimensionless", PHASE_LOCK_THRESHOLD_DEG, positive=True),
        "bin_deg": Field("dimensionless", HISTOGRAM_BIN_DEG, positive=True),
        "null_draws": Field("int", NULL_DRAWS, minimum=100),
        "split_times": Field("time", (), many=True, positive=True),
    },
}

WIRE_FIELDS: dict[str, Field] = {
    "kind": Field("str", required=True, literals=("dc", "rf")),
    "x": Field("length", required=True),
    "y": Field("length", "0 um"),
    "width": Field("length", required=True, positive=True),
    "current": Field("current", required=True),
    "frequency": Field("frequency", positive=True),
}


def convert(spec: Field, value: object) -> object:
    """Raw value → SI float (or int/bool/str), raising ConfigurationError."""
    if spec.literals and value in spec.literals:
        return value
    if spec.kind == "bool":
        if not isinstance(value, bool):
            raise ConfigurationError(f"expected true/false, got {value!r}")
        return value
    if spec.kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"expected an integer, got {value!r}")
        number = value
    elif spec.kind == "str":
        if not isinstance(value, str):
            raise ConfigurationError(f"expected a string, got {value!r}")
        if spec.literals:
            raise ConfigurationError(f"expected one of {', '.join(spec.literals)}, got {value!r}")
        return value
    else:
        number = parse_quantity(value, spec.kind)
    if spec.minimum is not None and number < spec.minimum:
        raise ConfigurationError(f"must be >= {spec.minimum}, got {value!r}")
    if spec.positive and not number > 0:
        raise ConfigurationError(f"must be > 0, got {value!r}")
    return number


def value_of(spec: Field, raw: object) -> object:
    if spec.many and not (spec.literals and raw in spec.literals):
        if not isinstance(raw, (list, tuple)):
            raise ConfigurationError(f"expected a list, got {raw!r}")
        return tuple(convert(spec, v) for v in raw)
    return convert(spec, raw)


def _check_table(
    where: str, table: object, fields: dict[str, Field], issues: list[ValidationIssue], warnings: list[ValidationIssue]
) -> dict[str, object]:
    values: dict[str, object] = {}
    if not isinstance(table, dict):
        issues.append(ValidationIssue(code="bad_section", message=f"[{where}] must be a table"))
        return values
    for key in table:
        if key not in fields and not (where == "chip" and key == "wires"):
            warnings.append(ValidationIssue(code="unknown_key", message=f"{where}.{key} is not used"))
    for key, spec in fields.items():
        if key not in table:
            if spec.required:
                issues.append(ValidationIssue(code="missing_key", message=f"{where}.{key} is required"))
            continue
        try:
            values[key] = value_of(spec, table[key])
        except ConfigurationError as e:
            issues.append(ValidationIssue(code="bad_value", message=f"{where}.{key}: {e}"))
    return values


def validate_scenario(raw: dict) -> ValidationReport:
    """Check every section, key, unit and cross-field constraint of a scenario."""
    issues: list[ValidationIssue] = []
    warnings: list[ValidationIssue] = []
    if not isinstance(raw, dict):
        return ValidationReport(ok=False, issues=[ValidationIssue("bad_section", "Scenario must be a table")])

    for section in raw:
        if section not in SCHEMA:
            warnings.append(ValidationIssue(code="unknown_section", message=f"[{section}] is not used"))
    for section in ("scenario", "chip", "rf"):
        if section not in raw:
            issues.append(ValidationIssue(code="missing_section", message=f"[{section}] is required"))

    values = {
        section: _check_table(section, raw.get(section, {}), fields, issues, warnings)
        for section, fields in SCHEMA.items()
    }

    # 1) wires: at least one of each kind
    wires = raw.get("chip", {}).get("wires", []) if isinstance(raw.get("chip"), dict) else []
    if not isinstance(wires, list):
        issues.append(ValidationIssue(code="bad_section", message="[[chip.wires]] must be an array of tables"))
        wires = []
    kinds = []
    for k, wire in enumerate(wires):
        checked = _check_table(f"chip.wires[{k}]", wire, WIRE_FIELDS, issues, warnings)
        kinds.append(checked.get("kind"))
    if "dc" not in kinds:
        issues.append(ValidationIssue(code="no_dc_wire", message="Chip needs at least one d.c. wire"))
    if "rf" not in kinds:
        issues.append(ValidationIssue(code="no_rf_wire", message="Chip needs at least one RF wire"))

    # 2) bias: "auto" or a 3-vector
    bias = values["chip"].get("bias")
    if isinstance(bias, tuple) and len(bias) != 3:
        issues.append(ValidationIssue(code="bad_value", message="chip.bias must be \"auto\" or three field values"))

    # 3) solver grid: power of two, inside the potential map
    gpe, pmap = values["gpe"], values["map"]
    points = gpe.get("grid_points", SCHEMA["gpe"]["grid_points"].default)
    if isinstance(points, int) and points & (points - 1):
        issues.append(ValidationIssue(code="bad_value", message=f"gpe.grid_points must be a power of two, got {points}"))
    spacing = gpe.get("grid_spacing", parse_quantity(SCHEMA["gpe"]["grid_spacing"].default, "length"))
    half_x = pmap.get("half_width_x", parse_quantity(SCHEMA["map"]["half_width_x"].default, "length"))
    if isinstance(points, int) and 0.5 * points * spacing > half_x:
        issues.append(ValidationIssue(
            code="gpe_window",
            message=f"Solver window ±{0.5 * points * spacing * 1e6:.1f} um exceeds the map half-width {half_x * 1e6:.1f} um",
        ))

    # 4) imaging pixel needed when any imaging key is given
    if "imaging" in raw and "pixel_size" not in values["imaging"]:
        issues.append(ValidationIssue(code="missing_key", message="imaging.pixel_size is required with [imaging]"))

    # 5) histogram bins tile the circle
    bin_deg = values["analysis"].get("bin_deg")
    if isinstance(bin_deg, float) and abs(360.0 / bin_deg - round(360.0 / bin_deg)) > 1e-9:
        issues.append(ValidationIssue(code="bad_value", message=f"analysis.bin_deg {bin_deg} must divide 360"))

    ok = len(issues) == 0
    return ValidationReport(ok=ok, issues=issues + warnings)
