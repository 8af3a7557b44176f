"""Command-line entry point: ``python -m src.main <subcommand> [flags]``.

Exit status 0 on success, 1 on invalid input, 2 on numerical failure.
"""

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

from dotenv import load_dotenv

# .env first, then env.local
load_dotenv()
load_dotenv("env.local")

from src.config import LOG_LEVEL, OUTPUT_DIR, THREADS
from src.dressed_potential import RB87, locate_wells, map_potential, splitting_curve
from src.errors import NumericalError, SimulationError, ValidationError
from src.fringe_analysis import DensityProfile, fit_fringes, infer_separation
from src.gpe_solver import checkpoint_bytes, time_of_flight
from src.pipelines import FIGURES, run_figure
from src.runner import TIMELINE_HEADER, initial_state, prepare, run_scenario, split_shot, timeline_rows
from src.scenario import Scenario, load_scenario
from src.store import Store, read_csv
from src.units import parse_quantity

# ── Logging ─────────────────────────────────────────────────────────

logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2

DEFAULT_SCENARIO = Path(__file__).resolve().parent / "sim" / "scenarios" / "nominal.toml"


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the invalid-input status instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="Scenario TOML file")
    common.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    common.add_argument("--out", type=Path, default=None, help="Output directory")
    common.add_argument("--threads", type=int, default=THREADS, help="Worker threads")

    ap = _Parser(prog="src.main", description="RF-dressed double-well splitting simulator")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("potential", parents=[common], help="Potential map and wells at the final RF setting")
    sub.add_parser("groundstate", parents=[common], help="Ground state in the unsplit trap")
    sub.add_parser("split", parents=[common], help="Splitting sequence timeline for shot 0")
    sub.add_parser("tof", parents=[common], help="Split shot 0 and expand it")
    fit = sub.add_parser("fit", parents=[common], help="Fit fringes of a density profile")
    fit.add_argument("--profile", type=Path, required=True, help="CSV with position_m, density columns")
    fit.add_argument("--tof", default=None, help='Expansion time, e.g. "14 ms", to infer the separation')
    sub.add_parser("ensemble", parents=[common], help="Run all shots of the scenario")
    figure = sub.add_parser("figure", parents=[common], help="Compute a figure table")
    figure.add_argument("name", choices=FIGURES)
    return ap


def _scenario(args) -> Scenario:
    scenario = load_scenario(args.config or DEFAULT_SCENARIO)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    return scenario


def _out_dir(args, scenario: Scenario | None = None) -> Path:
    if args.out is not None:
        return args.out
    if scenario is not None and scenario.output_dir:
        return Path(scenario.output_dir)
    return Path(OUTPUT_DIR)


# ── Subcommands ─────────────────────────────────────────────────────


def cmd_potential(args) -> None:
    scenario = _scenario(args)
    store = Store(_out_dir(args, scenario))
    rf = scenario.ramp.end
    pmap = map_potential(scenario.layout, scenario.species, rf, scenario.map)
    geo = locate_wells(pmap, scenario.min_prominence)
    store.write_csv("potential.csv", ("x_m", "y_m", "V_J"), pmap.csv_rows())
    store.write_json("wells.json", {
        "rf_frequency_hz": rf.frequency / (2 * math.pi),
        "rf_amplitude_a": rf.amplitude,
        **dataclasses.asdict(geo),
    })

    curve = splitting_curve(
        scenario.layout, scenario.species, scenario.ramp.nodes(), scenario.map,
        workers=args.threads, min_prominence=scenario.min_prominence,
    )
    store.write_csv(
        "splitting.csv",
        ("rf_frequency_hz", "rf_amplitude_a", "separation_m", "barrier_J"),
        [(s.frequency / (2 * math.pi), s.amplitude, g.separation, g.barrier) for s, g in curve.points],
    )
    print(f"d = {geo.separation * 1e6:.3f} um, barrier = {geo.barrier:.4e} J")


def cmd_groundstate(args) -> None:
    scenario = _scenario(args)
    store = Store(_out_dir(args, scenario))
    prep = prepare(scenario, workers=args.threads)
    psi = initial_state(prep)
    store.write_csv("groundstate.csv", ("x_m", "density_per_m"), psi.density_rows())
    store.write_bytes("groundstate.bin", checkpoint_bytes(psi))
    print(f"N = {psi.atom_number:.1f}, mu = {psi.chemical_potential:.4e} J")


def cmd_split(args) -> None:
    scenario = _scenario(args)
    store = Store(_out_dir(args, scenario))
    prep = prepare(scenario, workers=args.threads)
    _, result = split_shot(prep, scenario.noise.draw(0))
    store.write_columns("timeline.dat", TIMELINE_HEADER, timeline_rows(result.timeline))
    store.write_csv("split.csv", ("x_m", "density_per_m"), result.final.density_rows())
    last = result.timeline[-1]
    print(f"d = {last.separation * 1e6:.3f} um, phi = {math.degrees(last.phase):.2f} deg, z = {last.population_imbalance:.4f}")


def cmd_tof(args) -> None:
    scenario = _scenario(args)
    store = Store(_out_dir(args, scenario))
    prep = prepare(scenario, workers=args.threads)
    draw = scenario.noise.draw(0)
    _, result = split_shot(prep, draw)
    expanded = time_of_flight(
        result.final, scenario.gpe.tof, prep.params(draw.atom_scale), scenario.gpe.tof_interactions
    )
    store.write_csv("tof.csv", ("position_m", "density_per_m"), DensityProfile.from_wavefunction(expanded).rows())
    print(f"Expanded for {scenario.gpe.tof * 1e3:.2f} ms on {expanded.grid.n} points")


def cmd_fit(args) -> None:
    _, rows = read_csv(args.profile)
    fit = fit_fringes(DensityProfile.from_rows(rows))
    result = dataclasses.asdict(fit)
    if args.tof is not None:
        species = _scenario(args).species if args.config else RB87
        estimate = infer_separation(fit, parse_quantity(args.tof, "time"), species)
        result["separation_m"] = estimate.separation
        result["interaction_biased"] = estimate.interaction_biased
    Store(_out_dir(args)).write_json("fit.json", result)
    print(
        f"spacing = {fit.spacing * 1e6:.3f} um, phase = {fit.phase:.4f} rad, "
        f"contrast = {fit.contrast:.3f}, residual = {fit.residual:.2e}"
    )


def cmd_ensemble(args) -> None:
    scenario = _scenario(args)
    record = run_scenario(scenario, threads=args.threads, out_dir=_out_dir(args, scenario))
    print(f"{len(record.shots) - record.failed} of {len(record.shots)} shots ok")


def cmd_figure(args) -> None:
    scenario = _scenario(args)
    table = run_figure(args.name, scenario, threads=args.threads, out_dir=_out_dir(args, scenario))
    print(f"Figure {args.name}: {len(table.rows)} rows")


COMMANDS = {
    "potential": cmd_potential,
    "groundstate": cmd_groundstate,
    "split": cmd_split,
    "tof": cmd_tof,
    "fit": cmd_fit,
    "ensemble": cmd_ensemble,
    "figure": cmd_figure,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        logger.error("--threads must be >= 1, got %d", args.threads)
        return EXIT_INVALID
    try:
        COMMANDS[args.command](args)
    except ValidationError as e:
        logger.error("Invalid input: %s", e)
        return EXIT_INVALID
    except NumericalError as e:
        logger.error("Numerical failure: %s", e, exc_info=logger.isEnabledFor(logging.DEBUG))
        return EXIT_NUMERICAL
    except SimulationError as e:
        logger.error("Simulation failed: %s", e)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
