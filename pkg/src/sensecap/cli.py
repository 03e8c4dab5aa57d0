"""Command-line front end: solve, sweep, regions, simulate, validate, serve."""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import math
import sys
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any

import numpy as np

from sensecap import __version__
from sensecap.bounds import classify_region, no_sensing_alpha_star
from sensecap.model import DerivedLimits, SensingModel, SolverError, primary_rate
from sensecap.scenario import LOG_LEVEL, SEED, SWEEP_VARIABLES, Scenario, load_scenario
from sensecap.schemes import SCHEME_REGISTRY, SchemeResult, get_scheme
from sensecap.sense_opt import PowerProfile
from sensecap.simulator import (
    SimConfig,
    empirical_rate,
    empirical_state_prob,
    primary_protection_check,
    trace_rows,
)
from sensecap.validate import LEVELS, run_validation

_log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_ALARM = 4

PROFILE_COLUMNS = ("sensed_state", "slot", "rho_n", "rho_s")
REGION_COLUMNS = ("inr_gap", "inr2", "region", "alpha_star")


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def fmt(value: Any) -> str:
    """CSV cell: floats with 12 significant digits, everything else as str."""
    if isinstance(value, float | np.floating):
        return format(float(value), ".12g")
    return str(value)


def to_json(payload: dict[str, Any]) -> str:
    """Deterministic JSON; NaN and infinities become null and are listed under 'warnings'."""
    warnings: list[str] = list(payload.get("warnings", []))

    def clean(obj: Any, path: str) -> Any:
        if isinstance(obj, dict):
            return {str(k): clean(v, f"{path}.{k}" if path else str(k)) for k, v in obj.items()}
        if isinstance(obj, list | tuple):
            return [clean(v, f"{path}[{i}]") for i, v in enumerate(obj)]
        if isinstance(obj, np.ndarray):
            return clean(obj.tolist(), path)
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, float | np.floating):
            if not math.isfinite(obj):
                warnings.append(f"{path} is undefined ({float(obj)})")
                return None
            return float(obj)
        return obj

    body = clean({k: v for k, v in payload.items() if k != "warnings"}, "")
    if warnings:
        body["warnings"] = warnings
    return json.dumps(body, sort_keys=True, indent=2) + "\n"


@contextlib.contextmanager
def _output(path: str | None) -> Iterator[IO[str]]:
    if path is None:
        yield sys.stdout
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8", newline="") as fh:
        yield fh


def write_csv(path: str | None, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with _output(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_profile(path: str | None, profile: PowerProfile) -> None:
    write_csv(path, PROFILE_COLUMNS, profile.rows())


def _write_text(path: str | None, text: str) -> None:
    with _output(path) as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_solve(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    scheme = get_scheme(args.scheme)
    out = Path(args.out) if args.out else None
    code = EXIT_OK
    try:
        result = scheme.solve(scenario)
    except SolverError as exc:
        _log.error("solver did not converge: %s", exc)
        profile = exc.profile if isinstance(exc.profile, PowerProfile) else None
        rate = exc.rate if exc.rate is not None else math.nan
        result = SchemeResult(scheme.name, rate, profile, details={"error": str(exc)})
        code = EXIT_SOLVER

    payload = result.summary()
    text = to_json(payload)
    if out is None:
        sys.stdout.write(text)
        if result.profile is not None:
            write_profile(None, result.profile)
    else:
        _write_text(str(out / "report.json"), text)
        if result.profile is not None:
            write_profile(str(out / "profile.csv"), result.profile)
        print(f"{scheme.name}: rate {fmt(result.rate)} bits/slot -> {out}")
    return code


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: a scenario variable, the values it takes, and the schemes to run."""

    variable: str
    values: tuple[float, ...]
    schemes: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.variable not in SWEEP_VARIABLES:
            valid = ", ".join(SWEEP_VARIABLES)
            raise ValueError(f"Unknown sweep variable '{self.variable}'. Valid options: {valid}")
        if not self.values:
            raise ValueError("SweepSpec.values must not be empty")
        if not self.schemes:
            raise ValueError("--schemes must name at least one scheme")
        for name in self.schemes:
            get_scheme(name)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> SweepSpec:
        schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
        return cls(args.variable, tuple(sweep_values(args)), schemes)


def sweep_values(args: argparse.Namespace) -> list[float]:
    if args.values:
        return [float(v) for v in args.values.split(",")]
    if args.start is None or args.stop is None:
        raise ValueError("sweep needs --values or both --start and --stop")
    if args.start > args.stop:
        raise ValueError(f"--start ({args.start}) must not exceed --stop ({args.stop})")
    if args.points < 2:
        raise ValueError(f"--points must be >= 2, got {args.points}")
    if args.spacing == "log":
        if args.start <= 0:
            raise ValueError("--spacing log needs --start > 0")
        return np.geomspace(args.start, args.stop, args.points).tolist()
    return np.linspace(args.start, args.stop, args.points).tolist()


def run_sweep(scenario: Scenario, sweep: SweepSpec) -> list[list[Any]]:
    """One row per value: variable, primary rate R1, then one rate per scheme (NaN on failure)."""
    solvers = [get_scheme(name) for name in sweep.schemes]
    rows: list[list[Any]] = []
    for value in sweep.values:
        point = scenario.with_updates(sweep.variable, value)
        row: list[Any] = [
            int(round(value)) if sweep.variable == "T" else float(value),
            primary_rate(point.channel, point.effective_beta),
        ]
        for scheme in solvers:
            try:
                row.append(scheme.solve(point).rate)
            except (SolverError, ValueError, ZeroDivisionError) as exc:
                _log.warning("%s failed at %s=%s: %s", scheme.name, sweep.variable, value, exc)
                row.append(math.nan)
        rows.append(row)
    return rows


def cmd_sweep(args: argparse.Namespace) -> int:
    sweep = SweepSpec.from_args(args)
    scenario = load_scenario(args.scenario)
    rows = run_sweep(scenario, sweep)
    header = [sweep.variable, "primary_rate", *[f"rate_{s}" for s in sweep.schemes]]
    write_csv(args.out, header, rows)
    return EXIT_OK


def region_rows(
    snr1: float, snr2: float, gaps: Iterable[float], inr2s: Iterable[float]
) -> Iterator[tuple[float, float, str, float]]:
    """Region label and superposition fraction on an INR_gap x INR2 grid, INR_C unbounded."""
    for gap in gaps:
        for inr2 in inr2s:
            limits = DerivedLimits(
                inr2=float(inr2), inr_c=math.inf, sic_c=inr2 * (gap + 1.0) / snr1 - 1.0
            )
            region = classify_region(limits, snr1, snr2, gap)
            alpha = no_sensing_alpha_star(limits, snr1, snr2, gap).alpha_star
            yield float(gap), float(inr2), str(region), alpha


def cmd_regions(args: argparse.Namespace) -> int:
    if args.gap_min <= 0:
        raise ValueError(f"--gap-min must be > 0, got {args.gap_min}")
    if args.snr1 <= 0:
        raise ValueError(f"--snr1 must be > 0, got {args.snr1}")
    gaps = np.linspace(args.gap_min, args.gap_max, args.gap_points)
    inr2s = np.linspace(args.inr2_min, args.inr2_max, args.inr2_points)
    write_csv(args.out, REGION_COLUMNS, region_rows(args.snr1, args.snr2, gaps, inr2s))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    scheme = get_scheme(args.scheme)
    if not scheme.has_profile:
        raise ValueError(f"scheme '{scheme.name}' has no sensed-state profile to simulate")
    config = SimConfig(args.blocks, args.seed)
    result = scheme.solve(scenario)
    assert result.profile is not None
    sensing = scenario.sensing if scheme.name == "noisy" else SensingModel()

    estimate = empirical_rate(result.profile, scenario.channel, scenario.traffic, sensing, config)
    states = empirical_state_prob(scenario.traffic, config, sensing)
    protection = primary_protection_check(result.profile, scenario.channel)
    inside = estimate.contains(result.rate)

    payload: dict[str, Any] = {
        "scheme": scheme.name,
        "analytic_rate": result.rate,
        "estimate": estimate.to_dict(),
        "ci_contains_analytic": inside,
        "state_prob": states.beta_hat,
        "state_blocks": list(states.blocks),
        "state_max_sigma": states.max_sigma(scenario.traffic),
        "protection": {
            "passed": protection.passed,
            "max_inr1": protection.max_inr1,
            "violations": [list(v) for v in protection.violations],
        },
    }
    _write_text(args.out, to_json(payload))
    if args.trace:
        write_csv(
            args.trace,
            ("block", "s0", "tau", "sensed"),
            trace_rows(scenario.traffic, sensing, config),
        )
    if not inside:
        print(
            "statistical alarm: the analytic rate lies outside the 95% confidence interval "
            "(expected in about 5% of seeds; not necessarily a bug)",
            file=sys.stderr,
        )
        return EXIT_ALARM
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    report = run_validation(args.level, args.seed)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_serve(args: argparse.Namespace) -> int:
    from sensecap.server import main as serve

    serve()
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sensecap",
        description="Power profiles and rates for a cognitive secondary user "
        "sharing a channel with a sporadic primary.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level", default=LOG_LEVEL, help="logging level (default: %(default)s)"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    schemes = sorted(SCHEME_REGISTRY)

    p = sub.add_parser("solve", help="run one scheme on a scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--scheme", default="perfect", help=f"one of {', '.join(schemes)}")
    p.add_argument("--out", help="output directory for report.json and profile.csv")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="sweep one parameter and emit a CSV of rates")
    p.add_argument("--scenario", required=True)
    p.add_argument("--variable", required=True, choices=SWEEP_VARIABLES)
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--spacing", choices=("lin", "log"), default="lin")
    p.add_argument("--values", help="comma-separated explicit values (overrides the range)")
    p.add_argument("--schemes", default=",".join(("genie", "perfect", "noisy", "nosense")))
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("regions", help="no-sensing operating regions on an INR_gap x INR2 grid")
    p.add_argument("--snr1", type=float, default=7.0)
    p.add_argument("--snr2", type=float, default=7.0)
    p.add_argument("--gap-min", type=float, default=0.1)
    p.add_argument("--gap-max", type=float, default=10.0)
    p.add_argument("--gap-points", type=int, default=100)
    p.add_argument("--inr2-min", type=float, default=0.0)
    p.add_argument("--inr2-max", type=float, default=30.0)
    p.add_argument("--inr2-points", type=int, default=100)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("simulate", help="Monte Carlo check of a sense-and-send scheme")
    p.add_argument("--scenario", required=True)
    p.add_argument("--scheme", default="perfect", choices=("perfect", "noisy"))
    p.add_argument("--blocks", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=SEED)
    p.add_argument("--out", help="summary JSON path (default: stdout)")
    p.add_argument("--trace", help="optional CSV of (block, s0, tau, sensed)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="run the oracle and invariant suite")
    p.add_argument("--level", choices=sorted(LEVELS), default="quick")
    p.add_argument("--seed", type=int, default=SEED)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="start the MCP tool server on stdio")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = str(args.log_level).upper()
    if level not in logging.getLevelNamesMapping():
        parser.error(f"unknown log level '{args.log_level}'")
    logging.basicConfig(
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
