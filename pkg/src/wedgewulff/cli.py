"""Command-line front end: ``wedgewulff run`` and ``wedgewulff list``."""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, fixtures
from .curvature import anisotropic_shape, write_curvature_csv
from .errors import ConfigError
from .scenario import SUITES, load_scenario_file, scenario_from_dict
from .suites import run_suite
from .verify import DEFAULT_TOLERANCES, Report, error_record

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

CSV_COLUMNS = [
    "scenario", "suite", "check", "level", "lhs", "rhs",
    "residual", "relative", "rate", "verdict", "expected",
]


@dataclass
class RunConfig:
    scenario: str
    suites: list = field(default_factory=list)
    out: str = "wedgewulff-out"
    levels: tuple = ()
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    strict: bool = False

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "suites": list(self.suites),
            "levels": list(self.levels),
            "seed": self.seed,
            "tolerances": dict(sorted(self.tolerances.items())),
            "strict": self.strict,
        }


def _parse_suites(values):
    suites = []
    for value in values or []:
        for name in value.split(","):
            name = name.strip()
            if not name:
                continue
            if name not in SUITES:
                raise ConfigError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}", "/suites")
            if name not in suites:
                suites.append(name)
    return suites


def _parse_levels(value):
    if value is None:
        return ()
    try:
        levels = tuple(int(v) for v in value.split(","))
    except ValueError:
        raise ConfigError(f"levels must be comma-separated integers, got {value!r}", "/levels") from None
    if len(levels) < 2:
        raise ConfigError("at least two refinement levels are needed for a convergence verdict", "/levels")
    if any(b <= a for a, b in zip(levels, levels[1:])) or levels[0] < 0:
        raise ConfigError("levels must be non-negative and strictly increasing", "/levels")
    return levels


def _parse_tolerances(pairs):
    out = {}
    for pair in pairs or []:
        key, sep, val = pair.partition("=")
        if not sep:
            raise ConfigError(f"expected KEY=VAL, got {pair!r}", "/tolerances")
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown tolerance {key!r}", f"/tolerances/{key}")
        try:
            value = float(val)
        except ValueError:
            raise ConfigError(f"tolerance {key} is not a number: {val!r}", f"/tolerances/{key}") from None
        if not value > 0:
            raise ConfigError(f"tolerance {key} must be positive", f"/tolerances/{key}")
        out[key] = value
    return out


def _load(path_or_name):
    """A scenario file, or the name of a built-in fixture."""
    if os.path.exists(path_or_name):
        return load_scenario_file(path_or_name)
    stem = Path(path_or_name).stem
    if stem in fixtures.names() and os.path.sep not in path_or_name:
        data = fixtures.fixture(stem)
        return data, scenario_from_dict(data)
    raise ConfigError(f"no scenario file or built-in fixture named {path_or_name!r}")


# -- output -----------------------------------------------------------------------------


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_rows(report: Report):
    for rec in sorted(report.records, key=lambda r: r.name):
        d = rec.to_dict()
        rows = d["history"] or [d]
        for h in rows:
            yield [
                report.scenario, report.suite, rec.name, h.get("level", d["level"]),
                h.get("lhs"), h.get("rhs"), h.get("residual"), h.get("relative"),
                d["rate"], d["verdict"], d["expected"],
            ]


def write_outputs(out, config, data, reports, passed):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    body = {
        "config": config.to_dict(),
        "scenario": data,
        "reports": [r.to_dict() for r in sorted(reports, key=lambda r: r.suite)],
        "passed": passed,
    }
    # the header (the only run-dependent part) comes first; everything below it is key-sorted
    document = {
        "header": {
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "version": __version__,
        },
        "body": json.loads(json.dumps(body, sort_keys=True, allow_nan=False)),
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2, allow_nan=False)
        fh.write("\n")
    for report in reports:
        with open(out / f"{report.suite}.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in _csv_rows(report):
                writer.writerow([_cell(v) for v in row])
    summary = summary_table(reports)
    (out / "summary.txt").write_text(summary + "\n", encoding="utf-8")
    return summary


def summary_table(reports):
    lines = [f"{'suite':<13} {'check':<34} {'verdict':<13} {'expected':<13} residual"]
    for report in sorted(reports, key=lambda r: r.suite):
        for rec in sorted(report.records, key=lambda r: r.name):
            mark = "" if rec.as_expected else "  <-- unexpected"
            res = "" if rec.residual is None else f"{float(rec.residual):.3e}"
            lines.append(
                f"{report.suite:<13} {rec.name:<34} {rec.verdict.value:<13} {rec.expected.value:<13} {res}{mark}"
            )
        for note in report.notes:
            lines.append(f"{report.suite:<13} ({note})")
    return "\n".join(lines)


# -- commands ---------------------------------------------------------------------------


def run(config: RunConfig, echo=print):
    """Run the configured suites; returns the exit status."""
    data, scenario = _load(config.scenario)
    scenario.tolerances.update(config.tolerances)
    suites = config.suites or list(scenario.suites)
    reports = []
    for suite in suites:
        try:
            report = run_suite(scenario, suite, config.levels or None, config.seed)
        except Exception as exc:  # a broken suite is reported, never fatal
            report = Report(suite, scenario.name)
            report.add(error_record(suite, exc, scenario.expected(suite)))
        reports.append(report)
    passed = all(r.passed(strict=config.strict) for r in reports)
    try:
        cd = anisotropic_shape(scenario.norm, scenario.patch, level=0)
        Path(config.out).mkdir(parents=True, exist_ok=True)
        with open(Path(config.out) / "curvature.csv", "w", encoding="utf-8", newline="") as fh:
            write_curvature_csv(cd, fh)
    except Exception as exc:
        echo(f"curvature table skipped: {type(exc).__name__}: {exc}")
    summary = write_outputs(config.out, config, data, reports, passed)
    echo(summary)
    echo(f"{scenario.name}: {'PASS' if passed else 'FAIL'} (artifacts in {config.out})")
    return EXIT_PASS if passed else EXIT_FAIL


def list_fixtures(suite=None):
    return [(d["name"], d.get("description", "")) for d in fixtures.catalog(suite)]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wedgewulff",
        description="Verify anisotropic capillary integral identities on scenarios in a wedge.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run verification suites on a scenario")
    p_run.add_argument("--scenario", required=True, help="scenario JSON file or built-in fixture name")
    p_run.add_argument("--suite", action="append", help="suite names, comma separated (repeatable)")
    p_run.add_argument("--levels", help="quadrature refinement levels, e.g. 0,1,2")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", default="wedgewulff-out", help="output directory")
    p_run.add_argument("--tol", action="append", metavar="KEY=VAL", help="tolerance override (repeatable)")
    p_run.add_argument("--strict", action="store_true", help="treat Inconclusive as Fail")

    p_list = sub.add_parser("list", help="list built-in fixtures")
    p_list.add_argument("--suite", help="only fixtures that run this suite")

    p_show = sub.add_parser("show", help="print a built-in fixture as JSON")
    p_show.add_argument("name")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            if args.suite is not None and args.suite not in SUITES:
                raise ConfigError(f"unknown suite {args.suite!r}", "/suites")
            for name, description in list_fixtures(args.suite):
                print(f"{name:<24} {description}")
            return EXIT_PASS
        if args.command == "show":
            if args.name not in fixtures.names():
                raise ConfigError(f"no built-in fixture named {args.name!r}")
            print(json.dumps(fixtures.fixture(args.name), indent=2))
            return EXIT_PASS
        config = RunConfig(
            scenario=args.scenario,
            suites=_parse_suites(args.suite),
            out=args.out,
            levels=_parse_levels(args.levels),
            seed=args.seed,
            tolerances=_parse_tolerances(args.tol),
            strict=args.strict,
        )
        return run(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
