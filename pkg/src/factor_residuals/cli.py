"""Command-line interface: simulate, verify, analyze, report.

Every flag has a config-file equivalent with a dotted key
(``<subcommand>.<flag>``, shared flags also accept ``common.<flag>``); flags
win on conflict.  Exit codes: 0 success, 1 checked failure (identity gate or
degenerate data), 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from ._util import format_number
from .datagen import read_observations_csv, sample_correlation
from .efa import fit_ml, varimax, write_solutions_csv
from .errors import DegenerateDataError, DomainError, FeasibilityError, NoComponentsError
from .model import residual_matrix
from .render import histogram_svg, histogram_text, rmsc_svg, rmsc_text, verification_table
from .residuals import DIRECT_PROJECTION, TRUE_SCORES, decompose_residuals
from .sim import (
    FIXED_POPULATION,
    GENERATIVE,
    SimulationConfig,
    aggregate_rmsc,
    correlation_histogram,
    read_runs_csv,
    run_grid,
    write_figure2_csv,
    write_histogram_csv,
    write_runs_csv,
    write_summary,
    write_table2_csv,
    write_tails_csv,
)
from .theorems import GATE_DEFAULT, run_verification, verification_passed

SEED_ENV_VAR = "FACTOR_PARADOX_SEED"
DEFAULT_SEED = 1729
PRESETS = {"desk": 300, "full": 1000}


def _load_config_file(path) -> dict:
    """Flat key=value lines with dotted keys; '#' starts a comment line."""
    config: dict = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise DomainError(f"cannot read config file {path}: {err}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DomainError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        config[key.strip()] = value.strip()
    return config


class _Resolver:
    """Flag > config file > default, with typed parsing of file values."""

    def __init__(self, args: argparse.Namespace):
        self.command = args.command
        self.file = _load_config_file(args.config) if args.config else {}

    def get(self, args, name: str, cast, default=None):
        flag = getattr(args, name, None)
        if flag is not None:
            if isinstance(flag, str) and cast is not str:
                try:
                    return cast(flag)
                except ValueError:
                    raise DomainError(f"--{name}: cannot parse {flag!r}") from None
            return flag
        for key in (f"{self.command}.{name}", f"common.{name}"):
            if key in self.file:
                try:
                    return cast(self.file[key])
                except ValueError:
                    raise DomainError(f"config key {key}: cannot parse {self.file[key]!r}") from None
        return default


def _parse_int_list(text: str) -> tuple:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _parse_float_list(text: str) -> tuple:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _resolve_seed(resolver: _Resolver, args) -> int:
    seed = resolver.get(args, "seed", int)
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise DomainError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _prepare_output(resolver: _Resolver, args) -> Path:
    out = Path(resolver.get(args, "output", str, "results"))
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-probe"
    probe.write_text("")
    probe.unlink()
    return out


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file with dotted keys")
    parser.add_argument("--output", "-o", help="output directory (default: results)")
    parser.add_argument("--seed", type=int, help=f"base seed (falls back to ${SEED_ENV_VAR})")
    parser.add_argument("--verbose", "-v", action="store_true", default=None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factor-residuals",
        description="factor analysis residual components: simulation grid, "
        "identity verification, data analysis and report rendering",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="run the Monte Carlo grid")
    _add_common(simulate)
    simulate.add_argument("--preset", choices=sorted(PRESETS), help="desk (300 reps) or full (1000 reps)")
    simulate.add_argument("--reps", type=int, help="replications per cell (overrides the preset)")
    simulate.add_argument("--sample-sizes", dest="sample_sizes", help="comma list, default 150,300,900")
    simulate.add_argument("--loadings", help="comma list, default 0.4,0.6,0.8")
    simulate.add_argument("--factors", help="comma list, default 3,6")
    simulate.add_argument(
        "--fixed-population",
        dest="fixed_population",
        action="store_true",
        default=None,
        help="draw subsamples from one finite population per model",
    )
    simulate.add_argument("--population-size", dest="population_size", type=int,
                          help="cases in each fixed population (default 900000)")
    simulate.add_argument("--scoring", choices=[TRUE_SCORES, DIRECT_PROJECTION],
                          help="strategy used for default aggregates")
    simulate.add_argument("--jobs", type=int, help="parallel worker processes (default 1)")
    simulate.add_argument("--dump-solutions", dest="dump_solutions", action="store_true",
                          default=None, help="also write per-replication loadings to solutions.csv")
    simulate.set_defaults(handler=cmd_simulate)

    verify = commands.add_parser("verify", help="check the residual cross-covariance identities")
    _add_common(verify)
    verify.add_argument("--gate", type=float, help=f"failure threshold (default {GATE_DEFAULT})")
    verify.add_argument("--cases-n", dest="cases_n", type=int,
                        help="population size for the exact constructions (default 600)")
    verify.add_argument("--inject-perturbation", dest="inject_perturbation", action="store_true",
                        default=None, help="append a synthetic failing check (testing hook)")
    verify.set_defaults(handler=cmd_verify)

    analyze = commands.add_parser("analyze", help="factor-analyze a CSV of raw data")
    _add_common(analyze)
    analyze.add_argument("input", help="CSV with a header row of variable names")
    analyze.add_argument("--factors", type=int, help="number of factors to extract")
    analyze.set_defaults(handler=cmd_analyze)

    report = commands.add_parser("report", help="re-aggregate a runs.csv and render charts")
    _add_common(report)
    report.add_argument("runs", help="runs.csv produced by simulate")
    report.set_defaults(handler=cmd_report)
    return parser


def cmd_simulate(args) -> int:
    resolver = _Resolver(args)
    preset = resolver.get(args, "preset", str, "desk")
    if preset not in PRESETS:
        raise DomainError(f"unknown preset {preset!r}")
    reps = resolver.get(args, "reps", int, PRESETS[preset])
    fixed = resolver.get(args, "fixed_population", _parse_bool, False)
    config = SimulationConfig(
        sample_sizes=resolver.get(args, "sample_sizes", _parse_int_list, (150, 300, 900)),
        loadings=resolver.get(args, "loadings", _parse_float_list, (0.4, 0.6, 0.8)),
        factor_counts=resolver.get(args, "factors", _parse_int_list, (3, 6)),
        reps=reps,
        base_seed=_resolve_seed(resolver, args),
        population_mode=FIXED_POPULATION if fixed else GENERATIVE,
        fixed_population_size=resolver.get(args, "population_size", int, 900_000),
        scoring_strategy=resolver.get(args, "scoring", str, TRUE_SCORES),
        jobs=resolver.get(args, "jobs", int, 1),
        keep_solutions=bool(resolver.get(args, "dump_solutions", _parse_bool, False)),
    )
    out = _prepare_output(resolver, args)
    if resolver.get(args, "verbose", _parse_bool, False):
        print(f"running {len(config.cells())} cells x {config.reps} replications", file=sys.stderr)
    results = run_grid(config)
    write_runs_csv(results, out / "runs.csv")
    write_table2_csv(results, out / "table2.csv")
    write_figure2_csv(results, out / "figure2.csv")
    write_histogram_csv(results, out / "histogram.csv")
    write_tails_csv(results, out / "tails.csv")
    write_summary(results, out / "summary.txt")
    if config.keep_solutions:
        write_solutions_csv(
            [record.solution for record in results.records if record.solution is not None],
            out / "solutions.csv",
        )
    print(f"wrote {len(results.records)} records to {out}")
    return 0


def cmd_verify(args) -> int:
    resolver = _Resolver(args)
    gate = resolver.get(args, "gate", float, GATE_DEFAULT)
    reports = run_verification(
        n=resolver.get(args, "cases_n", int, 600),
        seed=_resolve_seed(resolver, args),
        inject_perturbation=bool(resolver.get(args, "inject_perturbation", _parse_bool, False)),
    )
    print(verification_table(reports, gate))
    if verification_passed(reports, gate):
        print(f"all checked deviations below {gate:g}")
        return 0
    print(f"FAILED: at least one deviation at or above {gate:g}", file=sys.stderr)
    return 1


def _write_rows(path: Path, header: list, rows) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_analyze(args) -> int:
    resolver = _Resolver(args)
    X, names = read_observations_csv(args.input)
    n, p = X.shape
    q = resolver.get(args, "factors", int)
    if q is None or not 1 <= q < p:
        raise DomainError(f"--factors must satisfy 1 <= q < p = {p}")
    if n < p + 1:
        raise DegenerateDataError(f"need at least p + 1 = {p + 1} rows, got {n}")
    out = _prepare_output(resolver, args)
    corr = sample_correlation(X)
    solution = fit_ml(corr, q)
    rotated, _rotation = varimax(solution.loadings)
    omega = residual_matrix(corr.values, solution.loadings, solution.uniquenesses)
    decomposition = decompose_residuals(omega)
    _write_rows(
        out / "loadings.csv",
        ["variable"] + [f"f{k + 1}" for k in range(q)],
        ([name] + [format_number(v) for v in row] for name, row in zip(names, rotated)),
    )
    _write_rows(
        out / "uniquenesses.csv",
        ["variable", "uniqueness"],
        ([name, format_number(v)] for name, v in zip(names, solution.uniquenesses)),
    )
    _write_rows(
        out / "residual_eigenvalues.csv",
        ["rank", "eigenvalue"],
        ([str(i + 1), format_number(v)] for i, v in enumerate(decomposition.eigenvalues)),
    )
    _write_rows(
        out / "component_loadings.csv",
        ["variable"] + [f"c{k + 1}" for k in range(decomposition.m)],
        ([name] + [format_number(v) for v in row]
         for name, row in zip(names, decomposition.component_loadings)),
    )
    status = "converged" if solution.converged else "NOT converged"
    print(
        f"fit {solution.fit:.6f} ({status}, {int(np.sum(solution.heywood))} boundary "
        f"uniquenesses); {decomposition.m} positive residual eigenvalues; output in {out}"
    )
    return 0


def cmd_report(args) -> int:
    resolver = _Resolver(args)
    results = read_runs_csv(args.runs)
    out = _prepare_output(resolver, args)
    write_table2_csv(results, out / "table2.csv")
    write_figure2_csv(results, out / "figure2.csv")
    write_histogram_csv(results, out / "histogram.csv")
    write_tails_csv(results, out / "tails.csv")
    strategy = results.config.scoring_strategy if results.config else TRUE_SCORES
    histogram = correlation_histogram(results, strategy=strategy)
    (out / "histogram.txt").write_text(histogram_text(histogram, strategy))
    (out / "histogram.svg").write_text(histogram_svg(histogram, strategy))
    by_strategy = {s: aggregate_rmsc(results, s) for s in (TRUE_SCORES, DIRECT_PROJECTION)}
    (out / "rmsc.txt").write_text(rmsc_text(by_strategy))
    (out / "rmsc.svg").write_text(rmsc_svg(by_strategy[strategy], strategy))
    print(f"report written to {out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except DomainError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (DegenerateDataError, NoComponentsError, FeasibilityError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
