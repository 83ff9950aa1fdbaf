"""Command-line front end: fit, simulate, benchmark, density-grid.

All commands are reproducible: inputs, config, and seed fully determine the
outputs. Numeric CSV output uses 17 significant digits so values round-trip
through double precision; wall-clock timings go only into manifest.json.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import backend_name
from .copulas import CopulaSpec, Family, copula_log_density
from .errors import EforestError
from .learner import DEFAULT_FAMILIES, FitConfig, Method, fit
from .spg import SpgConfig
from .synth import SCENARIOS, run_benchmark, simulate_scenario

FLOAT_FMT = "%.17g"


class InputError(Exception):
    """Malformed input; maps to exit code 2."""


def _fmt(value: float) -> str:
    return FLOAT_FMT % value


# ---------------------------------------------------------------------------
# Config file parsing (flat key=value lines with dotted section keys)

CONFIG_KEYS = {
    "fit.method": "EFLambda",
    "fit.gamma": 0.5,
    "fit.threshold": 1e-8,
    "fit.cv_folds": 5,
    "fit.families": ",".join(f.value for f in DEFAULT_FAMILIES),
    "fit.rho_min": 2.0,
    "fit.rho_max": 5.0,
    "fit.rho_step": 0.1,
    "fit.n_cuts": 100,
    "fit.ef_lambda_max_rounds": 20,
    "fit.ef_cuts_rounds": 3,
    "fit.grid_iterations": 150,
    "spg.max_iterations": 500,
    "spg.alpha_min": 1e-10,
    "spg.alpha_max": 1e10,
    "spg.memory": 10,
    "spg.sufficient_decrease": 1e-4,
    "spg.tolerance": 1e-5,
}


def parse_config_file(path: str | None) -> dict:
    """Read `key = value` lines; unknown keys are errors, all keys optional."""
    values = dict(CONFIG_KEYS)
    if path is None:
        return values
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in values:
            raise InputError(f"{path}:{lineno}: unknown config key {key!r}")
        default = CONFIG_KEYS[key]
        try:
            if isinstance(default, float):
                values[key] = float(value)
            elif isinstance(default, int):
                values[key] = int(value)
            else:
                values[key] = value
        except ValueError as err:
            raise InputError(f"{path}:{lineno}: bad value for {key}: {err}") from err
    return values


def _families_from_config(spec: str):
    names = [part.strip() for part in spec.split(",") if part.strip()]
    try:
        return tuple(Family(name) for name in names)
    except ValueError as err:
        raise InputError(f"unknown copula family in config: {err}") from err


def fit_config_from_values(values: dict, seed: int) -> FitConfig:
    try:
        method = Method(values["fit.method"])
    except ValueError as err:
        raise InputError(f"unknown fit method {values['fit.method']!r}") from err
    spg = SpgConfig(
        max_iterations=int(values["spg.max_iterations"]),
        alpha_min=float(values["spg.alpha_min"]),
        alpha_max=float(values["spg.alpha_max"]),
        memory=int(values["spg.memory"]),
        sufficient_decrease=float(values["spg.sufficient_decrease"]),
        tolerance=float(values["spg.tolerance"]),
    )
    return FitConfig(
        method=method,
        rho_min=float(values["fit.rho_min"]),
        rho_max=float(values["fit.rho_max"]),
        rho_step=float(values["fit.rho_step"]),
        gamma=float(values["fit.gamma"]),
        n_cuts=int(values["fit.n_cuts"]),
        families=_families_from_config(values["fit.families"]),
        cv_folds=int(values["fit.cv_folds"]),
        spg=spg,
        threshold=float(values["fit.threshold"]),
        seed=seed,
        ef_lambda_max_rounds=int(values["fit.ef_lambda_max_rounds"]),
        ef_cuts_rounds=int(values["fit.ef_cuts_rounds"]),
        grid_iterations=int(values["fit.grid_iterations"]),
    )


# ---------------------------------------------------------------------------
# CSV plumbing


def read_data_csv(path: str):
    """Header row of variable names plus numeric rows."""
    try:
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            try:
                header = next(reader)
            except StopIteration:
                raise InputError(f"{path}: empty file") from None
            columns = [name.strip() for name in header]
            if len(columns) < 2:
                raise InputError(f"{path}: need at least two columns")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(columns):
                    raise InputError(
                        f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}"
                    )
                try:
                    rows.append([float(cell) for cell in row])
                except ValueError as err:
                    raise InputError(f"{path}:{lineno}: non-numeric value ({err})") from err
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from err
    if len(rows) < 2:
        raise InputError(f"{path}: need at least two data rows")
    return columns, np.array(rows, dtype=float)


def write_matrix_csv(path: Path, header, matrix, integer=False):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in np.asarray(matrix):
            if integer:
                writer.writerow([int(v) for v in row])
            else:
                writer.writerow([_fmt(v) for v in row])


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: Path, command: str, config_snapshot: dict, seed, inputs, timings):
    manifest = {
        "command": command,
        "tool_version": __version__,
        "backend": backend_name(),
        "seed": seed,
        "config": config_snapshot,
        "input_digests": {name: _sha256(p) for name, p in inputs.items()},
        "timings_s": timings,
    }
    with open(out_dir / "manifest.json", "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_fit(args) -> int:
    t_start = time.perf_counter()
    values = parse_config_file(args.config)
    columns, data = read_data_csv(args.input)
    config = fit_config_from_values(values, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    report = fit(data, config)

    write_matrix_csv(out / "adjacency.csv", columns, report.adjacency, integer=True)
    write_matrix_csv(out / "beta.csv", columns, report.selected_beta)
    path_payload = {
        "method": report.method.value,
        "selected_index": report.selected_index,
        "entries": [
            {
                "rho": None if np.isnan(e.rho) else e.rho,
                "lambda": e.lam,
                "nll": e.nll,
                "n_edges": e.n_edges,
                "ebic": e.ebic,
                "n_components": e.n_components,
                "iterations": e.iterations,
                "rounds": e.rounds,
            }
            for e in report.entries
        ],
    }
    with open(out / "path.json", "w") as handle:
        json.dump(path_payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    labels = report.labels
    components = {
        "n_components": int(labels.max()) + 1,
        "labels": {columns[i]: int(labels[i]) for i in range(len(columns))},
    }
    with open(out / "components.json", "w") as handle:
        json.dump(components, handle, indent=2, sort_keys=True)
        handle.write("\n")
    write_manifest(
        out,
        "fit",
        values,
        args.seed,
        {"input": args.input},
        {"total": time.perf_counter() - t_start, **report.timings},
    )
    print(f"fit: {report.method.value} selected {report.selected_entry.n_edges} edges, "
          f"{components['n_components']} components -> {out}")
    return 0


def cmd_simulate(args) -> int:
    t_start = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        data, truth = simulate_scenario(args.scenario, args.n, args.seed)
    except KeyError:
        raise InputError(f"unknown scenario {args.scenario!r}") from None

    columns = [f"x{i}" for i in range(truth.d)]
    write_matrix_csv(out / "data.csv", columns, data)
    truth_payload = {
        "scenario": args.scenario,
        "descriptor": truth.descriptor,
        "adjacency": truth.adjacency.astype(int).tolist(),
        "component_labels": truth.labels.astype(int).tolist(),
        "n_edges": truth.n_edges,
    }
    with open(out / "truth.json", "w") as handle:
        json.dump(truth_payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    write_manifest(out, "simulate", {"scenario": args.scenario, "n": args.n}, args.seed, {},
                   {"total": time.perf_counter() - t_start})
    print(f"simulate: {args.scenario} -> {data.shape[0]} x {data.shape[1]} samples, "
          f"{truth.n_edges} true edges -> {out}")
    return 0


def cmd_benchmark(args) -> int:
    t_start = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    methods = []
    for name in args.methods.split(","):
        try:
            methods.append(Method(name.strip()))
        except ValueError:
            raise InputError(f"unknown method {name.strip()!r}") from None
    if args.scenario not in SCENARIOS:
        raise InputError(f"unknown scenario {args.scenario!r}")
    sample_sizes = None
    if args.sample_sizes:
        try:
            sample_sizes = [int(s) for s in args.sample_sizes.split(",")]
        except ValueError as err:
            raise InputError(f"bad sample sizes: {err}") from err

    rows, summary = run_benchmark(
        args.scenario,
        methods,
        repetitions=args.repetitions,
        seed=args.seed,
        sample_sizes=sample_sizes,
        jobs=args.jobs,
    )

    fieldnames = list(rows[0].keys()) if rows else []
    with open(out / "results.csv", "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in row.items()})
    with open(out / "summary.json", "w") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    write_manifest(
        out,
        "benchmark",
        {
            "scenario": args.scenario,
            "methods": [m.value for m in methods],
            "repetitions": args.repetitions,
            "sample_sizes": sample_sizes,
        },
        args.seed,
        {},
        {"total": time.perf_counter() - t_start},
    )
    print(f"benchmark: {args.scenario} x {[m.value for m in methods]} "
          f"x {args.repetitions} reps -> {out}")
    return 0


def cmd_density_grid(args) -> int:
    t_start = time.perf_counter()
    try:
        family = Family(args.family)
    except ValueError:
        raise InputError(f"unknown copula family {args.family!r}") from None
    try:
        spec = CopulaSpec(family, theta=args.theta, df=args.df)
    except EforestError as err:
        raise InputError(str(err)) from err

    grid = np.linspace(-4.0, 4.0, args.grid_size)
    from scipy.stats import norm

    out_path = Path(args.output)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "y", "density"])
        for x in grid:
            u = norm.cdf(x)
            log_fx = norm.logpdf(x)
            logc = copula_log_density(spec, np.full(grid.shape, u), norm.cdf(grid))
            dens = np.exp(logc + log_fx + norm.logpdf(grid))
            for y, value in zip(grid, dens):
                writer.writerow([_fmt(x), _fmt(y), _fmt(value)])
    print(f"density-grid: {family.value} theta={args.theta} -> {out_path}")
    _ = time.perf_counter() - t_start
    return 0


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eforest",
        description="Markov random field structure learning with copula potentials",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a graph to a CSV data matrix")
    p_fit.add_argument("input", help="CSV with a header row and numeric columns")
    p_fit.add_argument("--config", default=None, help="key=value config file")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--out", default="fit-out", help="output directory")
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="draw a synthetic benchmark dataset")
    p_sim.add_argument("scenario", choices=sorted(SCENARIOS))
    p_sim.add_argument("--n", type=int, default=None, help="sample count (scenario default)")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", default="sim-out")
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("benchmark", help="run scenario repetitions and score recovery")
    p_bench.add_argument("scenario", choices=sorted(SCENARIOS))
    p_bench.add_argument("--methods", default="EFLambda", help="comma-separated method names")
    p_bench.add_argument("--repetitions", type=int, default=1)
    p_bench.add_argument("--sample-sizes", default=None, help="comma-separated override")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_bench.add_argument("--out", default="bench-out")
    p_bench.set_defaults(func=cmd_benchmark)

    p_grid = sub.add_parser("density-grid", help="joint density surface with normal marginals")
    p_grid.add_argument("family", help="copula family tag")
    p_grid.add_argument("--theta", type=float, default=0.5)
    p_grid.add_argument("--df", type=float, default=4.0)
    p_grid.add_argument("--grid-size", type=int, default=81)
    p_grid.add_argument("--output", default="density-grid.csv")
    p_grid.set_defaults(func=cmd_density_grid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except EforestError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
