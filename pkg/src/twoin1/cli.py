"""Command-line front end.

Commands:

    cmin         analytic (and optionally empirical) minimal interim cutoff
    type1-curve  analytic type-I error split by route over a cutoff grid
    oc           simulated operating characteristics per scenario and design
    power-study  simulated power and expansion probability over HR/ORR grids

Each run writes ``<command>-<digest>.csv`` (or the rows inside the JSON file
with ``--format json``) plus ``<command>-<digest>.json`` holding the resolved
config, so feeding that config back reproduces the run.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .design import EffectScenario
from .numerics import BracketError, NumericalError
from .sim import SaturationError, resolve_threads, simulate
from .type1 import empirical_cmin, solve_cmin, type1_curve

log = logging.getLogger("twoin1")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_SATURATION = 0, 2, 3, 4

DURATION_NOTE = "assumption-dependent"


def _num(x):
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(round(x, 10))
    return x


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def _grid_fields(changes, p):
    row = dict(changes)
    row.update(
        alpha=p.alpha, power_target=p.power_target, m1=p.m1, m2=p.m2, m_max=p.m_max,
        cap_ratio=p.cap_ratio, info_fraction=p.m1 / p.m_total, rho_xy=p.rho_xy, rho_xz=p.rho_xz,
    )
    row.update(changes)  # report grid values as requested, e.g. an infinite cap ratio
    return row


# -- commands ------------------------------------------------------------------


def cmd_cmin(cfg: RunConfig, threads: int) -> list[dict]:
    rows = []
    for changes, p in cfg.design_points():
        res = solve_cmin(p)
        row = _grid_fields(changes, p)
        row.update(c_min_analytic=res.describe(), residual_analytic=res.residual, method="analytic")
        if cfg.empirical:
            emp = empirical_cmin(p, cfg.replicates.empirical_cmin, cfg.seed, threads=threads)
            row.update(
                c_min_empirical=emp.describe(), residual_empirical=emp.residual,
                empirical_replicates=cfg.replicates.empirical_cmin, method="analytic+empirical",
            )
        rows.append(row)
        log.info("c_min %s -> %s", changes or "base design", res.describe())
    return rows


def cmd_type1_curve(cfg: RunConfig, threads: int) -> list[dict]:
    grid = cfg.cutoffs()
    rows = []
    for changes, p in cfg.design_points():
        ph2, ph3 = type1_curve(grid, p)
        for c, a, b in zip(grid, ph2, ph3):
            row = _grid_fields(changes, p)
            row.update(c=c, phase2_term=float(a), phase3_term=float(b), total=float(a + b), method="analytic")
            rows.append(row)
    return rows


def _summary_row(summary, scenario: EffectScenario, replicates: int, seed: int) -> dict:
    row = dict(scenario=scenario.label, hr_os=scenario.hr_os, hr_pfs=scenario.hr_pfs,
               orr_c=scenario.orr_c, orr_t=scenario.orr_t, n_per_arm_interim=scenario.n_per_arm_interim)
    data = summary.to_dict()
    se = data.pop("mc_se")
    row["design_label"] = data.pop("design_label")
    row.update(replicates=replicates, seed=seed)
    for key, value in data.items():
        if key.startswith("expected_duration"):
            continue
        row[key] = value
        if key in se:
            row[f"mc_se_{key}"] = se[key]
    if summary.expected_duration_overall is not None:
        for key in ("expected_duration_overall", "expected_duration_phase2_cond", "expected_duration_phase3_cond"):
            row[key] = data[key]
        row["duration_note"] = DURATION_NOTE
    return row


def cmd_oc(cfg: RunConfig, threads: int) -> list[dict]:
    accrual = cfg.accrual_model()
    rows = []
    for changes, p in cfg.design_points():
        for scenario in cfg.effect_scenarios():
            n = cfg.replicates.null if scenario.is_null else cfg.replicates.alternative
            result = simulate(scenario, p, cfg.designs, replicates=n, seed=cfg.seed,
                              threads=threads, accrual=accrual)
            for summary in result.values():
                row = _grid_fields(changes, p)
                row["c"] = p.c
                row.update(_summary_row(summary, scenario, n, cfg.seed))
                rows.append(row)
            log.info("oc %s %s done", changes or "base design", scenario.label)
    return rows


def cmd_power_study(cfg: RunConfig, threads: int) -> list[dict]:
    if cfg.power_grid is None:
        raise ConfigError("power_grid is required for power-study")
    designs = cfg.designs or ["S2in1-max"]
    base = cfg.scenarios[0] if cfg.scenarios else None
    n_arm = base.n_per_arm_interim if base is not None else 60
    rows = []
    for changes, p in cfg.design_points():
        for point in cfg.power_grid.points():
            scenario = EffectScenario(**point, n_per_arm_interim=n_arm)
            n = cfg.replicates.null if scenario.is_null else cfg.replicates.alternative
            result = simulate(scenario, p, designs, replicates=n, seed=cfg.seed, threads=threads)
            for summary in result.values():
                row = _grid_fields(changes, p)
                row["c"] = p.c
                row.update(_summary_row(summary, scenario, n, cfg.seed))
                rows.append(row)
    return rows


COMMANDS = {
    "cmin": (cmd_cmin, "minimal safe interim cutoff, optionally with the simulated estimate"),
    "type1-curve": (cmd_type1_curve, "analytic overall type-I error over a cutoff grid"),
    "oc": (cmd_oc, "simulated operating characteristics per scenario and design"),
    "power-study": (cmd_power_study, "simulated power and expansion probability over HR/ORR grids"),
}


# -- output ----------------------------------------------------------------------


def write_report(command: str, cfg: RunConfig, rows: list[dict], out_dir: Path, fmt: str) -> list[Path]:
    """Write the table and its metadata; returns the written paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{command}-{cfg.digest()}"
    meta = {
        "command": command,
        "version": __version__,
        "config": cfg.canonical(),
        "n_rows": len(rows),
    }
    written = []
    if fmt == "csv":
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
        table = out_dir / f"{stem}.csv"
        with table.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _num(row.get(k)) for k in columns})
        meta["table"] = table.name
        written.append(table)
    else:
        meta["rows"] = _json_safe(rows)
    meta_path = out_dir / f"{stem}.json"
    meta_path.write_text(json.dumps(_json_safe(meta), indent=2) + "\n")
    written.append(meta_path)
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twoin1", description="Flexible seamless 2-in-1 design calculations.")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config (defaults to the built-in design)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, help="worker threads (default: $TWOIN1_THREADS or 1)")
    common.add_argument("--out", type=Path, help="output directory (overrides config)")
    common.add_argument("--format", choices=("csv", "json"), help="table format (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        updates = {}
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative")
            updates["seed"] = args.seed
        output = cfg.output.model_copy(update={
            k: v for k, v in (("dir", str(args.out) if args.out else None), ("format", args.format)) if v
        })
        cfg = cfg.model_copy(update=dict(updates, output=output))
        threads = resolve_threads(args.threads)
        rows = COMMANDS[args.command][0](cfg, threads)
        paths = write_report(args.command, cfg, rows, Path(cfg.output.dir), cfg.output.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SaturationError as exc:
        print(f"saturation: {exc}", file=sys.stderr)
        return EXIT_SATURATION
    except (NumericalError, BracketError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
