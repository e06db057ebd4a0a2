"""Command-line front end: simulate, ingest, bench, report.

Exit codes: 0 success, 1 usage/configuration error, 2 partial grid
failure (remaining variants completed).  All randomness flows from the
explicit --seed (or the config's seed), so every subcommand is
reproducible byte-for-byte apart from timing fields.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness, plant, series as zseries
from .errors import ZonecastError

CONFIG_VERSION = 1


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ZonecastError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ZonecastError(f"config is not valid JSON: {exc}")
    version = cfg.get("schema_version")
    if version != CONFIG_VERSION:
        raise ZonecastError(
            f"config schema_version {version!r} unsupported (expected {CONFIG_VERSION})"
        )
    return cfg


def _scenario_from_config(cfg: dict) -> plant.ScenarioConfig:
    return plant.ScenarioConfig.from_dict(cfg.get("scenario", {}))


def _phases_from_config(cfg: dict, dt: float) -> harness.PhaseConfig:
    ph = cfg.get("phases", {})
    return harness.PhaseConfig.from_days(
        ident_days=ph.get("identification_days", 30.0),
        init_days=ph.get("initialization_days", 30.0),
        eval_days=ph.get("evaluation_days", 305.0),
        dt=dt,
        stride=int(ph.get("eval_stride", 1)),
        ident_windows_days=ph.get("identification_windows_days"),
    )


def _harness_from_config(cfg: dict, seed: int) -> harness.HarnessConfig:
    h = cfg.get("harness", {})
    from .arx import ArxOrders

    orders = h.get("arx_orders", {})
    return harness.HarnessConfig(
        t_ini=int(h.get("t_ini", 12)),
        t_f=int(h.get("t_f", 96)),
        init_weight=float(h.get("init_weight", 100.0)),
        window_days=float(h.get("window_days", 365.0)),
        solar_scale=float(h.get("solar_scale", 500.0)),
        arx_orders=ArxOrders(
            n_a=int(orders.get("n_a", 12)),
            n_b=int(orders.get("n_b", 12)),
            n_k=int(orders.get("n_k", 1)),
        ),
        arx_init=h.get("arx_init", "batch"),
        sigma_min_every=int(h.get("sigma_min_every", 16)),
        static_cap=h.get("static_cap"),
        distort_selection=bool(h.get("distort_selection", True)),
        seed=seed,
        tz_offset_hours=float(h.get("tz_offset_hours", 0.0)),
        selection_trace=bool(h.get("selection_trace", False)),
        dump_predictions=tuple(h.get("dump_predictions", ())),
    )


def _grid_from_config(cfg: dict) -> list[harness.VariantSpec]:
    g = cfg.get("grid", {})
    from . import bst

    return harness.full_grid(
        widths=tuple(g.get("widths", bst.DEFAULT_WIDTHS)),
        lambdas=tuple(g.get("lambdas", bst.DEFAULT_LAMBDAS)),
        strategies=tuple(g.get("strategies", bst.SELECTION_STRATEGIES)),
        memories=tuple(g.get("arx_memory_days", harness.DEFAULT_MEMORY_DAYS)),
    )


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    scen = _scenario_from_config(cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    data, sidecar = plant.build_scenario(scen, seed=seed)
    os.makedirs(args.out, exist_ok=True)
    data_path = os.path.join(args.out, "data.csv")
    zseries.write_csv(data, data_path)
    with open(os.path.join(args.out, "scenario.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2)
    print(f"wrote {data_path}: {data.n_steps} steps, "
          f"{data.gap_fraction() * 100:.2f}% gaps")
    return 0


def cmd_ingest(args) -> int:
    cfg = _load_config(args.config)
    if "channels" in cfg:
        schema = zseries.Schema.from_config(cfg)
        dt = float(cfg.get("dt_minutes", 15)) * 60.0
    else:
        schema = plant.standard_schema()
        dt = zseries.DEFAULT_DT
    data = zseries.ingest_csv(args.data, schema, dt=dt)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "ingested.csv")
    zseries.write_csv(data, out_path)
    n_len = data.n_steps
    segs = zseries.admissible_segments(data, min_len=108)
    print(f"{n_len} steps on the grid, {data.gap_fraction() * 100:.2f}% gaps, "
          f"{len(segs)} admissible segments (>= 108 steps)")
    print(f"wrote {out_path}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    if args.data:
        if "channels" in cfg:
            schema = zseries.Schema.from_config(cfg)
            dt = float(cfg.get("dt_minutes", 15)) * 60.0
        else:
            schema = plant.standard_schema()
            dt = zseries.DEFAULT_DT
        data = zseries.ingest_csv(args.data, schema, dt=dt)
    else:
        scen = _scenario_from_config(cfg)
        data, _ = plant.build_scenario(scen, seed=seed)

    specs = _grid_from_config(cfg)
    if args.variants:
        specs = harness.filter_grid(specs, args.variants)
    if not specs:
        print("no variants selected", file=sys.stderr)
        return 1
    phases = _phases_from_config(cfg, data.dt)
    hc = _harness_from_config(cfg, seed)
    result = harness.run_grid(data, specs, phases, hc, jobs=args.jobs)
    harness.write_bundle(result, args.out, tz_offset_hours=hc.tz_offset_hours)
    print(f"evaluated {len(result.reports)}/{len(specs)} variants at "
          f"{len(result.instants)} instants ({len(result.skipped)} skipped)")
    print(f"bundle written to {args.out}")
    if result.failures:
        for name, msg in result.failures.items():
            print(f"FAILED {name}: {msg}", file=sys.stderr)
        return 2
    return 0


def cmd_report(args) -> int:
    df = harness.load_summary(args.bundle)
    if args.top:
        best = df.sort_values("rmse").groupby("family", as_index=False).first()
        best = best.sort_values("rmse").head(args.top)
        rows = best
        print(f"best variant per family (top {args.top}):")
    else:
        rows = df.sort_values("rmse")
    print(f"{'variant':48s} {'rmse[K]':>10s} {'p50 step err[K]':>16s} "
          f"{'ms/instant':>11s}")
    for _, r in rows.iterrows():
        print(f"{r['variant']:48s} {r['rmse']:10.4f} {r['mean_step_p50']:16.4f} "
              f"{r['mean_predict_ms']:11.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zonecast",
        description="Zone-temperature predictor toolkit: synthetic plant, "
                    "trajectory-matrix and ARX predictors, evaluation grid.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic data set")
    sim.add_argument("--config", default=None, help="JSON scenario config")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", default="out", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    ing = sub.add_parser("ingest", help="validate + grid a telemetry CSV")
    ing.add_argument("data", help="input CSV path")
    ing.add_argument("--config", default=None, help="schema config (JSON)")
    ing.add_argument("--out", default="out")
    ing.set_defaults(func=cmd_ingest)

    ben = sub.add_parser("bench", help="run the evaluation grid")
    ben.add_argument("--config", default=None)
    ben.add_argument("--data", default=None,
                     help="CSV data set (default: simulate from config)")
    ben.add_argument("--variants", default=None,
                     help="comma-separated name filters, e.g. bst_adaptive")
    ben.add_argument("--seed", type=int, default=None)
    ben.add_argument("--out", default="bundle")
    ben.add_argument("--jobs", type=int, default=1)
    ben.set_defaults(func=cmd_bench)

    rep = sub.add_parser("report", help="summarize a report bundle")
    rep.add_argument("bundle", help="bundle directory from bench")
    rep.add_argument("--top", type=int, default=None,
                     help="show only the best variant of each family")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ZonecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
