"""Command-line entry point; every run writes a manifest for reproducibility.

Subcommands: simulate, ingest, metrics, rdd, forecast, graph, sweep.  Configs
are JSON files; stochastic subcommands require an explicit seed.  Exit codes:
0 success, 2 bad input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

from . import __version__, ingest, kernels, metrics, rdd, txgraph
from .demand import load_scenario, sample_arrivals
from .errors import InputError, NumericalError
from .fees import FeeParams
from .forecast import FitConfig, fit_ts, load_holidays, predict_components
from .sim import IntervalRegime, SimConfig, export_trace, run
from .sweep import SweepSpec, compare_regimes, run_sweep, write_sweep_csv

EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: str, subcommand: str, args: dict,
                    inputs: list[str], outputs: list[str]) -> str:
    manifest = {
        "tool": f"tfmlab {__version__}",
        "kernel_backend": kernels.active_backend(),
        "subcommand": subcommand,
        "args": args,
        "inputs": {p: _sha256(p) for p in inputs if p and os.path.exists(p)},
        "outputs": {p: _sha256(p) for p in outputs},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_sim_config(path: str, seed: int | None) -> SimConfig:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from exc
    if seed is not None:
        obj["seed"] = seed
    if "seed" not in obj:
        raise InputError("a seed is required (config key 'seed' or --seed)")
    return SimConfig.from_json(obj)


def cmd_simulate(args) -> int:
    config = _load_sim_config(args.config, args.seed)
    process, surges = load_scenario(args.scenario)
    arrivals = sample_arrivals(process, surges, config.horizon, config.seed)
    trace = run(config, arrivals)
    os.makedirs(args.out, exist_ok=True)
    paths = export_trace(trace, args.out)
    _write_manifest(args.out, "simulate",
                    {"config": config.to_json(), "scenario": args.scenario,
                     "seed": config.seed},
                    [args.config, args.scenario], sorted(paths.values()))
    print(f"simulated {len(trace.blocks)} blocks, {len(trace.transactions)} "
          f"transactions -> {args.out}")
    return 0


def cmd_ingest(args) -> int:
    blocks = ingest.load_blocks(args.blocks, strict=args.strict)
    delays = ingest.load_delays(args.delays, strict=args.strict)
    txs = ingest.load_txs(args.txs, strict=args.strict) if args.txs else None
    sanctions = (ingest.load_sanctions(args.sanctions, strict=args.strict)
                 if args.sanctions else None)
    for name, res in (("blocks", blocks), ("delays", delays),
                      ("transactions", txs), ("sanctions", sanctions)):
        if res and res.rejects:
            print(f"{name}: rejected {len(res.rejects)} rows "
                  f"(first: line {res.rejects[0].line}, {res.rejects[0].reason})",
                  file=sys.stderr)
    panel = ingest.join_panel(
        blocks.records, txs.records if txs else None, delays.records,
        sanctions.records if sanctions else (),
        cutoff_block=args.cutoff, first_interval=args.first_interval)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    metrics.write_panel_csv(panel, args.out)
    _write_manifest(os.path.dirname(os.path.abspath(args.out)), "ingest",
                    {"cutoff": args.cutoff, "first_interval": args.first_interval},
                    [args.blocks, args.delays, args.txs, args.sanctions],
                    [args.out])
    print(f"panel with {len(panel)} blocks -> {args.out}")
    return 0


def cmd_metrics(args) -> int:
    panel = metrics.read_panel_csv(args.panel)
    os.makedirs(args.out, exist_ok=True)
    outputs = []

    summary_path = os.path.join(args.out, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(metrics.panel_summary(panel), fh, indent=2)
        fh.write("\n")
    outputs.append(summary_path)

    cuts = [float(c) for c in args.cuts.split(",")] if args.cuts else \
        [round(0.5 + 0.05 * i, 2) for i in range(10)]
    curve = metrics.congestion_by_cut([r.gas_used for r in panel],
                                      [r.gas_limit for r in panel], cuts)
    curve_path = os.path.join(args.out, "congestion_by_cut.csv")
    with open(curve_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cut", "congestion_ratio"])
        w.writerows(curve)
    outputs.append(curve_path)

    daily_path = os.path.join(args.out, "daily_ratios.csv")
    with open(daily_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "congestion_ratio", "continued_congestion_ratio"])
        for d in metrics.daily_ratios(panel):
            w.writerow([d.date, repr(d.congestion_ratio),
                        repr(d.continued_congestion_ratio)])
    outputs.append(daily_path)

    _write_manifest(args.out, "metrics", {"cuts": cuts}, [args.panel], outputs)
    print(f"metrics for {len(panel)} blocks -> {args.out}")
    return 0


def cmd_rdd(args) -> int:
    panel = metrics.read_panel_csv(args.panel)
    specs = tuple(int(s) for s in args.spec.split(","))
    fits = rdd.fit_nested(panel, args.outcome, family=args.family, specs=specs)
    table = rdd.regression_table(fits)
    print(table)
    top_spec = max(fits)
    print(rdd.ate_report(fits[top_spec], args.outcome))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        table_path = os.path.join(args.out, f"rdd_{args.outcome}.txt")
        with open(table_path, "w") as fh:
            fh.write(table + "\n" + rdd.ate_report(fits[top_spec], args.outcome) + "\n")
        json_path = os.path.join(args.out, f"rdd_{args.outcome}.json")
        with open(json_path, "w") as fh:
            fh.write(rdd.fits_to_json(fits))
        _write_manifest(args.out, "rdd",
                        {"outcome": args.outcome, "family": args.family,
                         "spec": list(specs)},
                        [args.panel], [table_path, json_path])
    return 0


def cmd_forecast(args) -> int:
    with open(args.daily, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "date" not in reader.fieldnames:
            raise InputError(f"{args.daily}: need 'date' and value columns")
        value_col = args.column or [c for c in reader.fieldnames if c != "date"][0]
        dates, values = [], []
        for rec in reader:
            dates.append(rec["date"])
            values.append(float(rec[value_col]))
    holidays = load_holidays(args.holidays) if args.holidays else ()
    config = FitConfig(fourier_order=args.fourier_order,
                       n_changepoints=args.changepoints,
                       ridge_lambda=args.ridge_lambda)
    model = fit_ts(values, dates, holidays, config)
    components = predict_components(model, dates)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "trend", "weekly", "holiday", "yhat", "lo", "hi"])
        for c in components:
            w.writerow([c.date, repr(c.trend), repr(c.weekly), repr(c.holiday),
                        repr(c.yhat), repr(c.lo), repr(c.hi)])
    for name, effect in model.holiday_effects.items():
        se = model.holiday_ses[name]
        print(f"holiday {name}: effect {effect:+.4f} (se {se:.4f})")
    _write_manifest(os.path.dirname(os.path.abspath(args.out)), "forecast",
                    {"column": value_col, "fourier_order": args.fourier_order,
                     "changepoints": args.changepoints,
                     "ridge_lambda": args.ridge_lambda},
                    [args.daily, args.holidays], [args.out])
    print(f"components for {len(components)} days -> {args.out}")
    return 0


def cmd_graph(args) -> int:
    txs = ingest.load_txs(args.txs, strict=args.strict)
    sanctions = ingest.load_sanctions(args.sanctions, strict=args.strict)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for era in ("combined", "pre", "post"):
        g = txgraph.build_graph(txs.records, sanctions.records, era=era,
                                cutoff=args.cutoff)
        edge_path = os.path.join(args.out, f"edges_{era}.csv")
        flow_path = os.path.join(args.out, f"flows_{era}.csv")
        summary_path = os.path.join(args.out, f"summary_{era}.json")
        txgraph.write_edge_list(g, edge_path)
        txgraph.write_flow_table(g, flow_path)
        txgraph.write_summary(g, summary_path)
        outputs += [edge_path, flow_path, summary_path]
        s = txgraph.graph_summary(g)
        print(f"{era}: {s['nodes']} nodes, {s['edges']} edges, "
              f"{s['connected_components']} components")
    _write_manifest(args.out, "graph", {"cutoff": args.cutoff},
                    [args.txs, args.sanctions], outputs)
    return 0


def cmd_sweep(args) -> int:
    process, surges = load_scenario(args.scenario)
    fixed = IntervalRegime.fixed(args.fixed_slot, args.empty_slot_prob)
    expo = IntervalRegime.exponential(args.exp_mean)
    seeds = tuple(range(args.seed, args.seed + args.n_seeds))
    spec = SweepSpec(
        process=process, surges=surges,
        regimes=(("fixed", fixed), ("exponential", expo)),
        fee=FeeParams(fee_floor=args.fee_floor),
        initial_base_fee=args.initial_base_fee,
        horizon=args.horizon, seeds=seeds)
    rows = run_sweep(spec, workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    runs_path = os.path.join(args.out, "runs.csv")
    write_sweep_csv(rows, runs_path)
    comparison = compare_regimes(rows, "fixed", "exponential")
    comp_path = os.path.join(args.out, "comparison.json")
    with open(comp_path, "w") as fh:
        json.dump(comparison, fh, indent=2)
        fh.write("\n")
    _write_manifest(args.out, "sweep",
                    {"scenario": args.scenario, "seeds": list(seeds),
                     "horizon": args.horizon,
                     "fixed_slot": args.fixed_slot,
                     "empty_slot_prob": args.empty_slot_prob,
                     "exp_mean": args.exp_mean},
                    [args.scenario], [runs_path, comp_path])
    for metric_name, stats in comparison.items():
        print(f"{metric_name}: fixed wins {stats['wins']}/{stats['trials']} "
              f"(one-sided sign test p={stats['p_value']:.4g})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tfmlab",
        description="fee market laboratory: simulate, ingest, analyze")
    parser.add_argument("--version", action="version",
                        version=f"tfmlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulation and export CSVs")
    p.add_argument("--config", required=True, help="simulation config JSON")
    p.add_argument("--scenario", required=True, help="arrival scenario JSON")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="join chain/mempool/sanction CSVs into a panel")
    p.add_argument("--blocks", required=True)
    p.add_argument("--delays", required=True)
    p.add_argument("--txs", default=None)
    p.add_argument("--sanctions", default=None)
    p.add_argument("--cutoff", type=int, default=metrics.MERGE_CUTOFF_BLOCK)
    p.add_argument("--first-interval", type=float, default=None,
                   help="interval assigned to the first block (e.g. regime mean)")
    p.add_argument("--strict", action="store_true",
                   help="fail on the first malformed row")
    p.add_argument("--out", required=True, help="panel CSV path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("metrics", help="summaries and congestion curves from a panel")
    p.add_argument("--panel", required=True)
    p.add_argument("--cuts", default=None, help="comma-separated gas-use cuts")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("rdd", help="cutoff regressions on a panel outcome")
    p.add_argument("--panel", required=True)
    p.add_argument("--outcome", required=True,
                   help=f"one of {', '.join(rdd.OUTCOMES)}")
    p.add_argument("--family", choices=("ols", "logit"), default="ols")
    p.add_argument("--spec", default="1,2,3", help="nested column specs")
    p.add_argument("--out", default=None, help="optional output directory")
    p.set_defaults(func=cmd_rdd)

    p = sub.add_parser("forecast", help="trend/weekly/holiday decomposition")
    p.add_argument("--daily", required=True, help="CSV with date + value columns")
    p.add_argument("--column", default=None, help="value column name")
    p.add_argument("--holidays", default=None, help="holiday spec JSON")
    p.add_argument("--fourier-order", type=int, default=FitConfig.fourier_order)
    p.add_argument("--changepoints", type=int, default=FitConfig.n_changepoints)
    p.add_argument("--ridge-lambda", type=float, default=FitConfig.ridge_lambda)
    p.add_argument("--out", required=True, help="components CSV path")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("graph", help="sanctioned-transaction graph per era")
    p.add_argument("--txs", required=True)
    p.add_argument("--sanctions", required=True)
    p.add_argument("--cutoff", type=int, default=metrics.MERGE_CUTOFF_BLOCK)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("sweep", help="paired fixed-vs-exponential regime comparison")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, required=True, help="first seed")
    p.add_argument("--n-seeds", type=int, default=20)
    p.add_argument("--horizon", type=float, default=120_000.0)
    p.add_argument("--fixed-slot", type=float, default=12.0)
    p.add_argument("--empty-slot-prob", type=float, default=0.01)
    p.add_argument("--exp-mean", type=float, default=14.0)
    p.add_argument("--initial-base-fee", type=int, default=1_000_000_000)
    p.add_argument("--fee-floor", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
