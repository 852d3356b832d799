"""Paired regime comparison over seeded scenario runs.

Each seed draws one arrival stream which both interval regimes consume, so a
pair differs only in block production.  Per run we record the headline outcome
variables (waiting-time q75 and IQR over observed delays, congestion ratios,
peak 5-block load) and compare regimes with one-sided sign tests across seeds.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import metrics
from .demand import ArrivalProcess, SurgeSchedule, sample_arrivals
from .fees import FeeParams
from .sim import IntervalRegime, SimConfig, SimTrace, run

SWEEP_METRICS = ("wait_q75", "wait_iqr", "congestion_ratio",
                 "continued_congestion_ratio", "max_ma5_gps")


@dataclass(frozen=True)
class SweepSpec:
    process: ArrivalProcess
    surges: SurgeSchedule
    regimes: tuple[tuple[str, IntervalRegime], ...]
    fee: FeeParams
    initial_base_fee: int
    horizon: float
    seeds: tuple[int, ...]
    cut: float = metrics.CONGESTION_CUT
    continued_k: int = metrics.CONTINUED_K


def trace_metrics(trace: SimTrace, cut: float = metrics.CONGESTION_CUT,
                  continued_k: int = metrics.CONTINUED_K) -> dict[str, float]:
    """Outcome variables of one run, straight from the trace."""
    delays = [tx.waiting_time for tx in trace.transactions
              if tx.mined_block is not None and not tx.private]
    if delays:
        q25, _, q75 = metrics.quantiles(delays, (0.25, 0.5, 0.75))
        wait_q75, wait_iqr = q75, q75 - q25
    else:
        wait_q75 = wait_iqr = float("nan")
    gas_used = [b.gas_used for b in trace.blocks]
    gas_limit = [b.gas_limit for b in trace.blocks]
    intervals = [b.interval for b in trace.blocks]
    congested = metrics.congestion_flags(gas_used, gas_limit, cut)
    continued = metrics.continued_congestion(congested, continued_k)
    gps = metrics.network_load(gas_used, intervals)
    ma5 = metrics.moving_average(gps, 5)
    finite = ma5[~np.isnan(ma5)]
    return {
        "blocks": float(len(trace.blocks)),
        "mined": float(sum(1 for tx in trace.transactions if tx.mined_block is not None)),
        "wait_q75": wait_q75,
        "wait_iqr": wait_iqr,
        "congestion_ratio": float(np.mean(congested)) if congested.size else float("nan"),
        "continued_congestion_ratio": float(np.mean(continued)) if continued.size else float("nan"),
        "max_ma5_gps": float(np.max(finite)) if finite.size else float("nan"),
    }


def _run_pair(spec: SweepSpec, seed: int) -> list[dict]:
    """One arrival stream, every regime; the paired unit of the sweep."""
    arrivals = sample_arrivals(spec.process, spec.surges, spec.horizon, seed)
    rows = []
    for name, regime in spec.regimes:
        config = SimConfig(regime=regime, fee=spec.fee,
                           initial_base_fee=spec.initial_base_fee,
                           horizon=spec.horizon, seed=seed)
        trace = run(config, arrivals)
        row = {"regime": name, "seed": seed}
        row.update(trace_metrics(trace, spec.cut, spec.continued_k))
        rows.append(row)
    return rows


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[dict]:
    """All (regime, seed) cells; rows sorted by (regime, seed)."""
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_pair, [spec] * len(spec.seeds), spec.seeds))
    else:
        batches = [_run_pair(spec, seed) for seed in spec.seeds]
    rows = [row for batch in batches for row in batch]
    return sorted(rows, key=lambda r: (r["regime"], r["seed"]))


def compare_regimes(rows: list[dict], better: str, worse: str) -> dict[str, dict]:
    """One-sided sign tests: is `better` lower than `worse` on each metric?"""
    from .stats import sign_test_p

    by_cell = {(r["regime"], r["seed"]): r for r in rows}
    seeds = sorted({r["seed"] for r in rows})
    out = {}
    for metric in SWEEP_METRICS:
        wins = 0
        trials = 0
        for seed in seeds:
            a = by_cell.get((better, seed))
            b = by_cell.get((worse, seed))
            if a is None or b is None:
                continue
            trials += 1
            if a[metric] < b[metric]:
                wins += 1
        out[metric] = {
            "wins": wins,
            "trials": trials,
            "p_value": sign_test_p(wins, trials) if trials else float("nan"),
            f"mean_{better}": float(np.mean([by_cell[(better, s)][metric] for s in seeds
                                             if (better, s) in by_cell])),
            f"mean_{worse}": float(np.mean([by_cell[(worse, s)][metric] for s in seeds
                                            if (worse, s) in by_cell])),
        }
    return out


def write_sweep_csv(rows: list[dict], path: str) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)
