"""Per-block and per-day outcome variables of the fee market.

Waiting-time quantiles use linear interpolation between order statistics with
plotting position (k-1)/(n-1) (the "type 7" rule mainstream tooling defaults
to), so golden values are stable.  Moving averages are trailing and undefined
(NaN) over the warm-up prefix.  A block counts as congested when it consumes
strictly more than `cut` of its gas limit; "continued" congestion means k
consecutive congested blocks ending at the block in question.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InputError

MERGE_CUTOFF_BLOCK = 15_537_393

CONGESTION_CUT = 0.95
CONTINUED_K = 5
MA_WINDOWS = (5, 7200)

# canonical mempool arrival rates (tx/s) before and after the merge,
# useful as fixtures when no mempool archive is at hand
ARRIVAL_RATE_PRE_MERGE = 12.079
ARRIVAL_RATE_POST_MERGE = 12.997


class EmptyInput(InputError):
    pass


class ZeroInterval(InputError):
    pass


class ZeroSpan(InputError):
    pass


class EmptyPanel(InputError):
    pass


class WaitingStats(NamedTuple):
    q25: float
    median: float
    q75: float
    iqr: float


def waiting_stats(delays: Sequence[float]) -> WaitingStats:
    """Quartiles and IQR of a delay sample."""
    if len(delays) == 0:
        raise EmptyInput("waiting_stats needs at least one delay")
    q25, med, q75 = quantiles(delays, (0.25, 0.5, 0.75))
    return WaitingStats(q25, med, q75, q75 - q25)


def quantiles(values: Sequence[float], probs: Sequence[float]) -> list[float]:
    """Type-7 quantiles: linear interpolation at h = (n-1) * p."""
    xs = sorted(values)
    n = len(xs)
    if n == 0:
        raise EmptyInput("empty sample")
    out = []
    for p in probs:
        h = (n - 1) * p
        lo = int(math.floor(h))
        hi = min(lo + 1, n - 1)
        out.append(xs[lo] + (h - lo) * (xs[hi] - xs[lo]))
    return out


def network_load(gas_used: Sequence[float], intervals: Sequence[float]) -> np.ndarray:
    """Gas per second of each block."""
    gas_used = np.asarray(gas_used, dtype=float)
    intervals = np.asarray(intervals, dtype=float)
    if np.any(intervals == 0):
        raise ZeroInterval("block interval of zero seconds")
    return gas_used / intervals


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    """Trailing mean over `window` entries; NaN for the first window-1.

    Windows containing a NaN input (e.g. a block with unknown interval) are
    NaN as well rather than silently shrinking.
    """
    if window < 1:
        raise InputError(f"window must be >= 1, got {window}")
    values = np.asarray(values, dtype=float)
    out = np.full(values.shape, np.nan)
    if values.size < window:
        return out
    bad = np.isnan(values)
    cs = np.concatenate(([0.0], np.cumsum(np.where(bad, 0.0, values))))
    cb = np.concatenate(([0], np.cumsum(bad)))
    sums = cs[window:] - cs[:-window]
    nans = cb[window:] - cb[:-window]
    with np.errstate(invalid="ignore"):
        out[window - 1:] = np.where(nans > 0, np.nan, sums / window)
    return out


def congestion_flags(gas_used: Sequence[float], gas_limit: Sequence[float],
                     cut: float = CONGESTION_CUT) -> np.ndarray:
    """True where a block used strictly more than cut * gas_limit."""
    if not 0.0 < cut <= 1.0:
        raise InputError(f"cut must be in (0, 1], got {cut}")
    gas_used = np.asarray(gas_used, dtype=float)
    gas_limit = np.asarray(gas_limit, dtype=float)
    return gas_used > cut * gas_limit


def continued_congestion(flags: Sequence[bool], k: int = CONTINUED_K) -> np.ndarray:
    """True at block n iff blocks n-k+1 .. n are all congested."""
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    flags = np.asarray(flags, dtype=bool)
    out = np.zeros(flags.shape, dtype=bool)
    if flags.size < k:
        return out
    run = 0
    for i, f in enumerate(flags):
        run = run + 1 if f else 0
        out[i] = run >= k
    return out


def congestion_by_cut(gas_used: Sequence[float], gas_limit: Sequence[float],
                      cuts: Sequence[float]) -> list[tuple[float, float]]:
    """Fraction of congested blocks for each cut."""
    gas_used = np.asarray(gas_used, dtype=float)
    if gas_used.size == 0:
        raise EmptyPanel("no blocks")
    return [(cut, float(np.mean(congestion_flags(gas_used, gas_limit, cut))))
            for cut in cuts]


def arrival_rate(tx_count: int, span: float) -> float:
    """Transactions per second over a span."""
    if span <= 0:
        raise ZeroSpan(f"span must be > 0, got {span}")
    return tx_count / span


@dataclass
class DailySeries:
    date: str  # ISO UTC calendar date
    congestion_ratio: float
    continued_congestion_ratio: float


def utc_date(timestamp: float) -> str:
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).strftime("%Y-%m-%d")


def daily_ratios(panel: Sequence["PanelRow"]) -> list[DailySeries]:
    """Intraday fractions of congested and continued-congested blocks."""
    if len(panel) == 0:
        raise EmptyPanel("no panel rows")
    counts: dict[str, list[int]] = {}
    for row in panel:
        day = counts.setdefault(utc_date(row.timestamp), [0, 0, 0])
        day[0] += 1
        day[1] += int(row.congested)
        day[2] += int(row.continued_congested)
    return [DailySeries(date, c / n, cc / n)
            for date, (n, c, cc) in sorted(counts.items())]


# ---------------------------------------------------------------------------
# the per-block panel


@dataclass
class PanelRow:
    """One block's observation, the unit fed into the RDD regressions."""

    number: int
    blockn: int
    merged: bool
    timestamp: float
    interval: float
    gas_used: int
    gas_limit: int
    base_fee: int
    delay_q25: float | None
    delay_median: float | None
    delay_q75: float | None
    delay_iqr: float | None
    gps: float
    gps_ma5: float | None
    gps_ma7200: float | None
    congested: bool
    continued_congested: bool
    tx_count: int
    observed_delay_count: int
    unobserved_delay_count: int
    sanctioned_count: int


PANEL_COLUMNS = [f.name for f in fields(PanelRow)]

_PANEL_INT = {"number", "blockn", "gas_used", "gas_limit", "base_fee",
              "tx_count", "observed_delay_count", "unobserved_delay_count",
              "sanctioned_count"}
_PANEL_BOOL = {"merged", "congested", "continued_congested"}
_PANEL_OPT = {"delay_q25", "delay_median", "delay_q75", "delay_iqr",
              "gps_ma5", "gps_ma7200"}


def _cell(name: str, value) -> str:
    if name in _PANEL_BOOL:
        return "1" if value else "0"
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_panel_csv(panel: Sequence[PanelRow], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PANEL_COLUMNS)
        for row in panel:
            w.writerow([_cell(name, getattr(row, name)) for name in PANEL_COLUMNS])


def read_panel_csv(path: str) -> list[PanelRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(PANEL_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise InputError(f"{path}: missing panel columns {sorted(missing)}")
        for rec in reader:
            kwargs = {}
            for name in PANEL_COLUMNS:
                raw = rec[name]
                if name in _PANEL_BOOL:
                    kwargs[name] = raw == "1"
                elif name in _PANEL_INT:
                    kwargs[name] = int(raw)
                elif name in _PANEL_OPT:
                    kwargs[name] = None if raw == "" else float(raw)
                else:
                    kwargs[name] = math.nan if raw == "" else float(raw)
            rows.append(PanelRow(**kwargs))
    return rows


def panel_summary(panel: Sequence[PanelRow]) -> dict:
    """Headline numbers for the CLI: rates, ratios, load quantiles."""
    if not panel:
        raise EmptyPanel("no panel rows")
    span = panel[-1].timestamp - panel[0].timestamp + panel[0].interval
    observed = [row for row in panel if row.delay_q75 is not None]
    gps = [row.gps for row in panel]
    out = {
        "blocks": len(panel),
        "arrival_rate": arrival_rate(sum(r.tx_count for r in panel), span) if span > 0 else None,
        "congestion_ratio": float(np.mean([r.congested for r in panel])),
        "continued_congestion_ratio": float(np.mean([r.continued_congested for r in panel])),
        "gps_mean": float(np.mean(gps)),
        "gps_q75": quantiles(gps, (0.75,))[0],
        "observed_delay_blocks": len(observed),
        "unobserved_delay_total": int(sum(r.unobserved_delay_count for r in panel)),
        "sanctioned_total": int(sum(r.sanctioned_count for r in panel)),
    }
    if observed:
        out["delay_q75_mean"] = float(np.mean([r.delay_q75 for r in observed]))
        out["delay_iqr_mean"] = float(np.mean([r.delay_iqr for r in observed]))
    return out
