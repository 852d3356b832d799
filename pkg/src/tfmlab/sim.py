"""Discrete-event mempool simulator: submit, wait, get included in a block.

Block production runs under one of two interval regimes: exponential gaps
(the pre-merge proof-of-work cadence, ~14 s mean) or fixed slots with a small
empty-slot probability (the post-merge 12 s cadence, where a missed slot shows
up as a 24 s or 36 s gap).  Inside the simulator the base fee is integer wei,
floor-rounded from the continuous update law each block.

Private transactions take the same inclusion path and burn the same gas, but
they never appear in the exported delay data: their waiting time is
unobserved, exactly like traffic that reaches builders without touching the
public mempool.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._packing_py import MAX_FEE_WEI
from .errors import InputError
from .fees import FeeParams

# synthetic sanctioned address book for exported traces; ingest round trips it
SANCTIONED_ADDRESS_POOL = tuple(
    f"0x{'f' * 32}{k:08x}" for k in range(4)
)


class ConfigInvalid(InputError):
    """SimConfig violates its invariants."""


@dataclass(slots=True)
class Transaction:
    """One submission; mined_* stay None while it waits in the pool."""

    id: int
    submit_time: float
    gas: int
    valuation: float  # willingness to pay, wei/gas, tip-inclusive
    tip: float = 0.0  # max priority fee cap, wei/gas
    private: bool = False
    sanctioned: bool = False
    mined_block: int | None = None
    mined_time: float | None = None

    @property
    def waiting_time(self) -> float | None:
        if self.mined_time is None:
            return None
        return self.mined_time - self.submit_time


@dataclass(frozen=True)
class IntervalRegime:
    """Block interval law: exponential(mean_seconds) or fixed(slot, empty_prob)."""

    kind: str
    mean_seconds: float = 0.0
    slot_seconds: float = 0.0
    empty_slot_prob: float = 0.0

    @classmethod
    def exponential(cls, mean_seconds: float) -> "IntervalRegime":
        if mean_seconds <= 0:
            raise ConfigInvalid(f"mean_seconds must be > 0, got {mean_seconds}")
        return cls(kind="exponential", mean_seconds=mean_seconds)

    @classmethod
    def fixed(cls, slot_seconds: float, empty_slot_prob: float = 0.0) -> "IntervalRegime":
        if slot_seconds <= 0:
            raise ConfigInvalid(f"slot_seconds must be > 0, got {slot_seconds}")
        if not 0.0 <= empty_slot_prob < 1.0:
            raise ConfigInvalid(f"empty_slot_prob must be in [0, 1), got {empty_slot_prob}")
        return cls(kind="fixed", slot_seconds=slot_seconds, empty_slot_prob=empty_slot_prob)

    @property
    def mean_interval(self) -> float:
        if self.kind == "exponential":
            return self.mean_seconds
        return self.slot_seconds / (1.0 - self.empty_slot_prob)

    @classmethod
    def from_json(cls, obj: dict) -> "IntervalRegime":
        kind = obj.get("kind")
        if kind == "exponential":
            return cls.exponential(obj["mean_seconds"])
        if kind == "fixed":
            return cls.fixed(obj["slot_seconds"], obj.get("empty_slot_prob", 0.0))
        raise ConfigInvalid(f"unknown regime kind {kind!r}")

    def to_json(self) -> dict:
        if self.kind == "exponential":
            return {"kind": "exponential", "mean_seconds": self.mean_seconds}
        return {"kind": "fixed", "slot_seconds": self.slot_seconds,
                "empty_slot_prob": self.empty_slot_prob}


def sample_interval(regime: IntervalRegime, rng: np.random.Generator) -> float:
    """One block gap; fixed regimes return slot * k with k-1 geometric misses."""
    if regime.kind == "exponential":
        return float(rng.exponential(regime.mean_seconds))
    p = regime.empty_slot_prob
    if p == 0.0:
        return regime.slot_seconds
    u = max(rng.random(), 1e-300)
    if u >= p:
        return regime.slot_seconds
    k = 1 + int(math.floor(math.log(u) / math.log(p)))
    return regime.slot_seconds * k


@dataclass(frozen=True)
class SimConfig:
    regime: IntervalRegime
    fee: FeeParams = field(default_factory=FeeParams)
    initial_base_fee: int = 1_000_000_000  # 1 gwei
    horizon: float = 3600.0
    seed: int = 0
    start_number: int = 1

    def validate(self) -> None:
        if self.horizon <= 0:
            raise ConfigInvalid(f"horizon must be > 0, got {self.horizon}")
        if self.initial_base_fee < self.fee.fee_floor:
            raise ConfigInvalid("initial_base_fee below the fee floor")
        if self.fee.fee_floor < 1:
            raise ConfigInvalid("integer-wei simulation requires fee_floor >= 1")
        if self.start_number < 0:
            raise ConfigInvalid(f"start_number must be >= 0, got {self.start_number}")

    def to_json(self) -> dict:
        return {
            "regime": self.regime.to_json(),
            "fee": {
                "gas_limit": self.fee.gas_limit,
                "gas_target": self.fee.gas_target,
                "adjustment_quotient": self.fee.adjustment_quotient,
                "fee_floor": self.fee.fee_floor,
            },
            "initial_base_fee": self.initial_base_fee,
            "horizon": self.horizon,
            "seed": self.seed,
            "start_number": self.start_number,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SimConfig":
        try:
            fee_obj = obj.get("fee", {})
            return cls(
                regime=IntervalRegime.from_json(obj["regime"]),
                fee=FeeParams(
                    gas_limit=fee_obj.get("gas_limit", FeeParams.gas_limit),
                    gas_target=fee_obj.get("gas_target", FeeParams.gas_target),
                    adjustment_quotient=fee_obj.get("adjustment_quotient",
                                                    FeeParams.adjustment_quotient),
                    fee_floor=fee_obj.get("fee_floor", FeeParams.fee_floor),
                ),
                initial_base_fee=obj.get("initial_base_fee", 1_000_000_000),
                horizon=obj["horizon"],
                seed=obj["seed"],
                start_number=obj.get("start_number", 1),
            )
        except KeyError as exc:
            raise ConfigInvalid(f"simulation config missing key {exc}") from exc


@dataclass
class Block:
    number: int
    timestamp: float
    interval: float
    gas_limit: int
    gas_used: int
    base_fee: int
    tx_ids: list[int]

    @property
    def transaction_count(self) -> int:
        return len(self.tx_ids)


@dataclass
class SimTrace:
    blocks: list[Block]
    transactions: list[Transaction]
    config: SimConfig

    @property
    def mined(self) -> list[Transaction]:
        return [tx for tx in self.transactions if tx.mined_block is not None]

    @property
    def pending(self) -> list[Transaction]:
        return [tx for tx in self.transactions if tx.mined_block is None]


def effective_tip(tx: Transaction, base_fee: float) -> float:
    return min(tx.tip, tx.valuation - base_fee)


def include_transactions(pool, base_fee: float, gas_limit: int):
    """Reference single-block inclusion: (included, remaining) from a pool.

    Eligible transactions (valuation >= base_fee) are taken in effective-tip
    order, ties by submit time then id, packing until the next one would not
    fit.  The simulator's kernel reproduces exactly this order incrementally;
    this function is the plain-sort specification of it.
    """
    pool = list(pool)
    eligible = [tx for tx in pool if tx.valuation >= base_fee]
    eligible.sort(key=lambda tx: (-effective_tip(tx, base_fee), tx.submit_time, tx.id))
    included = []
    remaining_gas = gas_limit
    for tx in eligible:
        if tx.gas > remaining_gas:
            break
        included.append(tx)
        remaining_gas -= tx.gas
    included_ids = {tx.id for tx in included}
    remaining = [tx for tx in pool if tx.id not in included_ids]
    return included, remaining


def next_int_base_fee(base_fee: int, gas_used: int, fee: FeeParams) -> int:
    """Integer-wei step of the update law, exactly as the kernels compute it."""
    factor = 1.0 + (gas_used - fee.gas_target) / (fee.adjustment_quotient * fee.gas_target)
    nb = math.floor(base_fee * factor)
    floor_fee = math.ceil(fee.fee_floor)
    if nb < floor_fee:
        return floor_fee
    return min(nb, MAX_FEE_WEI)


def _block_times(config: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(config.seed)
    times = []
    intervals = []
    t = 0.0
    while True:
        gap = sample_interval(config.regime, rng)
        t += gap
        if t > config.horizon:
            break
        times.append(t)
        intervals.append(gap)
    return np.asarray(times, dtype=np.float64), np.asarray(intervals, dtype=np.float64)


def _pack_run_reference(config: SimConfig, txs: list[Transaction], times: np.ndarray):
    """Per-block reference packing; same outputs as kernels.pack_run."""
    index_of = {tx.id: i for i, tx in enumerate(txs)}
    mined_block = np.full(len(txs), -1, dtype=np.int64)
    gas_used = np.zeros(times.size, dtype=np.int64)
    base_fee = np.zeros(times.size, dtype=np.int64)
    included_all: list[int] = []
    block_ptr = np.zeros(times.size + 1, dtype=np.int64)

    pool: list[Transaction] = []
    b = config.initial_base_fee
    next_arrival = 0
    for j, t in enumerate(times):
        while next_arrival < len(txs) and txs[next_arrival].submit_time <= t:
            pool.append(txs[next_arrival])
            next_arrival += 1
        taken, pool = include_transactions(pool, b, config.fee.gas_limit)
        used = 0
        for tx in taken:
            i = index_of[tx.id]
            mined_block[i] = j
            included_all.append(i)
            used += tx.gas
        gas_used[j] = used
        base_fee[j] = b
        block_ptr[j + 1] = len(included_all)
        b = next_int_base_fee(b, used, config.fee)
    return mined_block, gas_used, base_fee, np.asarray(included_all, dtype=np.int64), block_ptr


def run(config: SimConfig, arrivals: list[Transaction],
        backend: str | None = None) -> SimTrace:
    """Simulate the full horizon and return the trace.

    `arrivals` must be sorted by submit_time (ties by id) and is not mutated;
    the returned trace carries copies with mined_block/mined_time filled in.
    Deterministic given (config, arrivals): block times come from config.seed,
    inclusion is a pure function of the stream.
    """
    config.validate()
    n = len(arrivals)
    submit = np.empty(n, dtype=np.float64)
    gas = np.empty(n, dtype=np.int64)
    valuation = np.empty(n, dtype=np.float64)
    ids = np.empty(n, dtype=np.int64)
    txs = []
    tips = set()
    for i, tx in enumerate(arrivals):
        submit[i] = tx.submit_time
        gas[i] = tx.gas
        valuation[i] = tx.valuation
        ids[i] = tx.id
        tips.add(tx.tip)
        txs.append(Transaction(tx.id, tx.submit_time, tx.gas, tx.valuation,
                               tx.tip, tx.private, tx.sanctioned))
    if n:
        d_submit = np.diff(submit)
        if np.any(d_submit < 0) or np.any((d_submit == 0) & (np.diff(ids) <= 0)):
            raise InputError("arrivals must be sorted by (submit_time, id)")
        if int(gas.max()) > config.fee.gas_limit:
            bad = int(ids[int(np.argmax(gas))])
            raise InputError(f"transaction {bad} gas exceeds the block gas limit")

    times, intervals = _block_times(config)

    if len(tips) > 1:
        # mixed tip caps fall outside the two-heap kernel's ordering trick;
        # pack block by block with the reference sort instead
        mined_block, gas_used, base_fee, included, block_ptr = _pack_run_reference(
            config, txs, times)
    else:
        max_tip = tips.pop() if tips else 0.0
        mined_block, gas_used, base_fee, included, block_ptr = kernels.pack_run(
            submit, gas, valuation, max_tip, times, config.fee.gas_limit,
            config.fee.gas_target, config.fee.adjustment_quotient,
            math.ceil(config.fee.fee_floor), config.initial_base_fee,
            backend=backend)

    blocks = []
    included_l = included.tolist()
    ptr_l = block_ptr.tolist()
    times_l = times.tolist()
    gas_used_l = gas_used.tolist()
    base_fee_l = base_fee.tolist()
    intervals_l = intervals.tolist()
    for j in range(times.size):
        blocks.append(Block(
            number=config.start_number + j,
            timestamp=times_l[j],
            interval=intervals_l[j],
            gas_limit=config.fee.gas_limit,
            gas_used=gas_used_l[j],
            base_fee=base_fee_l[j],
            tx_ids=[txs[i].id for i in included_l[ptr_l[j]:ptr_l[j + 1]]],
        ))
    for i, j in enumerate(mined_block.tolist()):
        if j >= 0:
            tx = txs[i]
            tx.mined_block = config.start_number + j
            tx.mined_time = times_l[j]
    return SimTrace(blocks=blocks, transactions=txs, config=config)


# ---------------------------------------------------------------------------
# trace export; the CSVs use the on-chain data dictionary column names so the
# ingest path treats simulated and real exports identically


def tx_hash(tx_id: int) -> str:
    return f"0x{tx_id:064x}"


def tx_addresses(tx: Transaction) -> tuple[str, str]:
    """Synthetic (from, to) addresses; sanctioned traffic hits the fixed pool."""
    sender = f"0x{2 * tx.id + 1:040x}"
    if tx.sanctioned:
        receiver = SANCTIONED_ADDRESS_POOL[tx.id % len(SANCTIONED_ADDRESS_POOL)]
    else:
        receiver = f"0x{2 * tx.id + 2:040x}"
    return sender, receiver


def _fmt(x: float) -> str:
    """Full-precision float formatting; integers stay integral-looking."""
    if x == int(x) and abs(x) < 2 ** 53:
        return str(int(x))
    return repr(x)


def export_trace(trace: SimTrace, out_dir: str) -> dict[str, str]:
    """Write blocks/transactions/delays/sanctions CSVs; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, f"{name}.csv")
             for name in ("blocks", "transactions", "delays", "sanctions")}

    with open(paths["blocks"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["number", "gas_limit", "gas_used", "transaction_count",
                    "timestamp", "base_fee_per_gas"])
        for b in trace.blocks:
            w.writerow([b.number, b.gas_limit, b.gas_used, b.transaction_count,
                        _fmt(b.timestamp), b.base_fee])

    by_id = {tx.id: tx for tx in trace.transactions}
    with open(paths["transactions"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block_number", "hash", "from_address", "to_address"])
        for b in trace.blocks:
            for tid in b.tx_ids:
                tx = by_id[tid]
                sender, receiver = tx_addresses(tx)
                w.writerow([b.number, tx_hash(tid), sender, receiver])

    with open(paths["delays"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["included_in_block_num", "delay", "hash"])
        for b in trace.blocks:
            for tid in b.tx_ids:
                tx = by_id[tid]
                if tx.private:
                    continue  # never seen in the public mempool
                w.writerow([b.number, _fmt(tx.waiting_time), tx_hash(tid)])

    with open(paths["sanctions"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["address"])
        for addr in SANCTIONED_ADDRESS_POOL:
            w.writerow([addr])
    return paths
