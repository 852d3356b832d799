"""Loading and joining the three data sources into the per-block panel.

Inputs are CSV exports: block headers, transaction endpoints, mempool delays,
and a sanction address list.  Column names follow the chain data dictionary
(number, gas_limit, gas_used, transaction_count, timestamp, base_fee_per_gas;
block_number, hash, from_address, to_address; included_in_block_num, delay,
hash; address), which is also exactly what the simulator exports, so real and
simulated traces take the same path.

Loaders validate row by row.  By default invalid rows are collected with their
line numbers and returned alongside the good records; strict=True raises
MalformedRow at the first offence.  Negative delays (clock skew in real
exports) are rejected rows, never clamped.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import metrics
from .errors import InputError
from .metrics import PanelRow

log = logging.getLogger(__name__)


class MalformedRow(InputError):
    pass


class MissingColumn(InputError):
    pass


class NonMonotoneBlocks(InputError):
    pass


@dataclass(frozen=True)
class BlockRecord:
    number: int
    gas_limit: int
    gas_used: int
    transaction_count: int
    timestamp: float
    base_fee_per_gas: int


@dataclass(frozen=True)
class TxRecord:
    block_number: int
    hash: str
    from_address: str
    to_address: str


@dataclass(frozen=True)
class DelayRecord:
    included_in_block_num: int
    delay: float
    hash: str


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str


@dataclass
class LoadResult:
    records: list
    rejects: list[Reject]


def _is_hex_id(s: str, length: int) -> bool:
    if len(s) != length or not s.startswith("0x"):
        return False
    try:
        int(s[2:], 16)
        return True
    except ValueError:
        return False


def _load(path: str, columns: Sequence[str], parse, strict: bool) -> LoadResult:
    records: list = []
    rejects: list[Reject] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        have = reader.fieldnames or ()
        missing = [c for c in columns if c not in have]
        if missing:
            raise MissingColumn(f"{path}: missing columns {missing}")
        for line, rec in enumerate(reader, start=2):
            try:
                records.append(parse(rec))
            except (ValueError, TypeError) as exc:
                if strict:
                    raise MalformedRow(f"{path}:{line}: {exc}") from exc
                rejects.append(Reject(line, str(exc)))
    return LoadResult(records, rejects)


def load_blocks(path: str, strict: bool = False) -> LoadResult:
    def parse(rec) -> BlockRecord:
        row = BlockRecord(
            number=int(rec["number"]),
            gas_limit=int(rec["gas_limit"]),
            gas_used=int(rec["gas_used"]),
            transaction_count=int(rec["transaction_count"]),
            timestamp=float(rec["timestamp"]),
            base_fee_per_gas=int(rec["base_fee_per_gas"]),
        )
        if row.gas_used > row.gas_limit:
            raise ValueError(f"gas_used {row.gas_used} exceeds gas_limit {row.gas_limit}")
        if row.gas_used < 0 or row.gas_limit <= 0:
            raise ValueError("negative gas fields")
        if row.transaction_count < 0:
            raise ValueError("negative transaction_count")
        if row.timestamp <= 0:
            raise ValueError(f"timestamp must be > 0, got {row.timestamp}")
        if row.base_fee_per_gas < 0:
            raise ValueError("negative base fee")
        return row

    return _load(path, ["number", "gas_limit", "gas_used", "transaction_count",
                        "timestamp", "base_fee_per_gas"], parse, strict)


def load_txs(path: str, strict: bool = False) -> LoadResult:
    def parse(rec) -> TxRecord:
        row = TxRecord(
            block_number=int(rec["block_number"]),
            hash=rec["hash"].lower(),
            from_address=rec["from_address"].lower(),
            to_address=rec["to_address"].lower(),
        )
        if not _is_hex_id(row.hash, 66):
            raise ValueError(f"bad transaction hash {rec['hash']!r}")
        for addr in (row.from_address, row.to_address):
            if not _is_hex_id(addr, 42):
                raise ValueError(f"bad address {addr!r}")
        return row

    return _load(path, ["block_number", "hash", "from_address", "to_address"],
                 parse, strict)


def load_delays(path: str, strict: bool = False) -> LoadResult:
    def parse(rec) -> DelayRecord:
        row = DelayRecord(
            included_in_block_num=int(rec["included_in_block_num"]),
            delay=float(rec["delay"]),
            hash=rec["hash"].lower(),
        )
        if not math.isfinite(row.delay) or row.delay < 0:
            raise ValueError(f"negative or non-finite delay {row.delay}")
        if not _is_hex_id(row.hash, 66):
            raise ValueError(f"bad transaction hash {rec['hash']!r}")
        return row

    return _load(path, ["included_in_block_num", "delay", "hash"], parse, strict)


def load_sanctions(path: str, strict: bool = False) -> LoadResult:
    seen: set[str] = set()

    def parse(rec) -> str:
        addr = rec["address"].strip().lower()
        if not _is_hex_id(addr, 42):
            raise ValueError(f"bad address {rec['address']!r}")
        return addr

    result = _load(path, ["address"], parse, strict)
    deduped = [a for a in result.records if not (a in seen or seen.add(a))]
    result.records = deduped
    return result


def join_panel(blocks: Sequence[BlockRecord],
               txs: Sequence[TxRecord] | None,
               delays: Sequence[DelayRecord],
               sanctions: Iterable[str],
               cutoff_block: int = metrics.MERGE_CUTOFF_BLOCK,
               first_interval: float | None = None,
               cut: float = metrics.CONGESTION_CUT,
               continued_k: int = metrics.CONTINUED_K) -> list[PanelRow]:
    """Merge the sources into one PanelRow per block (total on blocks).

    Delay records attach to blocks by included_in_block_num; transactions
    without a delay record count as unobserved.  A transaction is sanctioned
    when either endpoint is on the list.  The first block has no predecessor
    timestamp, so its interval is `first_interval` (NaN when omitted), which
    keeps the join reproducible for any regime.

    Delay records pointing at unknown blocks, or (when a transaction table is
    given) at unknown hashes, are dropped and the drop count is logged.
    """
    if not blocks:
        raise metrics.EmptyPanel("no blocks to join")
    ordered = sorted(blocks, key=lambda b: b.number)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.number == prev.number:
            raise NonMonotoneBlocks(f"duplicate block number {cur.number}")
        if cur.timestamp <= prev.timestamp:
            raise NonMonotoneBlocks(
                f"timestamps not strictly increasing at block {cur.number}")

    numbers = {b.number for b in ordered}
    known_hashes = {t.hash for t in txs} if txs is not None else None
    sanction_set = frozenset(a.lower() for a in sanctions)

    delay_by_block: dict[int, list[float]] = {}
    dropped = 0
    for d in delays:
        if d.included_in_block_num not in numbers or (
                known_hashes is not None and d.hash not in known_hashes):
            dropped += 1
            continue
        delay_by_block.setdefault(d.included_in_block_num, []).append(d.delay)
    if dropped:
        log.info("join_panel: dropped %d delay records without a matching block/hash",
                 dropped)

    sanctioned_by_block: dict[int, int] = {}
    if txs is not None:
        for t in txs:
            if t.from_address in sanction_set or t.to_address in sanction_set:
                sanctioned_by_block[t.block_number] = \
                    sanctioned_by_block.get(t.block_number, 0) + 1

    intervals = [float("nan") if first_interval is None else float(first_interval)]
    intervals += [cur.timestamp - prev.timestamp
                  for prev, cur in zip(ordered, ordered[1:])]

    if any(i == 0 for i in intervals):
        raise metrics.ZeroInterval("two blocks share a timestamp")
    gas_used = [b.gas_used for b in ordered]
    gas_limit = [b.gas_limit for b in ordered]
    gps = [g / i if i == i else float("nan") for g, i in zip(gas_used, intervals)]
    gps_ma5 = metrics.moving_average(gps, 5)
    gps_ma7200 = metrics.moving_average(gps, 7200)
    congested = metrics.congestion_flags(gas_used, gas_limit, cut)
    continued = metrics.continued_congestion(congested, continued_k)

    panel = []
    for i, b in enumerate(ordered):
        obs = delay_by_block.get(b.number, [])
        if obs:
            stats = metrics.waiting_stats(obs)
            q25, med, q75, iqr = stats
        else:
            q25 = med = q75 = iqr = None
        panel.append(PanelRow(
            number=b.number,
            blockn=b.number - cutoff_block,
            merged=b.number >= cutoff_block,
            timestamp=b.timestamp,
            interval=intervals[i],
            gas_used=b.gas_used,
            gas_limit=b.gas_limit,
            base_fee=b.base_fee_per_gas,
            delay_q25=q25,
            delay_median=med,
            delay_q75=q75,
            delay_iqr=iqr,
            gps=gps[i],
            gps_ma5=None if math.isnan(gps_ma5[i]) else float(gps_ma5[i]),
            gps_ma7200=None if math.isnan(gps_ma7200[i]) else float(gps_ma7200[i]),
            congested=bool(congested[i]),
            continued_congested=bool(continued[i]),
            tx_count=b.transaction_count,
            observed_delay_count=len(obs),
            unobserved_delay_count=b.transaction_count - len(obs),
            sanctioned_count=sanctioned_by_block.get(b.number, 0),
        ))
    return panel


def panel_from_trace(trace, cutoff_block: int = metrics.MERGE_CUTOFF_BLOCK,
                     first_interval: float | None = None,
                     cut: float = metrics.CONGESTION_CUT,
                     continued_k: int = metrics.CONTINUED_K) -> list[PanelRow]:
    """Panel straight from a SimTrace, via the same join as CSV ingestion.

    Exporting the trace and re-ingesting the files reproduces this panel bit
    for bit; this is the round-trip property the tests pin down.
    """
    from .sim import tx_addresses, tx_hash, SANCTIONED_ADDRESS_POOL

    by_id = {tx.id: tx for tx in trace.transactions}
    blocks = []
    txs = []
    delays = []
    for b in trace.blocks:
        blocks.append(BlockRecord(
            number=b.number,
            gas_limit=b.gas_limit,
            gas_used=b.gas_used,
            transaction_count=b.transaction_count,
            timestamp=b.timestamp,
            base_fee_per_gas=b.base_fee,
        ))
        for tid in b.tx_ids:
            tx = by_id[tid]
            sender, receiver = tx_addresses(tx)
            txs.append(TxRecord(block_number=b.number, hash=tx_hash(tid),
                                from_address=sender, to_address=receiver))
            if not tx.private:
                delays.append(DelayRecord(included_in_block_num=b.number,
                                          delay=tx.waiting_time, hash=tx_hash(tid)))
    return join_panel(blocks, txs, delays, SANCTIONED_ADDRESS_POOL,
                      cutoff_block=cutoff_block, first_interval=first_interval,
                      cut=cut, continued_k=continued_k)
