"""Pure-Python block-packing kernel for the mempool simulator.

This is the fallback twin of the compiled kernel in _packing_c.pyx; both must
produce bit-identical output (a test enforces it).  The per-block inclusion
order is: effective tip = min(max_tip, valuation - base_fee) descending, ties
by submit time then id ascending.  With a uniform max_tip that ordering splits
the pool into a cap group (valuation >= fee + max_tip, FIFO by arrival index)
and a below-cap group ordered by valuation, which two lazily-rebalanced heaps
serve in O(log n) per transaction instead of a per-block sort.

Fees are integer wei inside the simulator: the continuous update is evaluated
in double precision and floored, never below fee_floor.
"""

from __future__ import annotations

import math
from heapq import heappop, heappush

import numpy as np

# defensive cap so the int64 backend can never overflow on runaway fees
MAX_FEE_WEI = 2 ** 62


def pack_run(submit, gas, valuation, max_tip, block_times,
             gas_limit, gas_target, quotient, fee_floor, initial_fee):
    """Simulate inclusion over all blocks; see kernels.pack_run for the contract."""
    submit_l = [float(x) for x in submit]
    gas_l = [int(x) for x in gas]
    val_l = [float(x) for x in valuation]
    times_l = [float(x) for x in block_times]
    cap = float(max_tip)
    limit = int(gas_limit)
    target = int(gas_target)
    q = int(quotient)
    floor_fee = int(fee_floor)

    n = len(submit_l)
    m = len(times_l)
    mined_block = [-1] * n
    gas_used = [0] * m
    base_fee = [0] * m
    included = []
    block_ptr = [0] * (m + 1)

    heap_a: list[int] = []          # cap group, min-heap by arrival index
    heap_b: list[tuple[float, int]] = []  # (-valuation, index)
    b = int(initial_fee)
    next_arrival = 0
    denom = q * target

    for j in range(m):
        t = times_l[j]
        thr = float(b) + cap
        while next_arrival < n and submit_l[next_arrival] <= t:
            i = next_arrival
            if val_l[i] >= thr:
                heappush(heap_a, i)
            else:
                heappush(heap_b, (-val_l[i], i))
            next_arrival += 1
        # fee dropped since earlier blocks: promote newly capped transactions
        while heap_b and -heap_b[0][0] >= thr:
            _, i = heappop(heap_b)
            heappush(heap_a, i)

        remaining = limit
        fee_f = float(b)
        while True:
            pick = -1
            from_a = False
            while heap_a:
                i = heap_a[0]
                if val_l[i] >= thr:
                    pick = i
                    from_a = True
                    break
                # fee rose since admission: demote below the cap group
                heappop(heap_a)
                heappush(heap_b, (-val_l[i], i))
            if pick < 0 and heap_b:
                neg_v, i = heap_b[0]
                if -neg_v >= fee_f:
                    pick = i
            if pick < 0 or gas_l[pick] > remaining:
                break
            if from_a:
                heappop(heap_a)
            else:
                heappop(heap_b)
            mined_block[pick] = j
            included.append(pick)
            remaining -= gas_l[pick]

        used = limit - remaining
        gas_used[j] = used
        base_fee[j] = b
        block_ptr[j + 1] = len(included)
        factor = 1.0 + (used - target) / denom
        nxt = float(b) * factor
        nb = math.floor(nxt)
        if nb < floor_fee:
            nb = floor_fee
        elif nb > MAX_FEE_WEI:
            nb = MAX_FEE_WEI
        b = nb

    return (np.asarray(mined_block, dtype=np.int64),
            np.asarray(gas_used, dtype=np.int64),
            np.asarray(base_fee, dtype=np.int64),
            np.asarray(included, dtype=np.int64),
            np.asarray(block_ptr, dtype=np.int64))
