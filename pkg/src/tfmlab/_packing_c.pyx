# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled block-packing kernel; bit-identical twin of _packing_py.

Two binary heaps over preallocated index arrays replace the per-block sort:
a FIFO heap for transactions whose valuation clears fee + max_tip (they all
pay the full tip, so arrival order decides) and a valuation-ordered heap for
the rest.  Entries migrate lazily when the base fee moves across them.
"""

from libc.math cimport floor
from libc.stdlib cimport free, malloc

import numpy as np

cdef long long MAX_FEE_WEI = 2 ** 62


cdef struct BHeap:
    double *val      # sort key: valuation (max-heap), ties by low index
    long long *idx
    Py_ssize_t size


cdef inline bint _b_before(double v1, long long i1, double v2, long long i2) nogil:
    # priority: higher valuation first, then lower index
    if v1 != v2:
        return v1 > v2
    return i1 < i2


cdef inline void _b_push(BHeap *h, double v, long long i) nogil:
    cdef Py_ssize_t c = h.size
    cdef Py_ssize_t p
    h.size += 1
    while c > 0:
        p = (c - 1) >> 1
        if _b_before(v, i, h.val[p], h.idx[p]):
            h.val[c] = h.val[p]
            h.idx[c] = h.idx[p]
            c = p
        else:
            break
    h.val[c] = v
    h.idx[c] = i


cdef inline void _b_pop(BHeap *h) nogil:
    cdef double v
    cdef long long i
    cdef Py_ssize_t c = 0, child
    h.size -= 1
    if h.size == 0:
        return
    v = h.val[h.size]
    i = h.idx[h.size]
    while True:
        child = 2 * c + 1
        if child >= h.size:
            break
        if child + 1 < h.size and _b_before(h.val[child + 1], h.idx[child + 1],
                                            h.val[child], h.idx[child]):
            child += 1
        if _b_before(h.val[child], h.idx[child], v, i):
            h.val[c] = h.val[child]
            h.idx[c] = h.idx[child]
            c = child
        else:
            break
    h.val[c] = v
    h.idx[c] = i


cdef inline void _a_push(long long *heap, Py_ssize_t *size, long long i) nogil:
    cdef Py_ssize_t c = size[0]
    cdef Py_ssize_t p
    size[0] += 1
    while c > 0:
        p = (c - 1) >> 1
        if i < heap[p]:
            heap[c] = heap[p]
            c = p
        else:
            break
    heap[c] = i


cdef inline void _a_pop(long long *heap, Py_ssize_t *size) nogil:
    cdef long long v
    cdef Py_ssize_t c = 0, child
    size[0] -= 1
    if size[0] == 0:
        return
    v = heap[size[0]]
    while True:
        child = 2 * c + 1
        if child >= size[0]:
            break
        if child + 1 < size[0] and heap[child + 1] < heap[child]:
            child += 1
        if heap[child] < v:
            heap[c] = heap[child]
            c = child
        else:
            break
    heap[c] = v


def pack_run(double[::1] submit, long long[::1] gas, double[::1] valuation,
             double max_tip, double[::1] block_times, long long gas_limit,
             long long gas_target, long long quotient, long long fee_floor,
             long long initial_fee):
    """Same contract and same arithmetic as _packing_py.pack_run."""
    cdef Py_ssize_t n = submit.shape[0]
    cdef Py_ssize_t m = block_times.shape[0]

    mined_np = np.full(n, -1, dtype=np.int64)
    gas_used_np = np.zeros(m, dtype=np.int64)
    base_fee_np = np.zeros(m, dtype=np.int64)
    included_np = np.empty(n, dtype=np.int64)
    block_ptr_np = np.zeros(m + 1, dtype=np.int64)

    cdef long long[::1] mined = mined_np
    cdef long long[::1] gas_used = gas_used_np
    cdef long long[::1] base_fee = base_fee_np
    cdef long long[::1] included = included_np
    cdef long long[::1] block_ptr = block_ptr_np

    cdef long long *a_heap = <long long *> malloc(n * sizeof(long long))
    cdef BHeap b_heap
    b_heap.val = <double *> malloc(n * sizeof(double))
    b_heap.idx = <long long *> malloc(n * sizeof(long long))
    b_heap.size = 0
    if (n > 0) and (a_heap == NULL or b_heap.val == NULL or b_heap.idx == NULL):
        free(a_heap); free(b_heap.val); free(b_heap.idx)
        raise MemoryError()

    cdef Py_ssize_t a_size = 0
    cdef Py_ssize_t next_arrival = 0, n_included = 0
    cdef Py_ssize_t j, i, pick
    cdef bint from_a
    cdef long long b = initial_fee, remaining, used, nb
    cdef double t, thr, fee_f, factor, nxt
    cdef double denom = <double> (quotient * gas_target)

    with nogil:
        for j in range(m):
            t = block_times[j]
            thr = (<double> b) + max_tip
            while next_arrival < n and submit[next_arrival] <= t:
                i = next_arrival
                if valuation[i] >= thr:
                    _a_push(a_heap, &a_size, i)
                else:
                    _b_push(&b_heap, valuation[i], i)
                next_arrival += 1
            while b_heap.size > 0 and b_heap.val[0] >= thr:
                i = <Py_ssize_t> b_heap.idx[0]
                _b_pop(&b_heap)
                _a_push(a_heap, &a_size, i)

            remaining = gas_limit
            fee_f = <double> b
            while True:
                pick = -1
                from_a = False
                while a_size > 0:
                    i = <Py_ssize_t> a_heap[0]
                    if valuation[i] >= thr:
                        pick = i
                        from_a = True
                        break
                    _a_pop(a_heap, &a_size)
                    _b_push(&b_heap, valuation[i], i)
                if pick < 0 and b_heap.size > 0:
                    if b_heap.val[0] >= fee_f:
                        pick = <Py_ssize_t> b_heap.idx[0]
                if pick < 0 or gas[pick] > remaining:
                    break
                if from_a:
                    _a_pop(a_heap, &a_size)
                else:
                    _b_pop(&b_heap)
                mined[pick] = j
                included[n_included] = pick
                n_included += 1
                remaining -= gas[pick]

            used = gas_limit - remaining
            gas_used[j] = used
            base_fee[j] = b
            block_ptr[j + 1] = n_included
            factor = 1.0 + (<double> (used - gas_target)) / denom
            nxt = (<double> b) * factor
            nb = <long long> floor(nxt)
            if nb < fee_floor:
                nb = fee_floor
            elif nb > MAX_FEE_WEI:
                nb = MAX_FEE_WEI
            b = nb

    free(a_heap)
    free(b_heap.val)
    free(b_heap.idx)
    return (mined_np, gas_used_np, base_fee_np,
            included_np[:n_included].copy(), block_ptr_np)
