"""Selection between the compiled and pure-Python packing kernels.

The compiled extension (tfmlab._packing_c, built from Cython) is preferred
when importable; TFMLAB_KERNEL=python|cython forces a backend.  Both kernels
implement the same contract and must agree bit for bit.
"""

from __future__ import annotations

import os

import numpy as np

from . import _packing_py
from .errors import InputError

try:
    from . import _packing_c
except ImportError:
    _packing_c = None

_BACKENDS = {"python": _packing_py}
if _packing_c is not None:
    _BACKENDS["cython"] = _packing_c

DEFAULT_BACKEND = "cython" if _packing_c is not None else "python"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def active_backend() -> str:
    forced = os.environ.get("TFMLAB_KERNEL")
    if forced:
        if forced not in _BACKENDS:
            raise InputError(
                f"TFMLAB_KERNEL={forced!r} not available; have {available_backends()}")
        return forced
    return DEFAULT_BACKEND


def pack_run(submit, gas, valuation, max_tip, block_times, gas_limit,
             gas_target, quotient, fee_floor, initial_fee, backend=None):
    """Run the inclusion loop over every block of a simulation.

    Inputs are parallel per-transaction arrays sorted by (submit_time, id)
    plus the block timestamps.  Returns five int64 arrays:

      mined_block[n]   block index per transaction, -1 if still pending
      gas_used[m]      gas packed into each block
      base_fee[m]      integer-wei base fee charged by each block
      included[k]      transaction indexes in inclusion order
      block_ptr[m+1]   CSR offsets of `included` per block
    """
    name = backend or active_backend()
    if name not in _BACKENDS:
        raise InputError(f"unknown kernel backend {name!r}; have {available_backends()}")
    impl = _BACKENDS[name]
    submit = np.ascontiguousarray(submit, dtype=np.float64)
    gas = np.ascontiguousarray(gas, dtype=np.int64)
    valuation = np.ascontiguousarray(valuation, dtype=np.float64)
    block_times = np.ascontiguousarray(block_times, dtype=np.float64)
    return impl.pack_run(submit, gas, valuation, float(max_tip), block_times,
                         int(gas_limit), int(gas_target), int(quotient),
                         int(fee_floor), int(initial_fee))
