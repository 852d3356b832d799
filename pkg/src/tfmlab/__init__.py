"""tfmlab: a laboratory for EIP-1559 fee market dynamics.

Simulates mempool transaction life cycles under configurable block-interval
regimes, derives the congestion/waiting-time/network-load metrics, and ships
the statistical toolkit (cutoff regressions, additive time-series
decomposition, sanctioned-transaction graphs) to analyze both simulated traces
and real chain/mempool CSV exports.
"""

__version__ = "0.1.0"

from .errors import InputError, NumericalError, TfmLabError

__all__ = ["InputError", "NumericalError", "TfmLabError", "__version__"]
