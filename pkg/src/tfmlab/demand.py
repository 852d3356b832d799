"""Stochastic transaction arrivals and the demand curves they induce.

An ArrivalProcess describes submissions to the public mempool: a
piecewise-constant rate (tx/s), a gas-per-transaction distribution, a
willingness-to-pay distribution (wei/gas, tip-inclusive), and the fractions of
private-channel and sanctioned traffic.  A SurgeSchedule multiplies the rate
on windows, which is how demand-surge scenarios (e.g. popular NFT mints) are
expressed.  Sampling uses Poisson thinning against the peak rate and inversion
sampling for valuations, so a seed pins the entire stream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .fees import DemandCurve
from .sim import Transaction
from .stats import normal_cdf, normal_ppf_array

DEFAULT_GAS_PER_TX = 150_000
DEFAULT_MAX_TIP = 2_000_000_000  # 2 gwei/gas


@dataclass(frozen=True)
class ValuationDist:
    """Willingness-to-pay per gas: lognormal(mu, sigma), uniform(lo, hi) or point(v)."""

    kind: str
    mu: float = 0.0
    sigma: float = 1.0
    lo: float = 0.0
    hi: float = 1.0
    value: float = 0.0

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "ValuationDist":
        if sigma <= 0:
            raise InputError(f"sigma must be > 0, got {sigma}")
        return cls(kind="lognormal", mu=mu, sigma=sigma)

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "ValuationDist":
        if not 0 <= lo < hi:
            raise InputError(f"need 0 <= lo < hi, got [{lo}, {hi}]")
        return cls(kind="uniform", lo=lo, hi=hi)

    @classmethod
    def point(cls, value: float) -> "ValuationDist":
        if value < 0:
            raise InputError(f"valuation must be >= 0, got {value}")
        return cls(kind="point", value=value)

    def survival(self, b: float) -> float:
        """P(valuation >= b)."""
        if self.kind == "point":
            return 1.0 if b <= self.value else 0.0
        if self.kind == "uniform":
            if b <= self.lo:
                return 1.0
            if b >= self.hi:
                return 0.0
            return (self.hi - b) / (self.hi - self.lo)
        if b <= 0:
            return 1.0
        return 1.0 - normal_cdf((math.log(b) - self.mu) / self.sigma)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        """Quantile function, vectorized over uniforms in (0, 1)."""
        if self.kind == "point":
            return np.full_like(u, self.value, dtype=float)
        if self.kind == "uniform":
            return self.lo + u * (self.hi - self.lo)
        z = normal_ppf_array(np.atleast_1d(u))
        return np.exp(self.mu + self.sigma * z)


@dataclass(frozen=True)
class GasDist:
    """Gas per transaction: point(v) or uniform_int(lo, hi)."""

    kind: str
    value: int = DEFAULT_GAS_PER_TX
    lo: int = 0
    hi: int = 0

    @classmethod
    def point(cls, value: int) -> "GasDist":
        if value <= 0:
            raise InputError(f"gas per tx must be > 0, got {value}")
        return cls(kind="point", value=value)

    @classmethod
    def uniform_int(cls, lo: int, hi: int) -> "GasDist":
        if not 0 < lo <= hi:
            raise InputError(f"need 0 < lo <= hi, got [{lo}, {hi}]")
        return cls(kind="uniform_int", lo=lo, hi=hi)

    def mean(self) -> float:
        if self.kind == "point":
            return float(self.value)
        return (self.lo + self.hi) / 2.0

    def sample(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "point":
            return np.full(u.shape, self.value, dtype=np.int64)
        span = self.hi - self.lo + 1
        return (self.lo + np.minimum((u * span).astype(np.int64), span - 1)).astype(np.int64)


@dataclass(frozen=True)
class SurgeSchedule:
    """Non-overlapping (start, end, rate_multiplier) windows."""

    windows: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        prev_end = -math.inf
        for start, end, mult in sorted(self.windows):
            if end <= start:
                raise InputError(f"surge window [{start}, {end}) is empty")
            if mult <= 0:
                raise InputError(f"surge multiplier must be > 0, got {mult}")
            if start < prev_end:
                raise InputError("surge windows overlap")
            prev_end = end

    def multiplier(self, t: float) -> float:
        for start, end, mult in self.windows:
            if start <= t < end:
                return mult
        return 1.0


@dataclass(frozen=True)
class ArrivalProcess:
    """Mempool submission process; rate is a constant or (start, end, rate) segments."""

    rate: float | tuple[tuple[float, float, float], ...] = 1.0
    gas_per_tx: GasDist = field(default_factory=lambda: GasDist.point(DEFAULT_GAS_PER_TX))
    valuations: ValuationDist = field(default_factory=lambda: ValuationDist.point(0.0))
    private_fraction: float = 0.0
    sanctioned_fraction: float = 0.0
    max_tip: float = DEFAULT_MAX_TIP

    def __post_init__(self):
        for name in ("private_fraction", "sanctioned_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InputError(f"{name} must be in [0, 1], got {v}")
        if self.max_tip < 0:
            raise InputError(f"max_tip must be >= 0, got {self.max_tip}")
        if isinstance(self.rate, (int, float)):
            if self.rate < 0:
                raise InputError(f"rate must be >= 0, got {self.rate}")
        else:
            for start, end, r in self.rate:
                if end <= start or r < 0:
                    raise InputError(f"bad rate segment ({start}, {end}, {r})")

    def rate_at(self, t: float) -> float:
        if isinstance(self.rate, (int, float)):
            return float(self.rate)
        for start, end, r in self.rate:
            if start <= t < end:
                return r
        return 0.0


def _total_rate(process: ArrivalProcess, surges: SurgeSchedule, t: float) -> float:
    return process.rate_at(t) * surges.multiplier(t)


def _rate_steps(process: ArrivalProcess, surges: SurgeSchedule,
                horizon: float) -> tuple[np.ndarray, np.ndarray]:
    """Combined rate as a step function: (slab start times, slab rates)."""
    breakpoints = {0.0}
    if not isinstance(process.rate, (int, float)):
        for start, end, _ in process.rate:
            breakpoints.update((start, end))
    for start, end, _ in surges.windows:
        breakpoints.update((start, end))
    starts = np.array(sorted(p for p in breakpoints if 0.0 <= p < horizon))
    rates = np.array([_total_rate(process, surges, t) for t in starts])
    return starts, rates


def sample_arrivals(process: ArrivalProcess, surges: SurgeSchedule,
                    horizon: float, seed: int) -> list[Transaction]:
    """Draw the transaction stream over [0, horizon), sorted by submit time.

    Poisson arrivals with the piecewise rate, realized by thinning a
    homogeneous process at the peak rate.  Identical seeds give identical
    streams byte for byte.
    """
    if horizon <= 0:
        raise InputError(f"horizon must be > 0, got {horizon}")
    rng = np.random.default_rng(seed)
    starts, slab_rates = _rate_steps(process, surges, horizon)
    rmax = float(slab_rates.max())
    if rmax <= 0.0:
        return []
    n_cand = rng.poisson(rmax * horizon)
    times = np.sort(rng.uniform(0.0, horizon, n_cand))
    accept_u = rng.uniform(0.0, 1.0, n_cand)
    rates = slab_rates[np.searchsorted(starts, times, side="right") - 1]
    times = times[accept_u * rmax < rates]
    n = times.size

    gas = process.gas_per_tx.sample(rng.uniform(0.0, 1.0, n))
    valuations = process.valuations.ppf(rng.uniform(0.0, 1.0, n))
    private = rng.uniform(0.0, 1.0, n) < process.private_fraction
    sanctioned = rng.uniform(0.0, 1.0, n) < process.sanctioned_fraction

    tip = float(process.max_tip)
    times_l = times.tolist()
    gas_l = gas.tolist()
    val_l = valuations.tolist()
    private_l = private.tolist()
    sanctioned_l = sanctioned.tolist()
    return [
        Transaction(i, times_l[i], gas_l[i], val_l[i], tip,
                    private_l[i], sanctioned_l[i])
        for i in range(n)
    ]


def empirical_demand_curve(process: ArrivalProcess, surges: SurgeSchedule,
                           at_time: float) -> DemandCurve:
    """Expected gas demand per second from traffic willing to pay >= b.

    D(b) = rate(at_time) * E[gas per tx] * P(valuation >= b); monotone
    non-increasing in b by construction.
    """
    gas_rate = _total_rate(process, surges, at_time) * process.gas_per_tx.mean()
    valuations = process.valuations

    def curve(b: float) -> float:
        return gas_rate * valuations.survival(b)

    return curve


# ---------------------------------------------------------------------------
# scenario files


def _valuation_from_json(obj: dict) -> ValuationDist:
    kind = obj.get("kind")
    if kind == "lognormal":
        return ValuationDist.lognormal(obj["mu"], obj["sigma"])
    if kind == "uniform":
        return ValuationDist.uniform(obj["lo"], obj["hi"])
    if kind == "point":
        return ValuationDist.point(obj["value"])
    raise InputError(f"unknown valuation kind {kind!r}")


def _gas_from_json(obj: dict) -> GasDist:
    kind = obj.get("kind")
    if kind == "point":
        return GasDist.point(obj["value"])
    if kind == "uniform_int":
        return GasDist.uniform_int(obj["lo"], obj["hi"])
    raise InputError(f"unknown gas kind {kind!r}")


def load_scenario(path: str) -> tuple[ArrivalProcess, SurgeSchedule]:
    """Read a scenario JSON file; see README for the schema."""
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from exc
    try:
        rate = obj.get("rate", 1.0)
        if isinstance(rate, list):
            rate = tuple(tuple(seg) for seg in rate)
        process = ArrivalProcess(
            rate=rate,
            gas_per_tx=_gas_from_json(obj.get("gas_per_tx", {"kind": "point", "value": DEFAULT_GAS_PER_TX})),
            valuations=_valuation_from_json(obj.get("valuations", {"kind": "point", "value": 0.0})),
            private_fraction=obj.get("private_fraction", 0.0),
            sanctioned_fraction=obj.get("sanctioned_fraction", 0.0),
            max_tip=obj.get("max_tip", DEFAULT_MAX_TIP),
        )
        surges = SurgeSchedule(tuple(tuple(w) for w in obj.get("surges", [])))
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed scenario ({exc})") from exc
    return process, surges
