"""EIP-1559 base-fee update law and its equilibrium analysis.

The model layer works with real-valued fees so that fixed-point and
convergence properties hold exactly; integer-wei rounding happens only inside
the simulator.  A demand curve is any callable mapping a base fee (wei/gas) to
expected gas demand per second, monotone non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .errors import InputError, NumericalError

DemandCurve = Callable[[float], float]

DEFAULT_GAS_TARGET = 15_000_000
DEFAULT_GAS_LIMIT = 30_000_000  # 2x target, the real elasticity
DEFAULT_ADJUSTMENT_QUOTIENT = 8
DEFAULT_FEE_FLOOR = 1.0  # wei/gas; keeps the multiplicative update away from 0

BISECT_REL_TOL = 1e-9
BISECT_MAX_ITER = 200


class GasExceedsLimit(InputError):
    """gas_used above the block gas limit."""


class NoEquilibrium(NumericalError):
    """Demand never crosses the gas target: no base fee balances the market."""


@dataclass(frozen=True)
class FeeParams:
    """Constants of the base-fee adjustment function."""

    gas_limit: int = DEFAULT_GAS_LIMIT
    gas_target: int = DEFAULT_GAS_TARGET
    adjustment_quotient: int = DEFAULT_ADJUSTMENT_QUOTIENT
    fee_floor: float = DEFAULT_FEE_FLOOR

    def __post_init__(self):
        if self.gas_target <= 0 or self.gas_limit < self.gas_target:
            raise InputError(
                f"need 0 < gas_target <= gas_limit, got target={self.gas_target} "
                f"limit={self.gas_limit}")
        if self.adjustment_quotient < 1:
            raise InputError(f"adjustment_quotient must be >= 1, got {self.adjustment_quotient}")
        if self.fee_floor < 0:
            raise InputError(f"fee_floor must be >= 0, got {self.fee_floor}")


def next_base_fee(base_fee: float, gas_used: float, params: FeeParams) -> float:
    """One block of the multiplicative update, floored at params.fee_floor.

    The per-block factor is 1 + (gas_used - target) / (quotient * target),
    so a full block (at limit = 2*target) moves the fee by +1/quotient and an
    empty block by -1/quotient.
    """
    if gas_used < 0:
        raise InputError(f"gas_used must be >= 0, got {gas_used}")
    if gas_used > params.gas_limit:
        raise GasExceedsLimit(
            f"gas_used {gas_used} exceeds gas_limit {params.gas_limit}")
    factor = 1.0 + (gas_used - params.gas_target) / (
        params.adjustment_quotient * params.gas_target)
    return max(params.fee_floor, base_fee * factor)


def equilibrium_base_fee(demand: DemandCurve, interval: float,
                         params: FeeParams) -> float:
    """Base fee at which demand per block exactly meets the gas target.

    Solves D(b) * interval = gas_target by bisection.  Requires demand to be
    monotone non-increasing with D(fee_floor) * interval >= gas_target and the
    demand eventually falling below the target (bracketing); otherwise raises
    NoEquilibrium.
    """
    if interval <= 0:
        raise InputError(f"interval must be > 0, got {interval}")
    target = float(params.gas_target)
    lo = params.fee_floor
    if demand(lo) * interval < target:
        raise NoEquilibrium(
            f"demand at the fee floor ({demand(lo) * interval:.6g} gas/block) "
            f"is below the gas target {target:.6g}")
    hi = max(lo, 1.0)
    for _ in range(200):
        if demand(hi) * interval < target:
            break
        hi *= 2.0
    else:
        raise NoEquilibrium("demand exceeds the gas target at every base fee probed")
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        gap = demand(mid) * interval - target
        if abs(gap) <= BISECT_REL_TOL * target:
            return mid
        if gap > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= BISECT_REL_TOL * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def compensating_base_fee(demand: DemandCurve, interval_new: float,
                          params: FeeParams) -> float:
    """Base fee that restores gas_used = gas_target under a new block interval.

    This is the ex-ante jump a protocol change could apply instead of letting
    the per-block update walk there: identical to the equilibrium fee under
    the new interval, exposed separately so the CLI can report it directly.
    """
    return equilibrium_base_fee(demand, interval_new, params)


def adjustment_path(demand: DemandCurve, interval: float, b0: float,
                    n_blocks: int, params: FeeParams) -> list[tuple[float, float]]:
    """Deterministic block-by-block trajectory of (base_fee, gas_used).

    Each block serves min(D(b) * interval, gas_limit) gas and the fee then
    follows next_base_fee.  Entry k holds the fee in force at block k and the
    gas that block used; len(result) == n_blocks.
    """
    if n_blocks < 1:
        raise InputError(f"n_blocks must be >= 1, got {n_blocks}")
    path = []
    b = b0
    for _ in range(n_blocks):
        gas = min(demand(b) * interval, float(params.gas_limit))
        path.append((b, gas))
        b = next_base_fee(b, gas, params)
    return path


def surge_step_ratio(demand_old_at_b: float, demand_new_at_b: float,
                     quotient: int = DEFAULT_ADJUSTMENT_QUOTIENT) -> float:
    """Per-block relative fee change at the instant demand jumps at a fixed fee.

    Equals (new - old) / old / quotient and carries no block-interval term:
    the per-block percentage move is the same under any interval, only the
    wall-clock pace differs.
    """
    if demand_old_at_b == 0:
        raise ZeroDivisionError("old demand is zero; surge ratio undefined")
    return (demand_new_at_b - demand_old_at_b) / demand_old_at_b / quotient


def blocks_to_converge(demand: DemandCurve, interval: float, b0: float,
                       params: FeeParams, rel_tol: float = 0.01,
                       max_blocks: int = 100_000) -> int:
    """Blocks until the adjustment path is within rel_tol of its equilibrium.

    Returns the first block index k with |b_k - b*| <= rel_tol * b*.
    """
    b_star = equilibrium_base_fee(demand, interval, params)
    b = b0
    for k in range(max_blocks + 1):
        if abs(b - b_star) <= rel_tol * b_star:
            return k
        gas = min(demand(b) * interval, float(params.gas_limit))
        b = next_base_fee(b, gas, params)
    raise NumericalError(
        f"no convergence to within {rel_tol:g} of equilibrium in {max_blocks} blocks")
