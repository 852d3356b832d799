"""Simulator semantics: intervals, inclusion, event loop, exports, kernels."""

import math

import numpy as np
import pytest

from tfmlab import kernels
from tfmlab.demand import ArrivalProcess, SurgeSchedule, ValuationDist, sample_arrivals
from tfmlab.errors import InputError
from tfmlab.fees import FeeParams
from tfmlab.sim import (ConfigInvalid, IntervalRegime, SimConfig, Transaction,
                        export_trace, include_transactions, next_int_base_fee,
                        run, sample_interval)

FEE = FeeParams()


def tx(i, t=0.0, gas=6_000_000, val=1e12, tip=2e9, **kw):
    return Transaction(id=i, submit_time=t, gas=gas, valuation=val, tip=tip, **kw)


class TestSampleInterval:
    def test_fixed_no_empty_slots(self):
        rng = np.random.default_rng(0)
        regime = IntervalRegime.fixed(12.0, 0.0)
        assert all(sample_interval(regime, rng) == 12.0 for _ in range(100))

    def test_fixed_with_empty_slots_distribution(self):
        rng = np.random.default_rng(1)
        regime = IntervalRegime.fixed(12.0, 0.01)
        draws = [sample_interval(regime, rng) for _ in range(200_000)]
        assert set(draws) <= {12.0 * k for k in range(1, 10)}
        frac12 = draws.count(12.0) / len(draws)
        frac24 = draws.count(24.0) / len(draws)
        frac36 = draws.count(36.0) / len(draws)
        assert frac12 == pytest.approx(0.99, abs=0.002)
        assert frac24 == pytest.approx(0.0099, abs=0.001)
        assert frac36 == pytest.approx(9.9e-5, abs=2e-4)
        # "less than 1% of blocks arrive 24 s or more apart"
        assert 1.0 - frac12 < 0.015

    def test_exponential_mean(self):
        rng = np.random.default_rng(2)
        regime = IntervalRegime.exponential(14.0)
        draws = [sample_interval(regime, rng) for _ in range(1_000_000)]
        assert np.mean(draws) == pytest.approx(14.0, abs=0.05)

    def test_regime_validation(self):
        with pytest.raises(ConfigInvalid):
            IntervalRegime.exponential(-1.0)
        with pytest.raises(ConfigInvalid):
            IntervalRegime.fixed(12.0, 1.0)


class TestIncludeTransactions:
    def test_empty_pool(self):
        assert include_transactions([], 10.0, FEE.gas_limit) == ([], [])

    def test_capacity_in_tip_order(self):
        pool = [tx(1, tip=3e9), tx(2, tip=2e9), tx(3, tip=1e9)]
        included, remaining = include_transactions(pool, 10.0, 15_000_000)
        assert [t.id for t in included] == [1, 2]
        assert [t.id for t in remaining] == [3]

    def test_ineligible_stays_pending(self):
        pool = [tx(1, val=10.0)]
        included, remaining = include_transactions(pool, 20.0, FEE.gas_limit)
        assert included == []
        assert [t.id for t in remaining] == [1]

    def test_tip_tie_broken_by_submit_then_id(self):
        pool = [tx(5, t=3.0), tx(2, t=1.0), tx(9, t=1.0)]
        included, _ = include_transactions(pool, 10.0, 12_000_000)
        assert [t.id for t in included] == [2, 9]

    def test_stops_at_first_overflow(self):
        # highest-tip tx fits, next (big) does not; packing stops there
        pool = [tx(1, tip=9e9, gas=10_000_000), tx(2, tip=5e9, gas=25_000_000),
                tx(3, tip=1e9, gas=1_000_000)]
        included, _ = include_transactions(pool, 10.0, FEE.gas_limit)
        assert [t.id for t in included] == [1]


class TestRun:
    def test_no_arrivals_fee_decay(self):
        cfg = SimConfig(regime=IntervalRegime.fixed(12.0, 0.0), fee=FEE,
                        initial_base_fee=100, horizon=120.0, seed=1)
        trace = run(cfg, [])
        assert len(trace.blocks) == 10
        expected = []
        b = 100
        for _ in range(10):
            expected.append(b)
            b = next_int_base_fee(b, 0, FEE)
        assert [bl.base_fee for bl in trace.blocks] == expected
        assert all(bl.gas_used == 0 for bl in trace.blocks)

    def test_single_tx_waiting_time(self):
        cfg = SimConfig(regime=IntervalRegime.fixed(12.0, 0.0), fee=FEE,
                        initial_base_fee=100, horizon=60.0, seed=1)
        trace = run(cfg, [tx(0, t=5.0)])
        mined = trace.mined
        assert len(mined) == 1
        assert mined[0].mined_time == 12.0
        assert mined[0].waiting_time == 7.0
        assert mined[0].mined_block == 1

    def test_conservation_and_waiting_nonnegative(self):
        process = ArrivalProcess(rate=30.0,
                                 valuations=ValuationDist.lognormal(math.log(2e9), 1.0))
        arrivals = sample_arrivals(process, SurgeSchedule(), 600.0, seed=7)
        cfg = SimConfig(regime=IntervalRegime.exponential(14.0), fee=FEE,
                        initial_base_fee=10 ** 9, horizon=600.0, seed=7)
        trace = run(cfg, arrivals)
        assert len(trace.mined) + len(trace.pending) == len(arrivals)
        ids_in_blocks = [i for b in trace.blocks for i in b.tx_ids]
        assert len(ids_in_blocks) == len(set(ids_in_blocks)) == len(trace.mined)
        assert all(t.waiting_time >= 0 for t in trace.mined)
        assert all(b.gas_used <= b.gas_limit for b in trace.blocks)

    def test_base_fee_replays_update_law(self):
        process = ArrivalProcess(rate=20.0,
                                 valuations=ValuationDist.lognormal(math.log(2e9), 1.5))
        arrivals = sample_arrivals(process, SurgeSchedule(), 600.0, seed=8)
        cfg = SimConfig(regime=IntervalRegime.fixed(12.0, 0.01), fee=FEE,
                        initial_base_fee=10 ** 9, horizon=600.0, seed=8)
        trace = run(cfg, arrivals)
        for prev, cur in zip(trace.blocks, trace.blocks[1:]):
            assert cur.base_fee == next_int_base_fee(prev.base_fee, prev.gas_used, FEE)

    def test_determinism(self):
        process = ArrivalProcess(rate=15.0, valuations=ValuationDist.uniform(1e8, 5e9))
        arrivals = sample_arrivals(process, SurgeSchedule(), 300.0, seed=3)
        cfg = SimConfig(regime=IntervalRegime.exponential(13.0), fee=FEE,
                        initial_base_fee=10 ** 9, horizon=300.0, seed=3)
        t1 = run(cfg, arrivals)
        t2 = run(cfg, arrivals)
        assert t1.blocks == t2.blocks
        assert t1.transactions == t2.transactions

    def test_unsorted_arrivals_rejected(self):
        cfg = SimConfig(regime=IntervalRegime.fixed(12.0), horizon=60.0, seed=1)
        with pytest.raises(InputError):
            run(cfg, [tx(0, t=10.0), tx(1, t=5.0)])

    def test_oversized_gas_rejected(self):
        cfg = SimConfig(regime=IntervalRegime.fixed(12.0), horizon=60.0, seed=1)
        with pytest.raises(InputError):
            run(cfg, [tx(0, gas=FEE.gas_limit + 1)])

    def test_config_invalid(self):
        with pytest.raises(ConfigInvalid):
            SimConfig(regime=IntervalRegime.fixed(12.0), horizon=-5.0, seed=1).validate()

    def test_congested_blocks_until_fee_prices_out(self):
        # heavy surge: demand far above capacity; blocks stay full while the
        # fee climbs, matching the deterministic adjustment-path oracle
        from tfmlab.fees import adjustment_path

        process = ArrivalProcess(rate=40.0, valuations=ValuationDist.point(5e9),
                                 max_tip=2e9)
        arrivals = sample_arrivals(process, SurgeSchedule(), 240.0, seed=5)
        cfg = SimConfig(regime=IntervalRegime.fixed(12.0, 0.0), fee=FEE,
                        initial_base_fee=10 ** 9, horizon=240.0, seed=5)
        trace = run(cfg, arrivals)
        demand = lambda b: 40.0 * 150_000 * (1.0 if b <= 5e9 else 0.0)
        oracle = adjustment_path(demand, 12.0, 1e9, len(trace.blocks), FEE)
        for block, (fee_model, gas_model) in zip(trace.blocks, oracle):
            assert block.base_fee == pytest.approx(fee_model, rel=1e-6)
            # blocks should be congested while demand clears the fee
            if gas_model == FEE.gas_limit and block.number < len(trace.blocks):
                assert block.gas_used >= 0.9 * FEE.gas_limit

    def test_heterogeneous_tips_use_reference_path(self):
        # mixed tip caps route through the per-block reference packer
        arrivals = [tx(0, t=1.0, tip=1e9), tx(1, t=1.0, tip=3e9)]
        cfg = SimConfig(regime=IntervalRegime.fixed(12.0), fee=FEE,
                        initial_base_fee=100, horizon=24.0, seed=1)
        trace = run(cfg, arrivals)
        first = trace.blocks[0]
        assert first.tx_ids == [1, 0]


class TestKernelParity:
    def test_backends_agree_bitwise(self):
        if "cython" not in kernels.available_backends():
            pytest.skip("compiled kernel not built")
        rng = np.random.default_rng(123)
        n = 20_000
        submit = np.sort(rng.uniform(0, 6000, n))
        gas = rng.integers(21_000, 900_000, n).astype(np.int64)
        val = rng.lognormal(math.log(3e9), 1.2, n)
        times = np.cumsum(rng.exponential(12.0, 500))
        args = (submit, gas, val, 2e9, times, FEE.gas_limit, FEE.gas_target,
                FEE.adjustment_quotient, 1, 10 ** 9)
        out_py = kernels.pack_run(*args, backend="python")
        out_cy = kernels.pack_run(*args, backend="cython")
        for a, b in zip(out_py, out_cy):
            assert np.array_equal(a, b)

    def test_kernel_matches_reference_blocks(self):
        rng = np.random.default_rng(77)
        n = 3000
        submit = np.sort(rng.uniform(0, 900, n))
        gas = rng.integers(21_000, 2_000_000, n).astype(np.int64)
        val = rng.lognormal(math.log(3e9), 1.5, n)
        arrivals = [Transaction(id=i, submit_time=float(submit[i]), gas=int(gas[i]),
                                valuation=float(val[i]), tip=2e9) for i in range(n)]
        cfg = SimConfig(regime=IntervalRegime.exponential(12.0), fee=FEE,
                        initial_base_fee=10 ** 9, horizon=900.0, seed=99)
        trace = run(cfg, arrivals)
        pool: list[Transaction] = []
        idx = 0
        b = cfg.initial_base_fee
        for block in trace.blocks:
            while idx < n and arrivals[idx].submit_time <= block.timestamp:
                pool.append(arrivals[idx])
                idx += 1
            included, pool = include_transactions(pool, b, FEE.gas_limit)
            assert [t.id for t in included] == block.tx_ids
            assert sum(t.gas for t in included) == block.gas_used
            assert block.base_fee == b
            b = next_int_base_fee(b, block.gas_used, FEE)


def test_export_files_deterministic(tmp_path):
    process = ArrivalProcess(rate=10.0, valuations=ValuationDist.uniform(5e8, 6e9),
                             private_fraction=0.2, sanctioned_fraction=0.1)
    arrivals = sample_arrivals(process, SurgeSchedule(), 240.0, seed=21)
    cfg = SimConfig(regime=IntervalRegime.fixed(12.0, 0.0), fee=FEE,
                    initial_base_fee=10 ** 9, horizon=240.0, seed=21)
    trace = run(cfg, arrivals)
    d1, d2 = tmp_path / "a", tmp_path / "b"
    p1 = export_trace(trace, str(d1))
    p2 = export_trace(trace, str(d2))
    for name in p1:
        assert open(p1[name], "rb").read() == open(p2[name], "rb").read()
    delays_lines = open(p1["delays"]).read().strip().splitlines()
    mined_public = [t for t in trace.mined if not t.private]
    assert len(delays_lines) - 1 == len(mined_public)
    blocks_lines = open(p1["blocks"]).read().strip().splitlines()
    assert len(blocks_lines) - 1 == len(trace.blocks)
