"""End-to-end CLI flows on small fixtures."""

import csv
import json
import math

import pytest

from tfmlab.cli import main

SCENARIO = {
    "rate": 8.0,
    "gas_per_tx": {"kind": "point", "value": 150000},
    "valuations": {"kind": "lognormal", "mu": math.log(3e9), "sigma": 1.0},
    "private_fraction": 0.1,
    "sanctioned_fraction": 0.05,
    "max_tip": 2e9,
    "surges": [[300, 500, 5.0]],
}

SIM_CONFIG = {
    "regime": {"kind": "fixed", "slot_seconds": 12.0, "empty_slot_prob": 0.0},
    "fee": {"gas_limit": 30000000, "gas_target": 15000000,
            "adjustment_quotient": 8, "fee_floor": 1},
    "initial_base_fee": 1000000000,
    "horizon": 1200.0,
    "seed": 5,
    "start_number": 1,
}


@pytest.fixture
def sim_outputs(tmp_path):
    scenario = tmp_path / "scenario.json"
    scenario.write_text(json.dumps(SCENARIO))
    config = tmp_path / "sim.json"
    config.write_text(json.dumps(SIM_CONFIG))
    out = tmp_path / "sim_out"
    rc = main(["simulate", "--config", str(config), "--scenario", str(scenario),
               "--out", str(out)])
    assert rc == 0
    return tmp_path, scenario, config, out


def test_simulate_outputs_and_manifest(sim_outputs):
    tmp_path, _, _, out = sim_outputs
    for name in ("blocks.csv", "delays.csv", "transactions.csv",
                 "sanctions.csv", "manifest.json"):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "simulate"
    assert str(out / "blocks.csv") in manifest["outputs"]
    with open(out / "blocks.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 100  # 1200 s of 12 s slots


def test_simulate_is_reproducible(sim_outputs):
    tmp_path, scenario, config, out = sim_outputs
    out2 = tmp_path / "again"
    assert main(["simulate", "--config", str(config), "--scenario", str(scenario),
                 "--out", str(out2)]) == 0
    for name in ("blocks.csv", "delays.csv", "transactions.csv"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()


def test_empty_scenario_gives_empty_blocks(tmp_path):
    scenario = tmp_path / "empty.json"
    scenario.write_text(json.dumps({"rate": 0.0,
                                    "valuations": {"kind": "point", "value": 1.0}}))
    config = tmp_path / "sim.json"
    cfg = dict(SIM_CONFIG, horizon=120.0)
    config.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(config), "--scenario", str(scenario),
                 "--out", str(out)]) == 0
    with open(out / "blocks.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10
    assert all(r["gas_used"] == "0" for r in rows)


def test_ingest_metrics_rdd_graph_pipeline(sim_outputs, capsys):
    tmp_path, _, _, out = sim_outputs
    panel = tmp_path / "panel.csv"
    rc = main(["ingest", "--blocks", str(out / "blocks.csv"),
               "--delays", str(out / "delays.csv"),
               "--txs", str(out / "transactions.csv"),
               "--sanctions", str(out / "sanctions.csv"),
               "--cutoff", "50", "--first-interval", "12.0",
               "--out", str(panel)])
    assert rc == 0
    assert panel.exists()

    mdir = tmp_path / "metrics"
    assert main(["metrics", "--panel", str(panel), "--cuts", "0.5,0.95",
                 "--out", str(mdir)]) == 0
    summary = json.loads((mdir / "summary.json").read_text())
    assert summary["blocks"] == 100
    with open(mdir / "congestion_by_cut.csv") as fh:
        curve = list(csv.DictReader(fh))
    assert [c["cut"] for c in curve] == ["0.5", "0.95"]
    ratios = [float(c["congestion_ratio"]) for c in curve]
    assert ratios[0] >= ratios[1]

    rdd_dir = tmp_path / "rdd"
    rc = main(["rdd", "--panel", str(panel), "--outcome", "gps",
               "--spec", "1,2,3", "--out", str(rdd_dir)])
    assert rc == 0
    captured = capsys.readouterr()
    assert "Note: *p<0.1; **p<0.05; ***p<0.01" in captured.out
    assert (rdd_dir / "rdd_gps.json").exists()

    gdir = tmp_path / "graph"
    rc = main(["graph", "--txs", str(out / "transactions.csv"),
               "--sanctions", str(out / "sanctions.csv"),
               "--cutoff", "50", "--out", str(gdir)])
    assert rc == 0
    combined = json.loads((gdir / "summary_combined.json").read_text())
    pre = json.loads((gdir / "summary_pre.json").read_text())
    post = json.loads((gdir / "summary_post.json").read_text())
    assert pre["edges"] + post["edges"] == combined["edges"]


def test_rdd_constant_outcome_zero_slopes(sim_outputs, capsys):
    tmp_path, _, _, out = sim_outputs
    panel = tmp_path / "panel.csv"
    main(["ingest", "--blocks", str(out / "blocks.csv"),
          "--delays", str(out / "delays.csv"), "--cutoff", "50",
          "--first-interval", "12.0", "--out", str(panel)])
    # gas_limit is constant; regress gps of a constant-interval run on specs
    rc = main(["rdd", "--panel", str(panel), "--outcome", "gps_ma5"])
    assert rc == 0


def test_forecast_cli(tmp_path, capsys):
    daily = tmp_path / "daily.csv"
    with open(daily, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "congestion_ratio"])
        from datetime import date, timedelta
        d0 = date(2021, 8, 1)
        for i in range(60):
            t = i
            val = 0.2 + 0.002 * t + 0.05 * math.sin(2 * math.pi * t / 7)
            if (d0 + timedelta(days=i)).isoformat() == "2021-09-09":
                val += 0.3
            w.writerow([(d0 + timedelta(days=i)).isoformat(), repr(val)])
    holidays = tmp_path / "holidays.json"
    holidays.write_text(json.dumps([{"name": "Pointilla", "date": "2021-09-09"}]))
    out = tmp_path / "components.csv"
    rc = main(["forecast", "--daily", str(daily), "--holidays", str(holidays),
               "--out", str(out)])
    assert rc == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 60
    hol = {r["date"]: float(r["holiday"]) for r in rows}
    assert hol["2021-09-09"] == pytest.approx(0.3, abs=0.1)
    assert hol["2021-09-10"] == 0.0


def test_sweep_cli_small(tmp_path):
    scenario = tmp_path / "scenario.json"
    scenario.write_text(json.dumps(dict(SCENARIO, rate=4.0, surges=[[100, 300, 6.0]])))
    out = tmp_path / "sweep"
    rc = main(["sweep", "--scenario", str(scenario), "--seed", "1",
               "--n-seeds", "3", "--horizon", "1200", "--out", str(out)])
    assert rc == 0
    comparison = json.loads((out / "comparison.json").read_text())
    assert set(comparison) == {"wait_q75", "wait_iqr", "congestion_ratio",
                               "continued_congestion_ratio", "max_ma5_gps"}
    with open(out / "runs.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6  # 2 regimes x 3 seeds


class TestExitCodes:
    def test_missing_file_is_input_error(self, tmp_path):
        rc = main(["metrics", "--panel", str(tmp_path / "nope.csv"),
                   "--out", str(tmp_path / "m")])
        assert rc == 2

    def test_numerical_error_exit_code(self, tmp_path):
        from tfmlab import metrics as m
        rows = []
        for i in range(20):
            rows.append(m.PanelRow(
                number=i, blockn=i - 10, merged=i >= 10,
                timestamp=1.6e9 + 12.0 * i, interval=12.0,
                gas_used=10 ** 6, gas_limit=3 * 10 ** 7, base_fee=10 ** 9,
                delay_q25=1.0, delay_median=2.0, delay_q75=3.0, delay_iqr=2.0,
                gps=10 ** 6 / 12.0, gps_ma5=None, gps_ma7200=None,
                congested=False, continued_congested=False, tx_count=5,
                observed_delay_count=5, unobserved_delay_count=0,
                sanctioned_count=0))
        panel = tmp_path / "flat_panel.csv"
        m.write_panel_csv(rows, str(panel))
        # the congested flag never varies -> NoVariation (exit 3)
        rc = main(["rdd", "--panel", str(panel), "--outcome", "congested",
                   "--family", "logit"])
        assert rc == 3

    def test_seed_required(self, tmp_path):
        scenario = tmp_path / "s.json"
        scenario.write_text(json.dumps(SCENARIO))
        config = tmp_path / "c.json"
        cfg = dict(SIM_CONFIG)
        del cfg["seed"]
        config.write_text(json.dumps(cfg))
        rc = main(["simulate", "--config", str(config), "--scenario",
                   str(scenario), "--out", str(tmp_path / "o")])
        assert rc == 2
