import csv
import json
from pathlib import Path

import pytest

from hrlurllc import config as config_io
from hrlurllc.cli import (ExperimentError, ExperimentSpec, emit_plot_data, empirical_cdf, main,
                          run_experiment)
from hrlurllc.config import ScenarioConfig
from hrlurllc.hierarchy import count_signals

SMALL = ScenarioConfig(episode_s=1.0, hidden_sizes=(16, 16), batch_size=8, n_episodes=2,
                       n_eval_seeds=2)


def read(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(tmp_path, setup, seeds=(0,), name=None, **kw):
    spec = ExperimentSpec(SMALL, setup, list(seeds), tmp_path / (name or setup), **kw)
    return spec, run_experiment(spec)


def test_baseline_writes_zero_signals_and_no_checkpoints(tmp_path):
    spec, _ = run(tmp_path, "maxretpwr", seeds=(0, 1))
    rows = read(spec.out_dir / "metrics.csv")
    assert len(rows) == 2 * SMALL.n_devices
    assert {r["run_id"] for r in rows} == {"MaxRetPwr"}
    assert all(int(r["messages"]) == 0 for r in read(spec.out_dir / "signals.csv"))
    assert not (spec.out_dir / "checkpoints").exists()
    assert (spec.out_dir / "resolved_config.txt").exists()


def test_resolved_config_reloads_to_the_same_scenario(tmp_path):
    spec, _ = run(tmp_path, "maxretpwr")
    assert config_io.load(spec.out_dir / "resolved_config.txt") == SMALL


def test_same_seed_same_metrics(tmp_path):
    a, _ = run(tmp_path, "rlrisksen", name="a")
    b, _ = run(tmp_path, "rlrisksen", name="b")
    assert (a.out_dir / "metrics.csv").read_text() == (b.out_dir / "metrics.csv").read_text()
    assert (a.out_dir / "checkpoints" / "seed0_flat.json").exists()


def test_hrl_signals_are_flat_over_c_for_equal_horizons(tmp_path):
    flat, rf = run(tmp_path, "rlavg", n_episodes=2)
    hrl, rh = run(tmp_path, "hrlavg", n_episodes=2)
    assert rf[0].episodes == rh[0].episodes == 2
    total = lambda spec: sum(int(r["messages"]) for r in read(spec.out_dir / "signals.csv"))
    assert total(hrl) * SMALL.timescale_ratio == total(flat)
    per_episode = count_signals("hrl", SMALL.n_low_steps, SMALL.timescale_ratio, SMALL.n_gnbs)
    assert total(hrl) == per_episode * (2 + SMALL.n_eval_seeds)


def test_rewards_csv_has_one_row_per_agent_episode(tmp_path):
    spec, res = run(tmp_path, "hrlrisksen", n_episodes=2)
    rows = read(spec.out_dir / "rewards.csv")
    assert len(rows) == 2 * 3
    assert {r["agent"] for r in rows} == {"high", "low0", "low1"}


def test_invalid_spec_lists_every_problem(tmp_path):
    bad = SMALL.replace(omega=0.0)
    with pytest.raises(ExperimentError) as err:
        run_experiment(ExperimentSpec(bad, "nope", [], tmp_path / "x"))
    text = " ".join(err.value.problems)
    assert "setup" in text and "seeds" in text and "omega" in text


def test_empirical_cdf_by_hand():
    values = [0.9, 1.0, 0.95, 0.9, 1.0, 1.0, 0.99, 0.8, 1.0, 0.95]
    assert empirical_cdf(values) == [(0.8, 0.1), (0.9, 0.3), (0.95, 0.5), (0.99, 0.6), (1.0, 1.0)]


def test_all_available_gives_a_step_at_one(tmp_path):
    d = tmp_path / "m"
    d.mkdir()
    (d / "metrics.csv").write_text("run_id,seed,device,availability,crossing_rate\n"
                                   + "".join(f"X,0,{u},1.0,0.0\n" for u in range(4)))
    paths = emit_plot_data(d)
    rows = read(paths["availability_cdf"])
    assert [(r["availability"], r["cdf"]) for r in rows] == [("1.0", "1.0")]
    ccdf = read(paths["crossing_rate_ccdf"])
    assert [(r["crossing_rate"], r["ccdf"]) for r in ccdf] == [("0.0", "0.0")]


def test_signal_totals_pass_through(tmp_path):
    d = tmp_path / "m"
    d.mkdir()
    (d / "metrics.csv").write_text("run_id,seed,device,availability,crossing_rate\nA,0,0,1.0,0.0\n")
    (d / "signals.csv").write_text("run_id,seed,phase,messages,episodes,converged_at\n"
                                   "A,0,train,400,1,\nA,1,train,96,1,\nA,0,eval,8,1,\n")
    rows = read(emit_plot_data(d)["signal_totals"])
    assert rows == [{"run_id": "A", "phase": "eval", "messages": "8"},
                    {"run_id": "A", "phase": "train", "messages": "496"}]


def test_plot_data_is_deterministic(tmp_path):
    spec, _ = run(tmp_path, "maxretpwr", seeds=(0, 1))
    first = {k: p.read_text() for k, p in emit_plot_data(spec.out_dir, out_dir=tmp_path / "p1").items()}
    second = {k: p.read_text() for k, p in emit_plot_data(spec.out_dir, out_dir=tmp_path / "p2").items()}
    assert first == second


def test_missing_runs_are_listed(tmp_path):
    spec, _ = run(tmp_path, "maxretpwr")
    with pytest.raises(ExperimentError) as err:
        emit_plot_data(spec.out_dir, ["MaxRetPwr", "HRLRiskSen", "RLAvg"])
    assert err.value.problems == ["missing run: HRLRiskSen", "missing run: RLAvg"]


def test_main_success_and_trace_dump(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    config_io.save(SMALL, cfg)
    out = tmp_path / "out"
    code = main(["--config", str(cfg), "--setup", "MaxRetPwr", "--seeds", "3", "--out", str(out),
                 "--dump-traces"])
    assert code == 0
    assert "MaxRetPwr seed=3" in capsys.readouterr().out
    traces = sorted((out / "traces").glob("*.csv"))
    assert len(traces) == SMALL.n_eval_seeds * SMALL.n_devices
    assert traces[0].read_text().startswith("time_s,value\n")
    assert (out / "plots" / "summary.csv").exists()


def test_main_reports_errors_as_json(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("omega = -1\nno_such_key = 3\n")
    code = main(["--config", str(cfg), "--setup", "maxretpwr", "--out", str(tmp_path / "o")])
    assert code != 0
    errors = json.loads(capsys.readouterr().err)["errors"]
    assert errors and all(isinstance(e, str) for e in errors)


def test_main_rejects_unknown_setup(tmp_path, capsys):
    assert main(["--setup", "magic", "--out", str(tmp_path / "o")]) != 0
    assert "setup" in json.loads(capsys.readouterr().err)["errors"][0]


def test_gateway_run_matches_in_process(tmp_path):
    import socket
    import threading
    from hrlurllc.hierarchy import build_agents, gateway_connect

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    endpoint = f"127.0.0.1:{port}"
    remote = build_agents("hrl", SMALL, 0)["high"]

    def serve():
        import time
        for _ in range(200):
            try:
                return gateway_connect(endpoint, "high", remote, explore=True, learn=True)
            except ConnectionRefusedError:
                time.sleep(0.02)

    t = threading.Thread(target=serve, daemon=True)
    t.start()
    via_gateway, _ = run(tmp_path, "hrlrisksen", name="gw", gateway=endpoint, n_episodes=2)
    t.join(30)
    local, _ = run(tmp_path, "hrlrisksen", name="local", n_episodes=2)
    assert (via_gateway.out_dir / "metrics.csv").read_text() == \
        (local.out_dir / "metrics.csv").read_text()
