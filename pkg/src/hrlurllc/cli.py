"""Experiment runner and plot-data export.

``hrlurllc --setup hrlrisksen --seeds 0,1,2 --out runs/hrl`` trains (unless
the setup is the fixed baseline), evaluates greedy policies on fresh seeds
and writes ``metrics.csv``, ``signals.csv``, ``rewards.csv``,
``resolved_config.txt``, checkpoints and plot-ready CSVs into ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import config as config_io
from .config import ConfigError, ScenarioConfig
from .features import nearest_rank
from .hierarchy import (AgentPlacement, GatewayServer, SignalLedger, agent_specs, build_agents,
                        evaluate, gateway_connect, train)
from .kpi import write_trace_csv
from .learn import BranchingSacAgent
from .rewards import RewardConfig

SETUPS = {
    "maxretpwr": ("MaxRetPwr", "fixed_baseline", "risk_sensitive"),
    "rlavg": ("RLAvg", "flat_rl", "average"),
    "rlrisksen": ("RLRiskSen", "flat_rl", "risk_sensitive"),
    "hrlavg": ("HRLAvg", "hrl", "average"),
    "hrlrisksen": ("HRLRiskSen", "hrl", "risk_sensitive"),
}


class ExperimentError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class ExperimentSpec:
    scenario: ScenarioConfig
    setup: str
    seeds: list[int]
    out_dir: Path
    n_episodes: int | None = None  # training budget; scenario default when None
    n_eval: int | None = None  # greedy evaluation episodes per seed
    gateway: str | None = None
    dump_traces: bool = False

    @property
    def label(self) -> str:
        return SETUPS[self.setup][0]

    @property
    def framework(self) -> str:
        return SETUPS[self.setup][1]

    @property
    def reward_mode(self) -> str:
        return SETUPS[self.setup][2]

    def validate(self) -> "ExperimentSpec":
        problems = []
        if self.setup not in SETUPS:
            problems.append(f"setup: unknown setup {self.setup!r}, expected one of {sorted(SETUPS)}")
        if not self.seeds:
            problems.append("seeds: at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            problems.append("seeds: duplicates")
        if self.n_episodes is not None and self.n_episodes < 1:
            problems.append("n_episodes: must be >= 1")
        if self.n_eval is not None and self.n_eval < 1:
            problems.append("n_eval: must be >= 1")
        try:
            self.scenario.validate()
        except ConfigError as exc:
            problems.extend(exc.problems)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            probe = self.out_dir / ".write-test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            problems.append(f"out: directory not writable ({exc})")
        if self.gateway and self.setup == "maxretpwr":
            problems.append("gateway: MaxRetPwr has no agent to serve")
        if problems:
            raise ExperimentError(problems)
        return self


@dataclass
class SeedResult:
    seed: int
    device_kpis: list[tuple[float, float]]  # per device, pooled over evaluation episodes
    train_signals: int = 0
    eval_signals: int = 0
    episodes: int = 0
    converged_at: int | None = None
    rewards: dict[str, list[float]] = field(default_factory=dict)

    @property
    def mean_availability(self) -> float:
        return float(np.mean([a for a, _ in self.device_kpis]))

    @property
    def mean_crossing_rate(self) -> float:
        return float(np.mean([p for _, p in self.device_kpis]))


def _pool(logs) -> list[tuple[float, float]]:
    """Per-device KPIs over equally long evaluation episodes."""
    k = np.array([log.device_kpis for log in logs])  # (episodes, devices, 2)
    return [tuple(map(float, row)) for row in k.mean(axis=0)]


def run_seed(spec: ExperimentSpec, seed: int, server: GatewayServer | None = None,
             checkpoint_dir: Path | None = None) -> SeedResult:
    cfg = spec.scenario
    reward_cfg = RewardConfig.from_scenario(cfg, spec.reward_mode)
    agents = build_agents(spec.framework, cfg, seed)
    if server is not None:
        placement = AgentPlacement.default(spec.framework, cfg.n_gnbs)
        remote = [name for name, is_remote in placement.remote.items() if is_remote]
        specs = agent_specs(spec.framework, cfg)
        agents.update(server.accept({name: specs[name][1] for name in remote}))
    ledger = SignalLedger()
    run = train(spec.framework, cfg, seed, agents=agents, reward_cfg=reward_cfg,
                max_episodes=spec.n_episodes, ledger=ledger)

    def dump(i, log, sim):
        if spec.dump_traces:
            trace_dir = spec.out_dir / "traces"
            trace_dir.mkdir(exist_ok=True)
            for u in range(cfg.n_devices):
                write_trace_csv(sim.z_signal(u), trace_dir / f"seed{seed}_eval{i}_device{u}.csv")

    n_eval = spec.n_eval or cfg.n_eval_seeds
    logs = evaluate(spec.framework, agents, cfg, seed, n_eval, reward_cfg=reward_cfg,
                    ledger=ledger, on_episode=dump)
    if server is not None:
        for agent in agents.values():
            if hasattr(agent, "close"):
                agent.close()
    if checkpoint_dir is not None:
        for name, agent in agents.items():
            if isinstance(agent, BranchingSacAgent):
                checkpoint_dir.mkdir(exist_ok=True)
                agent.save(checkpoint_dir / f"seed{seed}_{name}.json")
    return SeedResult(seed, _pool(logs), ledger.total(phase="train"), ledger.total(phase="eval"),
                      run.episodes, run.converged_at, run.rewards)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run_experiment(spec: ExperimentSpec) -> list[SeedResult]:
    """Train and evaluate every seed of ``spec`` and write the result files."""
    spec.validate()
    out = spec.out_dir
    cfg = spec.scenario
    with open(out / "resolved_config.txt", "w") as fh:
        fh.write(f"# setup={spec.setup} seeds={','.join(map(str, spec.seeds))} "
                 f"n_episodes={spec.n_episodes or cfg.n_episodes} "
                 f"n_eval={spec.n_eval or cfg.n_eval_seeds}\n")
        fh.write(config_io.dumps(cfg))
    server = GatewayServer(spec.gateway) if spec.gateway else None
    results = []
    try:
        for seed in spec.seeds:
            results.append(run_seed(spec, seed, server, out / "checkpoints"))
    finally:
        if server is not None:
            server.close()

    _write_csv(out / "metrics.csv", ["run_id", "seed", "device", "availability", "crossing_rate"],
               [(spec.label, r.seed, u, repr(a), repr(p))
                for r in results for u, (a, p) in enumerate(r.device_kpis)])
    _write_csv(out / "signals.csv",
               ["run_id", "seed", "phase", "messages", "episodes", "converged_at"],
               [row for r in results for row in (
                   (spec.label, r.seed, "train", r.train_signals, r.episodes,
                    "" if r.converged_at is None else r.converged_at),
                   (spec.label, r.seed, "eval", r.eval_signals, spec.n_eval or cfg.n_eval_seeds, ""))])
    _write_csv(out / "rewards.csv", ["run_id", "seed", "episode", "agent", "mean_reward"],
               [(spec.label, r.seed, e, name, repr(v))
                for r in results for name, series in r.rewards.items()
                for e, v in enumerate(series)])
    return results


# -- plot data -----------------------------------------------------------------
def empirical_cdf(values: Sequence[float]) -> list[tuple[float, float]]:
    """``(x, P(X <= x))`` at every distinct sample value."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        return []
    distinct = np.unique(x)
    counts = np.searchsorted(x, distinct, side="right")
    return [(float(v), float(c) / x.size) for v, c in zip(distinct, counts)]


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plot_data(metrics_dir: str | Path, expected: Sequence[str] = (),
                   out_dir: str | Path | None = None) -> dict[str, Path]:
    """Availability CDF, crossing-rate CCDF, mean/p5 summary and signal
    totals from every ``metrics.csv``/``signals.csv`` under ``metrics_dir``.

    ``expected`` lists run ids that must be present.
    """
    root = Path(metrics_dir)
    metric_files = sorted(root.rglob("metrics.csv"))
    rows = [row for f in metric_files for row in _read_rows(f)]
    signal_rows = [row for f in sorted(root.rglob("signals.csv")) for row in _read_rows(f)]
    present = {row["run_id"] for row in rows}
    missing = [run for run in expected if run not in present]
    if not rows:
        missing = missing or ["<any run>"]
    if missing:
        raise ExperimentError([f"missing run: {m}" for m in missing])

    out = Path(out_dir) if out_dir is not None else root / "plots"
    out.mkdir(parents=True, exist_ok=True)
    runs = sorted(present)
    by_run = {run: [r for r in rows if r["run_id"] == run] for run in runs}
    avail = {run: [float(r["availability"]) for r in rs] for run, rs in by_run.items()}
    psi = {run: [float(r["crossing_rate"]) for r in rs] for run, rs in by_run.items()}

    paths = {name: out / f"{name}.csv" for name in
             ("availability_cdf", "crossing_rate_ccdf", "summary", "signal_totals")}
    _write_csv(paths["availability_cdf"], ["run_id", "availability", "cdf"],
               [(run, repr(x), repr(p)) for run in runs for x, p in empirical_cdf(avail[run])])
    _write_csv(paths["crossing_rate_ccdf"], ["run_id", "crossing_rate", "ccdf"],
               [(run, repr(x), repr(1.0 - p)) for run in runs for x, p in empirical_cdf(psi[run])])
    _write_csv(paths["summary"], ["run_id", "metric", "mean", "p5", "samples"],
               [row for run in runs for row in (
                   (run, "availability", repr(float(np.mean(avail[run]))),
                    repr(nearest_rank(np.array(avail[run]), 5)), len(avail[run])),
                   (run, "crossing_rate", repr(float(np.mean(psi[run]))),
                    repr(nearest_rank(np.array(psi[run]), 5)), len(psi[run])))])
    totals: dict[tuple[str, str], int] = {}
    for r in signal_rows:
        key = (r["run_id"], r["phase"])
        totals[key] = totals.get(key, 0) + int(r["messages"])
    _write_csv(paths["signal_totals"], ["run_id", "phase", "messages"],
               [(run, phase, n) for (run, phase), n in sorted(totals.items())])
    return paths


# -- command line --------------------------------------------------------------
def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ExperimentError([f"seeds: cannot parse {text!r}"]) from None


def _fail(problems: list[str]) -> int:
    json.dump({"errors": problems}, sys.stderr)
    sys.stderr.write("\n")
    return 2


def main(argv: Sequence[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="hrlurllc", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="scenario file with key=value lines")
    p.add_argument("--setup", required=True, help="|".join(SETUPS))
    p.add_argument("--seeds", default="0", help="comma-separated run seeds")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--gateway", help="host:port to serve the remote agent on")
    p.add_argument("--dump-traces", action="store_true",
                   help="write the filtered service trace of every device per evaluation episode")
    args = p.parse_args(argv)
    try:
        cfg = config_io.load(args.config) if args.config else ScenarioConfig()
        spec = ExperimentSpec(cfg, args.setup.lower(), _parse_seeds(args.seeds), Path(args.out),
                              gateway=args.gateway, dump_traces=args.dump_traces)
        results = run_experiment(spec)
        emit_plot_data(spec.out_dir, [spec.label])
    except (ConfigError, ExperimentError) as exc:
        return _fail(exc.problems)
    except OSError as exc:
        return _fail([str(exc)])
    for r in results:
        print(f"{spec.label} seed={r.seed} availability={r.mean_availability:.5f} "
              f"crossing_rate={r.mean_crossing_rate:.3f}/s episodes={r.episodes} "
              f"converged_at={r.converged_at} signals={r.train_signals}")
    return 0


def agent_main(argv: Sequence[str] | None = None) -> int:
    """Run one learning agent behind the gateway of a ``--gateway`` experiment."""
    p = argparse.ArgumentParser(prog="hrlurllc-agent")
    p.add_argument("--connect", required=True, help="host:port of the experiment")
    p.add_argument("--setup", required=True)
    p.add_argument("--agent-id", default=None, help="flat or high (default: the remote agent)")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", help="start from this policy file")
    args = p.parse_args(argv)
    try:
        cfg = config_io.load(args.config) if args.config else ScenarioConfig()
        if args.setup.lower() not in SETUPS or SETUPS[args.setup.lower()][1] == "fixed_baseline":
            raise ExperimentError([f"setup: {args.setup!r} has no remote agent"])
        framework = SETUPS[args.setup.lower()][1]
        name = args.agent_id or ("flat" if framework == "flat_rl" else "high")
        if args.checkpoint:
            agent = BranchingSacAgent.load(args.checkpoint)
        else:
            agent = build_agents(framework, cfg, args.seed)[name]
        n = gateway_connect(args.connect, name, agent, explore=True, learn=True,
                            updates=cfg.updates_per_step)
    except (ConfigError, ExperimentError) as exc:
        return _fail(exc.problems)
    except (OSError, ValueError, RuntimeError) as exc:
        return _fail([f"{type(exc).__name__}: {exc}"])
    print(f"{name}: {n} actions")
    return 0


if __name__ == "__main__":
    sys.exit(main())
