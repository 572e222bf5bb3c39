"""Experiment orchestration: training campaigns, evaluation, and reports.

A run directory holds one artifact trio per seed: metrics_seed<S>.csv,
params_seed<S>.bin (learning agents only), and manifest_seed<S>.json.
Given (config, seed) every artifact byte is reproducible except the
wall_time_s column, which measures real elapsed time.
"""

from __future__ import annotations

import csv
import json
import platform
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .agents import build_agent
from .configio import ExperimentConfig, build_workload, config_hash
from .domain import Transition, ValidationError
from .nets import load_mlp, save_mlp
from .replay import ReplayBuffer
from .rewards import episode_metrics, total_reward
from .rng import child_seed, stream
from .simulator import ClusterSim

__all__ = [
    "EpisodeRow",
    "METRICS_HEADER",
    "export_csv",
    "load_metrics",
    "run_training",
    "train_one_seed",
    "run_evaluation",
    "RunSummary",
    "load_run",
    "ComparisonReport",
    "compare_runs",
    "REPORT_METRICS",
]

METRICS_HEADER = ["episode", "seed", "mean_latency_ms", "resource_efficiency",
                  "slo_violation_rate", "total_reward", "wall_time_s"]

REPORT_METRICS = ("mean_latency_ms", "resource_efficiency",
                  "slo_violation_rate", "total_reward")


@dataclass(frozen=True)
class EpisodeRow:
    """One exported metrics line; column order matches METRICS_HEADER."""

    episode: int
    seed: int
    mean_latency_ms: float
    resource_efficiency: float
    slo_violation_rate: float
    total_reward: float
    wall_time_s: float

    def as_csv(self) -> list[str]:
        return [str(self.episode), str(self.seed),
                repr(self.mean_latency_ms), repr(self.resource_efficiency),
                repr(self.slo_violation_rate), repr(self.total_reward),
                repr(self.wall_time_s)]


def export_csv(rows: list[EpisodeRow], path: str | Path) -> None:
    """Plain CSV, repr-formatted floats so a parse-back is exact."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_HEADER)
            for row in rows:
                writer.writerow(row.as_csv())
    except OSError as exc:
        raise ValidationError(f"cannot write metrics to {path}: {exc.strerror or exc}") from exc


def load_metrics(path: str | Path) -> list[EpisodeRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != METRICS_HEADER:
            raise ValidationError(f"{path}: unexpected metrics header {header}")
        for line in reader:
            if len(line) != len(METRICS_HEADER):
                raise ValidationError(f"{path}: malformed row {line}")
            rows.append(EpisodeRow(int(line[0]), int(line[1]), *map(float, line[2:])))
    return rows


def _metrics_path(out_dir: Path, seed: int) -> Path:
    return out_dir / f"metrics_seed{seed}.csv"


def _params_path(out_dir: Path, seed: int) -> Path:
    return out_dir / f"params_seed{seed}.bin"


def _manifest_path(out_dir: Path, seed: int) -> Path:
    return out_dir / f"manifest_seed{seed}.json"


def _write_manifest(out_dir: Path, seed: int, config: ExperimentConfig,
                    counters: dict, status: str, error: str | None = None) -> None:
    doc = {
        "algorithm": config.algorithm,
        "scenario": config.scenario,
        "seed": seed,
        "config_hash": config_hash(config),
        "episodes": config.episodes,
        "steps_per_episode": config.steps_per_episode,
        "status": status,
        "counters": counters,
        "versions": {
            "package": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    if error is not None:
        doc["error"] = error
    _manifest_path(out_dir, seed).write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _agent_counters(agent, env_steps: int) -> dict:
    return {
        "env_steps": env_steps,
        "critic_updates": getattr(agent, "critic_update_count", 0),
        "actor_updates": getattr(agent, "actor_update_count", 0),
        "train_steps": getattr(agent, "train_step_count", 0),
    }


def train_one_seed(config: ExperimentConfig, seed: int, out_dir: Path) -> list[EpisodeRow]:
    """One full training campaign: M episodes of T steps, then artifacts.

    The per-episode loop is: act (with exploration) -> env step -> reward ->
    store transition -> one learn() call, breaking early if the episode
    reports done. Metrics are appended to the seed's CSV after every
    episode so partial runs stay inspectable.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    workload = build_workload(config)
    sim_cfg = replace(config.sim, seed=seed)
    env = ClusterSim(sim_cfg, workload)
    agent = build_agent(config.algorithm, sim_cfg.n_services, stream(seed, "init"),
                        td3=config.td3, dqn=config.dqn,
                        initial_action=sim_cfg.initial_action(),
                        basek_mode=config.basek_mode)
    explore_rng = stream(seed, "explore")
    sample_rng = stream(seed, "sample")
    if config.algorithm in ("td3", "ddpg"):
        buffer = ReplayBuffer(config.td3.buffer_capacity)
    elif config.algorithm == "dqn":
        buffer = ReplayBuffer(config.dqn.buffer_capacity)
    else:
        buffer = ReplayBuffer(1)  # never written

    rows: list[EpisodeRow] = []
    t_global = 0
    csv_path = _metrics_path(out_dir, seed)
    try:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_HEADER)
            for episode in range(config.episodes):
                t_start = time.perf_counter()
                _, obs = env.reset(seed=child_seed(seed, "episode", episode))
                raw = env.last_raw
                prev_action = env.state.alloc
                trajectory = []
                for _ in range(config.steps_per_episode):
                    action = agent.act(obs, raw, t_global, True, explore_rng)
                    _, next_obs, raw, done = env.step(action)
                    breakdown = total_reward(raw, action, prev_action,
                                             sim_cfg.l_target, config.reward)
                    if agent.trainable:
                        buffer.add(Transition(obs, action, breakdown.total,
                                              next_obs, done))
                        agent.learn(buffer, sample_rng)
                    trajectory.append((raw, breakdown.total))
                    obs = next_obs
                    prev_action = action
                    t_global += 1
                    if done:
                        break
                met = episode_metrics(trajectory, sim_cfg.l_target)
                row = EpisodeRow(episode, seed, met.mean_latency_ms,
                                 met.resource_efficiency, met.slo_violation_rate,
                                 met.total_reward, time.perf_counter() - t_start)
                writer.writerow(row.as_csv())
                fh.flush()
                rows.append(row)
    except Exception as exc:
        _write_manifest(out_dir, seed, config, _agent_counters(agent, t_global),
                        status="aborted", error=f"{type(exc).__name__}: {exc}")
        raise
    if agent.trainable:
        save_mlp(agent.policy_net(), _params_path(out_dir, seed))
    _write_manifest(out_dir, seed, config, _agent_counters(agent, t_global),
                    status="complete")
    return rows


def run_training(config: ExperimentConfig) -> Path:
    """Full campaign over all configured seeds; returns the run directory."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for seed in config.seeds:
        train_one_seed(config, seed, out_dir)
    return out_dir


def run_evaluation(config: ExperimentConfig, params_path: str | Path | None,
                   episodes: int, seeds: tuple[int, ...] | None = None) -> list[EpisodeRow]:
    """Greedy rollouts of a saved policy: no noise, no learning, no buffer."""
    if episodes < 1:
        raise ValidationError("episodes must be >= 1")
    seeds = config.seeds if seeds is None else seeds
    workload = build_workload(config)
    rows: list[EpisodeRow] = []
    for seed in seeds:
        sim_cfg = replace(config.sim, seed=seed)
        env = ClusterSim(sim_cfg, workload)
        agent = build_agent(config.algorithm, sim_cfg.n_services, stream(seed, "init"),
                            td3=config.td3, dqn=config.dqn,
                            initial_action=sim_cfg.initial_action(),
                            basek_mode=config.basek_mode)
        if agent.trainable:
            if params_path is None:
                raise ValidationError(
                    f"algorithm {config.algorithm!r} needs a parameter file to evaluate")
            agent.load_policy(load_mlp(params_path,
                                       expect_sizes=agent.policy_net().layer_sizes))
        idle_rng = stream(seed, "eval")
        for episode in range(episodes):
            t_start = time.perf_counter()
            _, obs = env.reset(seed=child_seed(seed, "eval", episode))
            raw = env.last_raw
            prev_action = env.state.alloc
            trajectory = []
            for _ in range(config.steps_per_episode):
                action = agent.act(obs, raw, 0, False, idle_rng)
                _, next_obs, raw, done = env.step(action)
                breakdown = total_reward(raw, action, prev_action,
                                         sim_cfg.l_target, config.reward)
                trajectory.append((raw, breakdown.total))
                obs = next_obs
                prev_action = action
                if done:
                    break
            met = episode_metrics(trajectory, sim_cfg.l_target)
            rows.append(EpisodeRow(episode, seed, met.mean_latency_ms,
                                   met.resource_efficiency, met.slo_violation_rate,
                                   met.total_reward, time.perf_counter() - t_start))
    return rows


# ---------------------------------------------------------------------------
# run comparison


@dataclass(frozen=True)
class RunSummary:
    """One completed run directory, loaded back for reporting."""

    path: Path
    algorithm: str
    scenario: str
    seeds: tuple[int, ...]
    by_seed: dict[int, list[EpisodeRow]]

    @property
    def label(self) -> str:
        return f"{self.algorithm}[{self.path.name}]"


def load_run(run_dir: str | Path) -> RunSummary:
    run_dir = Path(run_dir)
    manifests = sorted(run_dir.glob("manifest_seed*.json"))
    if not manifests:
        raise ValidationError(f"{run_dir}: no run manifests found")
    algorithm = scenario = None
    seeds = []
    by_seed: dict[int, list[EpisodeRow]] = {}
    for mpath in manifests:
        doc = json.loads(mpath.read_text(encoding="utf-8"))
        if doc.get("status") != "complete":
            raise ValidationError(f"{mpath}: run not complete (status {doc.get('status')!r})")
        if algorithm is None:
            algorithm, scenario = doc["algorithm"], doc["scenario"]
        elif (doc["algorithm"], doc["scenario"]) != (algorithm, scenario):
            raise ValidationError(f"{run_dir}: mixed algorithms/scenarios across seeds")
        seed = doc["seed"]
        seeds.append(seed)
        by_seed[seed] = load_metrics(_metrics_path(run_dir, seed))
    return RunSummary(run_dir, algorithm, scenario, tuple(sorted(seeds)), by_seed)


def _seed_means(run: RunSummary, metric: str, last_k: int | None) -> np.ndarray:
    """Per-seed mean of one metric, optionally over only the last K episodes."""
    values = []
    for seed in run.seeds:
        series = [getattr(r, metric) for r in run.by_seed[seed]]
        if last_k is not None:
            series = series[-last_k:]
        values.append(float(np.mean(series)))
    return np.array(values)


@dataclass(frozen=True)
class ComparisonReport:
    """Cross-run tables plus per-episode learning-curve series."""

    scenario: str
    runs: tuple[RunSummary, ...]
    last_k: int = 10

    def table_text(self) -> str:
        lines = [f"scenario: {self.scenario}"]
        width = max(len(r.label) for r in self.runs)
        for metric in REPORT_METRICS:
            lines.append("")
            lines.append(f"{metric} (mean +/- std across seeds)")
            lines.append(f"  {'run'.ljust(width)}  {'all-episode':>24}  "
                         f"{f'last-{self.last_k}':>24}")
            for run in self.runs:
                full = _seed_means(run, metric, None)
                tail = _seed_means(run, metric, self.last_k)
                lines.append(
                    f"  {run.label.ljust(width)}  "
                    f"{full.mean():>12.4f} +/- {full.std():<8.4f}  "
                    f"{tail.mean():>12.4f} +/- {tail.std():<8.4f}")
        return "\n".join(lines) + "\n"

    def curve_rows(self) -> list[list[str]]:
        """Long-format series: run, algorithm, metric, episode, mean across seeds."""
        rows = [["run", "algorithm", "metric", "episode", "mean"]]
        for run in self.runs:
            n_episodes = min(len(v) for v in run.by_seed.values())
            for metric in REPORT_METRICS:
                per_seed = np.array([[getattr(r, metric) for r in run.by_seed[s][:n_episodes]]
                                     for s in run.seeds])
                means = per_seed.mean(axis=0)
                for episode, value in enumerate(means):
                    rows.append([run.path.name, run.algorithm, metric,
                                 str(episode), repr(float(value))])
        return rows

    def write_curves(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(self.curve_rows())


def compare_runs(run_dirs: list[str | Path], last_k: int = 10) -> ComparisonReport:
    """Load >= 2 completed runs on one scenario and build the report."""
    if len(run_dirs) < 2:
        raise ValidationError("need at least two run directories to compare")
    runs = tuple(load_run(d) for d in run_dirs)
    scenarios = {r.scenario for r in runs}
    if len(scenarios) != 1:
        raise ValidationError(
            f"runs cover different scenarios {sorted(scenarios)}; "
            "comparisons must share one scenario")
    return ComparisonReport(scenario=runs[0].scenario, runs=runs, last_k=last_k)
