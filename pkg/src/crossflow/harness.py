"""Seeded episode runner and the two comparison studies.

Study 1 (full detection): the greedy trained policy against the actuated
baselines on identical seeded demand, summarised as per-controller mean and
standard deviation of the episode mean total delay.

Study 2 (partial detection): the same policy evaluated at a sampled
connected-vehicle rate versus the full-detection reference on identical
traffic, with the relative delay loss aggregated into penetration-rate
buckets of width 0.1 and scanned against configurable loss ceilings.

Episode matching relies on the demand module's dedicated arrival streams:
for a fixed episode seed the arrival schedule is byte-identical no matter
which controller runs or what cv_rate override is applied.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .agent import GreedyPolicyController
from .controllers import BASELINES, Controller
from .demand import STREAM_POLICY, DemandConfig, sample_demand
from .encoder import GridSpec
from .geometry import build_scenario
from .nn import load_checkpoint
from .rewards import DelayMeter
from .rng import RngStream
from .signals import SignalTiming
from .simulation import DT, EventRecorder, TrafficSim

# substream labels under the evaluation master seed
_KEY_EP_SEED = 30
_KEY_EP_DEMAND = 31
_KEY_CV_RATE = 32

PD_REFERENCE_ID = "dqn-fd"


@dataclass(frozen=True)
class EpisodeStats:
    scenario: str
    controller: str
    episode: int
    seed: int
    cv_rate: float
    mean_total_delay: float
    throughput: int
    mean_queue: float
    steps: int


@dataclass(frozen=True)
class ControllerSummary:
    scenario: str
    controller: str
    episodes: int
    mean_total_delay: float
    std_total_delay: float
    mean_throughput: float
    mean_queue: float


@dataclass(frozen=True)
class BucketStats:
    scenario: str
    low: float
    high: float
    pairs: int
    mean_loss_pct: float
    std_loss_pct: float


@dataclass
class ComparisonReport:
    episodes: list[EpisodeStats] = field(default_factory=list)
    summaries: list[ControllerSummary] = field(default_factory=list)
    histograms: dict = field(default_factory=dict)
    buckets: list[BucketStats] = field(default_factory=list)
    thresholds: dict = field(default_factory=dict)
    ceilings: tuple = ()

    def summary_for(self, scenario: str, controller: str) -> ControllerSummary:
        for s in self.summaries:
            if s.scenario == scenario and s.controller == controller:
                return s
        raise KeyError((scenario, controller))

    def bucket_for(self, scenario: str, low: float) -> BucketStats:
        for b in self.buckets:
            if b.scenario == scenario and abs(b.low - low) < 1e-9:
                return b
        raise KeyError((scenario, low))


def build_controller(controller_id: str, params=None,
                     grid: GridSpec = GridSpec()) -> Controller:
    if controller_id == "dqn" or controller_id == PD_REFERENCE_ID:
        if params is None:
            raise ValueError("dqn controller needs trained parameters")
        return GreedyPolicyController(params, grid)
    try:
        return BASELINES[controller_id]()
    except KeyError:
        raise ValueError(f"unknown controller {controller_id!r}") from None


def run_episode(scenario: str, controller: Controller, demand: DemandConfig,
                seed: int, horizon: float = 3600.0,
                timing: SignalTiming | None = None,
                recorder: EventRecorder | None = None,
                episode: int = 0) -> EpisodeStats:
    """Simulate one episode under the given controller.

    Per-second loop: enforce any max-green advance, let the controller
    observe (accumulation-style baselines need every second), apply its
    decision when the phase machine is at a legal decision point, then step
    the world. A controller returning None holds without consuming the
    decision point.
    """
    inter = build_scenario(scenario)
    sim = TrafficSim(inter, demand, seed, timing=timing, recorder=recorder)
    controller.reset(inter, sim.timing, RngStream(seed, (STREAM_POLICY,)))
    obs = sim.observe()
    meter = DelayMeter()
    queue_sum = 0.0
    n_steps = int(round(horizon / DT))
    for _ in range(n_steps):
        sim.resolve_forced_advance()
        controller.tick(obs)
        if sim.decision_ready():
            action = controller.decide(obs)
            if action is not None:
                sim.apply_action(action)
        ev = sim.step()
        meter.add(ev.delay_sum)
        queue_sum += ev.queue
    return EpisodeStats(
        scenario=scenario, controller=controller.name, episode=episode,
        seed=seed, cv_rate=demand.cv_rate, mean_total_delay=meter.mean(),
        throughput=sim.n_exited,
        mean_queue=queue_sum / n_steps if n_steps else 0.0,
        steps=n_steps)


# -- checkpoint plumbing --------------------------------------------------------


def resolve_params(params_by_scenario: dict, scenario: str) -> dict:
    """Accept either in-memory parameter dicts or checkpoint paths."""
    try:
        entry = params_by_scenario[scenario]
    except KeyError:
        raise FileNotFoundError(
            f"no checkpoint provided for scenario {scenario!r}") from None
    if isinstance(entry, (str, os.PathLike)):
        params, _ = load_checkpoint(entry, expect_scenario=scenario)
        return params
    return entry


# -- worker-pool plumbing -------------------------------------------------------


def _episode_task(task: tuple) -> tuple[int, EpisodeStats]:
    (index, scenario, controller_id, params, demand, seed, episode,
     timing, grid) = task
    controller = build_controller(controller_id, params, grid)
    stats = run_episode(scenario, controller, demand, seed,
                        timing=timing, episode=episode)
    if stats.controller != controller_id:
        stats = replace(stats, controller=controller_id)
    return index, stats


def _run_tasks(tasks: list[tuple], jobs: int) -> list[EpisodeStats]:
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            indexed = list(pool.map(_episode_task, tasks))
    else:
        indexed = [_episode_task(t) for t in tasks]
    indexed.sort(key=lambda pair: pair[0])
    return [stats for _, stats in indexed]


# -- study 1: full detection ----------------------------------------------------


def compare_fd(scenarios, params_by_scenario: dict, episodes: int = 50,
               seed: int = 0,
               controllers=("dqn", "max_pressure", "sotl"),
               timing: SignalTiming | None = None, out_dir: str | None = None,
               jobs: int = 1, grid: GridSpec = GridSpec()) -> ComparisonReport:
    """Evaluate the trained policy (at full detection) against baselines on
    identical seeded demand lists."""
    report = ComparisonReport()
    tasks = []
    index = 0
    for s_idx, scenario in enumerate(scenarios):
        inter = build_scenario(scenario)
        params = (resolve_params(params_by_scenario, scenario)
                  if "dqn" in controllers else None)
        for ep in range(episodes):
            ep_seed = RngStream(seed, (_KEY_EP_SEED, s_idx, ep)).derive_seed()
            demand = sample_demand(
                inter, RngStream(seed, (_KEY_EP_DEMAND, s_idx, ep)))
            for cid in controllers:
                ep_demand = demand.with_cv_rate(1.0) if cid == "dqn" else demand
                ep_params = params if cid == "dqn" else None
                tasks.append((index, scenario, cid, ep_params, ep_demand,
                              ep_seed, ep, timing, grid))
                index += 1
    report.episodes = _run_tasks(tasks, jobs)
    for scenario in scenarios:
        for cid in controllers:
            rows = [e for e in report.episodes
                    if e.scenario == scenario and e.controller == cid]
            delays = np.array([e.mean_total_delay for e in rows])
            report.summaries.append(ControllerSummary(
                scenario=scenario, controller=cid, episodes=len(rows),
                mean_total_delay=float(delays.mean()),
                std_total_delay=float(delays.std()),
                mean_throughput=float(np.mean([e.throughput for e in rows])),
                mean_queue=float(np.mean([e.mean_queue for e in rows]))))
            counts, edges = np.histogram(delays, bins=10)
            report.histograms[(scenario, cid)] = (edges.tolist(),
                                                  counts.tolist())
    if out_dir is not None:
        write_episode_csv(os.path.join(out_dir, "episodes.csv"),
                          report.episodes)
        write_fd_summary(os.path.join(out_dir, "fd_summary.csv"),
                         report.summaries)
        write_histograms(os.path.join(out_dir, "fd_histograms.csv"),
                         report.histograms)
    return report


# -- study 2: partial detection -------------------------------------------------


def compare_pd(scenarios, params_by_scenario: dict, pairs: int = 300,
               seed: int = 0, timing: SignalTiming | None = None,
               out_dir: str | None = None, jobs: int = 1,
               stratified: bool = True, ceilings: tuple = (40.0, 20.0),
               n_buckets: int = 10,
               grid: GridSpec = GridSpec()) -> ComparisonReport:
    """Loss of the policy under partial detection, relative to the same
    policy at full detection on identical traffic, bucketed by cv rate.

    Stratified sampling walks the buckets round-robin (uniform within each)
    so every bucket receives pairs/n_buckets episodes; plain uniform sampling
    is available for exploratory runs.
    """
    report = ComparisonReport(ceilings=tuple(ceilings))
    tasks = []
    pair_meta: list[tuple[str, float]] = []
    index = 0
    for s_idx, scenario in enumerate(scenarios):
        inter = build_scenario(scenario)
        params = resolve_params(params_by_scenario, scenario)
        cv_rng = RngStream(seed, (_KEY_CV_RATE, s_idx))
        for ep in range(pairs):
            u = cv_rng.random()
            if stratified:
                p = (ep % n_buckets + u) / n_buckets
            else:
                p = u
            ep_seed = RngStream(seed, (_KEY_EP_SEED, s_idx, ep)).derive_seed()
            demand = sample_demand(
                inter, RngStream(seed, (_KEY_EP_DEMAND, s_idx, ep)))
            tasks.append((index, scenario, "dqn", params,
                          demand.with_cv_rate(p), ep_seed, ep, timing, grid))
            index += 1
            tasks.append((index, scenario, PD_REFERENCE_ID, params,
                          demand.with_cv_rate(1.0), ep_seed, ep, timing,
                          grid))
            index += 1
            pair_meta.append((scenario, p))
    report.episodes = _run_tasks(tasks, jobs)
    losses: dict[tuple[str, int], list[float]] = {}
    for pair_idx, (scenario, p) in enumerate(pair_meta):
        pd_stats = report.episodes[2 * pair_idx]
        fd_stats = report.episodes[2 * pair_idx + 1]
        if fd_stats.mean_total_delay <= 0.0:
            continue  # relative loss undefined on an empty reference
        loss = 100.0 * (pd_stats.mean_total_delay - fd_stats.mean_total_delay) \
            / fd_stats.mean_total_delay
        bucket = min(int(p * n_buckets), n_buckets - 1)
        losses.setdefault((scenario, bucket), []).append(loss)
    for scenario in scenarios:
        for b in range(n_buckets):
            vals = losses.get((scenario, b))
            if not vals:
                continue
            arr = np.array(vals)
            report.buckets.append(BucketStats(
                scenario=scenario, low=b / n_buckets, high=(b + 1) / n_buckets,
                pairs=len(vals), mean_loss_pct=float(arr.mean()),
                std_loss_pct=float(arr.std())))
        for ceiling in ceilings:
            report.thresholds[(scenario, ceiling)] = _scan_threshold(
                [bk for bk in report.buckets if bk.scenario == scenario],
                ceiling)
    if out_dir is not None:
        write_episode_csv(os.path.join(out_dir, "episodes.csv"),
                          report.episodes)
        write_bucket_csv(os.path.join(out_dir, "pd_loss_by_bucket.csv"),
                         report.buckets)
        with open(os.path.join(out_dir, "thresholds.txt"), "w") as fh:
            fh.write(threshold_report(report))
    return report


def _scan_threshold(buckets: list[BucketStats], ceiling: float) -> float | None:
    """Smallest bucket lower bound whose mean loss is strictly below the
    ceiling; None when no bucket qualifies. Buckets without data are skipped."""
    for bucket in sorted(buckets, key=lambda b: b.low):
        if bucket.mean_loss_pct < ceiling:
            return bucket.low
    return None


def threshold_report(report: ComparisonReport) -> str:
    """Human-readable threshold scan, one line per (scenario, ceiling)."""
    lines = []
    for (scenario, ceiling), low in sorted(report.thresholds.items()):
        if low is None:
            lines.append(f"scenario {scenario}: loss < {ceiling:g}% "
                         "not reached")
        else:
            lines.append(f"scenario {scenario}: loss < {ceiling:g}% "
                         f"from cv_rate >= {low:g}")
    return "\n".join(lines) + "\n"


# -- CSV output -------------------------------------------------------------------
# Floats are written with repr so that recomputing aggregates from the raw
# rows reproduces the in-memory report bit for bit.


def _ensure_dir(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def write_episode_csv(path: str, episodes: list[EpisodeStats]) -> None:
    _ensure_dir(path)
    rows = ["scenario,controller,episode,seed,cv_rate,mean_total_delay,"
            "throughput,mean_queue,steps"]
    for e in episodes:
        rows.append(f"{e.scenario},{e.controller},{e.episode},{e.seed},"
                    f"{e.cv_rate!r},{e.mean_total_delay!r},{e.throughput},"
                    f"{e.mean_queue!r},{e.steps}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def write_fd_summary(path: str, summaries: list[ControllerSummary]) -> None:
    _ensure_dir(path)
    rows = ["scenario,controller,episodes,mean_total_delay,std_total_delay,"
            "mean_throughput,mean_queue"]
    for s in summaries:
        rows.append(f"{s.scenario},{s.controller},{s.episodes},"
                    f"{s.mean_total_delay!r},{s.std_total_delay!r},"
                    f"{s.mean_throughput!r},{s.mean_queue!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def write_bucket_csv(path: str, buckets: list[BucketStats]) -> None:
    _ensure_dir(path)
    rows = ["scenario,bucket_low,bucket_high,pairs,mean_loss_pct,"
            "std_loss_pct"]
    for b in buckets:
        rows.append(f"{b.scenario},{b.low!r},{b.high!r},{b.pairs},"
                    f"{b.mean_loss_pct!r},{b.std_loss_pct!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def write_histograms(path: str, histograms: dict) -> None:
    _ensure_dir(path)
    rows = ["scenario,controller,bin_low,bin_high,count"]
    for (scenario, cid), (edges, counts) in sorted(histograms.items()):
        for i, count in enumerate(counts):
            rows.append(f"{scenario},{cid},{edges[i]!r},{edges[i + 1]!r},"
                        f"{count}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
