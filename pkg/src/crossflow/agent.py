"""Dueling double DQN agent: replay, exploration and the training loop.

One timestep = one control decision. The runner simulates the intermediate
seconds between decision points; at each decision it completes the pending
transition (s, a, r', s'), pushes it to replay, runs one gradient update
(once the warm-up fill is done), then picks the next action epsilon-greedily.
The reward r' is the normalised squared-delay measure evaluated at the moment
s' is observed.

Updates use the double form: the online network picks argmax_a' Q(s', a'),
the target network evaluates it, and the target trails the online weights by
a Polyak soft update after every step. Exploration decays exponentially in
the global step count t:

    eps(t) = max(eps_min, exp(-t * ln(1/eps_min) / eps_decay_steps))

so eps(0) = 1 and eps(eps_decay_steps) = eps_min.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .controllers import Controller
from .demand import sample_demand
from .encoder import GridSpec, encode_state, state_shape
from .geometry import build_scenario
from .rewards import DelayMeter, RewardNormalizer
from .rng import RngStream
from .signals import SignalTiming
from .simulation import TrafficSim
from .nn import (Adam, AdamConfig, NetSpec, forward, init_params,
                 polyak_update, save_checkpoint, td_loss_and_grads)
from .nn.qnetwork import clone_params

# child-stream labels under the master training seed
_KEY_INIT = 10
_KEY_EXPLORE = 11
_KEY_SAMPLE = 12
_KEY_DEMAND = 13
_KEY_SIM_SEEDS = 14


def epsilon_at(t: int, eps_min: float = 0.01,
               decay_steps: int = 2_000_000) -> float:
    return max(eps_min, math.exp(-t * math.log(1.0 / eps_min) / decay_steps))


def select_action(params, state: np.ndarray, eps: float, rng: RngStream,
                  n_actions: int) -> int:
    """Epsilon-greedy: explore uniformly with probability eps, else argmax
    (ties to the lowest action index). The forward pass is skipped on the
    explore branch."""
    if rng.random() < eps:
        return rng.integers(n_actions)
    return act_greedy(params, state)


def act_greedy(params, state: np.ndarray) -> int:
    q = forward(params, state)
    return int(np.argmax(q))


def double_td_targets(rewards: np.ndarray, terminals: np.ndarray,
                      q_next_online: np.ndarray, q_next_target: np.ndarray,
                      gamma: float) -> np.ndarray:
    """r' + gamma * Q_target(s', argmax_a' Q_online(s', a')), 0 bootstrap at
    episode ends."""
    a_star = np.argmax(q_next_online, axis=1)
    boot = q_next_target[np.arange(a_star.size), a_star]
    return rewards + np.float32(gamma) * boot * (1.0 - terminals)


class ReplayBuffer:
    """Uniform-sampling ring buffer with preallocated float32 state storage.

    Storage grows geometrically up to the capacity so an unfilled
    million-transition buffer does not reserve gigabytes up front.
    """

    def __init__(self, capacity: int, state_shape: tuple[int, ...]):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.state_shape = tuple(state_shape)
        self.size = 0
        self._head = 0
        self._alloc = 0
        self._s = self._a = self._r = self._s2 = self._t = None

    def _grow(self, need: int) -> None:
        alloc = max(4096, self._alloc * 2)
        alloc = min(self.capacity, max(alloc, need))
        shape = (alloc,) + self.state_shape
        def expand(old, shp, dtype):
            new = np.empty(shp, dtype=dtype)
            if old is not None:
                new[:old.shape[0]] = old
            return new
        self._s = expand(self._s, shape, np.float32)
        self._s2 = expand(self._s2, shape, np.float32)
        self._a = expand(self._a, (alloc,), np.int64)
        self._r = expand(self._r, (alloc,), np.float32)
        self._t = expand(self._t, (alloc,), np.float32)
        self._alloc = alloc

    def push(self, s, a, r, s2, terminal: bool) -> None:
        idx = self._head
        if idx >= self._alloc:
            self._grow(idx + 1)
        self._s[idx] = s
        self._a[idx] = a
        self._r[idx] = r
        self._s2[idx] = s2
        self._t[idx] = 1.0 if terminal else 0.0
        self._head = (self._head + 1) % self.capacity
        if self.size < self.capacity:
            self.size += 1

    def sample(self, rng: RngStream, m: int):
        if self.size == 0:
            raise ValueError("sampling from an empty buffer")
        idx = rng.generator.integers(0, self.size, size=m)
        return (self._s[idx], self._a[idx], self._r[idx], self._s2[idx],
                self._t[idx])

    def __len__(self) -> int:
        return self.size


class GreedyPolicyController(Controller):
    """Evaluation-time controller: argmax Q over the encoded CV grid."""

    name = "dqn"

    def __init__(self, params, grid: GridSpec = GridSpec()):
        self.params = params
        self.grid = grid

    def decide(self, obs) -> int:
        return act_greedy(self.params, encode_state(obs, self.grid))


@dataclass(frozen=True)
class TrainConfig:
    scenario: str = "a"
    steps: int = 150_000
    seed: int = 0
    pcv: str = "uniform"           # "uniform" or "fixed:<value>"
    gamma: float = 0.99
    lr: float = 1e-4
    eps_min: float = 0.01
    eps_decay_steps: int = 2_000_000
    buffer_capacity: int = 1_000_000
    warmup: int = 100_000
    batch_size: int = 64
    tau: float = 1e-3
    timing: SignalTiming = SignalTiming()
    grid: GridSpec = GridSpec()
    checkpoint_every: int = 0      # steps between periodic checkpoints
    out_dir: str = "runs"
    episode_horizon: float = 3600.0

    def cv_rate_override(self) -> float | None:
        if self.pcv == "uniform":
            return None
        if self.pcv.startswith("fixed:"):
            value = float(self.pcv.split(":", 1)[1])
            if not 0.0 <= value <= 1.0:
                raise ValueError("fixed cv rate outside [0, 1]")
            return value
        raise ValueError(f"bad pcv spec {self.pcv!r}")


@dataclass
class TrainResult:
    checkpoint_path: str
    log_path: str
    params: dict
    steps: int
    episodes: int
    log_rows: list = field(default_factory=list)


_LOG_HEADER = "episode,step,loss,mean_reward,epsilon,mean_total_delay"


class Trainer:
    def __init__(self, cfg: TrainConfig):
        cfg.cv_rate_override()  # validate early
        self.cfg = cfg
        self.inter = build_scenario(cfg.scenario)
        shape = state_shape(self.inter, cfg.grid)
        self.spec = NetSpec(shape, self.inter.n_phases)
        init_rng = RngStream(cfg.seed, (_KEY_INIT,))
        self.params = init_params(self.spec, init_rng.generator)
        self.target = clone_params(self.params)
        self.adam = Adam(self.params, AdamConfig(lr=cfg.lr))
        self.buffer = ReplayBuffer(cfg.buffer_capacity, shape)
        self.normalizer = RewardNormalizer()
        self.explore_rng = RngStream(cfg.seed, (_KEY_EXPLORE,))
        self.sample_rng = RngStream(cfg.seed, (_KEY_SAMPLE,))
        self.demand_rng = RngStream(cfg.seed, (_KEY_DEMAND,))
        self.sim_seed_rng = RngStream(cfg.seed, (_KEY_SIM_SEEDS,))
        self.t = 0
        self.episode = 0
        self.log_rows: list[str] = [_LOG_HEADER]
        self._pending: tuple[np.ndarray, int] | None = None

    # -- single gradient update ------------------------------------------------

    def train_step(self) -> float:
        cfg = self.cfg
        if len(self.buffer) < cfg.warmup:
            raise RuntimeError(
                f"refusing to update: buffer {len(self.buffer)} below "
                f"warm-up size {cfg.warmup}")
        s, a, r, s2, term = self.buffer.sample(self.sample_rng,
                                               cfg.batch_size)
        q_next_online = forward(self.params, s2)
        q_next_target = forward(self.target, s2)
        targets = double_td_targets(r, term, q_next_online, q_next_target,
                                    cfg.gamma)
        loss, grads, _ = td_loss_and_grads(self.params, s, a, targets)
        self.adam.step(self.params, grads)
        polyak_update(self.target, self.params, cfg.tau)
        self.t += 1
        return loss

    # -- episodes ---------------------------------------------------------------

    def _observe_decision(self, sim: TrafficSim, warmup: bool,
                          terminal: bool, ep_losses: list,
                          ep_rewards: list) -> bool:
        """Handle one observation point. Returns True when the run budget or
        warm-up fill is complete and the episode should stop."""
        cfg = self.cfg
        state = encode_state(sim.observe(), cfg.grid)
        reward = self.normalizer.update(sim.step_tsd())
        stop = False
        if self._pending is not None:
            s0, a0 = self._pending
            self._pending = None
            self.buffer.push(s0, a0, reward, state, terminal)
            ep_rewards.append(reward)
            if warmup:
                stop = len(self.buffer) >= cfg.warmup
            else:
                ep_losses.append(self.train_step())
                if (cfg.checkpoint_every
                        and self.t % cfg.checkpoint_every == 0):
                    self._save_checkpoint(f"q_step{self.t:08d}.ckpt")
                stop = self.t >= cfg.steps
        if not terminal and not stop:
            eps = 1.0 if warmup else epsilon_at(self.t, cfg.eps_min,
                                                cfg.eps_decay_steps)
            action = select_action(self.params, state, eps,
                                   self.explore_rng, self.spec.n_actions)
            sim.apply_action(action)
            self._pending = (state, action)
        return stop

    def _run_episode(self, warmup: bool) -> None:
        cfg = self.cfg
        demand = sample_demand(self.inter, self.demand_rng)
        override = cfg.cv_rate_override()
        if override is not None:
            demand = demand.with_cv_rate(override)
        sim = TrafficSim(self.inter, demand, self.sim_seed_rng.derive_seed(),
                         timing=cfg.timing)
        self._pending = None
        meter = DelayMeter()
        ep_losses: list[float] = []
        ep_rewards: list[float] = []
        stopped = False
        for _ in range(int(cfg.episode_horizon)):
            sim.resolve_forced_advance()
            if sim.decision_ready():
                if self._observe_decision(sim, warmup, False,
                                          ep_losses, ep_rewards):
                    stopped = True
                    break
            meter.add(sim.step().delay_sum)
        if not stopped:
            self._observe_decision(sim, warmup, True, ep_losses, ep_rewards)
        self.episode += 1
        if not warmup:
            loss = float(np.mean(ep_losses)) if ep_losses else 0.0
            mean_r = float(np.mean(ep_rewards)) if ep_rewards else 0.0
            eps = epsilon_at(self.t, cfg.eps_min, cfg.eps_decay_steps)
            self.log_rows.append(
                f"{self.episode},{self.t},{loss:.8f},{mean_r:.8f},"
                f"{eps:.8f},{meter.mean():.8f}")

    # -- run --------------------------------------------------------------------

    def warmup_fill(self) -> None:
        """Random-action episodes until the buffer holds exactly cfg.warmup."""
        while len(self.buffer) < self.cfg.warmup:
            self._run_episode(warmup=True)

    def run(self) -> TrainResult:
        cfg = self.cfg
        os.makedirs(cfg.out_dir, exist_ok=True)
        if cfg.steps > 0:
            self.warmup_fill()
            while self.t < cfg.steps:
                self._run_episode(warmup=False)
        ckpt = self._save_checkpoint("q_final.ckpt")
        log_path = os.path.join(cfg.out_dir, "train_log.csv")
        with open(log_path, "wb") as fh:
            fh.write(("\n".join(self.log_rows) + "\n").encode())
        return TrainResult(checkpoint_path=ckpt, log_path=log_path,
                           params=self.params, steps=self.t,
                           episodes=self.episode, log_rows=self.log_rows)

    def _save_checkpoint(self, filename: str) -> str:
        path = os.path.join(self.cfg.out_dir, filename)
        save_checkpoint(path, self.params, scenario=self.cfg.scenario,
                        train_step=self.t, n_actions=self.spec.n_actions,
                        input_shape=self.spec.input_shape)
        return path


def train(cfg: TrainConfig) -> TrainResult:
    return Trainer(cfg).run()
