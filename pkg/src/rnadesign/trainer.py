"""PPO training and the three design strategies.

* ``run_learna`` trains a fresh policy online on one target, restarting the
  weights and optimizer when a restart period passes without a solution.
* ``run_meta_train`` trains one policy across many targets with worker
  threads feeding a single learner.
* ``run_meta_apply`` samples from a meta-trained policy, either frozen or
  while continuing PPO updates on the new target.

Rewards are terminal-only and undiscounted, so every transition of an
episode carries the episode's terminal reward as its return.
"""
from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .env import DesignEnv, RewardConfig
from .folding import FoldingOracle
from .policy import (
    Adam,
    ConfigMismatch,
    PolicyConfig,
    PolicyParams,
    _log_softmax,
    action_distribution,
    backward,
    build,
    forward,
    sample_actions,
)
from .structure import DotBracket, parse_dot_bracket

log = logging.getLogger(__name__)

STRATEGIES = ("learna", "meta_learna", "meta_learna_adapt")


@dataclass
class PPOConfig:
    clip_epsilon: float = 0.2
    epochs_per_batch: int = 4
    value_coeff: float = 0.5


@dataclass
class TrainLoopConfig:
    strategy: str = "learna"
    restart_period: Optional[float] = None  # seconds; None disables restarts
    ppo: PPOConfig = field(default_factory=PPOConfig)
    worker_count: int = 1
    time_budget: float = 60.0
    lis_enabled: bool = True
    xi: int = 5
    max_updates: Optional[int] = None  # stop after this many PPO updates
    queue_size: int = 64

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.strategy == "learna" and self.worker_count != 1:
            raise ValueError("learna runs with exactly one worker")

    def reward_config(self, policy_cfg: PolicyConfig) -> RewardConfig:
        return RewardConfig(alpha=policy_cfg.reward_exponent, xi=self.xi, lis_enabled=self.lis_enabled)


@dataclass
class Episode:
    target_id: int
    states: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    reward: float
    distance: int
    sequence: str
    duration: float = 0.0
    episode_id: int = -1

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class DesignResult:
    target: str
    sequence: Optional[str]
    distance: int
    solved: bool
    solve_time: Optional[float]
    elapsed: float
    episodes: int = 0
    updates: int = 0
    restarts: int = 0
    mean_distance: float = 0.0
    restart_seeds: list = field(default_factory=list)
    history: list = field(default_factory=list)
    params: Optional[PolicyParams] = field(default=None, repr=False)

    def record(self) -> dict:
        return {
            "target": self.target,
            "sequence": self.sequence,
            "distance": self.distance,
            "solved": self.solved,
            "solve_time": self.solve_time,
            "elapsed": self.elapsed,
            "episodes": self.episodes,
            "updates": self.updates,
            "restarts": self.restarts,
            "mean_distance": self.mean_distance,
        }


def derive_seed(master: int, *path: int) -> int:
    return int(np.random.SeedSequence([int(master), *path]).generate_state(1, np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------- PPO


class PPOBatch:
    """Flattened transitions of a batch of episodes."""

    def __init__(self, episodes: Sequence[Episode]):
        if not episodes:
            raise ValueError("empty batch")
        self.states = np.concatenate([e.states for e in episodes])
        self.actions = np.concatenate([e.actions for e in episodes]).astype(np.int64)
        self.old_log_probs = np.concatenate([e.log_probs for e in episodes])
        self.returns = np.concatenate([np.full(len(e), e.reward) for e in episodes])
        self.advantages = np.zeros_like(self.returns)

    def __len__(self) -> int:
        return len(self.actions)


def ppo_loss(params: PolicyParams, batch: PPOBatch, ppo: PPOConfig, entropy_coeff: float, grad: bool = True):
    """Clipped-surrogate loss (to be minimised) and its gradient.

    loss = -mean(min(r A, clip(r, 1-eps, 1+eps) A)) - c_H mean(H) + c_V mean((V - R)^2)
    """
    fwd = forward(params, batch.states)
    logp_all = _log_softmax(fwd.logits)
    probs = np.exp(logp_all)
    n = len(batch)
    rows = np.arange(n)
    logp = logp_all[rows, batch.actions]
    ratio = np.exp(logp - batch.old_log_probs)
    adv = batch.advantages
    eps = ppo.clip_epsilon
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - eps, 1 + eps) * adv
    surrogate = np.minimum(unclipped, clipped)
    ent = -(probs * logp_all).sum(axis=1)
    verr = fwd.value - batch.returns
    loss = -surrogate.mean() - entropy_coeff * ent.mean() + ppo.value_coeff * np.mean(verr**2)
    stats = {
        "loss": float(loss),
        "surrogate": float(surrogate.mean()),
        "entropy": float(ent.mean()),
        "value_error": float(np.mean(verr**2)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1) > eps)),
    }
    if not grad:
        return loss, None, stats
    # d surrogate / d logp: r*A where the unclipped branch is active
    clip_active = ((ratio > 1 + eps) & (adv > 0)) | ((ratio < 1 - eps) & (adv < 0))
    dsur_dlogp = np.where(clip_active, 0.0, unclipped)
    onehot = np.zeros_like(probs)
    onehot[rows, batch.actions] = 1.0
    dlogits = -(dsur_dlogp[:, None] * (onehot - probs)) / n
    # dH/dlogits_k = -p_k (log p_k + H)
    dlogits -= entropy_coeff * (-probs * (logp_all + ent[:, None])) / n
    dvalue = 2.0 * ppo.value_coeff * verr / n
    return loss, backward(params, fwd, dlogits, dvalue), stats


def ppo_update(params: PolicyParams, episodes: Sequence[Episode], ppo: PPOConfig, optimizer: Adam, entropy_coeff: Optional[float] = None):
    """Several gradient steps on one batch; returns (new params, stats)."""
    if entropy_coeff is None:
        entropy_coeff = params.config.entropy_coeff
    batch = PPOBatch(episodes)
    batch.advantages = batch.returns - forward(params, batch.states).value
    theta = params.theta
    stats = {}
    for _ in range(ppo.epochs_per_batch):
        current = params.with_theta(theta)
        _, g, stats = ppo_loss(current, batch, ppo, entropy_coeff)
        theta = optimizer.step(theta, g)
    stats["mean_reward"] = float(np.mean([e.reward for e in episodes]))
    return params.with_theta(theta), stats


# ------------------------------------------------------------ rollouts


def sample_episodes(params: PolicyParams, env: DesignEnv, count: int, rng: np.random.Generator, target_id: int = 0,
                    deadline: Optional[float] = None, stop_on_solve: bool = True) -> list[Episode]:
    """Play up to ``count`` episodes; stops early on a solve or deadline."""
    probs = action_distribution(params, env.states)
    logp = np.log(np.maximum(probs, 1e-300))
    actions = sample_actions(probs, count, rng)
    steps = np.arange(env.horizon)
    out = []
    for row in actions:
        t0 = time.perf_counter()
        o = env.rollout(row)
        out.append(Episode(target_id, env.states, row, logp[steps, row], o.reward, o.distance, o.sequence,
                           time.perf_counter() - t0))
        if stop_on_solve and o.distance == 0:
            break
        if deadline is not None and time.perf_counter() >= deadline:
            break
    return out


class _Tracker:
    def __init__(self, target: str, start: float):
        self.target = target
        self.start = start
        self.best_distance = len(target) + 1
        self.best_sequence = None
        self.solve_time = None
        self.episodes = 0
        self.distance_sum = 0

    def add(self, episodes):
        for e in episodes:
            self.episodes += 1
            self.distance_sum += e.distance
            if e.distance < self.best_distance:
                self.best_distance, self.best_sequence = e.distance, e.sequence
            if e.distance == 0 and self.solve_time is None:
                self.solve_time = time.perf_counter() - self.start

    def result(self, **kw) -> DesignResult:
        return DesignResult(
            target=self.target,
            sequence=self.best_sequence,
            distance=self.best_distance if self.best_sequence is not None else len(self.target),
            solved=self.solve_time is not None,
            solve_time=self.solve_time,
            elapsed=time.perf_counter() - self.start,
            episodes=self.episodes,
            mean_distance=self.distance_sum / self.episodes if self.episodes else float(len(self.target)),
            **kw,
        )


def _as_target(target) -> DotBracket:
    return target if isinstance(target, DotBracket) else parse_dot_bracket(str(target))


def _online(target, init: Callable[[int], PolicyParams], loop: TrainLoopConfig, policy_cfg: PolicyConfig,
            oracle: FoldingOracle, time_budget: float, seed: int, on_stats=None, on_restart=None) -> DesignResult:
    target = _as_target(target)
    start = time.perf_counter()
    deadline = start + time_budget
    env = DesignEnv(target, oracle, loop.reward_config(policy_cfg), policy_cfg.state_radius)
    rng = np.random.default_rng(derive_seed(seed, 1))
    params = init(0)
    optimizer = Adam(params.theta.size, policy_cfg.learning_rate)
    tracker = _Tracker(target.text, start)
    restarts, updates, history, seeds = 0, 0, [], []
    last_restart = start
    while time.perf_counter() < deadline:
        eps = sample_episodes(params, env, policy_cfg.batch_size, rng, deadline=deadline)
        tracker.add(eps)
        if tracker.solve_time is not None:
            break
        if time.perf_counter() >= deadline:
            break
        params, stats = ppo_update(params, eps, loop.ppo, optimizer)
        updates += 1
        now = time.perf_counter()
        rec = {"t": now - start, "episodes": tracker.episodes, "mean_reward": stats["mean_reward"],
               "best_distance": tracker.best_distance, "restarts": restarts}
        history.append(rec)
        if on_stats:
            on_stats(rec)
        if loop.max_updates is not None and updates >= loop.max_updates:
            break
        if loop.restart_period is not None and now - last_restart >= loop.restart_period:
            restarts += 1
            params = init(restarts)
            seeds.append(params.seed)
            optimizer = Adam(params.theta.size, policy_cfg.learning_rate)
            last_restart = now
            log.debug("restart %d on %s", restarts, target.text)
            if on_restart:
                on_restart(restarts, params)
    return tracker.result(updates=updates, restarts=restarts, restart_seeds=seeds, history=history, params=params)


def run_learna(target, loop: TrainLoopConfig, policy_cfg: PolicyConfig, oracle: FoldingOracle,
               time_budget: Optional[float] = None, seed: int = 0, on_stats=None, on_restart=None) -> DesignResult:
    """Design a sequence for one target, training a policy from scratch."""
    budget = loop.time_budget if time_budget is None else time_budget
    if budget <= 0:
        raise ValueError("time budget must be positive")
    return _online(target, lambda k: build(policy_cfg, derive_seed(seed, 0, k)), loop, policy_cfg, oracle,
                   budget, seed, on_stats, on_restart)


def run_meta_apply(params: PolicyParams, target, loop: TrainLoopConfig, oracle: FoldingOracle,
                   time_budget: Optional[float] = None, adapt: bool = False, seed: int = 0,
                   policy_cfg: Optional[PolicyConfig] = None, max_episodes: Optional[int] = None) -> DesignResult:
    """Apply a meta-trained policy to a new target.

    Frozen (``adapt=False``): sample candidates until solved or out of time.
    Adaptive: continue PPO from the given weights with fresh optimizer moments;
    a restart returns to the given weights.
    """
    if policy_cfg is not None and policy_cfg.architecture_hash() != params.config.architecture_hash():
        raise ConfigMismatch("policy config does not match the checkpoint architecture")
    policy_cfg = params.config if policy_cfg is None else policy_cfg
    budget = loop.time_budget if time_budget is None else time_budget
    if adapt:
        base = params.theta.copy()
        return _online(target, lambda k: params.with_theta(base.copy()), loop, policy_cfg, oracle, budget, seed)
    target = _as_target(target)
    start = time.perf_counter()
    deadline = start + budget
    env = DesignEnv(target, oracle, loop.reward_config(policy_cfg), policy_cfg.state_radius)
    rng = np.random.default_rng(derive_seed(seed, 1))
    tracker = _Tracker(target.text, start)
    while time.perf_counter() < deadline:
        n = policy_cfg.batch_size
        if max_episodes is not None:
            n = min(n, max_episodes - tracker.episodes)
            if n <= 0:
                break
        tracker.add(sample_episodes(params, env, n, rng, deadline=deadline))
        if tracker.solve_time is not None:
            break
    return tracker.result(params=params)


# --------------------------------------------------------- meta-training


@dataclass
class MetaTrainStats:
    produced: int = 0
    consumed: int = 0
    updates: int = 0
    applied_ids: set = field(default_factory=set)
    duplicates: int = 0
    unused: int = 0
    history: list = field(default_factory=list)


class _Learner:
    """Owns the mutable weights; workers read immutable snapshots."""

    def __init__(self, params: PolicyParams, loop: TrainLoopConfig):
        self._snapshot = params
        self._lock = threading.Lock()
        self.optimizer = Adam(params.theta.size, params.config.learning_rate)
        self.loop = loop

    @property
    def snapshot(self) -> PolicyParams:
        return self._snapshot

    def apply(self, episodes):
        params, stats = ppo_update(self._snapshot, episodes, self.loop.ppo, self.optimizer)
        with self._lock:
            self._snapshot = params
        return stats


def run_meta_train(train_targets, loop: TrainLoopConfig, policy_cfg: PolicyConfig, oracle: FoldingOracle,
                   time_budget: Optional[float] = None, seed: int = 0, on_stats=None,
                   stats_out: Optional[MetaTrainStats] = None) -> PolicyParams:
    """Train one policy on many targets.

    With one worker, episodes are produced in the learner's thread, making the
    run reproducible when ``loop.max_updates`` bounds it. With more workers,
    each thread repeatedly samples a target uniformly, plays one episode on the
    current snapshot and hands it to the learner through a bounded queue.
    """
    targets = [_as_target(t) for t in train_targets]
    if not targets:
        raise ValueError("training set is empty")
    budget = loop.time_budget if time_budget is None else time_budget
    start = time.perf_counter()
    deadline = start + budget
    reward_cfg = loop.reward_config(policy_cfg)
    learner = _Learner(build(policy_cfg, derive_seed(seed, 0, 0)), loop)
    stats = stats_out if stats_out is not None else MetaTrainStats()
    batch_size = policy_cfg.batch_size

    def record(batch, upd):
        stats.consumed += len(batch)
        stats.updates += 1
        rec = {"t": time.perf_counter() - start, "episodes": stats.consumed,
               "mean_reward": upd["mean_reward"],
               "best_distance": int(min(e.distance for e in batch)), "restarts": 0}
        stats.history.append(rec)
        if on_stats:
            on_stats(rec)

    def audit(batch):
        for e in batch:
            if e.episode_id in stats.applied_ids:
                stats.duplicates += 1
            stats.applied_ids.add(e.episode_id)

    def done():
        return time.perf_counter() >= deadline or (loop.max_updates is not None and stats.updates >= loop.max_updates)

    if loop.worker_count == 1:
        rng = np.random.default_rng(derive_seed(seed, 2, 0))
        envs = {}
        serial = 0
        while not done():
            batch = []
            while len(batch) < batch_size:
                k = int(rng.integers(len(targets)))
                env = envs.get(k) or envs.setdefault(k, DesignEnv(targets[k], oracle, reward_cfg, policy_cfg.state_radius))
                (ep,) = sample_episodes(learner.snapshot, env, 1, rng, target_id=k, stop_on_solve=False)
                ep.episode_id = serial
                serial += 1
                stats.produced += 1
                batch.append(ep)
            audit(batch)
            record(batch, learner.apply(batch))
        return learner.snapshot

    handoff: "queue.Queue[Episode]" = queue.Queue(maxsize=loop.queue_size)
    stop = threading.Event()
    counter_lock = threading.Lock()
    serial = [0]

    def worker(wid: int):
        rng = np.random.default_rng(derive_seed(seed, 2, wid))
        envs = {}
        while not stop.is_set():
            k = int(rng.integers(len(targets)))
            env = envs.get(k) or envs.setdefault(k, DesignEnv(targets[k], oracle, reward_cfg, policy_cfg.state_radius))
            (ep,) = sample_episodes(learner.snapshot, env, 1, rng, target_id=k, stop_on_solve=False)
            with counter_lock:
                ep.episode_id = serial[0]
                serial[0] += 1
                stats.produced += 1
            while not stop.is_set():
                try:
                    handoff.put(ep, timeout=0.05)
                    break
                except queue.Full:
                    continue
            else:
                with counter_lock:
                    stats.produced -= 1  # never handed off

    threads = [threading.Thread(target=worker, args=(w,), daemon=True) for w in range(loop.worker_count)]
    for t in threads:
        t.start()
    batch = []
    try:
        while not done():
            try:
                batch.append(handoff.get(timeout=0.05))
            except queue.Empty:
                continue
            if len(batch) == batch_size:
                audit(batch)
                record(batch, learner.apply(batch))
                batch = []
    finally:
        stop.set()
        for t in threads:
            t.join()
        # drain episodes produced but never applied
        leftovers = batch
        while True:
            try:
                leftovers.append(handoff.get_nowait())
            except queue.Empty:
                break
        stats.unused = len(leftovers)
    return learner.snapshot
