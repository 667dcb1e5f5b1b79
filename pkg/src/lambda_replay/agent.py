"""Training loops: the cache-refresh agent and the n-step target-network baseline.

Both agents share the same skeleton. The replay memory is seeded with
uniform-random experience, then the agent acts epsilon-greedily while
training at a fixed ratio of one minibatch per four environment steps. The
cache agent rebuilds its return cache at every refresh interval and runs its
whole training burst against the stored targets; no target network exists on
that path. The baseline samples uniformly from the full memory every four
steps and bootstraps its n-step targets from a stale parameter copy that is
refreshed on the same interval.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .envs import ApproxState, phi
from .replay import ReplayMemory, anneal_p, build_cache, sample_minibatch
from .returns import ReturnEstimatorConfig

STEPS_PER_MINIBATCH = 4
ROLLING_WINDOW = 100


class TrainingDiverged(RuntimeError):
    """Raised when a training burst produces a non-finite loss."""

    def __init__(self, refresh_index: int):
        super().__init__(f"non-finite loss during refresh {refresh_index}")
        self.refresh_index = refresh_index


@dataclass
class TrainConfig:
    total_steps: int = 200_000
    refresh_every: int = 1_000
    minibatch_size: int = 32
    cache_size: int = 8_000
    block_size: int = 100
    replay_capacity: int = 50_000
    replay_start: int = 5_000
    epsilon_initial: float = 1.0
    epsilon_final: float = 0.1
    epsilon_anneal_steps: int = 20_000
    priority_p0: float = 0.1
    history_len: int = 1
    estimator: ReturnEstimatorConfig = field(default_factory=ReturnEstimatorConfig)
    solved_threshold: float | None = None
    stop_when_solved: bool = False

    @property
    def minibatches_per_refresh(self) -> int:
        return self.cache_size // self.minibatch_size


@dataclass
class EpisodeRecord:
    index: int
    end_step: int
    score: float
    length: int
    rolling_mean: float
    epsilon: float


@dataclass
class RefreshRecord:
    index: int
    step: int
    priority_p: float
    lambda_mean: float
    lambda_min: float
    lambda_max: float
    median_abs_td_error: float
    mean_abs_td_error: float
    q_evals: int
    loss_mean: float
    wall_time_s: float
    block_lambdas: tuple


@dataclass
class RunLog:
    seed: int
    agent: str
    episodes: list = field(default_factory=list)
    refreshes: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    solved_at_step: int | None = None
    final_rolling: float = float("nan")

    def write_episode_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("episode,end_step,score,length,rolling_mean_100,epsilon\n")
            for e in self.episodes:
                fh.write(
                    f"{e.index},{e.end_step},{e.score!r},{e.length},"
                    f"{e.rolling_mean!r},{e.epsilon!r}\n"
                )

    def write_refresh_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(
                "refresh,step,priority_p,lambda_mean,lambda_min,lambda_max,"
                "median_abs_td_error,mean_abs_td_error,q_evals,loss_mean,"
                "wall_time_s,block_lambdas\n"
            )
            for r in self.refreshes:
                lams = " ".join(repr(float(v)) for v in r.block_lambdas)
                fh.write(
                    f"{r.index},{r.step},{r.priority_p!r},{r.lambda_mean!r},"
                    f"{r.lambda_min!r},{r.lambda_max!r},{r.median_abs_td_error!r},"
                    f"{r.mean_abs_td_error!r},{r.q_evals},{r.loss_mean!r},"
                    f"{r.wall_time_s!r},{lams}\n"
                )


def epsilon_schedule(t: int, cfg: TrainConfig) -> float:
    """Linear anneal from the initial to the final value, then constant."""
    if cfg.epsilon_anneal_steps <= 0 or t >= cfg.epsilon_anneal_steps:
        return cfg.epsilon_final
    frac = t / cfg.epsilon_anneal_steps
    return cfg.epsilon_initial + frac * (cfg.epsilon_final - cfg.epsilon_initial)


def epsilon_greedy(qvec: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform action with probability epsilon, else argmax (ties: lowest index)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(len(qvec)))
    return int(np.argmax(qvec))


class HistoryWindow:
    """Maintains the observation window and applies the state transform."""

    def __init__(self, history_len: int = 1):
        if history_len < 1:
            raise ValueError("history_len must be at least 1")
        self.history_len = history_len
        self._buf = deque(maxlen=history_len)

    def reset(self, obs) -> ApproxState:
        self._buf.clear()
        return self.push(obs)

    def push(self, obs) -> ApproxState:
        if self.history_len == 1:
            return ApproxState(obs.features, obs.state_id)
        self._buf.append(obs)
        return phi(list(self._buf), self.history_len)


class _EpisodeTracker:
    """Running score, length, and rolling mean over completed episodes."""

    def __init__(self):
        self.window = deque(maxlen=ROLLING_WINDOW)
        self.score = 0.0
        self.length = 0
        self.count = 0

    def add(self, reward: float) -> None:
        self.score += reward
        self.length += 1

    def complete(self, end_step: int, epsilon: float) -> EpisodeRecord:
        self.window.append(self.score)
        rolling = float(np.mean(self.window))
        rec = EpisodeRecord(self.count, end_step, self.score, self.length, rolling, epsilon)
        self.count += 1
        self.score = 0.0
        self.length = 0
        return rec

    @property
    def window_full(self) -> bool:
        return len(self.window) == ROLLING_WINDOW


def _seed_memory(env, mem, window, tracker, rng, n_steps):
    """Fill the memory with a uniform random policy; episodes are not logged.

    The episode in progress when seeding ends carries over into the main
    loop (its score so far stays in the tracker) so the stored experience
    stream has no artificial break in it.
    """
    state = window.reset(env.reset())
    for _ in range(n_steps):
        action = int(rng.integers(env.n_actions))
        res = env.step(action)
        nxt = window.push(res.observation)
        mem.append(state, action, res.reward, nxt, res.terminal and not res.truncated, res.truncated)
        tracker.add(res.reward)
        if res.terminal:
            tracker.score = 0.0
            tracker.length = 0
            state = window.reset(env.reset())
        else:
            state = nxt
    return state


def _check_solved(log: RunLog, cfg: TrainConfig, tracker: _EpisodeTracker, rec: EpisodeRecord) -> bool:
    if (
        log.solved_at_step is None
        and cfg.solved_threshold is not None
        and tracker.window_full
        and rec.rolling_mean >= cfg.solved_threshold
    ):
        log.solved_at_step = rec.end_step
    return cfg.stop_when_solved and log.solved_at_step is not None


def _finalize(log: RunLog, tracker: _EpisodeTracker, env_steps: int, minibatches: int, qfunc, extra=None):
    log.final_rolling = float(np.mean(tracker.window)) if tracker.window else float("nan")
    log.counters = {
        "env_steps": env_steps,
        "minibatches": minibatches,
        "episodes": tracker.count,
        "q_evals": qfunc.eval_count,
        "target_syncs": 0,
        "target_q_evals": 0,
    }
    if extra:
        log.counters.update(extra)
    return log


def train_dqn_lambda(env, qfunc, cfg: TrainConfig, seed: int = 0) -> RunLog:
    """Cache-refresh training loop; no target network anywhere on this path.

    Every ``refresh_every`` steps (including step 0, straight off the seed
    experience) a fresh cache is built and the full burst of minibatch
    updates runs against its stored targets. Between refreshes the stored
    targets never move, so resampling an entry always trains toward the same
    value.
    """
    rng = np.random.default_rng(seed)
    mem = ReplayMemory(cfg.replay_capacity)
    window = HistoryWindow(cfg.history_len)
    tracker = _EpisodeTracker()
    log = RunLog(seed=seed, agent="dqn-lambda")
    state = _seed_memory(env, mem, window, tracker, rng, cfg.replay_start)

    minibatches = 0
    env_steps = 0
    n_burst = cfg.minibatches_per_refresh
    for t in range(cfg.total_steps):
        if t % cfg.refresh_every == 0:
            refresh_index = t // cfg.refresh_every
            p = anneal_p(t, cfg.total_steps, cfg.priority_p0)
            evals_before = qfunc.eval_count
            started = time.perf_counter()
            cache = build_cache(
                mem,
                qfunc,
                cfg.estimator,
                cfg.cache_size,
                cfg.block_size,
                rng,
                refresh_timestep=t,
                priority_p=p,
            )
            loss_sum = 0.0
            for _ in range(n_burst):
                idx = sample_minibatch(cache, cfg.minibatch_size, p, rng)
                feats, ids, acts, targets = cache.gather(idx)
                loss_sum += qfunc.train_step(feats, acts, targets, ids=ids)
            minibatches += n_burst
            if not np.isfinite(loss_sum):
                raise TrainingDiverged(refresh_index)
            lams = cache.block_lambdas
            log.refreshes.append(
                RefreshRecord(
                    index=refresh_index,
                    step=t,
                    priority_p=p,
                    lambda_mean=float(np.mean(lams)),
                    lambda_min=float(np.min(lams)),
                    lambda_max=float(np.max(lams)),
                    median_abs_td_error=cache.median_abs_error,
                    mean_abs_td_error=cache.mean_abs_error,
                    q_evals=qfunc.eval_count - evals_before,
                    loss_mean=loss_sum / n_burst,
                    wall_time_s=time.perf_counter() - started,
                    block_lambdas=tuple(float(v) for v in lams),
                )
            )
        eps = epsilon_schedule(t, cfg)
        qvec = qfunc.action_values(state.features, state.state_id)
        action = epsilon_greedy(qvec, eps, rng)
        res = env.step(action)
        nxt = window.push(res.observation)
        mem.append(state, action, res.reward, nxt, res.terminal and not res.truncated, res.truncated)
        tracker.add(res.reward)
        env_steps += 1
        if res.terminal:
            rec = tracker.complete(t, eps)
            log.episodes.append(rec)
            if _check_solved(log, cfg, tracker, rec):
                break
            state = window.reset(env.reset())
        else:
            state = nxt
    return _finalize(log, tracker, env_steps, minibatches, qfunc)


def _n_step_targets(mem, idxs, n, gamma, target_q):
    """n-step targets read out of the memory, bootstrapped from the stale copy."""
    m = len(idxs)
    targets = np.zeros(m)
    boot_rows = []
    boot_feats = []
    boot_ids = [] if mem.has_ids else None
    boot_scale = []
    for row, j in enumerate(idxs):
        acc = 0.0
        g = 1.0
        for i in range(n):
            phys = mem._physical(j + i)
            acc += g * mem._rewards[phys]
            if mem._terminals[phys]:
                break
            g *= gamma
            if mem._truncateds[phys] or i == n - 1:
                boot_rows.append(row)
                boot_feats.append(mem._next_states[phys])
                if boot_ids is not None:
                    boot_ids.append(mem._next_ids[phys])
                boot_scale.append(g)
                break
        targets[row] = acc
    if boot_rows:
        vals = target_q.values(
            np.asarray(boot_feats),
            np.asarray(boot_ids, dtype=np.int64) if boot_ids is not None else None,
        )
        targets[boot_rows] += np.asarray(boot_scale) * vals.max(axis=1)
    return targets


def train_dqn_nstep_baseline(env, qfunc, cfg: TrainConfig, n: int = 3, seed: int = 0) -> RunLog:
    """Classic loop: uniform minibatches from the full memory, stale targets.

    One minibatch every four environment steps, n-step targets bootstrapped
    from the parameter copy, and the copy re-synced from the live parameters
    every ``refresh_every`` steps (the same cadence the cache agent uses).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    mem = ReplayMemory(cfg.replay_capacity)
    window = HistoryWindow(cfg.history_len)
    tracker = _EpisodeTracker()
    log = RunLog(seed=seed, agent="nstep-baseline")
    state = _seed_memory(env, mem, window, tracker, rng, cfg.replay_start)
    gamma = cfg.estimator.gamma

    target_q = qfunc.clone()
    target_syncs = 0
    minibatches = 0
    env_steps = 0
    for t in range(cfg.total_steps):
        if t % cfg.refresh_every == 0:
            target_q.load_snapshot(qfunc.snapshot())
            target_syncs += 1
        if t % STEPS_PER_MINIBATCH == 0:
            n_starts = len(mem) - n + 1
            idxs = rng.integers(n_starts, size=cfg.minibatch_size)
            targets = _n_step_targets(mem, idxs, n, gamma, target_q)
            phys = mem._physical(idxs)
            loss = qfunc.train_step(
                mem._states[phys],
                mem._actions[phys],
                targets,
                ids=mem._ids[phys] if mem.has_ids else None,
            )
            minibatches += 1
            if not np.isfinite(loss):
                raise TrainingDiverged(t // cfg.refresh_every)
        eps = epsilon_schedule(t, cfg)
        qvec = qfunc.action_values(state.features, state.state_id)
        action = epsilon_greedy(qvec, eps, rng)
        res = env.step(action)
        nxt = window.push(res.observation)
        mem.append(state, action, res.reward, nxt, res.terminal and not res.truncated, res.truncated)
        tracker.add(res.reward)
        env_steps += 1
        if res.terminal:
            rec = tracker.complete(t, eps)
            log.episodes.append(rec)
            if _check_solved(log, cfg, tracker, rec):
                break
            state = window.reset(env.reset())
        else:
            state = nxt
    return _finalize(
        log,
        tracker,
        env_steps,
        minibatches,
        qfunc,
        extra={"target_syncs": target_syncs, "target_q_evals": target_q.eval_count},
    )


def evaluate_policy(
    env,
    qfunc,
    episodes: int,
    history_len: int = 1,
    exploration_epsilon: float = 0.0,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean episodic return of greedy rollouts (optional tiny exploration)."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    if exploration_epsilon > 0.0 and rng is None:
        rng = np.random.default_rng(0)
    window = HistoryWindow(history_len)
    total = 0.0
    for _ in range(episodes):
        state = window.reset(env.reset())
        done = False
        while not done:
            qvec = qfunc.action_values(state.features, state.state_id)
            if exploration_epsilon > 0.0:
                action = epsilon_greedy(qvec, exploration_epsilon, rng)
            else:
                action = int(np.argmax(qvec))
            res = env.step(action)
            total += res.reward
            state = window.push(res.observation)
            done = res.terminal
    return total / episodes
