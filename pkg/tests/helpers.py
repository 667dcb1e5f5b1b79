"""Shared builders for synthetic blocks and filled replay memories."""

import numpy as np

from lambda_replay import ApproxState, BlockView, ReplayMemory


def random_block(
    rng,
    length=None,
    n_actions=None,
    terminal_rate=0.15,
    truncation_rate=0.05,
    force_last_terminal=None,
):
    """Synthetic block with arbitrary rewards, Q-values, and episode ends."""
    b = int(length if length is not None else rng.integers(1, 101))
    a = int(n_actions if n_actions is not None else rng.integers(2, 5))
    terminals = rng.random(b) < terminal_rate
    truncateds = (rng.random(b) < truncation_rate) & ~terminals
    if force_last_terminal is not None:
        terminals[-1] = force_last_terminal
        if force_last_terminal:
            truncateds[-1] = False
    q_boot = rng.normal(size=(b + 1, a))
    if terminals[-1]:
        q_boot[-1] = 0.0
    trunc_boot = None
    if truncateds.any():
        trunc_boot = np.where(truncateds, rng.normal(size=b), 0.0)
    return BlockView(
        states=rng.normal(size=(b + 1, 3)),
        actions=rng.integers(0, a, size=b),
        rewards=rng.normal(size=b),
        terminals=terminals,
        q_bootstrap=q_boot,
        truncateds=truncateds,
        truncation_bootstrap=trunc_boot,
    )


def simple_block(rewards, terminals, q_bootstrap, actions=None):
    """Block from explicit reward/terminal/Q arrays; states are placeholders."""
    rewards = np.asarray(rewards, dtype=float)
    terminals = np.asarray(terminals, dtype=bool)
    q_bootstrap = np.asarray(q_bootstrap, dtype=float)
    b = len(rewards)
    if actions is None:
        actions = np.zeros(b, dtype=np.int64)
    return BlockView(
        states=np.zeros((b + 1, 1)),
        actions=np.asarray(actions, dtype=np.int64),
        rewards=rewards,
        terminals=terminals,
        q_bootstrap=q_bootstrap,
    )


def one_step_targets(block, gamma):
    """Independent 1-step targets: r, or r plus the discounted bootstrap."""
    out = np.empty(len(block))
    boot = block.q_bootstrap.max(axis=1)
    for i in range(len(block)):
        if block.terminals[i]:
            out[i] = block.rewards[i]
        elif block.truncateds is not None and block.truncateds[i]:
            out[i] = block.rewards[i] + gamma * block.truncation_bootstrap[i]
        else:
            out[i] = block.rewards[i] + gamma * boot[i + 1]
    return out


def monte_carlo_targets(rewards, gamma):
    """Discounted reward tails of one fully observed episode."""
    out = np.empty(len(rewards))
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def fill_memory_from_env(env, mem_or_capacity, steps, seed=0):
    """Drive the environment with uniform random actions and store every step."""
    rng = np.random.default_rng(seed)
    mem = (
        mem_or_capacity
        if isinstance(mem_or_capacity, ReplayMemory)
        else ReplayMemory(mem_or_capacity)
    )
    obs = env.reset()
    state = ApproxState(obs.features, obs.state_id)
    for _ in range(steps):
        action = int(rng.integers(env.n_actions))
        res = env.step(action)
        nxt = ApproxState(res.observation.features, res.observation.state_id)
        mem.append(state, action, res.reward, nxt, res.terminal and not res.truncated, res.truncated)
        if res.terminal:
            obs = env.reset()
            state = ApproxState(obs.features, obs.state_id)
        else:
            state = nxt
    return mem


def fill_memory_synthetic(capacity, steps, obs_dim, n_state_ids=None, seed=0, terminal_rate=0.0):
    """Fast terminal-free (by default) filler with chained random states."""
    rng = np.random.default_rng(seed)
    mem = ReplayMemory(capacity)
    states = rng.normal(size=(steps + 1, obs_dim))
    ids = rng.integers(n_state_ids, size=steps + 1) if n_state_ids else None
    terminals = rng.random(steps) < terminal_rate
    mem.extend_batch(
        states=states[:-1],
        actions=rng.integers(2, size=steps),
        rewards=rng.normal(size=steps),
        next_states=states[1:],
        terminals=terminals,
        ids=ids[:-1] if ids is not None else None,
        next_ids=ids[1:] if ids is not None else None,
    )
    return mem
