"""Small discrete environments for desk-scale experiments.

Every environment is a deterministic single-threaded state machine exposing
dense feature observations plus an integer state id that tabular value
functions can key on directly. Episodes end either through real termination
(which return targets must not bootstrap past) or through the configurable
time limit, which is flagged separately so that targets still bootstrap at
artificial horizons.

The roster covers the two regimes this library cares about: sparse reward
(chain, gridworld, cliff walk) and partial observability (the velocity
chain, whose masked variant hides the momentum that drives its dynamics).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Observation:
    """What the environment reveals each step."""

    features: np.ndarray
    state_id: int | None = None


@dataclass
class ApproxState:
    """Stacked observation window standing in for the true state.

    The id is only present when the window is a single id-bearing
    observation; longer windows have no tabular identity.
    """

    features: np.ndarray
    state_id: int | None = None


@dataclass
class StepResult:
    observation: Observation
    reward: float
    terminal: bool
    truncated: bool = False


class Environment:
    """Base machinery: action validation, time limit, reset discipline.

    Subclasses implement ``_reset`` and ``_step``. Stepping a finished
    episode raises until ``reset`` is called. When the time limit fires the
    result is terminal with ``truncated`` set, and return computation treats
    the transition as bootstrappable.
    """

    n_actions: int = 0
    obs_dim: int = 0
    n_state_ids: int | None = None

    def __init__(self, time_limit: int | None = 200):
        if time_limit is not None and time_limit < 1:
            raise ValueError("time_limit must be at least 1")
        self.time_limit = time_limit
        self._steps = 0
        self._needs_reset = True

    def reset(self) -> Observation:
        self._steps = 0
        self._needs_reset = False
        return self._reset()

    def step(self, action: int) -> StepResult:
        if self._needs_reset:
            raise RuntimeError("episode is over; call reset() before stepping")
        action = int(action)
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} out of range for {self.n_actions} actions")
        obs, reward, terminal = self._step(action)
        self._steps += 1
        truncated = False
        if not terminal and self.time_limit is not None and self._steps >= self.time_limit:
            terminal = True
            truncated = True
        if terminal:
            self._needs_reset = True
        return StepResult(obs, float(reward), terminal, truncated)

    def _reset(self) -> Observation:
        raise NotImplementedError

    def _step(self, action: int):
        raise NotImplementedError


class Chain(Environment):
    """Sparse-reward corridor: positions 0..length-1, reward only at the end.

    Action 0 moves left, action 1 moves right, both clamped to the corridor.
    Entering the last position pays the goal reward and ends the episode.
    Observations are one-hot position vectors.
    """

    def __init__(self, length: int = 10, goal_reward: float = 1.0, time_limit: int | None = 200):
        super().__init__(time_limit)
        if length < 2:
            raise ValueError("chain length must be at least 2")
        self.length = length
        self.goal_reward = float(goal_reward)
        self.n_actions = 2
        self.obs_dim = length
        self.n_state_ids = length
        self._pos = 0

    def _observe(self) -> Observation:
        feats = np.zeros(self.obs_dim)
        feats[self._pos] = 1.0
        return Observation(feats, self._pos)

    def _reset(self):
        self._pos = 0
        return self._observe()

    def _step(self, action):
        move = 1 if action == 1 else -1
        self._pos = min(max(self._pos + move, 0), self.length - 1)
        reached_goal = self._pos == self.length - 1
        reward = self.goal_reward if reached_goal else 0.0
        return self._observe(), reward, reached_goal


class GridWorld(Environment):
    """Square grid with a single goal reward in the far corner.

    The agent starts at (0, 0) and must reach (size-1, size-1). Actions are
    up, right, down, left (in that order), clamped at the walls. Every step
    pays zero except entering the goal, which pays 1 and ends the episode.
    Observations are one-hot cell vectors; the state id is the cell index.
    """

    MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))

    def __init__(self, size: int = 5, goal_reward: float = 1.0, time_limit: int | None = 200):
        super().__init__(time_limit)
        if size < 2:
            raise ValueError("grid size must be at least 2")
        self.size = size
        self.goal_reward = float(goal_reward)
        self.n_actions = 4
        self.obs_dim = size * size
        self.n_state_ids = size * size
        self._row = 0
        self._col = 0

    def _observe(self) -> Observation:
        idx = self._row * self.size + self._col
        feats = np.zeros(self.obs_dim)
        feats[idx] = 1.0
        return Observation(feats, idx)

    def _reset(self):
        self._row = 0
        self._col = 0
        return self._observe()

    def _step(self, action):
        dr, dc = self.MOVES[action]
        self._row = min(max(self._row + dr, 0), self.size - 1)
        self._col = min(max(self._col + dc, 0), self.size - 1)
        at_goal = self._row == self.size - 1 and self._col == self.size - 1
        reward = self.goal_reward if at_goal else 0.0
        return self._observe(), reward, at_goal


class CliffWalk(Environment):
    """Classic cliff-walking grid, 4 rows by 12 columns.

    The agent starts at the bottom-left corner and the goal sits at the
    bottom-right. The bottom row between them is the cliff: stepping into it
    pays -100 and teleports the agent back to the start without ending the
    episode. Every other step (including the one entering the goal) pays -1.
    The optimal route runs one row above the cliff and takes width + 1 steps.
    """

    MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))

    def __init__(self, height: int = 4, width: int = 12, time_limit: int | None = 200):
        super().__init__(time_limit)
        if height < 2 or width < 3:
            raise ValueError("cliff walk needs at least 2 rows and 3 columns")
        self.height = height
        self.width = width
        self.n_actions = 4
        self.obs_dim = height * width
        self.n_state_ids = height * width
        self.start = (height - 1, 0)
        self.goal = (height - 1, width - 1)
        self.cliff = {(height - 1, c) for c in range(1, width - 1)}
        self._row, self._col = self.start

    def _observe(self) -> Observation:
        idx = self._row * self.width + self._col
        feats = np.zeros(self.obs_dim)
        feats[idx] = 1.0
        return Observation(feats, idx)

    def _reset(self):
        self._row, self._col = self.start
        return self._observe()

    def _step(self, action):
        dr, dc = self.MOVES[action]
        row = min(max(self._row + dr, 0), self.height - 1)
        col = min(max(self._col + dc, 0), self.width - 1)
        if (row, col) in self.cliff:
            self._row, self._col = self.start
            return self._observe(), -100.0, False
        self._row, self._col = row, col
        return self._observe(), -1.0, (row, col) == self.goal


class VelocityChain(Environment):
    """Corridor with momentum; hiding the velocity makes it a true POMDP.

    The state is (position, velocity) with velocity in {-1, 0, +1}. Action 0
    nudges the velocity down, action 1 nudges it up, then the position moves
    by the new velocity, everything clamped. Reaching the far end pays 1 and
    terminates. The observation is [position / (length - 1), velocity], so a
    mask keeping only feature 0 leaves the agent unable to tell which way it
    is drifting from a single observation.
    """

    def __init__(self, length: int = 10, goal_reward: float = 1.0, time_limit: int | None = 200):
        super().__init__(time_limit)
        if length < 3:
            raise ValueError("velocity chain length must be at least 3")
        self.length = length
        self.goal_reward = float(goal_reward)
        self.n_actions = 2
        self.obs_dim = 2
        self.n_state_ids = length * 3
        self._pos = 0
        self._vel = 0

    def _observe(self) -> Observation:
        feats = np.array([self._pos / (self.length - 1), float(self._vel)])
        return Observation(feats, self._pos * 3 + self._vel + 1)

    def _reset(self):
        self._pos = 0
        self._vel = 0
        return self._observe()

    def _step(self, action):
        self._vel = min(max(self._vel + (1 if action == 1 else -1), -1), 1)
        self._pos = min(max(self._pos + self._vel, 0), self.length - 1)
        reached_goal = self._pos == self.length - 1
        reward = self.goal_reward if reached_goal else 0.0
        return self._observe(), reward, reached_goal


class PartialObservability:
    """Wrapper projecting observations onto a subset of their features.

    ``keep`` lists the feature indices that survive; it must be a strict,
    non-empty subset. Alternatively (or additionally) ``single_frame``
    advertises that downstream code should use an observation window of one,
    which callers honor through ``forced_history_len``. State ids are
    re-derived from the masked features so that tabular learners cannot see
    through the mask; distinct masked observations get distinct ids.
    """

    def __init__(self, env, keep=None, single_frame: bool = False):
        self.env = env
        if keep is not None:
            keep = tuple(int(i) for i in keep)
            if len(keep) == 0:
                raise ValueError("mask must keep at least one feature")
            if len(set(keep)) >= env.obs_dim:
                raise ValueError("mask must drop at least one feature")
            if any(i < 0 or i >= env.obs_dim for i in keep):
                raise ValueError("mask index out of range")
        elif not single_frame:
            raise ValueError("wrapper needs a feature mask or single_frame=True")
        self.keep = keep
        self.forced_history_len = 1 if single_frame else None
        self.n_actions = env.n_actions
        self.obs_dim = len(keep) if keep is not None else env.obs_dim
        self.n_state_ids = env.n_state_ids
        self.time_limit = env.time_limit
        self._id_map: dict[bytes, int] = {}

    def _transform(self, obs: Observation) -> Observation:
        if self.keep is None:
            return obs
        feats = obs.features[list(self.keep)]
        sid = None
        if obs.state_id is not None:
            key = feats.tobytes()
            sid = self._id_map.setdefault(key, len(self._id_map))
        return Observation(feats, sid)

    def reset(self) -> Observation:
        return self._transform(self.env.reset())

    def step(self, action: int) -> StepResult:
        res = self.env.step(action)
        return StepResult(self._transform(res.observation), res.reward, res.terminal, res.truncated)


class RewardClip:
    """Wrapper collapsing rewards onto their sign, off by default everywhere."""

    def __init__(self, env):
        self.env = env
        self.n_actions = env.n_actions
        self.obs_dim = env.obs_dim
        self.n_state_ids = env.n_state_ids
        self.time_limit = env.time_limit

    def reset(self) -> Observation:
        return self.env.reset()

    def step(self, action: int) -> StepResult:
        res = self.env.step(action)
        return StepResult(res.observation, clip_reward(res.reward), res.terminal, res.truncated)


def clip_reward(reward: float) -> float:
    """Sign of the reward: every value maps to -1.0, 0.0, or +1.0."""
    return float(np.sign(reward))


def make_partially_observable(env, mask_spec) -> PartialObservability:
    """Wrap ``env`` per a mask spec: feature indices to keep, or "single-frame"."""
    if isinstance(mask_spec, str):
        if mask_spec != "single-frame":
            raise ValueError(f"unknown mask spec {mask_spec!r}")
        return PartialObservability(env, single_frame=True)
    return PartialObservability(env, keep=mask_spec)


def phi(history: list[Observation], history_len: int) -> ApproxState:
    """Stack the most recent observations into an approximate state.

    The window is zero padded on the left near episode starts, oldest
    observation first, so changing anything older than the window never
    changes the result.
    """
    if not history:
        raise ValueError("observation history is empty")
    if history_len < 1:
        raise ValueError("history_len must be at least 1")
    dim = history[-1].features.shape[0]
    window = history[-history_len:]
    feats = np.zeros(history_len * dim)
    offset = history_len - len(window)
    for j, obs in enumerate(window):
        feats[(offset + j) * dim : (offset + j + 1) * dim] = obs.features
    sid = history[-1].state_id if history_len == 1 else None
    return ApproxState(feats, sid)


ENVIRONMENTS = {
    "chain": Chain,
    "gridworld": GridWorld,
    "cliff-walk": CliffWalk,
    "velocity-chain": VelocityChain,
}


class UnknownEnvironment(ValueError):
    pass


def make_env(name: str, **params):
    """Build an environment by registry name; unknown names list the options."""
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        available = ", ".join(sorted(ENVIRONMENTS))
        raise UnknownEnvironment(
            f"unknown environment {name!r}; available: {available}"
        ) from None
    return cls(**params)
