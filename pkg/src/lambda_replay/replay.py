"""Replay memory, the block-based cache builder, and prioritized sampling.

The cache is the heart of the method: every refresh interval, whole blocks
of consecutive transitions are promoted out of the replay memory, their
return targets are recomputed under the current parameters via the backward
recursion, and minibatches are then drawn from this small surrogate instead
of the full memory. Refresh cost therefore scales with the cache size, not
with the replay capacity, and the stored targets double as fresh TD errors
that drive sampling priorities before anything is replayed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import ApproxState
from .returns import BlockView, ReturnEstimatorConfig, estimate_returns


@dataclass
class Transition:
    """One environment step as stored in replay memory."""

    state: ApproxState
    action: int
    reward: float
    next_state: ApproxState
    terminal: bool
    truncated: bool = False


class ReplayMemory:
    """Fixed-capacity ring of transitions kept in experience order.

    Logical index 0 is always the oldest stored transition; storing past
    capacity overwrites from the oldest end. Arrays are allocated lazily on
    the first store, when the feature length and the presence of state ids
    become known.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self._size = 0
        self._next = 0
        self._states = None
        self._next_states = None
        self._actions = None
        self._rewards = None
        self._terminals = None
        self._truncateds = None
        self._ids = None
        self._next_ids = None

    def __len__(self) -> int:
        return self._size

    @property
    def has_ids(self) -> bool:
        return self._ids is not None

    def _allocate(self, dim: int, with_ids: bool) -> None:
        cap = self.capacity
        self._states = np.empty((cap, dim))
        self._next_states = np.empty((cap, dim))
        self._actions = np.empty(cap, dtype=np.int64)
        self._rewards = np.empty(cap)
        self._terminals = np.empty(cap, dtype=bool)
        self._truncateds = np.empty(cap, dtype=bool)
        if with_ids:
            self._ids = np.empty(cap, dtype=np.int64)
            self._next_ids = np.empty(cap, dtype=np.int64)

    def append(
        self,
        state: ApproxState,
        action: int,
        reward: float,
        next_state: ApproxState,
        terminal: bool,
        truncated: bool = False,
    ) -> None:
        if self._states is None:
            self._allocate(len(state.features), state.state_id is not None)
        i = self._next
        self._states[i] = state.features
        self._next_states[i] = next_state.features
        self._actions[i] = action
        self._rewards[i] = reward
        self._terminals[i] = terminal
        self._truncateds[i] = truncated
        if self._ids is not None:
            self._ids[i] = state.state_id
            self._next_ids[i] = next_state.state_id
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def store(self, transition: Transition) -> None:
        self.append(
            transition.state,
            transition.action,
            transition.reward,
            transition.next_state,
            transition.terminal,
            transition.truncated,
        )

    def extend_batch(
        self,
        states: np.ndarray,
        actions: np.ndarray,
        rewards: np.ndarray,
        next_states: np.ndarray,
        terminals: np.ndarray,
        truncateds: np.ndarray | None = None,
        ids: np.ndarray | None = None,
        next_ids: np.ndarray | None = None,
    ) -> None:
        """Bulk store for benchmarks and tests; same ring semantics as append."""
        n = len(actions)
        if self._states is None:
            self._allocate(states.shape[1], ids is not None)
        if truncateds is None:
            truncateds = np.zeros(n, dtype=bool)
        if n >= self.capacity:
            # only the newest capacity-many survive
            keep = slice(n - self.capacity, n)
            self._states[:] = states[keep]
            self._next_states[:] = next_states[keep]
            self._actions[:] = actions[keep]
            self._rewards[:] = rewards[keep]
            self._terminals[:] = terminals[keep]
            self._truncateds[:] = truncateds[keep]
            if self._ids is not None:
                self._ids[:] = ids[keep]
                self._next_ids[:] = next_ids[keep]
            self._next = 0
            self._size = self.capacity
            return
        slots = (self._next + np.arange(n)) % self.capacity
        self._states[slots] = states
        self._next_states[slots] = next_states
        self._actions[slots] = actions
        self._rewards[slots] = rewards
        self._terminals[slots] = terminals
        self._truncateds[slots] = truncateds
        if self._ids is not None:
            self._ids[slots] = ids
            self._next_ids[slots] = next_ids
        self._next = (self._next + n) % self.capacity
        self._size = min(self._size + n, self.capacity)

    def _physical(self, logical: np.ndarray | int):
        start = self._next if self._size == self.capacity else 0
        return (start + logical) % self.capacity

    def get(self, logical: int) -> Transition:
        if not 0 <= logical < self._size:
            raise IndexError("transition index out of range")
        i = self._physical(logical)
        sid = int(self._ids[i]) if self._ids is not None else None
        nid = int(self._next_ids[i]) if self._ids is not None else None
        return Transition(
            ApproxState(self._states[i].copy(), sid),
            int(self._actions[i]),
            float(self._rewards[i]),
            ApproxState(self._next_states[i].copy(), nid),
            bool(self._terminals[i]),
            bool(self._truncateds[i]),
        )


def sample_block_start(mem: ReplayMemory, block_size: int, rng: np.random.Generator) -> int:
    """Uniform start index for a block of ``block_size`` transitions.

    The memory must hold at least one transition beyond the block so the
    final successor state is in-range, leaving ``len(mem) - block_size``
    equally likely starts. Blocks never straddle the ring seam because
    logical indices are contiguous in experience time by construction.
    Overlapping and duplicate selections are allowed on purpose.
    """
    n_starts = len(mem) - block_size
    if n_starts < 1:
        raise ValueError(
            f"memory holds {len(mem)} transitions; need more than {block_size}"
        )
    return int(rng.integers(n_starts))


def make_block_view(mem: ReplayMemory, start: int, block_size: int, qfunc) -> BlockView:
    """Assemble a block and evaluate the Q-values it needs, batched.

    All block states are scored in one forward pass, except a terminal final
    successor whose value is zero by definition and is skipped. Steps ended
    by the time limit get one extra evaluation each for their stored
    successor, since the following block row belongs to a new episode.
    """
    b = block_size
    idx = mem._physical(np.arange(start, start + b))
    feats = np.empty((b + 1, mem._states.shape[1]))
    feats[:b] = mem._states[idx]
    feats[b] = mem._next_states[idx[-1]]
    ids = None
    if mem.has_ids:
        ids = np.empty(b + 1, dtype=np.int64)
        ids[:b] = mem._ids[idx]
        ids[b] = mem._next_ids[idx[-1]]
    terminals = mem._terminals[idx].copy()
    truncateds = mem._truncateds[idx].copy()
    rewards = mem._rewards[idx].copy()
    actions = mem._actions[idx].copy()

    q_boot = np.zeros((b + 1, qfunc.n_actions))
    if terminals[-1]:
        rows = slice(0, b)
    else:
        rows = slice(0, b + 1)
    q_boot[rows] = qfunc.values(feats[rows], ids[rows] if ids is not None else None)

    trunc_boot = None
    if truncateds.any():
        trunc_boot = np.zeros(b)
        inner = np.flatnonzero(truncateds[: b - 1])
        if inner.size:
            succ = idx[inner]
            vals = qfunc.values(
                mem._next_states[succ],
                mem._next_ids[succ] if mem.has_ids else None,
            )
            trunc_boot[inner] = vals.max(axis=1)
        if truncateds[b - 1]:
            trunc_boot[b - 1] = q_boot[b].max()

    return BlockView(
        states=feats,
        actions=actions,
        rewards=rewards,
        terminals=terminals,
        q_bootstrap=q_boot,
        truncateds=truncateds,
        truncation_bootstrap=trunc_boot,
        state_ids=ids,
    )


@dataclass
class CacheEntry:
    """One refreshed sample: state, action, stored target, fresh error size."""

    state: np.ndarray
    state_id: int | None
    action: int
    lambda_return: float
    abs_td_error: float


@dataclass
class PrioritySplit:
    """Entry indices below, at, and above the error median, by stable rank."""

    below: np.ndarray
    at: np.ndarray
    above: np.ndarray


def split_by_rank(abs_errors: np.ndarray) -> PrioritySplit:
    """Rank-based median split with stable tie-breaking by entry index.

    Entries are ordered by error size (ties keep entry order); the lower half
    of ranks goes below, the upper half above. An odd count leaves exactly
    the middle rank at the median; an even count leaves the two middle ranks
    there, keeping the halves the same size. Equal half sizes are what make
    the sampling mass sum to one for every tie pattern.
    """
    order = np.argsort(abs_errors, kind="stable")
    n = len(order)
    if n % 2:
        mid = n // 2
        return PrioritySplit(order[:mid], order[mid : mid + 1], order[mid + 1 :])
    lo = n // 2 - 1
    return PrioritySplit(order[:lo], order[lo : lo + 2], order[lo + 2 :])


class Cache:
    """Immutable sampling surrogate rebuilt from the replay memory.

    Holds the refreshed targets of ``size`` entries grouped in fixed-size
    blocks, the absolute TD errors measured immediately after the refresh,
    and the rank split those errors induce. Sampling probabilities for a
    given interpolation value are memoized since every minibatch between two
    refreshes shares them.
    """

    def __init__(
        self,
        states: np.ndarray,
        state_ids: np.ndarray | None,
        actions: np.ndarray,
        lambda_returns: np.ndarray,
        abs_td_errors: np.ndarray,
        block_lambdas: np.ndarray,
        refresh_timestep: int = 0,
        priority_param: float = 0.0,
    ):
        self.states = states
        self.state_ids = state_ids
        self.actions = actions
        self.lambda_returns = lambda_returns
        self.abs_td_errors = abs_td_errors
        self.block_lambdas = block_lambdas
        self.refresh_timestep = refresh_timestep
        self.priority_param = priority_param
        self.split = split_by_rank(abs_td_errors)
        self._prob_cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def size(self) -> int:
        return len(self.actions)

    def __len__(self) -> int:
        return self.size

    @property
    def median_abs_error(self) -> float:
        return float(np.median(self.abs_td_errors))

    @property
    def mean_abs_error(self) -> float:
        return float(np.mean(self.abs_td_errors))

    def entry(self, i: int) -> CacheEntry:
        return CacheEntry(
            self.states[i],
            int(self.state_ids[i]) if self.state_ids is not None else None,
            int(self.actions[i]),
            float(self.lambda_returns[i]),
            float(self.abs_td_errors[i]),
        )

    def sampling_probabilities(self, p: float) -> np.ndarray:
        """Three-level distribution over entries for interpolation value p."""
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        probs, _ = self._distribution(p)
        return probs

    def _distribution(self, p: float) -> tuple[np.ndarray, np.ndarray]:
        cached = self._prob_cache.get(p)
        if cached is not None:
            return cached
        n = self.size
        probs = np.full(n, 1.0 / n)
        probs[self.split.below] = (1.0 - p) / n
        probs[self.split.above] = (1.0 + p) / n
        cumulative = np.cumsum(probs)
        cumulative[-1] = 1.0
        self._prob_cache[p] = (probs, cumulative)
        return probs, cumulative

    def gather(self, idx: np.ndarray):
        """Training arrays for the given entry indices."""
        ids = self.state_ids[idx] if self.state_ids is not None else None
        return self.states[idx], ids, self.actions[idx], self.lambda_returns[idx]


def priority_split(cache: "Cache | np.ndarray") -> PrioritySplit:
    """Median split of a cache (or a raw error array) by stable error rank."""
    errors = cache.abs_td_errors if isinstance(cache, Cache) else np.asarray(cache)
    return split_by_rank(errors)


def build_cache(
    mem: ReplayMemory,
    qfunc,
    cfg: ReturnEstimatorConfig,
    cache_size: int,
    block_size: int,
    rng: np.random.Generator,
    refresh_timestep: int = 0,
    priority_p: float = 0.0,
) -> Cache:
    """Promote random blocks, refresh their targets, measure fresh errors.

    Runs in time proportional to the cache size regardless of how large the
    replay memory is. Per block of B transitions the Q-function scores the
    B + 1 block states once for bootstraps and the B entry states once more
    for the stored TD errors, minus terminal final successors (whose value
    is zero by definition) and plus one state per time-limit boundary.
    """
    if cache_size % block_size:
        raise ValueError("cache_size must be a whole number of blocks")
    n_blocks = cache_size // block_size
    b = block_size
    dim = mem._states.shape[1] if mem._states is not None else 0
    states = np.empty((cache_size, dim))
    ids = np.empty(cache_size, dtype=np.int64) if mem.has_ids else None
    actions = np.empty(cache_size, dtype=np.int64)
    targets = np.empty(cache_size)
    errors = np.empty(cache_size)
    block_lambdas = np.empty(n_blocks)

    for j in range(n_blocks):
        start = sample_block_start(mem, b, rng)
        block = make_block_view(mem, start, b, qfunc)
        seq = estimate_returns(block, cfg)
        # stored priorities come from a recomputation right after the refresh
        fresh = qfunc.values(
            block.states[:b], block.state_ids[:b] if block.state_ids is not None else None
        )
        abs_err = np.abs(seq.returns - fresh[np.arange(b), block.actions])

        sl = slice(j * b, (j + 1) * b)
        states[sl] = block.states[:b]
        if ids is not None:
            ids[sl] = block.state_ids[:b]
        actions[sl] = block.actions
        targets[sl] = seq.returns
        errors[sl] = abs_err
        block_lambdas[j] = seq.lambda_summary

    return Cache(
        states,
        ids,
        actions,
        targets,
        errors,
        block_lambdas,
        refresh_timestep=refresh_timestep,
        priority_param=priority_p,
    )


def sample_minibatch(
    cache: Cache, size: int, p: float, rng: np.random.Generator
) -> np.ndarray:
    """Indices of ``size`` entries drawn i.i.d. with replacement.

    Entries above the error median carry (1 + p)/S mass, entries below carry
    (1 - p)/S, entries at the median carry 1/S; p = 0 is uniform.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    _, cumulative = cache._distribution(p)
    draws = rng.random(size)
    return np.searchsorted(cumulative, draws, side="right")


def anneal_p(t: int, total_steps: int, p0: float) -> float:
    """Linear schedule taking the interpolation value from p0 down to zero."""
    if not 0 <= t <= total_steps:
        raise ValueError("t must lie in [0, total_steps]")
    return p0 * (1.0 - t / total_steps)
