"""Return estimators computed over contiguous blocks of replayed transitions.

The central object is the :class:`BlockView`: a slice of consecutive
transitions bundled with every Q-value the refresh needs, evaluated once
under the current parameters. All estimators here are pure functions of a
block, so blocks can be refreshed independently and in any order.

Two implementations of the lambda-return coexist on purpose. The recursive
backward pass costs one bootstrap read per step and is what production code
uses; the direct summation expands every n-step target explicitly and is
quadratic in the segment length. The direct form exists to check the
recursion, never to feed training.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

FIXED = "fixed"
MEDIAN = "median"
ERROR_BOUNDED = "error-bounded"
NSTEP = "nstep"

PENG = "peng"
WATKINS = "watkins"

_MODES = (FIXED, MEDIAN, ERROR_BOUNDED, NSTEP)
_VARIANTS = (PENG, WATKINS)


@dataclass
class ReturnEstimatorConfig:
    """How return targets are produced when a block is refreshed.

    ``mode`` selects the estimator: a fixed decay value, the per-step median
    over ``k + 1`` evenly spaced candidates, the largest decay keeping the
    block's mean absolute TD error under ``delta_bound``, or a plain n-step
    target. ``variant`` chooses between always backing up the greedy action
    (Peng) and cutting the decay to zero after non-greedy actions (Watkins).
    """

    gamma: float = 0.99
    mode: str = FIXED
    lam: float = 0.8
    variant: str = PENG
    k: int = 20
    delta_bound: float = 0.025
    search_depth: int = 7
    nstep: int = 3

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.mode not in _MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {_MODES}")
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {_VARIANTS}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.delta_bound <= 0.0:
            raise ValueError("delta_bound must be positive")
        if self.search_depth < 1:
            raise ValueError("search_depth must be at least 1")
        if self.nstep < 1:
            raise ValueError("nstep must be at least 1")


@dataclass
class BlockView:
    """Consecutive transitions plus the Q-values needed to refresh them.

    ``states`` holds the entry state of each of the B transitions followed by
    the stored successor of the final one, so row ``i + 1`` is the bootstrap
    state for step ``i`` whenever that step did not end an episode.
    ``q_bootstrap`` row ``j`` is the action-value vector of ``states[j]``
    under the parameters current at refresh time; when the final successor is
    terminal its row is all zeros and is never read.

    Steps that ended an episode by time limit rather than true termination
    carry their own bootstrap value in ``truncation_bootstrap``: the
    successor stored with the transition is not the next row of the block
    (the next row starts a fresh episode), so its max-Q is kept separately.
    """

    states: np.ndarray          # (B + 1, d) float
    actions: np.ndarray         # (B,) int
    rewards: np.ndarray         # (B,) float
    terminals: np.ndarray       # (B,) bool
    q_bootstrap: np.ndarray     # (B + 1, n_actions) float
    truncateds: np.ndarray | None = None        # (B,) bool
    truncation_bootstrap: np.ndarray | None = None  # (B,) max-a Q at stored successor
    state_ids: np.ndarray | None = None          # (B + 1,) int, for tabular Q

    def __post_init__(self):
        b = len(self.actions)
        if b < 1:
            raise ValueError("a block needs at least one transition")
        if self.states.shape[0] != b + 1:
            raise ValueError("states must hold one more row than there are transitions")
        if self.q_bootstrap.shape[0] != b + 1:
            raise ValueError("q_bootstrap must cover every block state")
        for name in ("rewards", "terminals"):
            if len(getattr(self, name)) != b:
                raise ValueError(f"{name} must have one value per transition")
        if self.truncateds is None:
            self.truncateds = np.zeros(b, dtype=bool)
        elif self.truncateds.any() and self.truncation_bootstrap is None:
            raise ValueError("truncated steps need truncation_bootstrap values")

    def __len__(self) -> int:
        return len(self.actions)

    @cached_property
    def bootstrap_max(self) -> np.ndarray:
        """Greedy value of every block state: max over actions, per row."""
        return self.q_bootstrap.max(axis=1)

    @cached_property
    def entry_values(self) -> np.ndarray:
        """Q(state_i, action_i) for each stored transition."""
        b = len(self)
        return self.q_bootstrap[np.arange(b), self.actions]


@dataclass
class ReturnSequence:
    """Refreshed targets for one block, with the record of how they were chosen."""

    returns: np.ndarray         # (B,)
    chosen_lambda: np.ndarray   # (B,) decay recorded per step (NaN for n-step targets)
    abs_td_errors: np.ndarray   # (B,) |return - Q(state, action)| at refresh time

    def __post_init__(self):
        if not np.isfinite(self.returns).all():
            raise ValueError("return targets must be finite")
        if (self.abs_td_errors < 0).any():
            raise ValueError("absolute TD errors cannot be negative")

    @property
    def lambda_summary(self) -> float:
        """Mean recorded decay over the block (NaN when none applies)."""
        return float(np.mean(self.chosen_lambda))


def _per_step_lambda(block: BlockView, lam, cut_mask: np.ndarray | None) -> np.ndarray:
    lams = np.broadcast_to(np.asarray(lam, dtype=float), (len(block),)).copy()
    if cut_mask is not None:
        lams[cut_mask] = 0.0
    return lams


def recursive_lambda_sequence(block: BlockView, gamma: float, lam) -> np.ndarray:
    """Backward pass producing one lambda-return per block step.

    ``lam`` may be a scalar or an array with one decay value per step. The
    accumulator starts from the greedy value of the final block state and the
    pass restarts whenever a step inside the block ended its episode, so
    blocks may span episode boundaries freely. Each step reads exactly one
    bootstrap value.
    """
    b = len(block)
    lams = np.broadcast_to(np.asarray(lam, dtype=float), (b,)).tolist()
    boot = block.bootstrap_max.tolist()
    rewards = block.rewards.tolist()
    terminals = block.terminals.tolist()
    truncateds = block.truncateds.tolist()
    tboot = (
        block.truncation_bootstrap.tolist()
        if block.truncation_bootstrap is not None
        else None
    )
    out = np.empty(b)
    acc = boot[b]
    for i in range(b - 1, -1, -1):
        if terminals[i]:
            acc = rewards[i]
        elif truncateds[i]:
            acc = rewards[i] + gamma * tboot[i]
        else:
            li = lams[i]
            acc = rewards[i] + gamma * (li * acc + (1.0 - li) * boot[i + 1])
        out[i] = acc
    return out


def _segment_end(block: BlockView, t: int) -> int:
    """Index of the last step of the episode segment containing step t."""
    term = block.terminals
    trunc = block.truncateds
    for i in range(t, len(block)):
        if term[i] or trunc[i]:
            return i
    return len(block) - 1


def n_step_return(block: BlockView, t: int, n: int, gamma: float) -> float:
    """Discounted n-step target from step ``t``.

    The reward sum stops at the first episode end inside the window. A true
    terminal drops the bootstrap entirely; a time-limit end bootstraps from
    the successor stored with that transition.
    """
    b = len(block)
    if not 1 <= n <= b - t:
        raise ValueError(f"n={n} is outside the block (t={t}, length {b})")
    acc = 0.0
    g = 1.0
    for i in range(n):
        acc += g * float(block.rewards[t + i])
        if block.terminals[t + i]:
            return acc
        g *= gamma
        if block.truncateds[t + i]:
            return acc + g * float(block.truncation_bootstrap[t + i])
    return acc + g * float(block.bootstrap_max[t + n])


def n_step_return_sequence(block: BlockView, n: int, gamma: float) -> ReturnSequence:
    """n-step targets for every block step, shortened near the block end."""
    b = len(block)
    returns = np.array(
        [n_step_return(block, t, min(n, b - t), gamma) for t in range(b)]
    )
    lams = np.full(b, np.nan)
    return ReturnSequence(returns, lams, np.abs(returns - block.entry_values))


def lambda_return_direct(block: BlockView, t: int, gamma: float, lam: float) -> float:
    """Lambda-return at step ``t`` by direct summation over n-step targets.

    Expands the exponentially weighted average term by term over the episode
    segment containing ``t`` (the horizon is the segment end, which may be
    the block end). Quadratic and slow; this is the independent oracle for
    :func:`recursive_lambda_sequence`.
    """
    end = _segment_end(block, t)
    horizon = end - t + 1
    targets = [n_step_return(block, t, n, gamma) for n in range(1, horizon + 1)]
    if horizon == 1:
        return targets[0]
    weights = [(1.0 - lam) * lam ** (n - 1) for n in range(1, horizon)]
    weights.append(lam ** (horizon - 1))
    return float(np.dot(weights, targets))


def direct_lambda_sequence(block: BlockView, gamma: float, lam) -> np.ndarray:
    """Direct-summation lambda-returns for the whole block, vectorized.

    Same definition as :func:`lambda_return_direct` extended to a per-step
    decay array: the weight of the n-step target from step t is the product
    of the decays consumed along the way times ``1 - lam`` at the stopping
    step, with the final target absorbing the leftover weight. Shares no
    code with the recursion.
    """
    b = len(block)
    lams = np.broadcast_to(np.asarray(lam, dtype=float), (b,))
    boot = block.bootstrap_max
    out = np.empty(b)
    start = 0
    while start < b:
        end = _segment_end(block, start)
        length = end - start + 1
        rew = block.rewards[start : end + 1].astype(float)
        # tail[j] = bootstrap value available after j + 1 steps into the segment
        tail = np.empty(length)
        if length > 1:
            tail[: length - 1] = boot[start + 1 : end + 1]
        if block.terminals[end]:
            tail[length - 1] = 0.0
        elif block.truncateds[end]:
            tail[length - 1] = block.truncation_bootstrap[end]
        else:
            tail[length - 1] = boot[end + 1]
        # nstep[n - 1, t] = n-step target from local step t, for t <= length - n
        nstep = np.empty((length, length))
        nstep[0, :] = rew + gamma * tail
        for n in range(2, length + 1):
            m = length - n + 1
            nstep[n - 1, :m] = rew[:m] + gamma * nstep[n - 2, 1 : m + 1]
        for t in range(length):
            horizon = length - t
            if horizon == 1:
                out[start + t] = nstep[0, t]
                continue
            lseg = lams[start + t : start + t + horizon - 1]
            prods = np.empty(horizon)
            prods[0] = 1.0
            np.cumprod(lseg, out=prods[1:])
            weights = np.empty(horizon)
            weights[: horizon - 1] = prods[: horizon - 1] * (1.0 - lseg)
            weights[horizon - 1] = prods[horizon - 1]
            out[start + t] = float(weights @ nstep[:horizon, t])
        start = end + 1
    return out


def watkins_cut_mask(block: BlockView) -> np.ndarray:
    """True at steps whose successor action was non-greedy at refresh time.

    Greediness is judged against the Q-values already in the block, so the
    mask costs nothing extra. The final step is never cut: its interpolation
    collapses to the bootstrap either way, and the action taken after the
    block is not stored in it.
    """
    b = len(block)
    mask = np.zeros(b, dtype=bool)
    if b > 1:
        greedy = np.argmax(block.q_bootstrap[1:b], axis=1)
        mask[: b - 1] = block.actions[1:] != greedy
    return mask


def _finish(block: BlockView, returns: np.ndarray, lams: np.ndarray) -> ReturnSequence:
    return ReturnSequence(returns, lams, np.abs(returns - block.entry_values))


def lambda_return_sequence(
    block: BlockView, cfg: ReturnEstimatorConfig, lam: float | None = None
) -> ReturnSequence:
    """Recursive refresh of one block under a fixed decay value.

    ``cfg`` supplies the discount and the Peng/Watkins variant; ``lam``
    overrides ``cfg.lam`` when given (used to evaluate candidate values).
    """
    value = cfg.lam if lam is None else lam
    mask = watkins_cut_mask(block) if cfg.variant == WATKINS else None
    lams = _per_step_lambda(block, value, mask)
    return _finish(block, recursive_lambda_sequence(block, cfg.gamma, lams), lams)


def median_dynamic_returns(
    block: BlockView,
    k: int,
    gamma: float,
    variant: str = PENG,
) -> ReturnSequence:
    """Per-step median over ``k + 1`` evenly spaced candidate decays.

    All candidates share the block's bootstrap values, so the extra cost is
    arithmetic only. With k even the candidate count is odd and the median is
    the exact middle of the sorted candidates; equal values keep their
    candidate order, so ties resolve toward the smaller decay.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    b = len(block)
    mask = watkins_cut_mask(block) if variant == WATKINS else None
    grid = np.arange(k + 1) / k
    candidates = np.empty((k + 1, b))
    for j, lam in enumerate(grid):
        lams = _per_step_lambda(block, lam, mask)
        candidates[j] = recursive_lambda_sequence(block, gamma, lams)
    order = np.argsort(candidates, axis=0, kind="stable")
    picked = order[k // 2]
    cols = np.arange(b)
    return _finish(block, candidates[picked, cols], grid[picked])


def error_bounded_lambda(
    block: BlockView,
    delta_bound: float,
    max_depth: int,
    gamma: float,
    variant: str = PENG,
) -> tuple[float, ReturnSequence]:
    """Largest decay keeping the block's mean absolute TD error bounded.

    The extremes are probed first: if even lam=1 respects the bound it is
    returned outright, and if lam=0 already violates it nothing better
    exists. Otherwise a bisection of ``max_depth`` probes runs on [0, 1] and
    the largest feasible probe wins. The mean error is assumed to grow with
    the decay; if it does not, the result is still the largest feasible
    probe, just not necessarily the supremum.
    """
    if delta_bound <= 0.0:
        raise ValueError("delta_bound must be positive")
    mask = watkins_cut_mask(block) if variant == WATKINS else None
    entry = block.entry_values

    def mean_error(lam: float) -> tuple[float, np.ndarray, np.ndarray]:
        lams = _per_step_lambda(block, lam, mask)
        seq = recursive_lambda_sequence(block, gamma, lams)
        return float(np.mean(np.abs(seq - entry))), seq, lams

    err_hi, seq_hi, lams_hi = mean_error(1.0)
    if err_hi <= delta_bound:
        return 1.0, _finish(block, seq_hi, lams_hi)
    err_lo, seq_lo, lams_lo = mean_error(0.0)
    if err_lo > delta_bound:
        return 0.0, _finish(block, seq_lo, lams_lo)

    lo, hi = 0.0, 1.0
    best_seq, best_lams = seq_lo, lams_lo
    for _ in range(max_depth):
        mid = 0.5 * (lo + hi)
        err, seq, lams = mean_error(mid)
        if err <= delta_bound:
            lo, best_seq, best_lams = mid, seq, lams
        else:
            hi = mid
    return lo, _finish(block, best_seq, best_lams)


def estimate_returns(block: BlockView, cfg: ReturnEstimatorConfig) -> ReturnSequence:
    """Refresh one block according to the estimator configuration."""
    if cfg.mode == FIXED:
        return lambda_return_sequence(block, cfg)
    if cfg.mode == MEDIAN:
        return median_dynamic_returns(block, cfg.k, cfg.gamma, cfg.variant)
    if cfg.mode == ERROR_BOUNDED:
        _, seq = error_bounded_lambda(
            block, cfg.delta_bound, cfg.search_depth, cfg.gamma, cfg.variant
        )
        return seq
    if cfg.mode == NSTEP:
        return n_step_return_sequence(block, cfg.nstep, cfg.gamma)
    raise ValueError(f"unknown estimator mode {cfg.mode!r}")
