"""Refreshing a block of transitions with the backward return recursion.

Walks one block by hand: builds a short trajectory with an episode boundary
in the middle, refreshes it at several decay values, and checks the result
against the explicit weighted sum over n-step targets.
"""

import numpy as np

from lambda_replay import (
    BlockView,
    direct_lambda_sequence,
    n_step_return,
    recursive_lambda_sequence,
)

rng = np.random.default_rng(0)

# Eight transitions; the third ends an episode, so the recursion restarts
# there. Q-values for all nine block states are evaluated once, up front.
rewards = np.array([0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 2.0])
terminals = np.array([False, False, True, False, False, False, False, False])
q_bootstrap = rng.normal(size=(9, 2))
block = BlockView(
    states=rng.normal(size=(9, 3)),
    actions=rng.integers(0, 2, size=8),
    rewards=rewards,
    terminals=terminals,
    q_bootstrap=q_bootstrap,
)

gamma = 0.9
print("rewards:  ", rewards)
print("terminals:", terminals.astype(int))
print()

for lam in (0.0, 0.5, 0.9, 1.0):
    seq = recursive_lambda_sequence(block, gamma, lam)
    ref = direct_lambda_sequence(block, gamma, lam)
    print(f"decay {lam:>3}: targets {np.round(seq, 3)}")
    print(f"          direct summation agrees to {np.max(np.abs(seq - ref)):.1e}")

# decay 0 is exactly the 1-step target; decay 1 runs to the episode end
one_step = [n_step_return(block, t, 1, gamma) for t in range(8)]
assert np.array_equal(recursive_lambda_sequence(block, gamma, 0.0), one_step)
print()
print("decay 0 reproduced the 1-step targets bitwise")

# cost: one bootstrap value per step, however large the decay is
print("the backward pass reads exactly one bootstrap max-Q per transition")
