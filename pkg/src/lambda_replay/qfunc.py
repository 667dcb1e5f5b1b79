"""Action-value approximators with batched evaluation and one-step training.

Three families are provided: a plain lookup table keyed by discrete state
ids, a linear map on feature vectors, and a small two-hidden-layer
perceptron. All of them share the same contract: ``evaluate`` is read-only
and counts every state it scores (so refresh cost can be audited exactly),
``train_step`` applies a single optimizer update on the mean squared error
between stored targets and the taken action's output, and parameters round
trip bit-exactly through ``snapshot``/``load_snapshot``.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np


class SnapshotMismatch(ValueError):
    """Raised when a parameter blob does not match the receiving network."""


@dataclass
class AdamConfig:
    alpha: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-4

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("moment decays must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


class Sgd:
    """Plain gradient descent on the mean-squared-error loss."""

    def __init__(self, learning_rate: float):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.learning_rate = learning_rate

    def apply(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            params[name] -= self.learning_rate * g


class Adam:
    """Adam with bias correction; moment state is kept per parameter array."""

    def __init__(self, config: AdamConfig | None = None, **kwargs):
        self.config = config or AdamConfig(**kwargs)
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t = 0

    def apply(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        c = self.config
        self._t += 1
        bc1 = 1.0 - c.beta1 ** self._t
        bc2 = 1.0 - c.beta2 ** self._t
        for name, g in grads.items():
            if name not in self._m:
                self._m[name] = np.zeros_like(params[name])
                self._v[name] = np.zeros_like(params[name])
            m, v = self._m[name], self._v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            params[name] -= c.alpha * (m / bc1) / (np.sqrt(v / bc2) + c.epsilon)


class QFunction:
    """Common plumbing for the approximators below.

    Subclasses implement ``_values`` (batched forward pass) and
    ``_loss_and_grads``. The evaluation counter tallies the exact number of
    state evaluations requested, which production code relies on to assert
    the refresh cost of the cache builder.
    """

    kind = "abstract"

    def __init__(self, n_actions: int, optimizer=None):
        if n_actions < 1:
            raise ValueError("n_actions must be at least 1")
        self.n_actions = n_actions
        self.optimizer = optimizer if optimizer is not None else Sgd(0.1)
        self._eval_count = 0

    @property
    def eval_count(self) -> int:
        return self._eval_count

    def evaluate(self, states) -> np.ndarray:
        """Score a batch of approximate states; one row of action values each."""
        feats = np.stack([s.features for s in states])
        ids = None
        if states and states[0].state_id is not None:
            ids = np.array([s.state_id for s in states], dtype=np.int64)
        return self.values(feats, ids)

    def values(self, features: np.ndarray, ids: np.ndarray | None = None) -> np.ndarray:
        """Batched forward pass on raw feature rows (and ids for tabular)."""
        features = np.atleast_2d(np.asarray(features, dtype=float))
        self._eval_count += features.shape[0]
        return self._values(features, ids)

    def action_values(self, features: np.ndarray, state_id: int | None = None) -> np.ndarray:
        """Single-state fast path used inside rollout loops."""
        self._eval_count += 1
        return self._value_one(features, state_id)

    def train_step(
        self,
        features: np.ndarray | None,
        actions: np.ndarray,
        targets: np.ndarray,
        ids: np.ndarray | None = None,
    ) -> float:
        """One optimizer update on the batch; returns the pre-update mean loss."""
        targets = np.asarray(targets, dtype=float)
        if targets.size == 0:
            raise ValueError("training batch is empty")
        if not np.isfinite(targets).all():
            raise ValueError("training targets must be finite")
        actions = np.asarray(actions, dtype=np.int64)
        loss, grads = self._loss_and_grads(features, actions, targets, ids)
        self.optimizer.apply(self.parameters(), grads)
        return loss

    def parameters(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def _values(self, features, ids):
        raise NotImplementedError

    def _value_one(self, features, state_id):
        return self._values(np.asarray(features, dtype=float)[None, :], None)[0]

    def _loss_and_grads(self, features, actions, targets, ids):
        raise NotImplementedError

    def _arch(self) -> dict:
        raise NotImplementedError

    def snapshot(self) -> bytes:
        """Serialize parameters as a versioned blob with an architecture header."""
        meta = {"kind": self.kind, "version": 1, **self._arch()}
        buf = io.BytesIO()
        header = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
        np.savez(buf, __meta__=header, **self.parameters())
        return buf.getvalue()

    def load_snapshot(self, blob: bytes) -> None:
        with np.load(io.BytesIO(blob)) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            expected = {"kind": self.kind, "version": 1, **self._arch()}
            if meta != expected:
                raise SnapshotMismatch(
                    f"snapshot header {meta} does not match architecture {expected}"
                )
            params = self.parameters()
            for name, arr in params.items():
                arr[...] = data[name]

    def clone(self):
        """Fresh instance of the same architecture carrying the same parameters."""
        other = self._blank_copy()
        other.load_snapshot(self.snapshot())
        return other

    def _blank_copy(self):
        raise NotImplementedError


class TabularQ(QFunction):
    """Lookup table keyed by discrete state id, zero initialized."""

    kind = "tabular"

    def __init__(self, n_states: int, n_actions: int, optimizer=None):
        super().__init__(n_actions, optimizer)
        self.n_states = n_states
        self.table = np.zeros((n_states, n_actions))

    def parameters(self):
        return {"table": self.table}

    def set(self, state_id: int, action: int, value: float) -> None:
        self.table[state_id, action] = value

    def _require_ids(self, ids):
        if ids is None:
            raise ValueError("tabular Q needs discrete state ids")
        return np.asarray(ids, dtype=np.int64)

    def _values(self, features, ids):
        return self.table[self._require_ids(ids)].copy()

    def _value_one(self, features, state_id):
        if state_id is None:
            raise ValueError("tabular Q needs discrete state ids")
        return self.table[state_id]

    def _loss_and_grads(self, features, actions, targets, ids):
        ids = self._require_ids(ids)
        q = self.table[ids, actions]
        err = q - targets
        loss = float(np.mean(err * err))
        grad = np.zeros_like(self.table)
        np.add.at(grad, (ids, actions), 2.0 * err / len(err))
        return loss, {"table": grad}

    def _arch(self):
        return {"n_states": self.n_states, "n_actions": self.n_actions}

    def _blank_copy(self):
        return TabularQ(self.n_states, self.n_actions)


class LinearQ(QFunction):
    """One weight row per action applied to the feature vector, plus a bias."""

    kind = "linear"

    def __init__(self, obs_dim: int, n_actions: int, optimizer=None, seed: int = 0):
        super().__init__(n_actions, optimizer)
        self.obs_dim = obs_dim
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(obs_dim)
        self.weights = rng.uniform(-bound, bound, size=(n_actions, obs_dim))
        self.bias = np.zeros(n_actions)

    def parameters(self):
        return {"weights": self.weights, "bias": self.bias}

    def _values(self, features, ids):
        if features.shape[1] != self.obs_dim:
            raise ValueError(
                f"expected features of length {self.obs_dim}, got {features.shape[1]}"
            )
        return features @ self.weights.T + self.bias

    def _loss_and_grads(self, features, actions, targets, ids):
        features = np.atleast_2d(np.asarray(features, dtype=float))
        q = (features @ self.weights.T + self.bias)[np.arange(len(actions)), actions]
        err = q - targets
        loss = float(np.mean(err * err))
        coeff = 2.0 * err / len(err)
        gw = np.zeros_like(self.weights)
        gb = np.zeros_like(self.bias)
        np.add.at(gw, actions, coeff[:, None] * features)
        np.add.at(gb, actions, coeff)
        return loss, {"weights": gw, "bias": gb}

    def _arch(self):
        return {"obs_dim": self.obs_dim, "n_actions": self.n_actions}

    def _blank_copy(self):
        return LinearQ(self.obs_dim, self.n_actions)


class MlpQ(QFunction):
    """Two rectifier hidden layers and a linear output head per action.

    Weights use uniform fan-in scaling, biases start at zero; both are fixed
    by the seed so runs are reproducible end to end.
    """

    kind = "mlp"

    def __init__(
        self,
        obs_dim: int,
        n_actions: int,
        hidden: tuple[int, int] = (64, 64),
        optimizer=None,
        seed: int = 0,
    ):
        super().__init__(n_actions, optimizer)
        self.obs_dim = obs_dim
        self.hidden = tuple(int(h) for h in hidden)
        rng = np.random.default_rng(seed)
        sizes = [obs_dim, *self.hidden, n_actions]
        self._params: dict[str, np.ndarray] = {}
        for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
            bound = 1.0 / np.sqrt(fan_in)
            self._params[f"w{layer}"] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            self._params[f"b{layer}"] = np.zeros(fan_out)

    def parameters(self):
        return self._params

    def _forward(self, x):
        p = self._params
        z1 = x @ p["w1"].T + p["b1"]
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ p["w2"].T + p["b2"]
        h2 = np.maximum(z2, 0.0)
        out = h2 @ p["w3"].T + p["b3"]
        return out, (x, z1, h1, z2, h2)

    def _values(self, features, ids):
        if features.shape[1] != self.obs_dim:
            raise ValueError(
                f"expected features of length {self.obs_dim}, got {features.shape[1]}"
            )
        return self._forward(features)[0]

    def _loss_and_grads(self, features, actions, targets, ids):
        x = np.atleast_2d(np.asarray(features, dtype=float))
        out, (x, z1, h1, z2, h2) = self._forward(x)
        rows = np.arange(len(actions))
        err = out[rows, actions] - targets
        loss = float(np.mean(err * err))
        dout = np.zeros_like(out)
        dout[rows, actions] = 2.0 * err / len(err)
        p = self._params
        gw3 = dout.T @ h2
        gb3 = dout.sum(axis=0)
        dh2 = (dout @ p["w3"]) * (z2 > 0.0)
        gw2 = dh2.T @ h1
        gb2 = dh2.sum(axis=0)
        dh1 = (dh2 @ p["w2"]) * (z1 > 0.0)
        gw1 = dh1.T @ x
        gb1 = dh1.sum(axis=0)
        return loss, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2, "w3": gw3, "b3": gb3}

    def _arch(self):
        return {"obs_dim": self.obs_dim, "n_actions": self.n_actions, "hidden": list(self.hidden)}

    def _blank_copy(self):
        return MlpQ(self.obs_dim, self.n_actions, self.hidden)


def gradient_check(
    q: QFunction,
    features: np.ndarray | None,
    actions: np.ndarray,
    targets: np.ndarray,
    ids: np.ndarray | None = None,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Perturbs every parameter entry by ``step`` in both directions and compares
    the resulting loss slope to the analytic gradient of the mean squared
    error on the given batch. Parameters are restored exactly afterwards.
    """
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=float)

    def loss_only() -> float:
        vals = q._values(np.atleast_2d(np.asarray(features, float)), ids) if features is not None else q._values(
            np.zeros((len(actions), 1)), ids
        )
        err = vals[np.arange(len(actions)), actions] - targets
        return float(np.mean(err * err))

    _, grads = q._loss_and_grads(features, actions, targets, ids)
    worst = 0.0
    for name, param in q.parameters().items():
        analytic = grads[name]
        flat = param.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            up = loss_only()
            flat[i] = original - step
            down = loss_only()
            flat[i] = original
            numeric = (up - down) / (2.0 * step)
            a = analytic.reshape(-1)[i]
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
