"""Run configuration: file format, validation, presets, and builders.

Configs are plain INI-style text with five sections (run, env, agent, train,
estimator). Unknown sections or keys are rejected outright so typos fail
loudly. The cache size may be omitted, in which case the validator derives
it from the refresh interval and the minibatch size under the fixed training
ratio of one minibatch per four environment steps; an explicit value that
violates that ratio is an error.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from . import envs as envs_mod
from .agent import STEPS_PER_MINIBATCH, TrainConfig
from .qfunc import Adam, AdamConfig, LinearQ, MlpQ, Sgd, TabularQ
from .returns import ReturnEstimatorConfig


class ConfigError(ValueError):
    pass


AGENTS = ("dqn-lambda", "nstep-baseline")
QFUNCS = ("tabular", "linear", "mlp")
OPTIMIZERS = ("sgd", "adam")

ENV_PARAM_KEYS = {
    "chain": ("length", "goal_reward", "time_limit"),
    "gridworld": ("size", "goal_reward", "time_limit"),
    "cliff-walk": ("height", "width", "time_limit"),
    "velocity-chain": ("length", "goal_reward", "time_limit"),
}

_SECTION_KEYS = {
    "run": {"agent", "seeds", "out"},
    "env": {
        "name",
        "history_len",
        "mask_keep",
        "single_frame",
        "clip_rewards",
        "length",
        "size",
        "height",
        "width",
        "goal_reward",
        "time_limit",
    },
    "agent": {
        "qfunc",
        "optimizer",
        "learning_rate",
        "adam_beta1",
        "adam_beta2",
        "adam_epsilon",
        "nstep",
    },
    "train": {
        "total_steps",
        "refresh_every",
        "minibatch_size",
        "cache_size",
        "block_size",
        "replay_capacity",
        "replay_start",
        "epsilon_initial",
        "epsilon_final",
        "epsilon_anneal_steps",
        "priority_p0",
        "solved_threshold",
        "stop_when_solved",
    },
    "estimator": {
        "gamma",
        "mode",
        "lambda",
        "variant",
        "k",
        "delta_bound",
        "search_depth",
        "nstep",
    },
}

# desk preset: every ratio of the large-scale setup preserved at 1/50 scale
PRESETS = {
    "desk": {
        "train": {
            "total_steps": 200_000,
            "refresh_every": 1_000,
            "minibatch_size": 32,
            "block_size": 100,
            "replay_capacity": 50_000,
            "replay_start": 5_000,
            "epsilon_anneal_steps": 20_000,
        },
    },
    "paper-atari-ratios": {
        "train": {
            "total_steps": 10_000_000,
            "refresh_every": 10_000,
            "minibatch_size": 32,
            "block_size": 100,
            "replay_capacity": 1_000_000,
            "replay_start": 50_000,
            "epsilon_anneal_steps": 1_000_000,
        },
    },
}


@dataclass
class RunConfig:
    agent: str = "dqn-lambda"
    seeds: tuple = (0,)
    out: str = "runs/out"
    env_name: str = "chain"
    env_params: dict = field(default_factory=dict)
    history_len: int = 1
    mask_keep: tuple | None = None
    single_frame: bool = False
    clip_rewards: bool = False
    qfunc: str = "tabular"
    optimizer: str = "sgd"
    learning_rate: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-4
    nstep: int = 3
    train: TrainConfig = field(default_factory=TrainConfig)

    # ------------------------------------------------------------------
    def validate(self) -> None:
        if self.agent not in AGENTS:
            raise ConfigError(f"unknown agent {self.agent!r}; expected one of {AGENTS}")
        if self.qfunc not in QFUNCS:
            raise ConfigError(f"unknown qfunc {self.qfunc!r}; expected one of {QFUNCS}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.env_name not in envs_mod.ENVIRONMENTS:
            available = ", ".join(sorted(envs_mod.ENVIRONMENTS))
            raise ConfigError(
                f"unknown environment {self.env_name!r}; available: {available}"
            )
        allowed = ENV_PARAM_KEYS[self.env_name]
        for key in self.env_params:
            if key not in allowed:
                raise ConfigError(
                    f"environment {self.env_name!r} does not take parameter {key!r}"
                )
        t = self.train
        expected_cache = t.refresh_every * t.minibatch_size // STEPS_PER_MINIBATCH
        if t.refresh_every * t.minibatch_size % STEPS_PER_MINIBATCH:
            raise ConfigError(
                "refresh_every * minibatch_size must be divisible by 4 "
                "(one minibatch per four environment steps)"
            )
        if t.cache_size <= 0:
            t.cache_size = expected_cache
        elif t.cache_size != expected_cache:
            raise ConfigError(
                f"cache_size {t.cache_size} violates the sizing identity "
                f"cache_size = refresh_every * minibatch_size / 4 = {expected_cache} "
                "(one minibatch per four environment steps)"
            )
        if t.cache_size % t.block_size:
            raise ConfigError(
                f"cache_size {t.cache_size} must be a whole number of "
                f"blocks of {t.block_size}"
            )
        if t.replay_start <= t.block_size:
            raise ConfigError(
                f"replay_start {t.replay_start} must exceed block_size {t.block_size} "
                "so the first refresh can sample a block"
            )
        if t.replay_capacity < t.replay_start:
            raise ConfigError("replay_capacity must be at least replay_start")
        for name in ("total_steps", "refresh_every", "minibatch_size", "block_size"):
            if getattr(t, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= t.priority_p0 <= 1.0:
            raise ConfigError("priority_p0 must lie in [0, 1]")
        if self.qfunc == "tabular":
            if self.history_len != 1:
                raise ConfigError("tabular qfunc requires history_len = 1")
        if self.agent == "nstep-baseline" and self.nstep < 1:
            raise ConfigError("nstep must be at least 1")

    # ------------------------------------------------------------------
    def build_env(self):
        env = envs_mod.make_env(self.env_name, **self.env_params)
        if self.mask_keep is not None or self.single_frame:
            env = envs_mod.PartialObservability(
                env, keep=self.mask_keep, single_frame=self.single_frame
            )
        if self.clip_rewards:
            env = envs_mod.RewardClip(env)
        return env

    def build_qfunc(self, env, seed: int):
        if self.optimizer == "adam":
            opt = Adam(
                AdamConfig(
                    alpha=self.learning_rate,
                    beta1=self.adam_beta1,
                    beta2=self.adam_beta2,
                    epsilon=self.adam_epsilon,
                )
            )
        else:
            opt = Sgd(self.learning_rate)
        obs_dim = env.obs_dim * self.history_len
        if self.qfunc == "tabular":
            if env.n_state_ids is None:
                raise ConfigError("tabular qfunc needs an environment with state ids")
            return TabularQ(env.n_state_ids, env.n_actions, optimizer=opt)
        if self.qfunc == "linear":
            return LinearQ(obs_dim, env.n_actions, optimizer=opt, seed=seed)
        return MlpQ(obs_dim, env.n_actions, optimizer=opt, seed=seed)

    # ------------------------------------------------------------------
    def to_mapping(self) -> dict:
        t = self.train
        e = t.estimator
        return {
            "run": {"agent": self.agent, "seeds": list(self.seeds), "out": self.out},
            "env": {
                "name": self.env_name,
                "history_len": self.history_len,
                "mask_keep": list(self.mask_keep) if self.mask_keep is not None else None,
                "single_frame": self.single_frame,
                "clip_rewards": self.clip_rewards,
                **self.env_params,
            },
            "agent": {
                "qfunc": self.qfunc,
                "optimizer": self.optimizer,
                "learning_rate": self.learning_rate,
                "adam_beta1": self.adam_beta1,
                "adam_beta2": self.adam_beta2,
                "adam_epsilon": self.adam_epsilon,
                "nstep": self.nstep,
            },
            "train": {
                "total_steps": t.total_steps,
                "refresh_every": t.refresh_every,
                "minibatch_size": t.minibatch_size,
                "cache_size": t.cache_size,
                "block_size": t.block_size,
                "replay_capacity": t.replay_capacity,
                "replay_start": t.replay_start,
                "epsilon_initial": t.epsilon_initial,
                "epsilon_final": t.epsilon_final,
                "epsilon_anneal_steps": t.epsilon_anneal_steps,
                "priority_p0": t.priority_p0,
                "solved_threshold": t.solved_threshold,
                "stop_when_solved": t.stop_when_solved,
            },
            "estimator": {
                "gamma": e.gamma,
                "mode": e.mode,
                "lambda": e.lam,
                "variant": e.variant,
                "k": e.k,
                "delta_bound": e.delta_bound,
                "search_depth": e.search_depth,
                "nstep": e.nstep,
            },
        }

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        run = dict(mapping.get("run", {}))
        env = dict(mapping.get("env", {}))
        agent = dict(mapping.get("agent", {}))
        train = dict(mapping.get("train", {}))
        est = dict(mapping.get("estimator", {}))

        name = env.pop("name", "chain")
        history_len = int(env.pop("history_len", 1))
        mask_keep = env.pop("mask_keep", None)
        single_frame = bool(env.pop("single_frame", False))
        clip_rewards = bool(env.pop("clip_rewards", False))
        env_params = {k: v for k, v in env.items() if v is not None}

        estimator = ReturnEstimatorConfig(
            gamma=float(est.get("gamma", 0.99)),
            mode=_normalize_mode(str(est.get("mode", "fixed"))),
            lam=float(est.get("lambda", 0.8)),
            variant=str(est.get("variant", "peng")),
            k=int(est.get("k", 20)),
            delta_bound=float(est.get("delta_bound", 0.025)),
            search_depth=int(est.get("search_depth", 7)),
            nstep=int(est.get("nstep", 3)),
        )
        solved = train.get("solved_threshold")
        tcfg = TrainConfig(
            total_steps=int(train.get("total_steps", 200_000)),
            refresh_every=int(train.get("refresh_every", 1_000)),
            minibatch_size=int(train.get("minibatch_size", 32)),
            cache_size=int(train.get("cache_size", 0)),
            block_size=int(train.get("block_size", 100)),
            replay_capacity=int(train.get("replay_capacity", 50_000)),
            replay_start=int(train.get("replay_start", 5_000)),
            epsilon_initial=float(train.get("epsilon_initial", 1.0)),
            epsilon_final=float(train.get("epsilon_final", 0.1)),
            epsilon_anneal_steps=int(train.get("epsilon_anneal_steps", 20_000)),
            priority_p0=float(train.get("priority_p0", 0.1)),
            history_len=history_len,
            estimator=estimator,
            solved_threshold=float(solved) if solved is not None else None,
            stop_when_solved=bool(train.get("stop_when_solved", False)),
        )
        cfg = cls(
            agent=str(run.get("agent", "dqn-lambda")),
            seeds=tuple(int(s) for s in run.get("seeds", (0,))),
            out=str(run.get("out", "runs/out")),
            env_name=name,
            env_params=env_params,
            history_len=history_len,
            mask_keep=tuple(mask_keep) if mask_keep else None,
            single_frame=single_frame,
            clip_rewards=clip_rewards,
            qfunc=str(agent.get("qfunc", "tabular")),
            optimizer=str(agent.get("optimizer", "sgd")),
            learning_rate=float(agent.get("learning_rate", 1.0)),
            adam_beta1=float(agent.get("adam_beta1", 0.9)),
            adam_beta2=float(agent.get("adam_beta2", 0.999)),
            adam_epsilon=float(agent.get("adam_epsilon", 1e-4)),
            nstep=int(agent.get("nstep", 3)),
            train=tcfg,
        )
        cfg.validate()
        return cfg


def _normalize_mode(mode: str) -> str:
    return {"median-dynamic": "median"}.get(mode, mode)


_INT_KEYS = {
    "length",
    "size",
    "height",
    "width",
    "time_limit",
    "history_len",
    "nstep",
    "k",
    "search_depth",
    "total_steps",
    "refresh_every",
    "minibatch_size",
    "cache_size",
    "block_size",
    "replay_capacity",
    "replay_start",
    "epsilon_anneal_steps",
}
_FLOAT_KEYS = {
    "goal_reward",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "gamma",
    "lambda",
    "delta_bound",
    "epsilon_initial",
    "epsilon_final",
    "priority_p0",
    "solved_threshold",
}
_BOOL_KEYS = {"single_frame", "clip_rewards", "stop_when_solved"}


def _convert(key: str, raw: str):
    if key in _BOOL_KEYS:
        lowered = raw.strip().lower()
        if lowered in ("true", "yes", "on", "1"):
            return True
        if lowered in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"key {key!r} expects a boolean, got {raw!r}")
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r} expects a number, got {raw!r}") from None
    if key == "seeds":
        return [int(s) for s in raw.replace(",", " ").split()]
    if key == "mask_keep":
        return [int(s) for s in raw.replace(",", " ").split()]
    return raw.strip()


def load_config(path, preset: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Parse a config file into a validated RunConfig.

    Preset values (if any) are applied first, then the file, then explicit
    overrides such as command-line seeds or output directory.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    mapping: dict = {section: {} for section in _SECTION_KEYS}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; available: {', '.join(sorted(PRESETS))}"
            )
        for section, values in PRESETS[preset].items():
            mapping[section].update(values)

    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            mapping[section][key] = _convert(key, raw)

    if "name" not in mapping["env"]:
        available = ", ".join(sorted(envs_mod.ENVIRONMENTS))
        raise ConfigError(f"config is missing the environment name; available: {available}")

    for section, values in (overrides or {}).items():
        mapping.setdefault(section, {}).update(values)

    try:
        return RunConfig.from_mapping(mapping)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
