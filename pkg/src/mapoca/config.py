"""Run configuration: parsing, validation, defaults, and provenance.

Config files are line-oriented ``key = value`` text with ``#`` comments and
a flat namespace; environment parameters use dotted ``env.`` keys.  Every
hyperparameter resolves either to its documented default (the general
column for dungeon_run and baton_relay, the Simple Spread column for
simple_spread) or to an explicit user override, and the resolution is
recorded per key.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

ALGORITHMS = ("mapoca", "coma", "ppo")
ENVIRONMENTS = ("simple_spread", "dungeon_run", "baton_relay")

ATTENTION_KEYS = ("attention_embedding", "attention_layers", "attention_heads")

# keys every algorithm accepts, with per-environment defaults
_GENERAL = {
    "minibatch_size": 1024,
    "buffer_size": 10240,
    "epochs": 3,
    "learning_rate": 0.0003,
    "entropy_beta": 0.01,
    "clip_epsilon": 0.2,
    "lambda": 0.95,
    "gamma": 0.99,
    "hidden_units": 256,
    "fc_layers": 2,
    "attention_embedding": 256,
    "attention_layers": 1,
    "attention_heads": 4,
}
_SIMPLE_SPREAD = dict(
    _GENERAL,
    minibatch_size=512,
    buffer_size=5120,
    hidden_units=128,
    attention_embedding=128,
)

_ENV_KEYS = {
    "simple_spread": ("episode_limit",),
    "dungeon_run": ("episode_limit", "dragon_period", "pink_dragons"),
    "baton_relay": ("episode_limit", "orb_goal"),
}
_ENV_DEFAULTS = {
    "simple_spread": {"episode_limit": 25},
    "dungeon_run": {"episode_limit": 100, "dragon_period": 2, "pink_dragons": False},
    "baton_relay": {"episode_limit": 300, "orb_goal": 5},
}


class ConfigError(ValueError):
    """A configuration file or override is invalid."""


@dataclass
class RunConfig:
    """A fully resolved training-run configuration."""

    algorithm: str = "mapoca"
    env: str = "simple_spread"
    seed: int = 1
    max_steps: int = 100_000
    output_dir: str = "runs"
    minibatch_size: int = 512
    buffer_size: int = 5120
    epochs: int = 3
    learning_rate: float = 0.0003
    entropy_beta: float = 0.01
    clip_epsilon: float = 0.2
    lam: float = 0.95
    gamma: float = 0.99
    hidden_units: int = 128
    fc_layers: int = 2
    attention_embedding: int = 128
    attention_layers: int = 1
    attention_heads: int = 4
    normalize_advantages: bool = True
    env_options: dict[str, Any] = field(default_factory=dict)
    n_max: int | None = None
    provenance: dict[str, str] = field(default_factory=dict)

    def as_flat_dict(self) -> dict[str, Any]:
        """The config as the flat key space it was parsed from."""
        flat: dict[str, Any] = {
            "algorithm": self.algorithm,
            "env": self.env,
            "seed": self.seed,
            "max_steps": self.max_steps,
            "output_dir": self.output_dir,
            "minibatch_size": self.minibatch_size,
            "buffer_size": self.buffer_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "entropy_beta": self.entropy_beta,
            "clip_epsilon": self.clip_epsilon,
            "lambda": self.lam,
            "gamma": self.gamma,
            "hidden_units": self.hidden_units,
            "fc_layers": self.fc_layers,
            "normalize_advantages": self.normalize_advantages,
        }
        if self.algorithm == "mapoca":
            flat["attention_embedding"] = self.attention_embedding
            flat["attention_layers"] = self.attention_layers
            flat["attention_heads"] = self.attention_heads
        for key, value in sorted(self.env_options.items()):
            flat[f"env.{key}"] = value
        if self.n_max is not None:
            flat["env.n_max"] = self.n_max
        return flat


def _parse_scalar(key: str, text: str) -> Any:
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse ``key = value`` lines into a flat raw mapping."""
    raw: dict[str, Any] = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {line!r}")
        key, value = text.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{line_no}: empty key")
        if key in raw:
            raise ConfigError(f"{path}:{line_no}: duplicate key '{key}'")
        raw[key] = _parse_scalar(key, value)
    return raw


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _as_int(key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"key '{key}' must be an integer, got {value!r}")
    return value


def _as_float(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"key '{key}' must be a number, got {value!r}")
    return float(value)


def _as_bool(key: str, value: Any) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"key '{key}' must be true or false, got {value!r}")
    return value


def resolve_config(raw: Mapping[str, Any]) -> RunConfig:
    """Validate a flat raw mapping and resolve all defaults."""
    raw = dict(raw)
    algorithm = raw.pop("algorithm", None)
    env = raw.pop("env", None)
    provenance: dict[str, str] = {}
    if algorithm is None:
        algorithm = "mapoca"
        provenance["algorithm"] = "default"
    else:
        provenance["algorithm"] = "user"
    if env is None:
        env = "simple_spread"
        provenance["env"] = "default"
    else:
        provenance["env"] = "user"
    _require(algorithm in ALGORITHMS, f"key 'algorithm' must be one of {ALGORITHMS}, got {algorithm!r}")
    _require(env in ENVIRONMENTS, f"key 'env' must be one of {ENVIRONMENTS}, got {env!r}")

    table = _SIMPLE_SPREAD if env == "simple_spread" else _GENERAL
    if algorithm != "mapoca":
        for key in ATTENTION_KEYS:
            if key in raw:
                raise ConfigError(
                    f"key '{key}' only applies to mapoca; remove it for {algorithm}"
                )

    values: dict[str, Any] = {}
    run_defaults = {"seed": 1, "max_steps": 100_000, "output_dir": "runs",
                    "normalize_advantages": True}
    for key, default in list(table.items()) + list(run_defaults.items()):
        if key in raw:
            values[key] = raw.pop(key)
            provenance[key] = "user"
        else:
            values[key] = default
            provenance[key] = "default"

    env_options: dict[str, Any] = {}
    n_max = None
    allowed_env = _ENV_KEYS[env]
    for key, default in _ENV_DEFAULTS[env].items():
        dotted = f"env.{key}"
        if dotted in raw:
            env_options[key] = raw.pop(dotted)
            provenance[dotted] = "user"
        else:
            env_options[key] = default
            provenance[dotted] = "default"
    if "env.n_max" in raw:
        _require(
            algorithm == "coma",
            "key 'env.n_max' only applies to coma (the absorbing-state view)",
        )
        n_max = _as_int("env.n_max", raw.pop("env.n_max"))
        _require(n_max >= 1, f"key 'env.n_max' must be >= 1, got {n_max}")
        provenance["env.n_max"] = "user"
    elif algorithm == "coma":
        provenance["env.n_max"] = "default"

    for key in raw:
        if key.startswith("env."):
            raise ConfigError(
                f"unknown key '{key}' for env {env}; allowed: "
                + ", ".join(f"env.{k}" for k in allowed_env)
            )
        raise ConfigError(f"unknown key '{key}'")

    cfg = RunConfig(
        algorithm=algorithm,
        env=env,
        seed=_as_int("seed", values["seed"]),
        max_steps=_as_int("max_steps", values["max_steps"]),
        output_dir=str(values["output_dir"]),
        minibatch_size=_as_int("minibatch_size", values["minibatch_size"]),
        buffer_size=_as_int("buffer_size", values["buffer_size"]),
        epochs=_as_int("epochs", values["epochs"]),
        learning_rate=_as_float("learning_rate", values["learning_rate"]),
        entropy_beta=_as_float("entropy_beta", values["entropy_beta"]),
        clip_epsilon=_as_float("clip_epsilon", values["clip_epsilon"]),
        lam=_as_float("lambda", values["lambda"]),
        gamma=_as_float("gamma", values["gamma"]),
        hidden_units=_as_int("hidden_units", values["hidden_units"]),
        fc_layers=_as_int("fc_layers", values["fc_layers"]),
        attention_embedding=_as_int("attention_embedding", values["attention_embedding"]),
        attention_layers=_as_int("attention_layers", values["attention_layers"]),
        attention_heads=_as_int("attention_heads", values["attention_heads"]),
        normalize_advantages=_as_bool(
            "normalize_advantages", values["normalize_advantages"]
        ),
        env_options=env_options,
        n_max=n_max,
        provenance=provenance,
    )

    _require(cfg.seed >= 0, f"key 'seed' must be >= 0, got {cfg.seed}")
    _require(cfg.max_steps >= 0, f"key 'max_steps' must be >= 0, got {cfg.max_steps}")
    _require(cfg.minibatch_size >= 1, "key 'minibatch_size' must be >= 1")
    _require(cfg.buffer_size >= cfg.minibatch_size,
             "key 'buffer_size' must be >= minibatch_size")
    _require(cfg.epochs >= 1, "key 'epochs' must be >= 1")
    _require(cfg.learning_rate > 0, "key 'learning_rate' must be > 0")
    _require(cfg.entropy_beta >= 0, "key 'entropy_beta' must be >= 0")
    _require(cfg.clip_epsilon > 0, "key 'clip_epsilon' must be > 0")
    _require(0.0 <= cfg.lam <= 1.0, f"key 'lambda' must be in [0, 1], got {cfg.lam}")
    _require(0.0 <= cfg.gamma <= 1.0, f"key 'gamma' must be in [0, 1], got {cfg.gamma}")
    _require(cfg.hidden_units >= 1, "key 'hidden_units' must be >= 1")
    _require(cfg.fc_layers >= 1, "key 'fc_layers' must be >= 1")
    _require(cfg.attention_embedding >= cfg.attention_heads,
             "key 'attention_embedding' must be >= attention_heads")
    _require(cfg.attention_layers >= 1, "key 'attention_layers' must be >= 1")
    _require(cfg.attention_heads >= 1, "key 'attention_heads' must be >= 1")
    _require(
        cfg.attention_embedding % cfg.attention_heads == 0,
        "key 'attention_embedding' must be divisible by attention_heads",
    )

    for key, value in env_options.items():
        if key in ("episode_limit", "dragon_period", "orb_goal"):
            env_options[key] = _as_int(f"env.{key}", value)
            _require(env_options[key] >= 1, f"key 'env.{key}' must be >= 1")
        elif key == "pink_dragons":
            env_options[key] = _as_bool(f"env.{key}", value)
    return cfg


def parse_config(
    path: str | Path | None = None, overrides: Mapping[str, str] | None = None
) -> RunConfig:
    """Build a RunConfig from an optional file plus ``key=value`` overrides."""
    raw: dict[str, Any] = {}
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file not found: {path}")
        raw.update(read_config_file(path))
    for key, text in (overrides or {}).items():
        raw[key] = _parse_scalar(key, text)
    return resolve_config(raw)
