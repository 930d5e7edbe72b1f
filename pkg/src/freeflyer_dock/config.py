"""Run configuration: strict YAML parsing, validation, fingerprints.

The file format mirrors the :class:`RunConfig` dataclass tree one section
per field. Unknown keys are hard errors so typos cannot silently fall back
to defaults, and every validation failure names the offending field path.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .env import EnvConfig, NoiseConfig
from .ppo import PPOConfig
from .propulsion import PolarityMode, PropulsionConfig, default_layout
from .rewards import RewardConfig, RewardWeights

__all__ = [
    "ConfigError",
    "PropulsionSettings",
    "AblationConfig",
    "RunConfig",
    "ablation_preset",
    "ABLATION_IDS",
    "load_run_config",
    "dump_run_config",
    "parse_run_config",
    "validate_run_config",
    "config_fingerprint",
]

ABLATION_IDS = ("A", "B", "C", "D")

# Table of ablation rows: (drag dynamics, polarity mode, drag penalty).
_ABLATION_ROWS = {
    "A": (False, "alternating", True),
    "B": (True, "alternating", True),
    "C": (True, "same_sign", True),
    "D": (True, "alternating", False),
}


class ConfigError(ValueError):
    """Configuration failed to parse or validate; carries the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass
class PropulsionSettings:
    """File-facing propulsion parameters; expands to the full layout."""

    k_drag: float = 0.005
    f_max: float = 0.1
    cube_half_width: float = 0.09
    polarity_mode: str = "alternating"
    drag_dynamics_enabled: bool = True

    def build(self) -> PropulsionConfig:
        return default_layout(
            PolarityMode(self.polarity_mode),
            f_max=self.f_max,
            k_drag=self.k_drag,
            cube_half_width=self.cube_half_width,
            drag_dynamics_enabled=self.drag_dynamics_enabled,
        )


@dataclass
class AblationConfig:
    """One row of the actuation study grid."""

    id: str = "B"
    drag_dynamics: bool = True
    polarity_mode: str = "alternating"
    drag_penalty_enabled: bool = True


def ablation_preset(ablation_id: str) -> AblationConfig:
    if ablation_id not in _ABLATION_ROWS:
        raise ConfigError("ablation.id", f"must be one of {ABLATION_IDS}, got {ablation_id!r}")
    drag_dynamics, polarity, penalty = _ABLATION_ROWS[ablation_id]
    return AblationConfig(
        id=ablation_id,
        drag_dynamics=drag_dynamics,
        polarity_mode=polarity,
        drag_penalty_enabled=penalty,
    )


@dataclass
class RunConfig:
    seed: int = 0
    env: EnvConfig = field(default_factory=EnvConfig)
    propulsion: PropulsionSettings = field(default_factory=PropulsionSettings)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def resolved(self) -> "RunConfig":
        """Copy with the ablation row folded into propulsion and rewards.

        The snapshot written to a run directory is always the resolved
        config, so overrides are visible rather than implied.
        """
        cfg = _from_plain(RunConfig, _to_plain(self), "")
        cfg.propulsion.polarity_mode = cfg.ablation.polarity_mode
        cfg.propulsion.drag_dynamics_enabled = cfg.ablation.drag_dynamics
        if not cfg.ablation.drag_penalty_enabled:
            cfg.rewards.weights.drag = 0.0
        return cfg


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_to_plain(v) for v in obj]
    return obj


def _from_plain(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    field_map = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(field_map)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{path}.{key}" if path else key, "unknown configuration key")
    kwargs = {}
    for name, fld in field_map.items():
        if name not in data:
            continue  # fall back to the dataclass default
        sub_path = f"{path}.{name}" if path else name
        kwargs[name] = _coerce(hints[fld.name], data[name], sub_path)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(path or "<root>", str(exc)) from exc


def _coerce(hint, value, path: str):
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if len(args) != 1:
            raise ConfigError(path, f"unsupported configuration field type {hint!r}")
        if value is None:
            return None
        return _coerce(args[0], value, path)
    if dataclasses.is_dataclass(hint):
        return _from_plain(hint, value, path)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        args = typing.get_args(hint)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(path, f"expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    raise ConfigError(path, f"unsupported configuration field type {hint!r}")


def parse_run_config(data: dict) -> RunConfig:
    cfg = _from_plain(RunConfig, data or {}, "")
    validate_run_config(cfg)
    return cfg


def load_run_config(path: str | Path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("", f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("", f"cannot parse config file {path}: {exc}") from exc
    if data is None:
        data = {}
    return parse_run_config(data)


def dump_run_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(_to_plain(cfg), sort_keys=False))


def config_fingerprint(cfg: RunConfig) -> str:
    """Content hash of the resolved configuration snapshot."""
    blob = json.dumps(_to_plain(cfg.resolved()), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def validate_run_config(cfg: RunConfig) -> None:
    env, rew, noise, ppo = cfg.env, cfg.rewards, cfg.noise, cfg.ppo
    _require(env.dt > 0, "env.dt", "must be > 0")
    _require(env.episode_length >= 1, "env.episode_length", "must be >= 1")
    _require(env.mass > 0, "env.mass", "must be > 0")
    _require(all(v > 0 for v in env.inertia_diag), "env.inertia_diag", "entries must be > 0")
    _require(all(v > 0 for v in env.spawn_half_extents), "env.spawn_half_extents", "entries must be > 0")
    _require(0 <= env.spawn_max_angle_deg <= 180, "env.spawn_max_angle_deg", "must lie in [0, 180]")
    _require(env.success_pos_threshold > 0, "env.success_pos_threshold", "must be > 0")
    _require(env.success_ori_threshold_deg > 0, "env.success_ori_threshold_deg", "must be > 0")
    _require(env.success_dwell >= 1, "env.success_dwell", "must be >= 1")

    for name in ("kappa_p", "kappa_o", "kappa_b"):
        _require(getattr(rew, name) > 0, f"rewards.{name}", "must be > 0")
    _require(rew.v_min >= 0, "rewards.v_min", "must be >= 0")
    _require(rew.v_max > rew.v_min, "rewards.v_max", "must exceed rewards.v_min")
    _require(rew.omega_min >= 0, "rewards.omega_min", "must be >= 0")
    _require(rew.omega_max > rew.omega_min, "rewards.omega_max", "must exceed rewards.omega_min")
    _require(rew.d_max > 0, "rewards.d_max", "must be > 0")
    _require(rew.r_op >= 0, "rewards.r_op", "must be >= 0")
    _require(all(v > 0 for v in rew.cuboid_half_extents), "rewards.cuboid_half_extents", "entries must be > 0")

    for name in ("pos", "rot6d", "vlin", "vang"):
        _require(getattr(noise, name) >= 0, f"noise.{name}", "must be >= 0")

    _require(0 <= ppo.gamma <= 1, "ppo.gamma", "must lie in [0, 1]")
    _require(0 <= ppo.lam <= 1, "ppo.lam", "must lie in [0, 1]")
    _require(ppo.clip_eps > 0, "ppo.clip_eps", "must be > 0")
    _require(ppo.lr > 0, "ppo.lr", "must be > 0")
    for name in ("epochs", "minibatches", "horizon", "n_envs", "total_steps", "checkpoint_interval"):
        _require(getattr(ppo, name) >= 1, f"ppo.{name}", "must be >= 1")

    prop = cfg.propulsion
    _require(prop.k_drag >= 0, "propulsion.k_drag", "must be >= 0")
    _require(prop.f_max > 0, "propulsion.f_max", "must be > 0")
    _require(prop.cube_half_width > 0, "propulsion.cube_half_width", "must be > 0")
    _require(
        prop.polarity_mode in ("alternating", "same_sign"),
        "propulsion.polarity_mode",
        "must be 'alternating' or 'same_sign'",
    )

    abl = cfg.ablation
    _require(abl.id in ABLATION_IDS, "ablation.id", f"must be one of {ABLATION_IDS}")
    preset = ablation_preset(abl.id)
    _require(
        (abl.drag_dynamics, abl.polarity_mode, abl.drag_penalty_enabled)
        == (preset.drag_dynamics, preset.polarity_mode, preset.drag_penalty_enabled),
        "ablation",
        f"fields do not match the study row for id {abl.id!r}",
    )
