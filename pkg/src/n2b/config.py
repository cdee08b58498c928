"""Flat JSON experiment configs with strict validation.

Every key is optional except `clean_dir` plus exactly one of `noisy_dir` /
`source_dir`; unknown keys are rejected by name so typos cannot silently
change an experiment. Serialization echoes every resolved value, so
serialize(parse(doc)) -> parse is lossless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .filters import FilterSpec
from .noise import NoiseSpec
from .training import TrainConfig, VARIANTS


class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending key."""


_STR = {"clean_dir", "noisy_dir", "source_dir", "output_dir", "noise_model",
        "filter", "variant"}
_NUM = {"noise_level", "filter_kernel", "filter_sigma", "filter_sigma_spatial",
        "filter_sigma_range", "total_steps", "initial_fraction", "batch_size",
        "patch_size", "seed", "lr", "beta1", "beta2", "epsilon", "depth",
        "base_width", "channels"}
_BOOL = {"single_image", "detach_transplant"}
_KEYS = _STR | _NUM | _BOOL | {"log_transform"}

_DEFAULTS = {
    "noisy_dir": None,
    "source_dir": None,
    "output_dir": "out",
    "noise_model": None,
    "noise_level": None,
    "filter": "bilateral",
    "filter_kernel": 15,
    "filter_sigma": 2.5,
    "filter_sigma_spatial": None,
    "filter_sigma_range": 0.1,
    "total_steps": 2000,
    "initial_fraction": 0.05,
    "batch_size": 4,
    "patch_size": 64,
    "seed": 0,
    "lr": 1e-3,
    "beta1": 0.9,
    "beta2": 0.999,
    "epsilon": 1e-8,
    "variant": "n2b",
    "single_image": False,
    "log_transform": None,
    "detach_transplant": True,
    "depth": 3,
    "base_width": 32,
    "channels": 1,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A resolved flat config: training settings plus the output directory."""

    train: TrainConfig
    output_dir: str
    raw: dict  # every key with its resolved value, serialization source


def parse_config(document: str) -> ExperimentConfig:
    try:
        data = json.loads(document)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")

    for key in data:
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    if "clean_dir" not in data:
        raise ConfigError("missing required key 'clean_dir'")

    resolved = dict(_DEFAULTS)
    resolved.update(data)

    for key in _STR:
        v = resolved.get(key)
        if v is not None and not isinstance(v, str):
            raise ConfigError(f"key {key!r} must be a string, got {type(v).__name__}")
    for key in _BOOL:
        if not isinstance(resolved[key], bool):
            raise ConfigError(f"key {key!r} must be a boolean")
    if resolved["log_transform"] is not None and not isinstance(resolved["log_transform"], bool):
        raise ConfigError("key 'log_transform' must be a boolean or null")
    for key in _NUM - {"noise_level", "filter_sigma_spatial"}:
        if isinstance(resolved[key], bool) or not isinstance(resolved[key], (int, float)):
            raise ConfigError(f"key {key!r} must be a number")
    if resolved["filter_sigma_spatial"] is not None and \
            not isinstance(resolved["filter_sigma_spatial"], (int, float)):
        raise ConfigError("key 'filter_sigma_spatial' must be a number or null")

    level = resolved["noise_level"]
    if level is not None:
        if isinstance(level, list):
            if len(level) != 2 or not all(isinstance(x, (int, float)) for x in level):
                raise ConfigError("key 'noise_level' range must be [lo, hi]")
            level = (float(level[0]), float(level[1]))
        elif isinstance(level, (int, float)) and not isinstance(level, bool):
            level = float(level)
        else:
            raise ConfigError("key 'noise_level' must be a number or [lo, hi]")

    noise = None
    if resolved["noise_model"] is not None:
        if level is None:
            raise ConfigError("'noise_model' requires 'noise_level'")
        try:
            noise = NoiseSpec(resolved["noise_model"], level, seed=int(resolved["seed"]))
        except ValueError as e:
            raise ConfigError(f"key 'noise_model'/'noise_level': {e}") from e

    try:
        filt = FilterSpec(
            kind=resolved["filter"],
            kernel_size=int(resolved["filter_kernel"]),
            gaussian_sigma=float(resolved["filter_sigma"]),
            sigma_spatial=None if resolved["filter_sigma_spatial"] is None
            else float(resolved["filter_sigma_spatial"]),
            sigma_range=float(resolved["filter_sigma_range"]),
        )
    except ValueError as e:
        raise ConfigError(f"key 'filter': {e}") from e

    if resolved["variant"] not in VARIANTS:
        raise ConfigError(f"key 'variant' must be one of {VARIANTS}")

    try:
        train = TrainConfig(
            clean_dir=resolved["clean_dir"],
            noisy_dir=resolved["noisy_dir"],
            source_dir=resolved["source_dir"],
            noise=noise,
            filter=filt,
            total_steps=int(resolved["total_steps"]),
            initial_fraction=float(resolved["initial_fraction"]),
            batch_size=int(resolved["batch_size"]),
            patch_size=int(resolved["patch_size"]),
            seed=int(resolved["seed"]),
            lr=float(resolved["lr"]),
            beta1=float(resolved["beta1"]),
            beta2=float(resolved["beta2"]),
            epsilon=float(resolved["epsilon"]),
            variant=resolved["variant"],
            single_image=resolved["single_image"],
            log_transform=resolved["log_transform"],
            detach_transplant=resolved["detach_transplant"],
            depth=int(resolved["depth"]),
            base_width=int(resolved["base_width"]),
            channels=int(resolved["channels"]),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e

    echo = dict(resolved)
    if isinstance(level, tuple):
        echo["noise_level"] = list(level)
    return ExperimentConfig(train=train, output_dir=resolved["output_dir"], raw=echo)


def serialize_config(config: ExperimentConfig) -> str:
    return json.dumps(config.raw, indent=2, sort_keys=True) + "\n"
