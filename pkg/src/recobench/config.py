"""One-file run configuration shared by every CLI subcommand.

The format is INI with one section per module; every key has a default,
so an empty (or absent) file is a valid configuration.  Unknown sections
or keys are rejected with their location.  All randomness in a run flows
from the single ``[run] seed`` key, which ``--seed`` on the command line
overrides.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields

from ._util import atomic_write_text


class ConfigError(ValueError):
    """Raised for unknown keys or unparseable values in a config file."""


@dataclass
class RunConfig:
    # [run]
    seed: int = 0
    # [taxonomy]
    normalization: str = "self"
    min_images: int = 200
    min_classes: int = 20
    # [synth]
    feature_dim: int = 16
    samples_per_class: int = 200
    drift_scale: float = 1.0
    noise_scale: float = 0.1
    test_fraction: float = 0.25
    # [train]
    objective: str = "supcon"
    alpha: float = 1.0
    lr_max: float = 0.1
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 64
    temperature: float = 0.1
    weight_decay: float = 0.0
    view_jitter: float = 0.05
    hidden_dim: int = 64
    embed_dim: int = 32
    resample_every_step: bool = True
    # [probe]
    l2: float = 1e-4
    max_iter: int = 500
    # [dedup]
    max_hamming: int = 0


SECTIONS = {
    "run": ("seed",),
    "taxonomy": ("normalization", "min_images", "min_classes"),
    "synth": ("feature_dim", "samples_per_class", "drift_scale", "noise_scale", "test_fraction"),
    "train": ("objective", "alpha", "lr_max", "momentum", "epochs", "batch_size",
              "temperature", "weight_decay", "view_jitter", "hidden_dim", "embed_dim",
              "resample_every_step"),
    "probe": ("l2", "max_iter"),
    "dedup": ("max_hamming",),
}

_BOOL_VALUES = {"true": True, "yes": True, "on": True, "1": True,
                "false": False, "no": False, "off": False, "0": False}


def _convert(key, raw, target_type, location):
    raw = raw.strip()
    try:
        if target_type is bool:
            return _BOOL_VALUES[raw.lower()]
        return target_type(raw)
    except (ValueError, KeyError):
        raise ConfigError(f"{location}: cannot parse {key} = {raw!r} as {target_type.__name__}") from None


def load_config(path=None, seed_override=None) -> RunConfig:
    """Read a config file (defaults when ``path`` is None), validating keys."""
    config = RunConfig()
    types = {f.name: f.type for f in fields(RunConfig)}
    concrete = {"int": int, "float": float, "str": str, "bool": bool}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in SECTIONS[section]:
                    raise ConfigError(f"{path}: unknown key {key!r} in section [{section}]")
                target = concrete[types[key]] if isinstance(types[key], str) else types[key]
                setattr(config, key, _convert(key, raw, target, f"{path} [{section}]"))
    if seed_override is not None:
        config.seed = int(seed_override)
    return config


def dump_config(config) -> str:
    """Render the effective configuration back to INI text."""
    lines = []
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        for key in keys:
            value = getattr(config, key)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def write_effective_config(config, path):
    atomic_write_text(path, dump_config(config))
