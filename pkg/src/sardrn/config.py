"""Flat ``key = value`` experiment configuration files.

Blank lines and lines starting with ``#`` are ignored.  Keys are the
:class:`~sardrn.training.TrainConfig` fields plus::

    dataset_dir       directory of P5 PGM training images (required)
    output_dir        where the model and logs go (required)
    channels          feature width of the hidden layers (default 64)
    dilations         comma list, one per layer (default 1,2,3,4,3,2,1)
    skips             "1-3,4-7" style list, or "none"
    dilated           false forces every dilation to 1
    skip_connections  false removes every skip

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigurationError
from .network import DEFAULT_DILATIONS, DEFAULT_SKIPS, NetworkSpec, sardrn_spec
from .training import TrainConfig

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ConfigurationError(f"expected a boolean, got {text!r}")


def parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise ConfigurationError(f"expected comma-separated integers, got {text!r}") from None


def parse_skips(text: str) -> tuple[tuple[int, int], ...]:
    t = text.strip().lower()
    if t in ("", "none"):
        return ()
    out = []
    for item in t.replace(" ", "").split(","):
        try:
            s, d = item.split("-")
            out.append((int(s), int(d)))
        except ValueError:
            raise ConfigurationError(f"bad skip {item!r}; expected SOURCE-DEST") from None
    return tuple(out)


def format_skips(skips) -> str:
    return ",".join(f"{s}-{t}" for s, t in skips) or "none"


@dataclass
class ExperimentConfig:
    train: TrainConfig
    dataset_dir: Path
    output_dir: Path
    channels: int = 64
    dilations: tuple[int, ...] = DEFAULT_DILATIONS
    skips: tuple[tuple[int, int], ...] = DEFAULT_SKIPS
    dilated: bool = True
    skip_connections: bool = True

    def network_spec(self) -> NetworkSpec:
        dil = self.dilations if self.dilated else (1,) * len(self.dilations)
        skips = self.skips if self.skip_connections else ()
        return sardrn_spec(self.channels, dil, skips)

    @property
    def effective_skips(self) -> tuple[tuple[int, int], ...]:
        return self.skips if self.skip_connections else ()


def _coerce(value: str, typ):
    if typ is bool or typ == "bool":
        return parse_bool(value)
    if typ in (int, "int"):
        return int(value)
    if typ in (float, "float"):
        return float(value)
    if typ in ("int | None",):
        return None if value.strip().lower() == "none" else int(value)
    return value


def parse_config_text(text: str, base_dir: str | os.PathLike = ".") -> ExperimentConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in raw:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value

    train_kwargs = {}
    for f in fields(TrainConfig):
        if f.name in raw:
            try:
                train_kwargs[f.name] = _coerce(raw.pop(f.name), f.type)
            except ValueError as exc:
                raise ConfigurationError(f"{f.name}: {exc}") from None
    train_cfg = TrainConfig(**train_kwargs)
    train_cfg.validate()

    base = Path(base_dir)
    for key in ("dataset_dir", "output_dir"):
        if key not in raw:
            raise ConfigurationError(f"missing required key {key!r}")
    dataset_dir = (base / raw.pop("dataset_dir")).resolve()
    output_dir = (base / raw.pop("output_dir")).resolve()
    if not dataset_dir.is_dir():
        raise ConfigurationError(f"dataset_dir {dataset_dir} does not exist")
    if not output_dir.parent.is_dir():
        raise ConfigurationError(f"parent of output_dir {output_dir} does not exist")

    cfg = ExperimentConfig(train_cfg, dataset_dir, output_dir)
    try:
        if "channels" in raw:
            cfg.channels = int(raw.pop("channels"))
    except ValueError as exc:
        raise ConfigurationError(f"channels: {exc}") from None
    if "dilations" in raw:
        cfg.dilations = parse_int_list(raw.pop("dilations"))
    if "skips" in raw:
        cfg.skips = parse_skips(raw.pop("skips"))
    if "dilated" in raw:
        cfg.dilated = parse_bool(raw.pop("dilated"))
    if "skip_connections" in raw:
        cfg.skip_connections = parse_bool(raw.pop("skip_connections"))
    if raw:
        raise ConfigurationError(f"unknown keys: {', '.join(sorted(raw))}")
    if len(cfg.dilations) != 7:
        raise ConfigurationError(f"dilation list must have 7 entries, got {len(cfg.dilations)}")
    cfg.network_spec()  # surfaces topology errors at load time
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), path.parent)
