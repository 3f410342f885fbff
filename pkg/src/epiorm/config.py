"""Flat ``key = value`` run configuration covering training and architecture.

Lines starting with ``#`` are comments. Keys belong to either
:class:`TrainConfig` or :class:`~epiorm.network.NetConfig`; unknown keys are
rejected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

from .errors import ArgumentError
from .network import NetConfig
from .refocus import DEFAULT_SHIFTS


@dataclass
class TrainConfig:
    iterations: int = 5000
    batch_size: int = 128
    lr: float = 1e-4
    lr_halvings: int = 3
    rho: float = 0.9
    eps: float = 1e-8
    weight_decay: float = 1e-5
    augment: bool = True
    shifts: str = ",".join(str(s) for s in DEFAULT_SHIFTS)
    augment_safety: float = 0.9
    n_patches: int = 20000
    val_fraction: float = 0.1
    seed: int = 0
    precision: str = "single"
    log_every: int = 100
    checkpoint_every: int = 0
    # synthetic training data, used when no dataset directory is given
    n_scenes: int = 60
    scene_size: int = 64
    disp_min: float = -2.0
    disp_max: float = 2.0

    def validate(self):
        if self.batch_size < 2:
            raise ArgumentError("batch_size must be at least 2 (batch norm)")
        if self.iterations < 1:
            raise ArgumentError("iterations must be at least 1")
        if self.precision not in ("single", "double"):
            raise ArgumentError(f"unknown precision {self.precision!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ArgumentError("val_fraction must be in [0, 1)")
        self.shift_values()

    def shift_values(self):
        if not self.shifts.strip():
            return ()
        try:
            return tuple(float(s) for s in self.shifts.split(","))
        except ValueError:
            raise ArgumentError(f"cannot parse shifts {self.shifts!r}") from None


def _coerce(value, kind, key):
    try:
        if kind is bool or kind == "bool":
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind is int or kind == "int":
            return int(value)
        if kind is float or kind == "float":
            return float(value)
        return value.strip()
    except ValueError:
        raise ArgumentError(f"bad value for {key}: {value!r}") from None


def _field_types(cls):
    return {f.name: f.type for f in fields(cls)}


def parse_config(text):
    """Parse config text into ``(TrainConfig, NetConfig)``."""
    train_types, net_types = _field_types(TrainConfig), _field_types(NetConfig)
    train_kw, net_kw = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in train_types:
            train_kw[key] = _coerce(value, train_types[key], key)
        elif key in net_types:
            net_kw[key] = _coerce(value, net_types[key], key)
        else:
            raise ArgumentError(f"line {lineno}: unknown key {key!r}")
    train, net = TrainConfig(**train_kw), NetConfig(**net_kw)
    train.validate()
    net.validate()
    return train, net


def load_config(path):
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def dump_config(train, net):
    lines = ["# training"]
    lines += [f"{k} = {_fmt(v)}" for k, v in asdict(train).items()]
    lines.append("# architecture")
    lines += [f"{k} = {_fmt(v)}" for k, v in asdict(net).items()]
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def fingerprint(train, net):
    blob = json.dumps({"train": asdict(train), "net": asdict(net)}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
