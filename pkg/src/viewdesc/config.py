"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored. Keys
are the field names of :class:`DatasetConfig`, :class:`Schedule`,
:class:`LossConfig`, :class:`NetworkConfig` and :class:`EvalConfig`; all
names are unique across the groups. Lists are comma separated, booleans
are ``true``/``false``. Example::

    objects = crate,cone,wedge,mug,step
    initial_epochs = 100
    margin = 0.01
    conv1 = 16,9,9
    modalities = depth
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .nn import default_network_spec
from .objective import LossConfig
from .scene.dataset import DatasetConfig
from .trainer import Schedule

MODALITIES = {"depth": ("depth",), "shaded": ("shaded",), "both": ("depth", "shaded")}


@dataclass
class NetworkConfig:
    descriptor_dim: int = 16
    conv1: tuple = (16, 9, 9)
    conv2: tuple = (7, 5, 5)
    hidden: int = 256

    def spec(self, channels, size):
        return default_network_spec(channels, size, self.descriptor_dim, tuple(self.conv1),
                                    tuple(self.conv2), self.hidden)


@dataclass
class EvalConfig:
    modalities: tuple = ("depth",)
    ks: tuple = (1, 22)
    thresholds: tuple = (5.0, 20.0, 40.0, 180.0)
    held_out: int = -1          # class left out of training, -1 for none
    angle_bins: int = 18        # over [0, 180]
    dist_bins: int = 20
    ratio_bins: int = 40

    def __post_init__(self):
        for m in self.modalities:
            if m not in MODALITIES:
                raise ValueError(f"unknown modality {m!r}; choose from {sorted(MODALITIES)}")


@dataclass
class Settings:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    schedule: Schedule = field(default_factory=Schedule)
    loss: LossConfig = field(default_factory=LossConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    GROUPS = ("dataset", "schedule", "loss", "network", "eval")

    def items(self):
        """(key, value) for every setting, in group then field order."""
        out = []
        for g in self.GROUPS:
            obj = getattr(self, g)
            out += [(f.name, getattr(obj, f.name)) for f in dataclasses.fields(obj)]
        return out

    def to_text(self):
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.items())

    def digest(self):
        """Hash of every setting except the seed (which is recorded separately)."""
        text = "".join(f"{k}={format_value(v)}\n" for k, v in self.items() if k != "seed")
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _key_index():
    index = {}
    for g, cls in zip(Settings.GROUPS, (DatasetConfig, Schedule, LossConfig, NetworkConfig, EvalConfig)):
        for f in dataclasses.fields(cls):
            if f.name in index:
                raise RuntimeError(f"duplicate setting name {f.name}")
            index[f.name] = (g, f)
    return index


KEYS = _key_index()


def format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(text, default):
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if default and isinstance(default[0], (int, float)) and not isinstance(default[0], bool):
            kind = type(default[0])
            return tuple(kind(p) for p in parts)
        return tuple(parts)
    return text


def parse_lines(lines, source="<config>"):
    """Parse ``key = value`` lines into a dict of raw strings."""
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{n}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ValueError(f"{source}:{n}: unknown setting {key!r}")
        out[key] = value
    return out


def build_settings(raw):
    """Settings from a dict of raw string values (unspecified keys keep their defaults)."""
    base = Settings()
    groups = {g: {} for g in Settings.GROUPS}
    for key, value in raw.items():
        if key not in KEYS:
            raise ValueError(f"unknown setting {key!r}")
        g, f = KEYS[key]
        default = getattr(getattr(base, g), f.name)
        try:
            groups[g][key] = _coerce(value, default)
        except ValueError as exc:
            raise ValueError(f"setting {key}: {exc}") from None
    return Settings(
        DatasetConfig(**groups["dataset"]),
        Schedule(**groups["schedule"]),
        LossConfig(**groups["loss"]),
        NetworkConfig(**groups["network"]),
        EvalConfig(**groups["eval"]),
    )


def load_settings(path=None, overrides=()):
    """Read a config file (or the bundled desk config when ``path`` is None) and apply overrides.

    ``overrides`` are ``key=value`` strings and win over the file.
    """
    if path is None:
        text = resources.files("viewdesc.configs").joinpath("desk.cfg").read_text()
        source = "desk.cfg"
    else:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        text = p.read_text()
        source = str(p)
    raw = parse_lines(text.splitlines(), source)
    raw.update(parse_lines(overrides, "--set"))
    return build_settings(raw)
