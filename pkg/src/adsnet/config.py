"""Run configuration and its flat ``key = value`` file format.

Keys are dotted by section (``partition.theta``, ``loss.alpha``,
``train.lr`` ...); top-level keys have no prefix.  Lines starting with ``#``
are comments.  Unknown keys are rejected.  Tuples are written
comma-separated, booleans as ``true``/``false``.

Defaults for loss weights, partition thresholds and optimizer settings are
engineering choices for this package and are not published values.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

PROFILE_CHANNELS = {
    "toy": (16, 32, 64, 128),
    "paper_shape": (256, 512, 1024, 2048),
}
PROFILE_WIDTH = {"toy": 64, "paper_shape": 256}


@dataclass
class PartitionConfig:
    mode: str = "soft"
    theta: float = 0.6
    band: float = 0.1

    def validate(self):
        if self.mode not in ("soft", "hard"):
            raise ConfigError(f"partition.mode must be soft or hard, got {self.mode!r}")
        if not 0.0 < self.theta < 1.0:
            raise ConfigError("partition.theta must lie in (0, 1)")
        if not 0.0 < self.band < 0.5:
            raise ConfigError("partition.band must lie in (0, 0.5)")
        if self.theta + self.band > 1.0:
            raise ConfigError("partition.theta + partition.band must be <= 1")
        if not self.band < self.theta:
            raise ConfigError("partition.band must be smaller than partition.theta")


@dataclass
class LossConfig:
    alpha: float = 1e-3
    beta: float = 1.0
    lam: float = 1.0
    c1: float = 1.0
    c2: float = 0.0
    epsilon: float = 1e-7
    w_final: float = 1.0
    w_early: float = 1.0
    w_bs: float = 0.5
    w_os: float = 0.5

    def validate(self):
        for name in ("alpha", "beta", "lam", "w_final", "w_early", "w_bs", "w_os"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss.{_key_alias(name)} must be >= 0")
        if not 0.0 < self.epsilon < 0.1:
            raise ConfigError("loss.epsilon must lie in (0, 0.1)")
        if not self.c1 > self.c2:
            raise ConfigError("loss.c1 must exceed loss.c2")

    @property
    def weights(self) -> dict[str, float]:
        return {"final": self.w_final, "early": self.w_early, "bs": self.w_bs, "os": self.w_os}


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 8
    iterations: int = 1000
    checkpoint_every: int = 100
    schedule: str = "none"
    augment: bool = True
    deterministic: bool = False
    log_every: int = 1

    def validate(self):
        if self.lr <= 0:
            raise ConfigError("train.lr must be positive")
        for name in ("batch_size", "iterations", "checkpoint_every", "log_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"train.{name} must be >= 1")
        if self.schedule not in ("none", "cosine"):
            raise ConfigError("train.schedule must be none or cosine")


@dataclass
class DataConfig:
    train: str = "synthetic"
    synthetic_n: int = 8
    synthetic_seed: int = 0
    split_seed: int = 0
    kvasir_seg: str = ""
    cvc_clinicdb: str = ""
    etis: str = ""
    cvc_colondb: str = ""
    synthetic_root: str = ""

    def validate(self):
        if self.synthetic_n < 1:
            raise ConfigError("data.synthetic_n must be >= 1")
        if self.train not in ("synthetic", "paper_split", "kvasir_seg", "cvc_clinicdb", "etis", "cvc_colondb"):
            raise ConfigError(f"unknown training dataset {self.train!r}")


@dataclass
class RunConfig:
    image_size: int = 352
    seed: int = 0
    encoder_profile: str = "toy"
    channel_scheme: tuple = ()
    decoder_width: int = 0
    encoder_weights: str = ""
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        # empty scheme / zero width mean "use the profile default"
        if self.encoder_profile in PROFILE_CHANNELS:
            if not self.channel_scheme:
                self.channel_scheme = PROFILE_CHANNELS[self.encoder_profile]
            if not self.decoder_width:
                self.decoder_width = PROFILE_WIDTH[self.encoder_profile]
        self.channel_scheme = tuple(int(c) for c in self.channel_scheme)

    def validate(self) -> "RunConfig":
        if self.encoder_profile not in PROFILE_CHANNELS:
            raise ConfigError(f"unknown encoder_profile {self.encoder_profile!r}")
        if self.image_size < 32 or self.image_size % 32:
            raise ConfigError("image_size must be a positive multiple of 32")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if len(self.channel_scheme) != 4 or min(self.channel_scheme) < 1:
            raise ConfigError("channel_scheme needs 4 positive integers")
        if self.decoder_width < 1:
            raise ConfigError("decoder_width must be positive")
        for section in (self.partition, self.loss, self.train, self.data):
            section.validate()
        return self

    # flat key/value view -------------------------------------------------

    def to_flat(self) -> dict[str, object]:
        flat = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if dataclasses.is_dataclass(value):
                for sub in dataclasses.fields(value):
                    flat[f"{f.name}.{_key_alias(sub.name)}"] = getattr(value, sub.name)
            else:
                flat[f.name] = value
        return flat

    def dumps(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.to_flat().items())

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_flat(cls, flat: dict[str, str]) -> "RunConfig":
        cfg = cls()
        top, sections = {}, {}
        known = cfg.to_flat()
        for key, raw in flat.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if "." in key:
                section, name = key.split(".", 1)
                sections.setdefault(section, {})[_field_name(name)] = raw
            else:
                top[key] = raw
        kwargs = {}
        hints = typing.get_type_hints(cls)
        for f in dataclasses.fields(cls):
            if f.name in sections:
                sub_cls = hints[f.name]
                sub_hints = typing.get_type_hints(sub_cls)
                kwargs[f.name] = sub_cls(
                    **{n: _parse(v, sub_hints[n], f"{f.name}.{n}") for n, v in sections[f.name].items()}
                )
            elif f.name in top:
                kwargs[f.name] = _parse(top[f.name], hints[f.name], f.name)
        return cls(**kwargs)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        flat = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in flat:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            flat[key] = value
        return cls.from_flat(flat)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.loads(text)

    def override(self, **flat) -> "RunConfig":
        """Copy with flat dotted-key overrides (values may be typed or strings)."""
        merged = {k: _format(v) for k, v in self.to_flat().items()}
        merged.update({k: _format(v) for k, v in flat.items()})
        return RunConfig.from_flat(merged)


def _key_alias(name: str) -> str:
    return "lambda" if name == "lam" else name


def _field_name(key: str) -> str:
    return "lam" if key == "lambda" else key


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(raw, typ, key):
    if not isinstance(raw, str):
        return raw
    try:
        if typ is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is tuple:
            return tuple(int(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
