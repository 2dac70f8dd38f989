"""Run configuration as ``key = value`` text."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .neural_core import TrainSchedule
from .prosody_models import DEFAULT_PSEUDO_LENGTHS


@dataclass
class Config:
    seed: int = 0
    latent_dim: int = 16
    n_codes: int = 20
    ff_units: int = 256
    rnn_units: int = 64
    rnn_layers: int = 3
    pseudo_lengths: list = field(default_factory=lambda: list(DEFAULT_PSEUDO_LENGTHS))
    pseudo_init: str = "frames"
    peak_lr: float = 0.005
    warmup_epochs: int = 8
    decay_exponent: float = 0.5
    kl_zero_epochs: int = 5
    kl_ramp_epochs: int = 20
    kl_max: float = 0.001
    total_epochs: int = 100
    batch_size: int = 32
    checkpoint_every: int = 0
    kmeans_n_init: int = 10
    alpha: float = 0.005
    corpus: str = ""
    run_dir: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("latent_dim", "n_codes", "ff_units", "rnn_units", "rnn_layers",
                     "total_epochs", "batch_size", "warmup_epochs", "kl_ramp_epochs",
                     "kmeans_n_init"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.peak_lr <= 0 or self.decay_exponent <= 0:
            raise ConfigError("peak_lr and decay_exponent must be positive")
        if self.kl_max < 0 or self.kl_zero_epochs < 0 or self.checkpoint_every < 0:
            raise ConfigError("kl_max, kl_zero_epochs and checkpoint_every must be >= 0")
        if self.pseudo_init not in ("frames", "utterance"):
            raise ConfigError("pseudo_init must be 'frames' or 'utterance'")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must be in (0, 1)")
        if not self.pseudo_lengths or any(int(L) < 1 for L in self.pseudo_lengths):
            raise ConfigError("pseudo_lengths must be a non-empty list of positive ints")

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(peak_lr=self.peak_lr, warmup_epochs=self.warmup_epochs,
                             kl_zero_epochs=self.kl_zero_epochs, kl_ramp_epochs=self.kl_ramp_epochs,
                             kl_max=self.kl_max, total_epochs=self.total_epochs,
                             batch_size=self.batch_size, decay_exponent=self.decay_exponent)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ",".join(str(int(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    @classmethod
    def from_text(cls, text: str) -> "Config":
        types = {f.name: f for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, _, val = (s.strip() for s in line.partition("="))
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            default = getattr(cls(), key)
            try:
                if isinstance(default, list):
                    kwargs[key] = [int(x) for x in val.split(",") if x.strip()]
                elif isinstance(default, bool):
                    kwargs[key] = val.lower() in ("1", "true", "yes")
                elif isinstance(default, int):
                    kwargs[key] = int(val)
                elif isinstance(default, float):
                    kwargs[key] = float(val)
                else:
                    kwargs[key] = val
            except ValueError:
                raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from None
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "Config":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())
