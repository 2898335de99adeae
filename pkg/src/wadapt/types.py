"""Core value types shared across the package.

Arrays are float64 numpy throughout; the wrapper classes validate the
invariants their consumers rely on (finiteness, one-hot rows, posterior
normalization) at construction time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, InputError

POSTERIOR_ROW_TOL = 1e-6


def _as_f64(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64)


@dataclass
class FeatureTensor:
    """Batch of log-mel-like input features, shape [batch, 1, time, mel]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = _as_f64(self.data)
        if self.data.ndim != 4 or self.data.shape[1] != 1:
            raise InputError(f"feature tensor must be [batch, 1, time, mel], got {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise InputError("feature tensor contains non-finite entries")

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def time_frames(self) -> int:
        return self.data.shape[2]

    @property
    def mel_bands(self) -> int:
        return self.data.shape[3]


@dataclass
class LabelVector:
    """One-hot labels, shape [batch, num_classes]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = _as_f64(self.data)
        if self.data.ndim != 2:
            raise InputError(f"labels must be [batch, num_classes], got {self.data.shape}")
        ones = self.data == 1.0
        if not (np.all((self.data == 0.0) | ones) and np.all(ones.sum(axis=1) == 1)):
            raise InputError("labels must be one-hot rows")

    @property
    def num_classes(self) -> int:
        return self.data.shape[1]

    def indices(self) -> np.ndarray:
        return self.data.argmax(axis=1)


@dataclass
class LatentRep:
    """Feature-extractor output, shape [batch, latent_dim]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = _as_f64(self.data)
        if self.data.ndim != 2:
            raise InputError(f"latent representation must be 2-D, got {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise InputError("latent representation contains non-finite entries")


@dataclass
class ClassPosterior:
    """Classifier output: nonnegative rows summing to 1 within 1e-6."""

    data: np.ndarray

    def __post_init__(self):
        self.data = _as_f64(self.data)
        if self.data.ndim != 2:
            raise InputError(f"posterior must be 2-D, got {self.data.shape}")
        if np.any(self.data < 0):
            raise InputError("posterior has negative entries")
        row_sums = self.data.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > POSTERIOR_ROW_TOL):
            raise InputError("posterior rows do not sum to 1 within tolerance")

    def predictions(self) -> np.ndarray:
        # argmax breaks ties toward the lowest class index
        return self.data.argmax(axis=1)


@dataclass
class CriticScore:
    """Domain-critic output: one unbounded finite scalar per sample."""

    data: np.ndarray

    def __post_init__(self):
        self.data = _as_f64(self.data).reshape(-1)
        if not np.isfinite(self.data).all():
            raise InputError("critic scores contain non-finite entries")


class DomainTag(enum.Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass
class Param:
    """One named array of a network, flagged trainable or frozen."""

    data: np.ndarray
    trainable: bool = True

    def __post_init__(self):
        self.data = _as_f64(self.data)


class ParameterSet:
    """Ordered mapping name -> Param. Copy-compatible iff names and shapes match."""

    def __init__(self, entries: dict[str, Param] | None = None):
        self._entries: dict[str, Param] = {}
        if entries:
            for name, p in entries.items():
                self.add(name, p.data, p.trainable)

    def add(self, name: str, data, trainable: bool = True) -> None:
        if name in self._entries:
            raise ConfigError(f"duplicate parameter name {name!r}")
        self._entries[name] = Param(_as_f64(data), trainable)

    def __getitem__(self, name: str) -> Param:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def trainable_names(self) -> list[str]:
        return [n for n, p in self._entries.items() if p.trainable]

    def items(self):
        return self._entries.items()

    def compatible_with(self, other: "ParameterSet") -> bool:
        if self.names() != other.names():
            return False
        return all(self[n].data.shape == other[n].data.shape for n in self.names())

    def num_values(self) -> int:
        return sum(p.data.size for p in self._entries.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        """Bit-exact copies of every entry, for frozen-contract checks."""
        return {n: p.data.copy() for n, p in self._entries.items()}

    def equals_snapshot(self, snap: dict[str, np.ndarray]) -> bool:
        if set(snap) != set(self._entries):
            return False
        return all(np.array_equal(self[n].data, a) for n, a in snap.items())


def copy_parameters(src: ParameterSet) -> ParameterSet:
    """Deep copy: equal values, independently mutable storage."""
    out = ParameterSet()
    for name, p in src.items():
        out.add(name, p.data.copy(), p.trainable)
    return out


def onehot(index: int, num_classes: int) -> LabelVector:
    """Single one-hot row with a 1 at ``index``."""
    index = int(index)
    if not 0 <= index < num_classes:
        raise InputError(f"class index {index} out of range for {num_classes} classes")
    row = np.zeros((1, num_classes))
    row[0, index] = 1.0
    return LabelVector(row)


def onehot_batch(indices, num_classes: int) -> LabelVector:
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= num_classes):
        raise InputError("class index out of range")
    rows = np.zeros((indices.size, num_classes))
    rows[np.arange(indices.size), indices] = 1.0
    return LabelVector(rows)


@dataclass
class AdaptConfig:
    """Hyperparameters of the adversarial adaptation stage."""

    learning_rate: float = 5e-5
    clip_c: float = 0.01
    batch_size: int = 16
    n_d: int = 5
    max_epochs: int = 300
    saturation_window: int = 20
    saturation_tol: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        positive = ["learning_rate", "clip_c", "batch_size", "n_d", "max_epochs",
                    "saturation_window", "saturation_tol"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ["batch_size", "n_d", "max_epochs", "saturation_window"]:
            if int(getattr(self, name)) != getattr(self, name):
                raise ConfigError(f"{name} must be an integer")
        if self.saturation_window >= self.max_epochs:
            raise ConfigError("saturation_window must be smaller than max_epochs")


def config_from_dict(cls, values: dict):
    """Build a config dataclass from a plain dict, rejecting unknown keys."""
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**values)
