"""Dataset ingestion and the synthetic device-shift generator.

Domain convention: recordings from device A are the source domain, devices B
and C are the target domain. The synthetic generator builds one smooth
spectro-temporal template per scene class; source samples are template +
noise, target samples additionally pass through one fixed "device" transform
(smooth per-mel-band gain curve, constant offset, extra noise) shared by all
target samples and scaled by ``gain_curve_severity`` so severity 0 reproduces
the source distribution exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import read_feature_array, write_feature_file
from .errors import ConfigError, DataError, InputError
from .seeding import substream
from .types import FeatureTensor, onehot_batch

SCENE_LABELS = (
    "airport",
    "bus",
    "metro",
    "metro_station",
    "park",
    "public_square",
    "shopping_mall",
    "street_pedestrian",
    "street_traffic",
    "tram",
)

SOURCE_DEVICES = frozenset({"A"})
TARGET_DEVICES = frozenset({"B", "C"})
SPLIT_NAMES = ("train", "valid", "test")

# split proportions for generated data; remainder goes to train
VALID_FRACTION = 0.15
TEST_FRACTION = 0.15

DYNAMIC_RANGE = 10.0
TEMPLATE_AMPLITUDE = 1.3
GAIN_CURVE_SCALE = 0.5  # severity 1 -> per-band gains in [0.5, 1.5]
GAIN_CURVE_CYCLES = 1.5
GAIN_CURVE_PHASE = 0.7
EXTRA_NOISE_SCALE = 0.5  # extra target noise std = severity * scale * noise_std


def device_gain_curve(mel_bands: int, severity: float) -> np.ndarray:
    """The fixed per-mel-band gain curve of the simulated capture device.

    A smooth sinusoid, identical for every dataset (a device's frequency
    response does not depend on which samples it records); severity scales
    its depth, severity 0 flattens it to 1.
    """
    mel = np.arange(mel_bands) / max(mel_bands - 1, 1)
    curve = np.sin(2.0 * np.pi * GAIN_CURVE_CYCLES * mel + GAIN_CURVE_PHASE)
    return np.maximum(1.0 + severity * GAIN_CURVE_SCALE * curve, 0.05)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    scene_label: str
    device: str
    split: str

    @property
    def is_source(self) -> bool:
        return self.device in SOURCE_DEVICES


@dataclass
class LabeledSplit:
    """Features with labels visible; used for source training and evaluation."""

    features: np.ndarray  # [n, 1, time, mel]
    labels: np.ndarray  # [n] int class indices

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 4 or self.features.shape[0] != self.labels.shape[0]:
            raise InputError("labeled split features/labels mismatch")

    def __len__(self) -> int:
        return self.features.shape[0]

    def unlabeled(self) -> "UnlabeledSplit":
        return UnlabeledSplit(self.features)

    def batch(self, indices) -> tuple[FeatureTensor, "np.ndarray"]:
        return FeatureTensor(self.features[indices]), self.labels[indices]

    def onehot_labels(self, num_classes: int):
        return onehot_batch(self.labels, num_classes)


@dataclass
class UnlabeledSplit:
    """Features only. This is the one view of target data the adaptation
    stage accepts; it has no label accessor at all."""

    features: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 4:
            raise InputError("unlabeled split features must be [n, 1, time, mel]")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class DomainSplits:
    train: LabeledSplit
    valid: LabeledSplit
    test: LabeledSplit

    def split(self, name: str) -> LabeledSplit:
        if name not in SPLIT_NAMES:
            raise InputError(f"unknown split {name!r}")
        return getattr(self, name)


@dataclass
class AdaptationDataset:
    classes: list[str]
    time_frames: int
    mel_bands: int
    source: DomainSplits
    target: DomainSplits  # labels are for evaluation only

    @property
    def num_classes(self) -> int:
        return len(self.classes)


@dataclass
class ShiftConfig:
    num_classes: int = 10
    mel_bands: int = 64
    time_frames: int = 64
    samples_per_class_source: int = 200
    samples_per_class_target: int = 40
    gain_curve_severity: float = 1.0
    noise_std: float = 0.3
    offset: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("num_classes", "mel_bands", "time_frames"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("samples_per_class_source", "samples_per_class_target"):
            if getattr(self, name) < 3:
                raise ConfigError(f"{name} must be at least 3 (one per split)")
        if self.gain_curve_severity < 0 or self.noise_std < 0:
            raise ConfigError("gain_curve_severity and noise_std must be >= 0")


def class_names(num_classes: int) -> list[str]:
    if num_classes == len(SCENE_LABELS):
        return list(SCENE_LABELS)
    return [f"class_{k:02d}" for k in range(num_classes)]


def _known_label(label: str) -> bool:
    if label in SCENE_LABELS:
        return True
    return label.startswith("class_") and label[6:].isdigit()


def _smooth_field(rng, rows: int, cols: int, coarse: int = 5) -> np.ndarray:
    """Random smooth 2-D field, normalized to unit max |value|."""
    grid = rng.normal(size=(coarse, coarse))
    r = np.linspace(0.0, coarse - 1.0, rows)
    c = np.linspace(0.0, coarse - 1.0, cols)
    knots = np.arange(coarse, dtype=np.float64)
    tmp = np.stack([np.interp(r, knots, grid[:, j]) for j in range(coarse)], axis=1)
    field = np.stack([np.interp(c, knots, tmp[i]) for i in range(rows)], axis=0)
    return field / (np.abs(field).max() + 1e-12)


def _split_counts(n: int) -> tuple[int, int, int]:
    n_valid = max(1, int(round(n * VALID_FRACTION)))
    n_test = max(1, int(round(n * TEST_FRACTION)))
    n_train = n - n_valid - n_test
    if n_train < 1:
        raise ConfigError(f"too few samples per class ({n}) for a train/valid/test split")
    return n_train, n_valid, n_test


def generate_synthetic(config: ShiftConfig) -> AdaptationDataset:
    """Build the synthetic device-shift dataset described in the module docs."""
    config.validate()
    rng = substream(config.seed, "data.generate")
    t, m, k = config.time_frames, config.mel_bands, config.num_classes

    templates = np.stack(
        [TEMPLATE_AMPLITUDE * _smooth_field(rng, t, m) for _ in range(k)], axis=0
    )

    sev = config.gain_curve_severity
    gain = device_gain_curve(m, sev)
    offset = sev * config.offset
    extra_std = sev * EXTRA_NOISE_SCALE * config.noise_std

    def make_domain(per_class: int, shifted: bool) -> DomainSplits:
        feats, labels = [], []
        for cls in range(k):
            base = templates[cls] + rng.normal(0.0, config.noise_std, size=(per_class, t, m))
            if shifted:
                base = base * gain[None, None, :] + offset
                if extra_std > 0:
                    base = base + rng.normal(0.0, extra_std, size=base.shape)
            feats.append(base)
            labels.append(np.full(per_class, cls, dtype=np.int64))
        x = np.clip(np.concatenate(feats), -DYNAMIC_RANGE, DYNAMIC_RANGE)[:, None, :, :]
        y = np.concatenate(labels)
        n_train, n_valid, n_test = _split_counts(per_class)
        tr_idx, va_idx, te_idx = [], [], []
        for cls in range(k):
            start = cls * per_class
            tr_idx += range(start, start + n_train)
            va_idx += range(start + n_train, start + n_train + n_valid)
            te_idx += range(start + n_train + n_valid, start + per_class)
        mk = lambda idx: LabeledSplit(x[list(idx)], y[list(idx)])
        return DomainSplits(mk(tr_idx), mk(va_idx), mk(te_idx))

    source = make_domain(config.samples_per_class_source, shifted=False)
    target = make_domain(config.samples_per_class_target, shifted=True)
    return AdaptationDataset(class_names(k), t, m, source, target)


# ---------------------------------------------------------------------------
# manifest + feature-file persistence


def save_dataset(dataset: AdaptationDataset, out_dir) -> Path:
    """Write manifest.csv plus one UDAW feature file per sample; returns the
    manifest path."""
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    target_devices = sorted(TARGET_DEVICES)

    def dump(domain: str, splits: DomainSplits):
        for split_name in SPLIT_NAMES:
            split = splits.split(split_name)
            for i in range(len(split)):
                label = dataset.classes[split.labels[i]]
                if domain == "source":
                    device = "A"
                else:
                    device = target_devices[i % len(target_devices)]
                rel = f"features/{domain}_{split_name}_{i:05d}.udaw"
                write_feature_file(out_dir / rel, split.features[i])
                rows.append(ManifestEntry(rel, label, device, split_name))

    dump("source", dataset.source)
    dump("target", dataset.target)

    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "scene_label", "device", "split"])
        for row in rows:
            writer.writerow([row.path, row.scene_label, row.device, row.split])
    return manifest


def load_manifest(manifest_path) -> AdaptationDataset:
    """Load a dataset from a manifest CSV; the source/target partition is
    derived from the device column (A -> source, B/C -> target)."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DataError(f"{manifest_path}: manifest not found")
    base = manifest_path.parent
    entries: list[ManifestEntry] = []
    with open(manifest_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path", "scene_label", "device", "split"]:
            raise DataError(f"{manifest_path}: bad manifest header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataError(f"{manifest_path}:{lineno}: expected 4 columns, got {len(row)}")
            path, label, device, split = row
            if not _known_label(label):
                raise DataError(f"{manifest_path}:{lineno}: unknown scene label {label!r}")
            if device not in SOURCE_DEVICES | TARGET_DEVICES:
                raise DataError(f"{manifest_path}:{lineno}: unknown device {device!r}")
            if split not in SPLIT_NAMES:
                raise DataError(f"{manifest_path}:{lineno}: unknown split {split!r}")
            entries.append(ManifestEntry(path, label, device, split))
    if not entries:
        raise DataError(f"{manifest_path}: manifest has no rows")

    classes = sorted({e.scene_label for e in entries})
    label_to_idx = {c: i for i, c in enumerate(classes)}

    buckets: dict[tuple[str, str], tuple[list, list]] = {
        (dom, split): ([], []) for dom in ("source", "target") for split in SPLIT_NAMES
    }
    shape = None
    for e in entries:
        arr = read_feature_array(base / e.path)
        if arr.ndim != 3 or arr.shape[0] != 1:
            raise DataError(f"{base / e.path}: feature file must be [1, time, mel], got {arr.shape}")
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise DataError(f"{base / e.path}: inconsistent feature shape {arr.shape} vs {shape}")
        dom = "source" if e.is_source else "target"
        feats, labels = buckets[(dom, e.split)]
        feats.append(arr)
        labels.append(label_to_idx[e.scene_label])

    def build(dom: str) -> DomainSplits:
        made = {}
        for split in SPLIT_NAMES:
            feats, labels = buckets[(dom, split)]
            if feats:
                made[split] = LabeledSplit(np.stack(feats), np.asarray(labels))
            else:  # splits may be empty; consumers validate at use time
                made[split] = LabeledSplit(np.zeros((0, *shape)), np.zeros(0, dtype=np.int64))
        return DomainSplits(**made)

    _, t, m = shape
    return AdaptationDataset(classes, t, m, build("source"), build("target"))


def read_feature_file(path) -> FeatureTensor:
    """Read one rank-3 UDAW feature file as a single-sample FeatureTensor."""
    arr = read_feature_array(path)
    if arr.ndim != 3:
        raise DataError(f"{path}: feature file must be rank 3, got rank {arr.ndim}")
    return FeatureTensor(arr[None, ...])
