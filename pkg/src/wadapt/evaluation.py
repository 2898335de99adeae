"""Metrics and reports: per-domain accuracies, normalized confusion matrices,
and the adapted-vs-non-adapted comparison table."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nets
from .data import LabeledSplit
from .errors import InputError
from .optim import RMSPROP_DECAY, RMSPROP_EPS
from .types import FeatureTensor

SCHEMA_VERSION = 1
MODEL_KEYS = ("non_adapted", "adapted_wgan", "adapted_gan")
DOMAIN_KEYS = ("source", "target")


@dataclass
class SplitEval:
    micro_accuracy: float
    macro_accuracy: float
    confusion_normalized: np.ndarray  # K x K, rows sum to 1 for supported classes
    support: np.ndarray  # samples per true class
    unsupported_classes: list[int]

    def as_dict(self) -> dict:
        return {
            "micro_accuracy": self.micro_accuracy,
            "macro_accuracy": self.macro_accuracy,
            "confusion_normalized": self.confusion_normalized.tolist(),
            "support": self.support.tolist(),
            "unsupported_classes": list(self.unsupported_classes),
        }


def predict_classes(extractor: nets.Network, classifier: nets.Network,
                    features: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode argmax predictions, ties toward the lowest class index."""
    preds = []
    for start in range(0, features.shape[0], batch_size):
        x = FeatureTensor(features[start : start + batch_size])
        z = nets.forward_extractor(extractor.spec, extractor.params, x, mode="eval")
        posterior = nets.forward_classifier(classifier.spec, classifier.params, z)
        preds.append(posterior.predictions())
    return np.concatenate(preds)


def latents_of(extractor: nets.Network, features: np.ndarray,
               batch_size: int = 256) -> np.ndarray:
    """Eval-mode latent representations for a whole feature array."""
    out = []
    for start in range(0, features.shape[0], batch_size):
        x = FeatureTensor(features[start : start + batch_size])
        out.append(nets.forward_extractor(extractor.spec, extractor.params, x, mode="eval").data)
    return np.concatenate(out)


def evaluate(extractor: nets.Network, classifier: nets.Network,
             split: LabeledSplit, batch_size: int = 256) -> SplitEval:
    """Accuracy and normalized confusion of a labeled split.

    Confusion row i is the distribution of predictions for true class i;
    rows with zero support are left as zeros and flagged, not normalized.
    Macro accuracy averages the diagonal over supported classes only.
    """
    if len(split) == 0:
        raise InputError("evaluate requires a non-empty split")
    k = classifier.spec.num_classes
    preds = predict_classes(extractor, classifier, split.features, batch_size)
    counts = np.zeros((k, k), dtype=np.int64)
    for true, pred in zip(split.labels, preds):
        counts[true, pred] += 1
    support = counts.sum(axis=1)
    confusion = np.zeros((k, k))
    supported = support > 0
    confusion[supported] = counts[supported] / support[supported, None]
    micro = float(np.trace(counts) / len(split))
    macro = float(confusion.diagonal()[supported].mean())
    return SplitEval(micro, macro, confusion, support,
                     [int(i) for i in np.where(~supported)[0]])


@dataclass
class EvalReport:
    """Serializable evaluation report covering every evaluated model/domain
    pair, the divergence estimates and the effective configuration."""

    seed: int
    models: dict = field(default_factory=dict)  # model -> domain -> SplitEval dict
    divergence: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    optimizer: dict = field(
        default_factory=lambda: {"rmsprop_decay": RMSPROP_DECAY, "rmsprop_epsilon": RMSPROP_EPS}
    )
    schema_version: int = SCHEMA_VERSION

    def add_result(self, model: str, domain: str, result: SplitEval):
        self.models.setdefault(model, {})[domain] = result.as_dict()

    def as_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "models": self.models,
            "divergence": self.divergence,
            "config": self.config,
            "optimizer": self.optimizer,
        }

    def to_json(self) -> str:
        """Canonical serialization: byte-identical for identical content."""
        return json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        d = json.loads(text)
        return EvalReport(seed=d["seed"], models=d["models"], divergence=d["divergence"],
                          config=d["config"], optimizer=d["optimizer"],
                          schema_version=d["schema_version"])

    def accuracy_summary(self) -> dict:
        out = {}
        for model, domains in self.models.items():
            out[model] = {dom: res["micro_accuracy"] for dom, res in domains.items()}
        return out


def save_confusion_csv(confusion, path) -> None:
    arr = np.asarray(confusion, dtype=np.float64)
    with open(path, "w") as fh:
        for row in arr:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def comparison_table(summary: dict) -> tuple[str, dict]:
    """Render accuracy rows per adapted method against the non-adapted model.

    ``summary`` maps model name -> {"source": acc, "target": acc}; requires a
    "non_adapted" entry and renders one row per adapted model (plus a lone
    non-adapted row when nothing else is present).
    """
    if "non_adapted" not in summary:
        raise InputError("comparison table requires a non_adapted entry")
    non = summary["non_adapted"]
    adapted = {k: v for k, v in summary.items() if k != "non_adapted"}

    def fmt(v):
        return f"{v:.2f}" if v is not None else "  — "

    header = (f"{'method':<14} {'D_S non':>8} {'D_T non':>8} "
              f"{'D_S adapt':>9} {'D_T adapt':>9} {'dS delta':>9} {'dT delta':>9}")
    lines = [header, "-" * len(header)]
    rows = {}
    items = adapted.items() if adapted else [("non_adapted", None)]
    for name, accs in items:
        ds_a = accs.get("source") if accs else None
        dt_a = accs.get("target") if accs else None
        d_ds = None if ds_a is None else ds_a - non["source"]
        d_dt = None if dt_a is None else dt_a - non["target"]
        rows[name] = {
            "source_non_adapted": non["source"],
            "target_non_adapted": non["target"],
            "source_adapted": ds_a,
            "target_adapted": dt_a,
            "source_delta": d_ds,
            "target_delta": d_dt,
        }
        delta_s = f"{d_ds:+.2f}" if d_ds is not None else "  — "
        delta_t = f"{d_dt:+.2f}" if d_dt is not None else "  — "
        lines.append(f"{name:<14} {fmt(non['source']):>8} {fmt(non['target']):>8} "
                     f"{fmt(ds_a):>9} {fmt(dt_a):>9} {delta_s:>9} {delta_t:>9}")
    return "\n".join(lines), rows
