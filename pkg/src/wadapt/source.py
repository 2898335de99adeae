"""Stage 1: supervised training of the feature extractor and label classifier
on labeled source data, minimizing categorical cross-entropy over one-hot
targets. Model selection keeps the epoch with the best validation mean
accuracy (ties broken toward the earlier epoch)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nets
from .data import AdaptationDataset
from .errors import ConfigError, InputError
from .evaluation import evaluate
from .optim import (
    RMSPROP_DECAY,
    RMSPROP_EPS,
    OptimizerState,
    rmsprop_step,
    value_and_gradients_multi,
)
from .seeding import substream
from .types import FeatureTensor, LabelVector, onehot_batch

LOG_CLAMP = 1e-12


@dataclass
class SourceConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 12
    decay: float = RMSPROP_DECAY
    epsilon: float = RMSPROP_EPS
    extractor: str = "toy"  # key into nets.EXTRACTOR_SPECS
    classifier_hidden: tuple[int, int] = (256, 256)
    seed: int = 0

    def validate(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        if self.extractor not in nets.EXTRACTOR_SPECS:
            raise ConfigError(f"unknown extractor {self.extractor!r}; "
                              f"options: {sorted(nets.EXTRACTOR_SPECS)}")


def cross_entropy_graph(posterior: ad.Tensor, onehot: np.ndarray, reduction: str = "mean") -> ad.Tensor:
    """-sum(y * log(clamped posterior)) summed or averaged over the batch."""
    ce = -ad.sum_(ad.const(onehot) * ad.log(ad.clamp(posterior, lo=LOG_CLAMP)), axis=1)
    if reduction == "mean":
        return ad.mean_(ce)
    if reduction == "sum":
        return ad.sum_(ce)
    raise ConfigError(f"unknown reduction {reduction!r}")


def label_loss_graph(classifier_spec, classifier_bound, extractor_spec, extractor_bound,
                     x: np.ndarray, y_onehot: np.ndarray, mode: str = "train",
                     reduction: str = "mean", bn_sink=None) -> ad.Tensor:
    z = nets.extractor_graph(extractor_spec, extractor_bound, ad.const(x), mode, bn_sink)
    posterior = nets.classifier_graph(classifier_spec, classifier_bound, z)
    return cross_entropy_graph(posterior, y_onehot, reduction)


def label_loss(classifier: nets.Network, extractor: nets.Network,
               batch: tuple[FeatureTensor, LabelVector], reduction: str = "sum") -> float:
    """Cross-entropy of a labeled batch under the current models (eval mode)."""
    x, y = batch
    if x.batch == 0:
        raise InputError("label_loss requires a non-empty batch")
    if x.batch != y.data.shape[0]:
        raise InputError("features/labels batch size mismatch")
    loss = label_loss_graph(classifier.spec, nets.bind(classifier.params),
                            extractor.spec, nets.bind(extractor.params),
                            x.data, y.data, mode="eval", reduction=reduction)
    return loss.item()


def _epoch_batches(n: int, batch_size: int, rng) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def train_source(dataset: AdaptationDataset, config: SourceConfig,
                 extractor_spec: nets.FeatureExtractorSpec | None = None,
                 classifier_spec: nets.ClassifierSpec | None = None):
    """Returns (classifier network, extractor network, history).

    The returned parameters are those of the best-validation-accuracy epoch.
    History records one dict per epoch: epoch, loss_mean, loss_sum, accuracy.
    """
    config.validate()
    train = dataset.source.train
    valid = dataset.source.valid
    if len(train) == 0 or len(valid) == 0:
        raise InputError("source train and valid splits must be non-empty")
    k = dataset.num_classes
    present = np.unique(train.labels)
    if len(present) != k:
        missing = sorted(set(range(k)) - set(present.tolist()))
        raise ConfigError(f"classes absent from training split: {missing}")

    if extractor_spec is None:
        extractor_spec = nets.EXTRACTOR_SPECS[config.extractor]()
    if classifier_spec is None:
        classifier_spec = nets.ClassifierSpec((*config.classifier_hidden, k))
    latent_dim = extractor_spec.latent_dim(dataset.time_frames, dataset.mel_bands)

    init_rng = substream(config.seed, "source.init")
    extractor = nets.extractor_network(extractor_spec, init_rng)
    classifier = nets.classifier_network(classifier_spec, latent_dim, init_rng)
    batch_rng = substream(config.seed, "source.batch")

    opt_m = OptimizerState.for_params(extractor.params, config.decay, config.epsilon)
    opt_h = OptimizerState.for_params(classifier.params, config.decay, config.epsilon)

    history = []
    best = None  # (accuracy, epoch, extractor snapshot, classifier snapshot)
    for epoch in range(1, config.epochs + 1):
        loss_sum = 0.0
        for idx in _epoch_batches(len(train), config.batch_size, batch_rng):
            x = train.features[idx]
            y = onehot_batch(train.labels[idx], k).data
            sink: list = []

            def loss_fn(bounds):
                return label_loss_graph(classifier_spec, bounds["classifier"],
                                        extractor_spec, bounds["extractor"],
                                        x, y, mode="train", reduction="mean",
                                        bn_sink=sink)

            value, grads = value_and_gradients_multi(
                loss_fn, {"extractor": extractor.params, "classifier": classifier.params})
            rmsprop_step(extractor.params, grads["extractor"], opt_m, config.learning_rate)
            rmsprop_step(classifier.params, grads["classifier"], opt_h, config.learning_rate)
            nets.apply_bn_updates(extractor.params, sink)
            loss_sum += value * len(idx)

        result = evaluate(extractor, classifier, valid)
        record = {
            "epoch": epoch,
            "loss_mean": loss_sum / len(train),
            "loss_sum": loss_sum,
            "accuracy": result.micro_accuracy,
        }
        history.append(record)
        if best is None or result.micro_accuracy > best[0]:
            best = (result.micro_accuracy, epoch, extractor.clone(), classifier.clone())

    _, best_epoch, best_extractor, best_classifier = best
    summary = {"best_epoch": best_epoch, "best_accuracy": best[0]}
    return best_classifier, best_extractor, {"epochs": history, **summary}
