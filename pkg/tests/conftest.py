import numpy as np
import pytest

from wadapt import nets
from wadapt.data import DomainSplits, LabeledSplit, AdaptationDataset


def finite_difference(loss_fn, params, step=1e-3):
    """Central-difference gradients of a pure scalar function of ``params``.

    ``loss_fn`` takes the (mutated-in-place) ParameterSet and returns a float.
    Returns {name: gradient array} over trainable entries.
    """
    grads = {}
    for name in params.trainable_names():
        arr = params[name].data
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            orig = arr[ix]
            arr[ix] = orig + step
            f_plus = loss_fn(params)
            arr[ix] = orig - step
            f_minus = loss_fn(params)
            arr[ix] = orig
            g[ix] = (f_plus - f_minus) / (2.0 * step)
        grads[name] = g
    return grads


def max_relative_error(analytic, numeric) -> float:
    """Worst elementwise |a - n| / max(|a|, |n|, 1e-6) over matching entries."""
    worst = 0.0
    for name, num in numeric.items():
        ana = analytic[name]
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-6)
        worst = max(worst, float((np.abs(ana - num) / denom).max()))
    return worst


def tiny_extractor_spec() -> nets.FeatureExtractorSpec:
    """Very small conv stack covering conv, batch norm and pooling (< 200
    parameters); used for gradient checks."""
    return nets.FeatureExtractorSpec(
        layers=(
            nets.ConvLayerSpec(3, 2, (2, 2), batch_norm=True, pool=(3, (2, 2))),
            nets.ConvLayerSpec(3, 3, (2, 2)),
        )
    )


def make_labeled_split(rng, n, num_classes, time_frames=12, mel_bands=8, scale=1.0):
    feats = scale * rng.normal(size=(n, 1, time_frames, mel_bands))
    labels = rng.integers(0, num_classes, size=n)
    # guarantee every class appears
    labels[:num_classes] = np.arange(num_classes)
    return LabeledSplit(feats, labels)


def make_blob_dataset(seed=0, num_classes=3, per_split=(30, 12, 12),
                      time_frames=12, mel_bands=8, separation=2.0,
                      target_offset=0.0) -> AdaptationDataset:
    """Linearly separable blobs: class k = constant pattern + small noise.

    ``target_offset`` shifts the target domain to fake a device change.
    """
    rng = np.random.default_rng(seed)
    patterns = rng.normal(size=(num_classes, time_frames, mel_bands))
    patterns *= separation / np.abs(patterns).max()

    def split(n, offset):
        feats, labels = [], []
        for k in range(num_classes):
            x = patterns[k] + 0.1 * rng.normal(size=(n, time_frames, mel_bands)) + offset
            feats.append(x)
            labels.append(np.full(n, k))
        return LabeledSplit(np.concatenate(feats)[:, None, :, :], np.concatenate(labels))

    def domain(offset):
        return DomainSplits(*(split(n, offset) for n in per_split))

    return AdaptationDataset([f"class_{k:02d}" for k in range(num_classes)],
                             time_frames, mel_bands, domain(0.0), domain(target_offset))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
