"""Network definitions: feature extractor M, label classifier h, domain critic h_d.

All three are expressed as (spec, ParameterSet) pairs. The graph builders
(`*_graph`) operate on bound autodiff tensors so the same code serves
training, gradient checks and plain inference; the `forward_*` wrappers take
raw ParameterSets and return the validated domain types.

Convolutions and max pooling both use symmetric zero padding of (k-1)//2
("same" in the spatial sense before striding); pooling pads with -inf so the
padding never wins a max. Layer order is conv -> batch norm -> ReLU -> pool.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, InputError
from .types import (ClassPosterior, CriticScore, FeatureTensor, LatentRep,
                    ParameterSet, copy_parameters)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class ConvLayerSpec:
    kernel: int
    out_channels: int
    stride: tuple[int, int]
    batch_norm: bool = False
    pool: tuple[int, tuple[int, int]] | None = None  # (kernel, stride)


@dataclass(frozen=True)
class FeatureExtractorSpec:
    layers: tuple[ConvLayerSpec, ...]
    in_channels: int = 1

    def feature_shape(self, time_frames: int, mel_bands: int) -> tuple[int, int, int]:
        """(channels, height, width) of the conv stack output for one input shape."""
        c, h, w = self.in_channels, time_frames, mel_bands
        for layer in self.layers:
            p = (layer.kernel - 1) // 2
            h = (h + 2 * p - layer.kernel) // layer.stride[0] + 1
            w = (w + 2 * p - layer.kernel) // layer.stride[1] + 1
            if h <= 0 or w <= 0:
                raise ConfigError("input too small for extractor spec")
            c = layer.out_channels
            if layer.pool is not None:
                pk, (psh, psw) = layer.pool
                pp = (pk - 1) // 2
                h = (h + 2 * pp - pk) // psh + 1
                w = (w + 2 * pp - pk) // psw + 1
                if h <= 0 or w <= 0:
                    raise ConfigError("input too small for extractor spec")
        return c, h, w

    def latent_dim(self, time_frames: int, mel_bands: int) -> int:
        c, h, w = self.feature_shape(time_frames, mel_bands)
        return c * h * w


@dataclass(frozen=True)
class ClassifierSpec:
    """Three feed-forward layers, ReLU between, softmax at the end."""

    layer_widths: tuple[int, int, int]

    def __post_init__(self):
        if len(self.layer_widths) != 3:
            raise ConfigError("classifier must have exactly three feed-forward layers")

    @property
    def num_classes(self) -> int:
        return self.layer_widths[-1]


@dataclass(frozen=True)
class CriticSpec:
    """Feed-forward critic with a single linear (unbounded) scalar output."""

    layer_widths: tuple[int, ...] = (128, 64, 1)

    def __post_init__(self):
        if not self.layer_widths or self.layer_widths[-1] != 1:
            raise ConfigError("critic must end in a single linear unit")


def full_size_extractor_spec() -> FeatureExtractorSpec:
    """The five-layer CNN: widths {11,5,3,3,3}, channels {48,128,192,192,128},
    stride (2,3) on the first two layers, batch norm + 3x3 max pool with
    strides (1,2)/(2,2)/(1,2) on layers 1, 2 and 5."""
    return FeatureExtractorSpec(
        layers=(
            ConvLayerSpec(11, 48, (2, 3), batch_norm=True, pool=(3, (1, 2))),
            ConvLayerSpec(5, 128, (2, 3), batch_norm=True, pool=(3, (2, 2))),
            ConvLayerSpec(3, 192, (1, 1)),
            ConvLayerSpec(3, 192, (1, 1)),
            ConvLayerSpec(3, 128, (1, 1), batch_norm=True, pool=(3, (1, 2))),
        )
    )


def toy_extractor_spec() -> FeatureExtractorSpec:
    """Two-layer desk-scale extractor (8 and 16 channels)."""
    return FeatureExtractorSpec(
        layers=(
            ConvLayerSpec(3, 8, (2, 2), batch_norm=True, pool=(3, (2, 2))),
            ConvLayerSpec(3, 16, (2, 2), batch_norm=True, pool=(3, (2, 2))),
        )
    )


EXTRACTOR_SPECS = {"toy": toy_extractor_spec, "full": full_size_extractor_spec}


# ---------------------------------------------------------------------------
# initialization

def _uniform_init(rng, fan_in, fan_out, shape):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def extractor_param_names(spec: FeatureExtractorSpec) -> list[str]:
    names = []
    for i, layer in enumerate(spec.layers):
        names += [f"conv{i}.weight", f"conv{i}.bias"]
        if layer.batch_norm:
            names += [f"bn{i}.gamma", f"bn{i}.beta", f"bn{i}.running_mean", f"bn{i}.running_var"]
    return names


def init_extractor(spec: FeatureExtractorSpec, rng: np.random.Generator) -> ParameterSet:
    params = ParameterSet()
    cin = spec.in_channels
    for i, layer in enumerate(spec.layers):
        k, cout = layer.kernel, layer.out_channels
        params.add(f"conv{i}.weight", _uniform_init(rng, cin * k * k, cout * k * k, (cout, cin, k, k)))
        params.add(f"conv{i}.bias", np.zeros(cout))
        if layer.batch_norm:
            params.add(f"bn{i}.gamma", np.ones(cout))
            params.add(f"bn{i}.beta", np.zeros(cout))
            params.add(f"bn{i}.running_mean", np.zeros(cout), trainable=False)
            params.add(f"bn{i}.running_var", np.ones(cout), trainable=False)
        cin = cout
    return params


def _init_dense_stack(widths, in_dim, rng) -> ParameterSet:
    params = ParameterSet()
    fan_in = in_dim
    for i, width in enumerate(widths):
        params.add(f"fc{i}.weight", _uniform_init(rng, fan_in, width, (fan_in, width)))
        params.add(f"fc{i}.bias", np.zeros(width))
        fan_in = width
    return params


def init_classifier(spec: ClassifierSpec, latent_dim: int, rng) -> ParameterSet:
    return _init_dense_stack(spec.layer_widths, latent_dim, rng)


def init_critic(spec: CriticSpec, latent_dim: int, rng) -> ParameterSet:
    return _init_dense_stack(spec.layer_widths, latent_dim, rng)


# ---------------------------------------------------------------------------
# graph builders


def bind(params: ParameterSet, with_grads: bool = False) -> dict[str, ad.Tensor]:
    """Wrap every entry as an autodiff leaf; trainable entries get gradients
    only when ``with_grads`` is set."""
    return {
        name: ad.Tensor(p.data, requires_grad=with_grads and p.trainable)
        for name, p in params.items()
    }


def _check_mode(mode: str):
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")


def batchnorm2d(x, gamma, beta, running_mean, running_var, mode, sink=None, name=""):
    """Channel batch norm over [N,C,H,W].

    Train mode normalizes by batch statistics and, when ``sink`` is given,
    records them as (name, mean, var) for the caller to fold into the running
    stats after the optimizer step; the loss stays a pure function of its
    inputs. Eval mode uses the frozen running stats.
    """
    if mode == "train":
        out, mu, var = ad.batchnorm2d_train(x, gamma, beta, BN_EPS)
        if sink is not None:
            sink.append((name, mu, var))
        return out
    return ad.batchnorm2d_eval(x, gamma, beta, running_mean.data, running_var.data, BN_EPS)


def apply_bn_updates(params: ParameterSet, sink, momentum: float = BN_MOMENTUM):
    """Fold recorded batch statistics into the frozen running-stat entries."""
    for name, mean, var in sink:
        rm = params[f"{name}.running_mean"].data
        rv = params[f"{name}.running_var"].data
        rm *= 1.0 - momentum
        rm += momentum * mean
        rv *= 1.0 - momentum
        rv += momentum * var


def extractor_graph(spec: FeatureExtractorSpec, bound: Mapping[str, ad.Tensor],
                    x: ad.Tensor, mode: str, bn_sink=None) -> ad.Tensor:
    _check_mode(mode)
    h = x
    for i, layer in enumerate(spec.layers):
        p = (layer.kernel - 1) // 2
        h = ad.conv2d(h, bound[f"conv{i}.weight"], bound[f"conv{i}.bias"], layer.stride, (p, p))
        if layer.batch_norm:
            h = batchnorm2d(h, bound[f"bn{i}.gamma"], bound[f"bn{i}.beta"],
                            bound[f"bn{i}.running_mean"], bound[f"bn{i}.running_var"],
                            mode, sink=bn_sink, name=f"bn{i}")
        h = ad.relu(h)
        if layer.pool is not None:
            pk, pstride = layer.pool
            pp = (pk - 1) // 2
            h = ad.maxpool2d(h, pk, pstride, (pp, pp))
    n = h.shape[0]
    return ad.reshape(h, (n, -1))


def dense_stack_graph(widths, bound: Mapping[str, ad.Tensor], z: ad.Tensor) -> ad.Tensor:
    h = z
    last = len(widths) - 1
    for i in range(len(widths)):
        h = ad.matmul(h, bound[f"fc{i}.weight"]) + bound[f"fc{i}.bias"]
        if i < last:
            h = ad.relu(h)
    return h


def classifier_graph(spec: ClassifierSpec, bound, z: ad.Tensor) -> ad.Tensor:
    return ad.softmax(dense_stack_graph(spec.layer_widths, bound, z))


def critic_graph(spec: CriticSpec, bound, z: ad.Tensor) -> ad.Tensor:
    scores = dense_stack_graph(spec.layer_widths, bound, z)
    return ad.reshape(scores, (scores.shape[0],))


# ---------------------------------------------------------------------------
# public forward passes


def forward_extractor(spec: FeatureExtractorSpec, params: ParameterSet,
                      x: FeatureTensor, mode: str = "eval") -> LatentRep:
    _check_mode(mode)
    if params.names() != extractor_param_names(spec):
        raise ConfigError("parameter set does not match extractor spec")
    z = extractor_graph(spec, bind(params), ad.const(x.data), mode)
    return LatentRep(z.data)


def forward_classifier(spec: ClassifierSpec, params: ParameterSet, z: LatentRep) -> ClassPosterior:
    if not np.isfinite(z.data).all():
        raise InputError("latent representation contains non-finite entries")
    post = classifier_graph(spec, bind(params), ad.const(z.data))
    return ClassPosterior(post.data)


def forward_critic(spec: CriticSpec, params: ParameterSet, z: LatentRep) -> CriticScore:
    if not np.isfinite(z.data).all():
        raise InputError("latent representation contains non-finite entries")
    scores = critic_graph(spec, bind(params), ad.const(z.data))
    return CriticScore(scores.data)


# ---------------------------------------------------------------------------
# bundles used by training loops, checkpoints and the CLI


@dataclass
class Network:
    kind: str  # "extractor" | "classifier" | "critic"
    spec: FeatureExtractorSpec | ClassifierSpec | CriticSpec
    params: ParameterSet
    meta: dict = field(default_factory=dict)

    def clone(self) -> "Network":
        return Network(self.kind, self.spec, copy_parameters(self.params), dict(self.meta))


def extractor_network(spec: FeatureExtractorSpec, rng) -> Network:
    return Network("extractor", spec, init_extractor(spec, rng))


def classifier_network(spec: ClassifierSpec, latent_dim: int, rng) -> Network:
    return Network("classifier", spec, init_classifier(spec, latent_dim, rng),
                   meta={"latent_dim": latent_dim})


def critic_network(spec: CriticSpec, latent_dim: int, rng) -> Network:
    return Network("critic", spec, init_critic(spec, latent_dim, rng),
                   meta={"latent_dim": latent_dim})
