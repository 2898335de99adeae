"""Gradient computation contract, RMSProp update and weight clipping.

The gradient mechanism is the reverse-mode engine in ``autodiff``; the
finite-difference agreement asserted by the test suite is the contract,
not the mechanism.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, InputError, NumericError
from .nets import bind
from .types import ParameterSet

RMSPROP_DECAY = 0.99
RMSPROP_EPS = 1e-8


class GradientSet:
    """Ordered mapping name -> gradient array, keyed exactly by the trainable
    entries of the paired ParameterSet."""

    def __init__(self, entries: dict[str, np.ndarray]):
        self._entries = dict(entries)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._entries[name]

    def __iter__(self):
        return iter(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    @staticmethod
    def collect(bound: Mapping[str, ad.Tensor], params: ParameterSet) -> "GradientSet":
        out = {}
        for name in params.trainable_names():
            g = bound[name].grad
            out[name] = np.zeros_like(params[name].data) if g is None else g
        return GradientSet(out)


def gradient_of(loss_fn: Callable[[Mapping[str, ad.Tensor]], ad.Tensor],
                params: ParameterSet) -> GradientSet:
    """Gradient of a scalar loss with respect to ``params``.

    ``loss_fn`` receives the bound tensors of ``params`` and returns the
    scalar loss node; anything else it closes over is held constant.
    """
    value, grads = value_and_gradient(loss_fn, params)
    return grads


def value_and_gradient(loss_fn, params: ParameterSet) -> tuple[float, GradientSet]:
    bound = bind(params, with_grads=True)
    loss = loss_fn(bound)
    if loss.data.size != 1:
        raise ConfigError("loss function must return a scalar")
    if not np.isfinite(loss.data):
        raise NumericError("loss evaluated to a non-finite value")
    loss.backward()
    return float(loss.data), GradientSet.collect(bound, params)


def value_and_gradients_multi(loss_fn, params_map: Mapping[str, ParameterSet]):
    """One backward pass through a loss of several parameter sets.

    Returns (loss value, {key: GradientSet}). Used by the source stage where
    extractor and classifier are optimized jointly.
    """
    bounds = {key: bind(ps, with_grads=True) for key, ps in params_map.items()}
    loss = loss_fn(bounds)
    if not np.isfinite(loss.data):
        raise NumericError("loss evaluated to a non-finite value")
    loss.backward()
    return float(loss.data), {key: GradientSet.collect(bounds[key], ps)
                              for key, ps in params_map.items()}


@dataclass
class OptimizerState:
    """Per-parameter running mean-square accumulators for RMSProp."""

    accumulators: dict[str, np.ndarray] = field(default_factory=dict)
    decay: float = RMSPROP_DECAY
    epsilon: float = RMSPROP_EPS

    @staticmethod
    def for_params(params: ParameterSet, decay: float = RMSPROP_DECAY,
                   epsilon: float = RMSPROP_EPS) -> "OptimizerState":
        acc = {n: np.zeros_like(params[n].data) for n in params.trainable_names()}
        return OptimizerState(acc, decay, epsilon)


def rmsprop_step(params: ParameterSet, grads: GradientSet, state: OptimizerState,
                 lr: float) -> None:
    """In-place update: acc <- decay*acc + (1-decay)*g^2;
    param <- param - lr * g / sqrt(acc + eps). Frozen entries untouched."""
    for name in grads.names():
        if name not in params:
            raise ConfigError(f"gradient entry {name!r} has no matching parameter")
        p = params[name]
        if not p.trainable:
            continue
        g = grads[name]
        if g.shape != p.data.shape:
            raise ConfigError(f"gradient shape mismatch for {name!r}")
        acc = state.accumulators[name]
        acc *= state.decay
        acc += (1.0 - state.decay) * g * g
        p.data -= lr * g / np.sqrt(acc + state.epsilon)


def clip(x, c: float):
    """Elementwise max(min(x, c), -c)."""
    if c <= 0:
        raise InputError(f"clip bound must be positive, got {c}")
    return np.minimum(np.maximum(np.asarray(x, dtype=np.float64), -c), c)


def clip_parameters(params: ParameterSet, c: float) -> ParameterSet:
    """Clip every trainable entry into [-c, c], in place."""
    if c <= 0:
        raise InputError(f"clip bound must be positive, got {c}")
    for name in params.trainable_names():
        np.clip(params[name].data, -c, c, out=params[name].data)
    return params


def max_abs_trainable(params: ParameterSet) -> float:
    vals = [np.abs(params[n].data).max() for n in params.trainable_names()
            if params[n].data.size]
    return float(max(vals)) if vals else 0.0
