"""Shared two-player adaptation harness.

Both adversarial arms (Wasserstein critic and the GAN baseline) run the same
loop: per outer step, ``n_d`` critic updates on fresh source/target batches,
then one feature-extractor update on a fresh labeled source batch plus a
target batch. The arms differ only in their two losses and in whether critic
weights are clipped after each update. Batch draws and critic initialization
come from arm-independent substreams, so two arms with the same seed see
identical batch sequences.

An epoch is ``max(1, len(target)//batch_size)`` outer steps (one pass over
the target split in expectation). Training stops at ``max_epochs`` or when
the per-epoch mean of the generator's critic-score term saturates: with
window W, once the moving average over the last W epochs changes by less
than ``saturation_tol`` relative to the previous epoch's window.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import nets
from .data import LabeledSplit, UnlabeledSplit
from .errors import InputError, NumericError
from .evaluation import latents_of
from .optim import (
    OptimizerState,
    clip_parameters,
    max_abs_trainable,
    rmsprop_step,
    value_and_gradient,
)
from .seeding import substream
from .types import AdaptConfig, copy_parameters, onehot_batch


class BatchStream:
    """Endless batches of indices: each pass is a fresh permutation, the
    ragged tail joins the next pass (cycling shorter splits)."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        if n < 1:
            raise InputError("cannot stream batches from an empty split")
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._buffer = np.empty(0, dtype=np.int64)

    def next(self) -> np.ndarray:
        while self._buffer.size < self.batch_size:
            self._buffer = np.concatenate([self._buffer, self.rng.permutation(self.n)])
        out, self._buffer = self._buffer[: self.batch_size], self._buffer[self.batch_size :]
        return out


@dataclass
class ArmHooks:
    """What distinguishes one adversarial arm from the other."""

    name: str
    clip_critic: bool
    # (critic_spec, hd_bound, zs, zt) -> scalar loss tensor
    critic_loss_graph: Callable
    # (mt_spec, mt_bound, xt, xs, ys, critic, h_star, bn_sink) -> (loss, parts)
    generator_loss_graph: Callable


def run_adversarial(hooks: ArmHooks, ms: nets.Network, h_star: nets.Network,
                    source_split: LabeledSplit, target_split: UnlabeledSplit,
                    config: AdaptConfig,
                    critic_spec: nets.CriticSpec | None = None,
                    mt_bn_mode: str = "eval"):
    """Execute the adaptation loop; returns (adapted extractor, history)."""
    config.validate()
    if not isinstance(target_split, UnlabeledSplit):
        raise InputError("adaptation accepts only an unlabeled target split; "
                         "use LabeledSplit.unlabeled() to strip labels")
    if len(source_split) == 0 or len(target_split) == 0:
        raise InputError("source and target splits must be non-empty")

    k = h_star.spec.num_classes
    t, m = source_split.features.shape[2], source_split.features.shape[3]
    latent_dim = ms.spec.latent_dim(t, m)
    if critic_spec is None:
        critic_spec = nets.CriticSpec()

    mt_params = copy_parameters(ms.params)
    critic = nets.critic_network(critic_spec, latent_dim,
                                 substream(config.seed, "adapt.critic_init"))
    src_stream = BatchStream(len(source_split), config.batch_size,
                             substream(config.seed, "adapt.batch.source"))
    tgt_stream = BatchStream(len(target_split), config.batch_size,
                             substream(config.seed, "adapt.batch.target"))

    opt_d = OptimizerState.for_params(critic.params)
    opt_mt = OptimizerState.for_params(mt_params)

    steps_per_epoch = max(1, len(target_split) // config.batch_size)
    history = {
        "arm": hooks.name,
        "learning_rate": config.learning_rate,
        "clip_c": config.clip_c,
        "batch_size": config.batch_size,
        "n_d": config.n_d,
        "max_epochs": config.max_epochs,
        "saturation_window": config.saturation_window,
        "saturation_tol": config.saturation_tol,
        "seed": config.seed,
        "steps_per_epoch": steps_per_epoch,
        "epochs": [],
        "critic_updates": 0,
        "generator_updates": 0,
        "stop_reason": "max_epochs",
        "stopped_epoch": None,
    }

    def mt_latents(bound, x, sink=None):
        # Both extractors run with frozen batch-norm statistics by default: the
        # critic then scores exactly the distributions used at inference time,
        # and the adapted model's source behavior cannot drift through running
        # stats. Batch-statistics mode remains available via mt_bn_mode.
        return nets.extractor_graph(ms.spec, bound, ad.const(x), mt_bn_mode, sink)

    # M_S is frozen for the whole adaptation, so its source latents are fixed
    ms_source_latents = latents_of(ms, source_split.features)

    target_terms: list[float] = []
    try:
        for epoch in range(1, config.max_epochs + 1):
            critic_losses, gen_losses, ce_terms, tgt_terms = [], [], [], []
            for _ in range(steps_per_epoch):
                for _ in range(config.n_d):
                    zs = ms_source_latents[src_stream.next()]
                    xt = target_split.features[tgt_stream.next()]
                    zt = mt_latents(nets.bind(mt_params), xt).data

                    def critic_fn(hd_bound):
                        return hooks.critic_loss_graph(critic_spec, hd_bound,
                                                       ad.const(zs), ad.const(zt))

                    value, grads = value_and_gradient(critic_fn, critic.params)
                    rmsprop_step(critic.params, grads, opt_d, config.learning_rate)
                    if hooks.clip_critic:
                        clip_parameters(critic.params, config.clip_c)
                        peak = max_abs_trainable(critic.params)
                        if peak > config.clip_c:
                            raise AssertionError(
                                f"critic weights escaped the clip range: {peak} > {config.clip_c}")
                    critic_losses.append(value)
                    history["critic_updates"] += 1

                src_idx = src_stream.next()
                xs = source_split.features[src_idx]
                ys = onehot_batch(source_split.labels[src_idx], k).data
                xt = target_split.features[tgt_stream.next()]
                sink: list = []
                parts: dict = {}

                def gen_fn(mt_bound):
                    loss, p = hooks.generator_loss_graph(
                        ms.spec, mt_bound, xt, xs, ys, critic, h_star, sink,
                        mt_bn_mode)
                    parts.update(p)
                    return loss

                value, grads = value_and_gradient(gen_fn, mt_params)
                rmsprop_step(mt_params, grads, opt_mt, config.learning_rate)
                nets.apply_bn_updates(mt_params, sink)
                gen_losses.append(value)
                ce_terms.append(parts["source_ce"])
                tgt_terms.append(parts["target_term"])
                history["generator_updates"] += 1

            epoch_target_term = float(np.mean(tgt_terms))
            target_terms.append(epoch_target_term)
            history["epochs"].append({
                "epoch": epoch,
                "critic_loss": float(np.mean(critic_losses)),
                "generator_loss": float(np.mean(gen_losses)),
                "source_ce": float(np.mean(ce_terms)),
                "target_term": epoch_target_term,
            })

            w = config.saturation_window
            if len(target_terms) >= w + 1:
                ma_now = float(np.mean(target_terms[-w:]))
                ma_prev = float(np.mean(target_terms[-w - 1 : -1]))
                if abs(ma_now - ma_prev) < config.saturation_tol:
                    history["stop_reason"] = "saturation"
                    history["stopped_epoch"] = epoch
                    break
        else:
            history["stopped_epoch"] = config.max_epochs
    except NumericError as exc:
        raise NumericError(f"{hooks.name} adaptation hit a non-finite loss: {exc}",
                           history=history) from exc

    mt = nets.Network("extractor", ms.spec, mt_params, dict(ms.meta))
    mt.meta["adapted_by"] = hooks.name
    return mt, history
