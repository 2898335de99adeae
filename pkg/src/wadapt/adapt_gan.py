"""GAN-loss adaptation baseline: sigmoid-output domain discriminator trained
with the binary cross-entropy objective, non-saturating generator loss, no
weight clipping. Shares the harness (and therefore the batch sequences and
stopping rule) with the Wasserstein arm; the source-preservation
cross-entropy term is kept identical for a controlled comparison."""

from __future__ import annotations

from . import autodiff as ad
from . import nets
from .adapt_common import ArmHooks, run_adversarial
from .data import LabeledSplit, UnlabeledSplit
from .errors import InputError
from .source import cross_entropy_graph
from .types import AdaptConfig, FeatureTensor, LabelVector

SIGMOID_CLAMP = 1e-12


def _log_sigmoid(scores: ad.Tensor) -> ad.Tensor:
    return ad.log(ad.clamp(ad.sigmoid(scores), lo=SIGMOID_CLAMP, hi=1.0 - SIGMOID_CLAMP))


def _log_one_minus_sigmoid(scores: ad.Tensor) -> ad.Tensor:
    return ad.log(ad.clamp(1.0 - ad.sigmoid(scores), lo=SIGMOID_CLAMP, hi=1.0 - SIGMOID_CLAMP))


def discriminator_loss_graph(critic_spec, hd_bound, zs: ad.Tensor, zt: ad.Tensor) -> ad.Tensor:
    """Negated GAN objective: -E[log sig(h_d(z_S))] - E[log(1 - sig(h_d(z_T)))]."""
    score_s = nets.critic_graph(critic_spec, hd_bound, zs)
    score_t = nets.critic_graph(critic_spec, hd_bound, zt)
    return -(ad.mean_(_log_sigmoid(score_s)) + ad.mean_(_log_one_minus_sigmoid(score_t)))


def generator_loss_graph(mt_spec, mt_bound, xt, xs, ys, critic: nets.Network,
                         h_star: nets.Network, bn_sink=None, mode="train"):
    """Non-saturating generator objective plus the source-preservation term."""
    zt = nets.extractor_graph(mt_spec, mt_bound, ad.const(xt), mode, bn_sink)
    scores = nets.critic_graph(critic.spec, nets.bind(critic.params), zt)
    target_term = -ad.mean_(_log_sigmoid(scores))
    zs = nets.extractor_graph(mt_spec, mt_bound, ad.const(xs), mode, bn_sink)
    posterior = nets.classifier_graph(h_star.spec, nets.bind(h_star.params), zs)
    ce = cross_entropy_graph(posterior, ys, reduction="mean")
    loss = target_term + ce
    return loss, {"target_term": target_term.item(), "source_ce": ce.item()}


def _hooks() -> ArmHooks:
    return ArmHooks(
        name="gan",
        clip_critic=False,
        critic_loss_graph=discriminator_loss_graph,
        generator_loss_graph=generator_loss_graph,
    )


def gan_discriminator_loss(critic: nets.Network, ms: nets.Network, mt: nets.Network,
                           xs: FeatureTensor, xt: FeatureTensor) -> float:
    if xs.batch != xt.batch:
        raise InputError("discriminator loss requires equal batch sizes")
    zs = nets.forward_extractor(ms.spec, ms.params, xs, mode="eval")
    zt = nets.forward_extractor(mt.spec, mt.params, xt, mode="eval")
    loss = discriminator_loss_graph(critic.spec, nets.bind(critic.params),
                                    ad.const(zs.data), ad.const(zt.data))
    return loss.item()


def gan_generator_loss(critic: nets.Network, mt: nets.Network, h_star: nets.Network,
                       xt: FeatureTensor, labeled_src: tuple[FeatureTensor, LabelVector]) -> float:
    xs, ys = labeled_src
    if xs.batch != xt.batch:
        raise InputError("generator loss requires equal batch sizes")
    zt = nets.forward_extractor(mt.spec, mt.params, xt, mode="eval")
    scores = nets.critic_graph(critic.spec, nets.bind(critic.params), ad.const(zt.data))
    target_term = -ad.mean_(_log_sigmoid(scores))
    zs = nets.forward_extractor(mt.spec, mt.params, xs, mode="eval")
    posterior = nets.classifier_graph(h_star.spec, nets.bind(h_star.params), ad.const(zs.data))
    ce = cross_entropy_graph(posterior, ys.data, reduction="mean")
    return (target_term + ce).item()


def adapt_gan(ms: nets.Network, h_star: nets.Network, source_split: LabeledSplit,
              target_split: UnlabeledSplit, config: AdaptConfig,
              critic_spec: nets.CriticSpec | None = None,
              mt_bn_mode: str = "eval"):
    """GAN-baseline counterpart of ``adapt_wgan.adapt`` (same harness contract)."""
    return run_adversarial(_hooks(), ms, h_star, source_split, target_split,
                           config, critic_spec, mt_bn_mode)
