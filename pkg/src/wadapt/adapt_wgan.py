"""Wasserstein adversarial adaptation with weight clipping.

Critic loss (minimized over critic weights):
    mean(h_d(M_S(x_S))) - mean(h_d(M_T(x_T)))
Generator loss (minimized over the adapted extractor M_T):
    mean(h_d(M_T(x_T))) + mean cross-entropy of source data through M_T under
    the frozen classifier, the source-preservation term that keeps the
    adapted model from deteriorating on the source domain.
"""

from __future__ import annotations

from . import autodiff as ad
from . import nets
from .adapt_common import ArmHooks, run_adversarial
from .data import LabeledSplit, UnlabeledSplit
from .errors import InputError
from .source import cross_entropy_graph
from .types import AdaptConfig, FeatureTensor, LabelVector


def critic_loss_graph(critic_spec, hd_bound, zs: ad.Tensor, zt: ad.Tensor) -> ad.Tensor:
    score_s = nets.critic_graph(critic_spec, hd_bound, zs)
    score_t = nets.critic_graph(critic_spec, hd_bound, zt)
    return ad.mean_(score_s) - ad.mean_(score_t)


def generator_loss_graph(mt_spec, mt_bound, xt, xs, ys, critic: nets.Network,
                         h_star: nets.Network, bn_sink=None, mode="train"):
    zt = nets.extractor_graph(mt_spec, mt_bound, ad.const(xt), mode, bn_sink)
    target_term = ad.mean_(nets.critic_graph(critic.spec, nets.bind(critic.params), zt))
    zs = nets.extractor_graph(mt_spec, mt_bound, ad.const(xs), mode, bn_sink)
    posterior = nets.classifier_graph(h_star.spec, nets.bind(h_star.params), zs)
    ce = cross_entropy_graph(posterior, ys, reduction="mean")
    loss = target_term + ce
    return loss, {"target_term": target_term.item(), "source_ce": ce.item()}


def _hooks() -> ArmHooks:
    return ArmHooks(
        name="wgan",
        clip_critic=True,
        critic_loss_graph=critic_loss_graph,
        generator_loss_graph=generator_loss_graph,
    )


def critic_loss(critic: nets.Network, ms: nets.Network, mt: nets.Network,
                xs: FeatureTensor, xt: FeatureTensor) -> float:
    """Critic objective on one source/target batch pair (eval-mode extractors)."""
    if xs.batch != xt.batch:
        raise InputError("critic loss requires equal source/target batch sizes")
    zs = nets.forward_extractor(ms.spec, ms.params, xs, mode="eval")
    zt = nets.forward_extractor(mt.spec, mt.params, xt, mode="eval")
    loss = critic_loss_graph(critic.spec, nets.bind(critic.params),
                             ad.const(zs.data), ad.const(zt.data))
    return loss.item()


def generator_loss(critic: nets.Network, mt: nets.Network, h_star: nets.Network,
                   xt: FeatureTensor, labeled_src: tuple[FeatureTensor, LabelVector]) -> float:
    """Generator objective: critic score on target plus source-preservation CE
    (eval-mode extractor; critic and classifier frozen)."""
    xs, ys = labeled_src
    if xs.batch != xt.batch:
        raise InputError("generator loss requires equal batch sizes")
    zt = nets.forward_extractor(mt.spec, mt.params, xt, mode="eval")
    target_term = ad.mean_(nets.critic_graph(critic.spec, nets.bind(critic.params),
                                             ad.const(zt.data)))
    zs = nets.forward_extractor(mt.spec, mt.params, xs, mode="eval")
    posterior = nets.classifier_graph(h_star.spec, nets.bind(h_star.params),
                                      ad.const(zs.data))
    ce = cross_entropy_graph(posterior, ys.data, reduction="mean")
    return (target_term + ce).item()


def adapt(ms: nets.Network, h_star: nets.Network, source_split: LabeledSplit,
          target_split: UnlabeledSplit, config: AdaptConfig,
          critic_spec: nets.CriticSpec | None = None,
          mt_bn_mode: str = "eval"):
    """Adapt a copy of the source extractor to the target domain; returns
    (adapted extractor, history). The source extractor and classifier are
    never mutated, and the target split carries no labels."""
    return run_adversarial(_hooks(), ms, h_star, source_split, target_split,
                           config, critic_spec, mt_bn_mode)
