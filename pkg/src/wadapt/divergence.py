"""Divergence estimators between latent distributions.

Three views of the source/target discrepancy:

* ``wasserstein1d_exact`` — exact order-1 transport cost between equal-size
  1-D empirical distributions (the sorted matching attains the infimum over
  couplings). Used as the test oracle.
* ``critic_wasserstein_estimate`` — the gap achieved by a fresh weight-clipped
  critic trained to separate the two latent clouds. Clipping scales the
  Lipschitz constant, so the value is a monotone diagnostic, not a calibrated
  distance; only rankings are meaningful.
* ``hdh_bound_estimate`` — empirical plug-in of the domain-classifier upper
  bound 2 * |P_src[pred=0] + P_tgt[pred=1] - 1| in [0, 2], with the
  convention label 0 = source, label 1 = target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nets
from .errors import InputError, NumericError
from .evaluation import latents_of
from .optim import OptimizerState, clip_parameters, rmsprop_step, value_and_gradient
from .seeding import substream


def wasserstein1d_exact(a, b) -> float:
    """Mean |sorted(a) - sorted(b)| over two equal-size real multisets."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size == 0 or a.size != b.size:
        raise InputError("wasserstein1d_exact requires equal, non-empty sizes")
    return float(np.abs(np.sort(a) - np.sort(b)).mean())


@dataclass
class DivergenceConfig:
    critic_hidden: tuple[int, ...] = (64, 32)
    # the domain-classifier bound uses a linear probe by default (the usual
    # proxy-distance practice); deeper probes saturate the bound at 2
    domain_classifier_hidden: tuple[int, ...] = ()
    probe_learning_rate: float = 1e-2
    train_iters: int = 400
    learning_rate: float = 1e-3
    clip_c: float = 0.05
    batch_size: int = 64
    holdout_fraction: float = 0.25
    seed: int = 0


def _split_holdout(z: np.ndarray, fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(z.shape[0])
    n_hold = max(1, int(round(z.shape[0] * fraction)))
    if n_hold >= z.shape[0]:
        raise InputError("not enough samples to hold some out")
    return z[order[n_hold:]], z[order[:n_hold]]


def _batches(z: np.ndarray, batch_size: int, rng) -> np.ndarray:
    idx = rng.integers(0, z.shape[0], size=min(batch_size, z.shape[0]))
    return z[idx]


def critic_gap_on_latents(zs: np.ndarray, zt: np.ndarray,
                          config: DivergenceConfig | None = None) -> float:
    """Train a fresh clipped critic on the two latent clouds, report the
    score gap mean(h_d(z_T)) - mean(h_d(z_S)) achieved on held-out samples
    (clamped at 0)."""
    config = config or DivergenceConfig()
    zs = np.atleast_2d(np.asarray(zs, dtype=np.float64))
    zt = np.atleast_2d(np.asarray(zt, dtype=np.float64))
    if zs.shape[0] < 4 or zt.shape[0] < 4:
        raise InputError("need at least 4 samples per domain")
    if zs.shape[1] != zt.shape[1]:
        raise InputError("latent dimensions differ between domains")

    rng = substream(config.seed, "divergence.critic")
    zs_train, zs_hold = _split_holdout(zs, config.holdout_fraction, rng)
    zt_train, zt_hold = _split_holdout(zt, config.holdout_fraction, rng)

    spec = nets.CriticSpec((*config.critic_hidden, 1))
    critic = nets.critic_network(spec, zs.shape[1], rng)
    opt = OptimizerState.for_params(critic.params)
    losses: list[float] = []
    for _ in range(config.train_iters):
        bs = _batches(zs_train, config.batch_size, rng)
        bt = _batches(zt_train, config.batch_size, rng)

        def loss_fn(bound):
            return (ad.mean_(nets.critic_graph(spec, bound, ad.const(bs)))
                    - ad.mean_(nets.critic_graph(spec, bound, ad.const(bt))))

        try:
            value, grads = value_and_gradient(loss_fn, critic.params)
        except NumericError as exc:
            raise NumericError("divergence critic training diverged", history=losses) from exc
        losses.append(value)
        rmsprop_step(critic.params, grads, opt, config.learning_rate)
        clip_parameters(critic.params, config.clip_c)

    score = lambda z: nets.critic_graph(spec, nets.bind(critic.params), ad.const(z)).data
    gap = float(score(zt_hold).mean() - score(zs_hold).mean())
    return max(gap, 0.0)


def critic_wasserstein_estimate(ms: nets.Network, mt: nets.Network,
                                source_feats: np.ndarray, target_feats: np.ndarray,
                                config: DivergenceConfig | None = None) -> float:
    """Critic-gap diagnostic between M_S(source) and M_T(target) latents."""
    zs = latents_of(ms, np.asarray(source_feats, dtype=np.float64))
    zt = latents_of(mt, np.asarray(target_feats, dtype=np.float64))
    return critic_gap_on_latents(zs, zt, config)


class DomainClassifier:
    """Binary domain classifier over latents; hard labels 0=source, 1=target."""

    def __init__(self, spec: nets.CriticSpec, params):
        self.spec = spec
        self.params = params

    def predict(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        scores = nets.critic_graph(self.spec, nets.bind(self.params), ad.const(z)).data
        return (scores > 0.0).astype(np.int64)


def train_domain_classifier(zs_train: np.ndarray, zt_train: np.ndarray,
                            config: DivergenceConfig | None = None) -> DomainClassifier:
    """Fit a small sigmoid-output domain classifier with binary cross-entropy."""
    config = config or DivergenceConfig()
    zs_train = np.atleast_2d(np.asarray(zs_train, dtype=np.float64))
    zt_train = np.atleast_2d(np.asarray(zt_train, dtype=np.float64))
    rng = substream(config.seed, "divergence.domain_classifier")
    spec = nets.CriticSpec((*config.domain_classifier_hidden, 1))
    net = nets.critic_network(spec, zs_train.shape[1], rng)
    opt = OptimizerState.for_params(net.params)
    eps = 1e-12
    for _ in range(config.train_iters):
        bs = _batches(zs_train, config.batch_size, rng)
        bt = _batches(zt_train, config.batch_size, rng)

        def loss_fn(bound):
            p_s = ad.clamp(ad.sigmoid(nets.critic_graph(spec, bound, ad.const(bs))),
                           lo=eps, hi=1 - eps)
            p_t = ad.clamp(ad.sigmoid(nets.critic_graph(spec, bound, ad.const(bt))),
                           lo=eps, hi=1 - eps)
            return -(ad.mean_(ad.log(1.0 - p_s)) + ad.mean_(ad.log(p_t)))

        _, grads = value_and_gradient(loss_fn, net.params)
        rmsprop_step(net.params, grads, opt, config.probe_learning_rate)
    return DomainClassifier(spec, net.params)


def hdh_bound_estimate(hd_binary, source_latents, target_latents) -> float:
    """Plug-in domain-divergence bound from hard domain predictions, in [0, 2]."""
    zs = np.atleast_2d(np.asarray(source_latents, dtype=np.float64))
    zt = np.atleast_2d(np.asarray(target_latents, dtype=np.float64))
    if zs.shape[0] == 0 or zt.shape[0] == 0:
        raise InputError("hdh_bound_estimate requires non-empty sample sets")
    predict = hd_binary.predict if hasattr(hd_binary, "predict") else hd_binary
    pred_s = np.asarray(predict(zs)).reshape(-1)
    pred_t = np.asarray(predict(zt)).reshape(-1)
    if not (np.isin(pred_s, (0, 1)).all() and np.isin(pred_t, (0, 1)).all()):
        raise InputError("domain classifier must output hard labels in {0, 1}")
    p_s0 = float((pred_s == 0).mean())
    p_t1 = float((pred_t == 1).mean())
    return 2.0 * abs(p_s0 + p_t1 - 1.0)


def hdh_bound_with_training(zs: np.ndarray, zt: np.ndarray,
                            config: DivergenceConfig | None = None) -> float:
    """Train the domain classifier on one part of the latents and evaluate the
    bound on the held-out part."""
    config = config or DivergenceConfig()
    rng = substream(config.seed, "divergence.hdh_split")
    zs = np.atleast_2d(np.asarray(zs, dtype=np.float64))
    zt = np.atleast_2d(np.asarray(zt, dtype=np.float64))
    if zs.shape[0] < 4 or zt.shape[0] < 4:
        raise InputError("need at least 4 samples per domain")
    zs_train, zs_hold = _split_holdout(zs, config.holdout_fraction, rng)
    zt_train, zt_hold = _split_holdout(zt, config.holdout_fraction, rng)
    classifier = train_domain_classifier(zs_train, zt_train, config)
    return hdh_bound_estimate(classifier, zs_hold, zt_hold)


def divergence_block(ms: nets.Network, mt: nets.Network, source_feats, target_feats,
                     config: DivergenceConfig | None = None) -> dict:
    """Both estimators on (M_S(source), M(target)) for M in {M_S, M_T}:
    the before/after view of one adaptation."""
    config = config or DivergenceConfig()
    zs = latents_of(ms, np.asarray(source_feats, dtype=np.float64))
    zt_before = latents_of(ms, np.asarray(target_feats, dtype=np.float64))
    zt_after = latents_of(mt, np.asarray(target_feats, dtype=np.float64))
    return {
        "critic_wasserstein": {
            "before": critic_gap_on_latents(zs, zt_before, config),
            "after": critic_gap_on_latents(zs, zt_after, config),
        },
        "hdh_bound": {
            "before": hdh_bound_with_training(zs, zt_before, config),
            "after": hdh_bound_with_training(zs, zt_after, config),
        },
    }
