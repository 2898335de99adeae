import numpy as np
import pytest

from conftest import make_blob_dataset, tiny_extractor_spec
from wadapt import nets
from wadapt.adapt_wgan import adapt, critic_loss, generator_loss
from wadapt.errors import InputError
from wadapt.evaluation import evaluate
from wadapt.source import SourceConfig, train_source
from wadapt.types import AdaptConfig, FeatureTensor, onehot_batch


@pytest.fixture(scope="module")
def toy_setup():
    rng = np.random.default_rng(0)
    spec = tiny_extractor_spec()
    ms = nets.extractor_network(spec, rng)
    latent = spec.latent_dim(12, 8)
    h_star = nets.classifier_network(nets.ClassifierSpec((8, 6, 4)), latent, rng)
    critic = nets.critic_network(nets.CriticSpec((8, 4, 1)), latent, rng)
    return ms, h_star, critic


def constant_critic(critic: nets.Network, value: float) -> nets.Network:
    out = critic.clone()
    for name in out.params.names():
        out.params[name].data[:] = 0.0
    last = len(critic.spec.layer_widths) - 1
    out.params[f"fc{last}.bias"].data[:] = value
    return out


class TestCriticLoss:
    def test_constant_critic_gives_zero(self, toy_setup, rng):
        ms, _, critic = toy_setup
        xs = FeatureTensor(rng.normal(size=(4, 1, 12, 8)))
        xt = FeatureTensor(rng.normal(size=(4, 1, 12, 8)))
        loss = critic_loss(constant_critic(critic, 3.7), ms, ms.clone(), xs, xt)
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_identical_extractors_and_batches_exactly_zero(self, toy_setup, rng):
        ms, _, critic = toy_setup
        xs = FeatureTensor(rng.normal(size=(5, 1, 12, 8)))
        assert critic_loss(critic, ms, ms.clone(), xs, xs) == 0.0

    def test_hand_computed_gap(self):
        # single-sample batches scored 2 and 0.5 -> loss 1.5
        from wadapt import autodiff as ad
        from wadapt.adapt_wgan import critic_loss_graph

        spec = nets.CriticSpec((1,))
        params = nets.init_critic(spec, 2, np.random.default_rng(0))
        params["fc0.weight"].data[:] = [[1.0], [0.0]]
        params["fc0.bias"].data[:] = 0.0
        zs = ad.const(np.array([[2.0, 9.0]]))
        zt = ad.const(np.array([[0.5, -3.0]]))
        loss = critic_loss_graph(spec, nets.bind(params), zs, zt)
        assert loss.item() == pytest.approx(1.5)

    def test_batch_size_mismatch_rejected(self, toy_setup, rng):
        ms, _, critic = toy_setup
        xs = FeatureTensor(rng.normal(size=(4, 1, 12, 8)))
        xt = FeatureTensor(rng.normal(size=(3, 1, 12, 8)))
        with pytest.raises(InputError):
            critic_loss(critic, ms, ms.clone(), xs, xt)


class TestGeneratorLoss:
    def test_zero_critic_uniform_posterior(self, toy_setup, rng):
        ms, h_star, critic = toy_setup
        zeroed_h = h_star.clone()
        for name in zeroed_h.params.names():
            zeroed_h.params[name].data[:] = 0.0
        xs = FeatureTensor(rng.normal(size=(3, 1, 12, 8)))
        xt = FeatureTensor(rng.normal(size=(3, 1, 12, 8)))
        ys = onehot_batch([0, 1, 2], 4)
        loss = generator_loss(constant_critic(critic, 0.0), ms.clone(), zeroed_h, xt, (xs, ys))
        assert loss == pytest.approx(np.log(4.0), abs=1e-9)

    def test_constant_one_critic_adds_one(self, toy_setup, rng):
        ms, h_star, critic = toy_setup
        zeroed_h = h_star.clone()
        for name in zeroed_h.params.names():
            zeroed_h.params[name].data[:] = 0.0
        xs = FeatureTensor(rng.normal(size=(2, 1, 12, 8)))
        xt = FeatureTensor(rng.normal(size=(2, 1, 12, 8)))
        ys = onehot_batch([0, 1], 4)
        loss = generator_loss(constant_critic(critic, 1.0), ms.clone(), zeroed_h, xt, (xs, ys))
        assert loss == pytest.approx(1.0 + np.log(4.0), abs=1e-9)


def adapt_config(**kw):
    defaults = dict(learning_rate=3e-4, batch_size=8, n_d=2, max_epochs=6,
                    saturation_window=2, saturation_tol=1e-9, seed=0)
    defaults.update(kw)
    return AdaptConfig(**defaults)


@pytest.fixture(scope="module")
def trained_blobs():
    ds = make_blob_dataset(seed=21, per_split=(40, 16, 16), target_offset=0.8)
    cfg = SourceConfig(epochs=10, learning_rate=3e-3, batch_size=8,
                       classifier_hidden=(16, 12), seed=0)
    classifier, extractor, _ = train_source(ds, cfg, extractor_spec=tiny_extractor_spec())
    return ds, extractor, classifier


class TestAdapt:
    def test_loop_accounting(self, trained_blobs):
        ds, ms, h_star = trained_blobs
        # 40*3 = 120 target samples, batch 8 -> 15 outer steps per epoch
        cfg = adapt_config(n_d=5, max_epochs=2, saturation_window=1)
        mt, history = adapt(ms, h_star, ds.source.train, ds.target.train.unlabeled(), cfg)
        assert history["steps_per_epoch"] == 15
        epochs = len(history["epochs"])
        assert history["critic_updates"] == 5 * 15 * epochs
        assert history["generator_updates"] == 15 * epochs

    def test_frozen_models_bit_identical(self, trained_blobs):
        ds, ms, h_star = trained_blobs
        ms_snap = ms.params.snapshot()
        h_snap = h_star.params.snapshot()
        adapt(ms, h_star, ds.source.train, ds.target.train.unlabeled(), adapt_config())
        assert ms.params.equals_snapshot(ms_snap)
        assert h_star.params.equals_snapshot(h_snap)

    def test_critic_weights_stay_clipped(self, trained_blobs):
        ds, ms, h_star = trained_blobs
        # the harness asserts the clip invariant after every critic update;
        # rerunning with a distinctive bound exercises it end to end
        cfg = adapt_config(clip_c=0.003, max_epochs=3)
        mt, history = adapt(ms, h_star, ds.source.train, ds.target.train.unlabeled(), cfg)
        assert history["critic_updates"] > 0

    def test_target_labels_never_visible(self, trained_blobs):
        ds, ms, h_star = trained_blobs
        with pytest.raises(InputError, match="unlabeled"):
            adapt(ms, h_star, ds.source.train, ds.target.train, adapt_config())
        assert not hasattr(ds.target.train.unlabeled(), "labels")

    def test_adapted_params_compatible_with_source(self, trained_blobs):
        ds, ms, h_star = trained_blobs
        mt, _ = adapt(ms, h_star, ds.source.train, ds.target.train.unlabeled(), adapt_config())
        assert mt.params.compatible_with(ms.params)
        assert mt.meta["adapted_by"] == "wgan"

    def test_no_shift_no_degradation(self):
        ds = make_blob_dataset(seed=31, per_split=(40, 16, 16), target_offset=0.0)
        cfg = SourceConfig(epochs=10, learning_rate=3e-3, batch_size=8,
                          classifier_hidden=(16, 12), seed=0)
        h_star, ms, _ = train_source(ds, cfg, extractor_spec=tiny_extractor_spec())
        src_acc = evaluate(ms, h_star, ds.source.test).micro_accuracy
        mt, _ = adapt(ms, h_star, ds.source.train, ds.target.train.unlabeled(),
                      adapt_config(max_epochs=8, saturation_window=4))
        tgt_acc = evaluate(mt, h_star, ds.target.test).micro_accuracy
        assert tgt_acc >= src_acc - 0.02

    def test_history_epoch_fields(self, trained_blobs):
        ds, ms, h_star = trained_blobs
        _, history = adapt(ms, h_star, ds.source.train, ds.target.train.unlabeled(),
                           adapt_config(max_epochs=3))
        rec = history["epochs"][0]
        assert set(rec) == {"epoch", "critic_loss", "generator_loss", "source_ce", "target_term"}
        assert history["arm"] == "wgan"

    def test_deterministic_history(self, trained_blobs):
        ds, ms, h_star = trained_blobs
        h1 = adapt(ms, h_star, ds.source.train, ds.target.train.unlabeled(), adapt_config())[1]
        h2 = adapt(ms, h_star, ds.source.train, ds.target.train.unlabeled(), adapt_config())[1]
        assert h1 == h2

    def test_empty_split_rejected(self, trained_blobs):
        ds, ms, h_star = trained_blobs
        from wadapt.data import UnlabeledSplit

        with pytest.raises(InputError):
            adapt(ms, h_star, ds.source.train,
                  UnlabeledSplit(np.zeros((0, 1, 12, 8))), adapt_config())
