import numpy as np
import pytest

from conftest import make_blob_dataset, tiny_extractor_spec
from wadapt import nets
from wadapt.adapt_gan import adapt_gan, gan_discriminator_loss, gan_generator_loss
from wadapt.adapt_wgan import adapt
from wadapt.seeding import substream
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


def constant_critic(critic, value):
    out = critic.clone()
    for name in out.params.names():
        out.params[name].data[:] = 0.0
    last = len(critic.spec.layer_widths) - 1
    out.params[f"fc{last}.bias"].data[:] = value
    return out


def zeroed_classifier(h):
    out = h.clone()
    for name in out.params.names():
        out.params[name].data[:] = 0.0
    return out


class TestGanLosses:
    def test_zero_discriminator_gives_two_log_two(self, toy_setup, rng):
        ms, _, critic = toy_setup
        xs = FeatureTensor(rng.normal(size=(4, 1, 12, 8)))
        xt = FeatureTensor(rng.normal(size=(4, 1, 12, 8)))
        loss = gan_discriminator_loss(constant_critic(critic, 0.0), ms, ms.clone(), xs, xt)
        assert loss == pytest.approx(2.0 * np.log(2.0), abs=1e-12)

    def test_confident_discriminator_loss_vanishes(self, toy_setup, rng):
        # sigma -> 1 on source, -> 0 on target: craft a critic reading a
        # latent coordinate that differs strongly between the two batches
        ms, _, _ = toy_setup
        spec = nets.CriticSpec((1,))
        params = nets.init_critic(spec, 2, np.random.default_rng(0))
        params["fc0.weight"].data[:] = [[1.0], [0.0]]
        params["fc0.bias"].data[:] = 0.0
        critic = nets.Network("critic", spec, params)
        from wadapt import autodiff as ad
        from wadapt.adapt_gan import discriminator_loss_graph

        zs = ad.const(np.array([[40.0, 0.0], [45.0, 1.0]]))
        zt = ad.const(np.array([[-40.0, 0.0], [-45.0, 1.0]]))
        loss = discriminator_loss_graph(spec, nets.bind(params), zs, zt)
        assert loss.item() == pytest.approx(0.0, abs=1e-6)

    def test_generator_loss_zero_discriminator_uniform_posterior(self, toy_setup, rng):
        ms, h_star, critic = toy_setup
        xs = FeatureTensor(rng.normal(size=(3, 1, 12, 8)))
        xt = FeatureTensor(rng.normal(size=(3, 1, 12, 8)))
        ys = onehot_batch([0, 1, 2], 4)
        loss = gan_generator_loss(constant_critic(critic, 0.0), ms.clone(),
                                  zeroed_classifier(h_star), xt, (xs, ys))
        assert loss == pytest.approx(np.log(2.0) + np.log(4.0), abs=1e-9)

    def test_generator_loss_vanishes_when_fooled(self, toy_setup, rng):
        # sigma(h_d) ~= 1 on target and a perfectly confident classifier
        ms, h_star, critic = toy_setup
        xs = FeatureTensor(rng.normal(size=(2, 1, 12, 8)))
        xt = FeatureTensor(rng.normal(size=(2, 1, 12, 8)))
        ys = onehot_batch([0, 1], 4)
        loss = gan_generator_loss(constant_critic(critic, 40.0), ms.clone(),
                                  h_star, xt, (xs, ys))
        ce_part = gan_generator_loss(constant_critic(critic, 40.0), ms.clone(),
                                     h_star, xt, (xs, ys)) - loss
        assert loss >= 0.0
        # the -log sigma(40) part is ~4e-18
        from wadapt.adapt_wgan import generator_loss as wgan_gen

        base_ce = wgan_gen(constant_critic(critic, 0.0), ms.clone(), h_star, xt, (xs, ys))
        assert loss == pytest.approx(base_ce, abs=1e-9)


def gan_config(**kw):
    defaults = dict(learning_rate=3e-4, batch_size=8, n_d=2, max_epochs=4,
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


class TestAdaptGan:
    def test_no_clipping_applied(self, trained_blobs):
        ds, ms, h_star = trained_blobs
        # with clipping this bound would force critic weights <= 1e-6;
        # the GAN arm must ignore it
        cfg = gan_config(clip_c=1e-6)
        mt, history = adapt_gan(ms, h_star, ds.source.train,
                                ds.target.train.unlabeled(), cfg)
        assert history["arm"] == "gan"
        # reconstruct the trained critic scale indirectly: rerun one epoch and
        # check the discriminator loss moved away from 2 ln 2 (training happened)
        assert history["epochs"][0]["critic_loss"] != pytest.approx(2 * np.log(2))

    def test_shared_seed_gives_identical_batch_streams(self):
        # both arms draw from substreams named identically, so the index
        # sequences coincide for equal seeds
        a = substream(7, "adapt.batch.source")
        b = substream(7, "adapt.batch.source")
        assert np.array_equal(a.permutation(100), b.permutation(100))

    def test_same_harness_contract(self, trained_blobs):
        ds, ms, h_star = trained_blobs
        cfg = gan_config(max_epochs=3)
        _, hg = adapt_gan(ms, h_star, ds.source.train, ds.target.train.unlabeled(), cfg)
        _, hw = adapt(ms, h_star, ds.source.train, ds.target.train.unlabeled(), cfg)
        assert hg["steps_per_epoch"] == hw["steps_per_epoch"]
        assert set(hg["epochs"][0]) == set(hw["epochs"][0])
        assert hg["critic_updates"] == hw["critic_updates"]

    def test_bit_reproducible_history(self, trained_blobs):
        ds, ms, h_star = trained_blobs
        cfg = gan_config()
        h1 = adapt_gan(ms, h_star, ds.source.train, ds.target.train.unlabeled(), cfg)[1]
        h2 = adapt_gan(ms, h_star, ds.source.train, ds.target.train.unlabeled(), cfg)[1]
        assert h1 == h2

    def test_shift_produces_some_target_gain(self):
        # mild blob shift: the baseline should recover some target accuracy
        # (the arm comparison against the Wasserstein arm runs in the
        # acceptance suite on the full synthetic task)
        ds = make_blob_dataset(seed=22, per_split=(40, 16, 16), target_offset=1.2)
        cfg = SourceConfig(epochs=10, learning_rate=3e-3, batch_size=8,
                          classifier_hidden=(16, 12), seed=0)
        h_star, ms, _ = train_source(ds, cfg, extractor_spec=tiny_extractor_spec())
        from wadapt.evaluation import evaluate

        before = evaluate(ms, h_star, ds.target.test).micro_accuracy
        mt, _ = adapt_gan(ms, h_star, ds.source.train, ds.target.train.unlabeled(),
                          gan_config(max_epochs=10, saturation_window=4))
        after = evaluate(mt, h_star, ds.target.test).micro_accuracy
        assert after > before + 0.10

    def test_no_shift_no_degradation(self):
        ds = make_blob_dataset(seed=33, per_split=(40, 16, 16), target_offset=0.0)
        cfg = SourceConfig(epochs=10, learning_rate=3e-3, batch_size=8,
                          classifier_hidden=(16, 12), seed=0)
        h_star, ms, _ = train_source(ds, cfg, extractor_spec=tiny_extractor_spec())
        from wadapt.evaluation import evaluate

        src_acc = evaluate(ms, h_star, ds.source.test).micro_accuracy
        mt, _ = adapt_gan(ms, h_star, ds.source.train, ds.target.train.unlabeled(),
                          gan_config(max_epochs=8, saturation_window=4))
        tgt_acc = evaluate(mt, h_star, ds.target.test).micro_accuracy
        assert tgt_acc >= src_acc - 0.02
