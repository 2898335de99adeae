import json

import numpy as np
import pytest

from conftest import make_blob_dataset, tiny_extractor_spec
from wadapt import nets
from wadapt.data import LabeledSplit
from wadapt.errors import InputError
from wadapt.evaluation import EvalReport, comparison_table, evaluate, save_confusion_csv
from wadapt.source import SourceConfig, train_source


def naive_micro(labels, preds):
    correct = 0
    for t, p in zip(labels, preds):
        if t == p:
            correct += 1
    return correct / len(labels)


@pytest.fixture(scope="module")
def trained():
    ds = make_blob_dataset(seed=11)
    cfg = SourceConfig(epochs=10, learning_rate=3e-3, batch_size=8,
                       classifier_hidden=(16, 12), seed=0)
    classifier, extractor, _ = train_source(ds, cfg, extractor_spec=tiny_extractor_spec())
    return ds, extractor, classifier


class TestEvaluate:
    def test_all_correct_gives_identity_confusion(self, trained):
        ds, extractor, classifier = trained
        res = evaluate(extractor, classifier, ds.source.train)
        if res.micro_accuracy == 1.0:  # separable blobs train to perfection
            np.testing.assert_array_equal(res.confusion_normalized, np.eye(3))
            assert res.macro_accuracy == 1.0

    def test_micro_matches_naive_loop(self, trained):
        ds, extractor, classifier = trained
        from wadapt.evaluation import predict_classes

        for split in (ds.source.test, ds.target.test):
            res = evaluate(extractor, classifier, split)
            preds = predict_classes(extractor, classifier, split.features)
            assert res.micro_accuracy == pytest.approx(naive_micro(split.labels, preds))

    def test_skewed_predictor_hand_count(self, trained):
        # 2-class set {3 of class 0, 1 of class 1} with an always-class-0
        # predictor: micro 0.75, macro 0.5, confusion rows [1,0],[1,0]
        _, extractor, _ = trained
        spec = nets.ClassifierSpec((4, 4, 2))
        params = nets.init_classifier(spec, extractor.spec.latent_dim(12, 8),
                                      np.random.default_rng(0))
        for name in params.names():
            params[name].data[:] = 0.0
        params["fc2.bias"].data[:] = [5.0, -5.0]  # always predict class 0
        classifier = nets.Network("classifier", spec, params)
        rng = np.random.default_rng(1)
        split = LabeledSplit(rng.normal(size=(4, 1, 12, 8)), np.array([0, 0, 0, 1]))
        res = evaluate(extractor, classifier, split)
        assert res.micro_accuracy == pytest.approx(0.75)
        assert res.macro_accuracy == pytest.approx(0.5)
        np.testing.assert_array_equal(res.confusion_normalized, [[1, 0], [1, 0]])

    def test_uniform_random_predictor_near_chance(self):
        # binomial oracle: |acc - 1/K| within 5 sigma
        rng = np.random.default_rng(7)
        k, n = 10, 2000
        labels = rng.integers(0, k, n)
        preds = rng.integers(0, k, n)
        acc = naive_micro(labels, preds)
        sigma = np.sqrt(0.1 * 0.9 / n)
        assert abs(acc - 0.1) < 5 * sigma

    def test_zero_support_rows_flagged(self, trained):
        ds, extractor, classifier = trained
        split = LabeledSplit(ds.source.test.features[:5], np.zeros(5, dtype=np.int64))
        res = evaluate(extractor, classifier, split)
        assert res.unsupported_classes == [1, 2]
        np.testing.assert_array_equal(res.confusion_normalized[1], np.zeros(3))

    def test_rows_sum_to_one(self, trained):
        ds, extractor, classifier = trained
        res = evaluate(extractor, classifier, ds.target.test)
        sums = res.confusion_normalized.sum(axis=1)
        supported = res.support > 0
        np.testing.assert_allclose(sums[supported], 1.0, atol=1e-6)

    def test_empty_split_rejected(self, trained):
        _, extractor, classifier = trained
        with pytest.raises(InputError):
            evaluate(extractor, classifier, LabeledSplit(np.zeros((0, 1, 12, 8)), np.zeros(0)))

    def test_deterministic(self, trained):
        ds, extractor, classifier = trained
        r1 = evaluate(extractor, classifier, ds.target.test)
        r2 = evaluate(extractor, classifier, ds.target.test)
        assert r1.micro_accuracy == r2.micro_accuracy
        np.testing.assert_array_equal(r1.confusion_normalized, r2.confusion_normalized)


class TestComparisonTable:
    def test_reference_style_row_renders(self):
        summary = {
            "non_adapted": {"source": 0.65, "target": 0.21},
            "adapted_wgan": {"source": 0.64, "target": 0.45},
        }
        text, rows = comparison_table(summary)
        line = next(l for l in text.splitlines() if l.startswith("adapted_wgan"))
        for token in ("0.65", "0.21", "0.64", "0.45"):
            assert token in line
        assert line.index("0.65") < line.index("0.21") < line.index("0.64") < line.index("0.45")
        assert rows["adapted_wgan"]["target_delta"] == pytest.approx(0.24)

    def test_gan_baseline_style_row(self):
        summary = {
            "non_adapted": {"source": 0.65, "target": 0.20},
            "adapted_gan": {"source": 0.65, "target": 0.32},
        }
        text, rows = comparison_table(summary)
        assert "0.32" in text
        assert rows["adapted_gan"]["source_delta"] == pytest.approx(0.0)

    def test_single_report_renders_without_deltas(self):
        text, rows = comparison_table({"non_adapted": {"source": 0.9, "target": 0.4}})
        assert "non_adapted" in text
        assert rows["non_adapted"]["target_adapted"] is None

    def test_requires_non_adapted(self):
        with pytest.raises(InputError):
            comparison_table({"adapted_wgan": {"source": 1.0, "target": 1.0}})


class TestEvalReport:
    def test_json_roundtrip_and_byte_stability(self, trained):
        ds, extractor, classifier = trained
        report = EvalReport(seed=3)
        report.add_result("non_adapted", "source", evaluate(extractor, classifier, ds.source.test))
        report.config = {"note": "test"}
        blob1 = report.to_json()
        blob2 = EvalReport.from_json(blob1).to_json()
        assert blob1 == blob2
        parsed = json.loads(blob1)
        assert parsed["schema_version"] == 1
        assert "rmsprop_decay" in parsed["optimizer"]

    def test_confusion_csv(self, tmp_path):
        path = tmp_path / "c.csv"
        save_confusion_csv(np.array([[1.0, 0.0], [0.25, 0.75]]), path)
        rows = path.read_text().strip().splitlines()
        assert len(rows) == 2
        assert [float(v) for v in rows[1].split(",")] == [0.25, 0.75]
