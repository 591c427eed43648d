import numpy as np
import pytest

from marginclip.data import Dataset
from marginclip.detection import REJECTED, MmdfPipeline, NullModel
from marginclip.errors import EmptyDatasetError
from marginclip.harness import EvalReport, aggregate, confusion_matrix, evaluate
from marginclip.nn import Activation, ClipBounds, Conv2D, Dense, Flatten, Network


def linear_image_net():
    """1x1x3 images -> logits equal to the pixel values (no activations)."""
    eye = np.eye(3, dtype=np.float32)
    layers = [Flatten(), Dense(3, 3, eye, np.zeros(3, np.float32))]
    return Network((1, 1, 3), layers, 3)


def relu_image_net():
    """1x1x3 images -> ReLU -> identity logits, so clipping acts on the logits."""
    eye = np.eye(3, dtype=np.float32)
    layers = [
        Conv2D(3, 3, 1, weight=eye.reshape(1, 1, 3, 3).copy(), bias=np.zeros(3, np.float32)),
        Activation(),
        Flatten(),
        Dense(3, 3, eye.copy(), np.zeros(3, np.float32)),
    ]
    return Network((1, 1, 3), layers, 3)


def one_hot_images(classes, scale=1.0):
    images = np.zeros((len(classes), 1, 1, 3), dtype=np.float32)
    images[np.arange(len(classes)), 0, 0, classes] = scale
    return images


class TestEvaluate:
    """Test ACC / ASR / PACC accounting."""

    def test_clean_accuracy_only_without_attack(self):
        net = linear_image_net()
        test = Dataset(one_hot_images([0, 1, 2, 2]), np.array([0, 1, 2, 0]), 3)
        report = evaluate(net, test, seed=4)
        assert report.defense == "none"
        assert report.acc == pytest.approx(0.75)
        assert report.asr is None and report.pacc is None
        assert report.seed == 4

    def test_triggered_outcomes_partition_the_set(self):
        net = linear_image_net()
        test = Dataset(one_hot_images([0, 1]), np.array([0, 1]), 3)
        # sources 1, 2, 2, 1 with target 0; predictions 0, 2, 1, 0
        triggered = Dataset(
            one_hot_images([0, 2, 1, 0]),
            np.array([1, 2, 2, 1]),
            3,
            np.arange(4),
            np.zeros(4, dtype=np.int64),
        )
        report = evaluate(net, test, triggered)
        assert report.asr == pytest.approx(0.5)
        assert report.pacc == pytest.approx(0.25)
        assert report.other == pytest.approx(0.25)
        assert report.rejected == 0.0
        assert report.asr + report.pacc + report.other + report.rejected == pytest.approx(1.0)

    def test_clipping_defense_is_labelled(self):
        net = relu_image_net()
        test = Dataset(one_hot_images([0, 1, 2]), np.array([0, 1, 2]), 3)
        report = evaluate(net, test, z_star=ClipBounds.constant(net, 0.5))
        assert report.defense == "mmac"
        assert report.acc == 1.0

    def test_rejections_count_as_neither_target_nor_source(self):
        net = relu_image_net()
        z = ClipBounds.constant(net, 0.2)
        detector = MmdfPipeline(net, z, NullModel(0.0, 0.01, 50), mode="reject")
        test = Dataset(one_hot_images([0, 1], scale=0.1), np.array([0, 1]), 3)
        triggered = Dataset(
            one_hot_images([0, 0], scale=1.0),
            np.array([1, 2]),
            3,
            np.arange(2),
            np.zeros(2, dtype=np.int64),
        )
        report = evaluate(net, test, triggered, pipeline=detector, auc=0.9)
        assert report.defense == "mmdf"
        assert report.mode == "reject"
        assert report.rejected == 1.0
        assert report.asr == 0.0 and report.pacc == 0.0 and report.other == 0.0
        assert report.clean_rejected == 0.0
        assert report.auc == 0.9

    def test_empty_clean_set_raises(self):
        net = linear_image_net()
        with pytest.raises(EmptyDatasetError):
            evaluate(net, Dataset(np.zeros((0, 1, 1, 3)), np.zeros(0), 3))

    def test_confusion_matrix_counts_rejections(self):
        matrix = confusion_matrix(np.array([0, 1, 1]), np.array([0, REJECTED, 0]), 2)
        assert matrix.tolist() == [[1, 0, 0], [1, 0, 1]]


class TestAggregate:
    """Test aggregation over repetitions."""

    def test_mean_and_sample_std(self):
        reports = [EvalReport("none", 0, acc=0.0), EvalReport("none", 1, acc=1.0)]
        acc = next(s for s in aggregate(reports) if s.metric == "acc")
        assert acc.mean == pytest.approx(0.5)
        assert acc.std == pytest.approx(0.7071, abs=1e-4)
        assert acc.n == 2
        assert acc.seeds == [0, 1]
        assert not acc.single_run

    def test_single_run_has_zero_std(self):
        acc = next(s for s in aggregate([EvalReport("none", 0, acc=0.8)]) if s.metric == "acc")
        assert acc.std == 0.0
        assert acc.single_run

    def test_missing_metrics_stay_empty(self):
        asr = next(s for s in aggregate([EvalReport("none", 0, acc=0.8)]) if s.metric == "asr")
        assert asr.mean is None and asr.std is None
        assert asr.n == 0

    def test_groups_by_defense_and_mode(self):
        reports = [
            EvalReport("mmdf", 0, acc=0.9, mode="correct"),
            EvalReport("mmdf", 0, acc=0.8, mode="reject"),
        ]
        groups = {(s.defense, s.mode) for s in aggregate(reports)}
        assert groups == {("mmdf", "correct"), ("mmdf", "reject")}
