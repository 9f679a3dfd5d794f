"""Tests for losses, metrics, optimizers, the epoch loop and its reports."""

import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from skipnet.autodiff import Tape, backward
from skipnet.data import Dataset, SplitData, render_sample
from skipnet.errors import (
    CheckpointShapeError,
    ConfigurationError,
    DataError,
    DimensionError,
    TrainingError,
    UsageError,
)
from skipnet.logging import ContextFilter
from skipnet.model import ModelConfig, SKIPNetModel
from skipnet.training import (
    METRICS_HEADER,
    SGD,
    Adam,
    ConfusionMatrix,
    EpochRecord,
    TrainConfig,
    accuracy,
    cross_entropy,
    confusion_entries,
    evaluate,
    format_summary,
    make_optimizer,
    metrics_csv,
    sparse_ce_loss,
    train,
)


def tiny_model(seed=0, size=8):
    return SKIPNetModel(
        ModelConfig(channels=[4], input_size=size, hidden_units=8, dropout_rate=0.0),
        seed=seed,
    )


def quadrant_split(name, per_class, seed, size=8):
    """Class k lights up quadrant k of an otherwise noisy image."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    half = size // 2
    for label in range(3):
        for _ in range(per_class):
            image = rng.normal(0.0, 0.05, (1, size, size))
            row, col = divmod(label, 2)
            image[0, row * half : (row + 1) * half, col * half : (col + 1) * half] += 1.0
            images.append(image)
            labels.append(label)
    return SplitData.from_arrays(name, np.stack(images), labels)


@pytest.fixture
def dataset():
    return Dataset(
        train=quadrant_split("train", 4, 0),
        val=quadrant_split("val", 2, 1),
        test=quadrant_split("test", 2, 2),
    )


class TestLoss:
    def test_uniform_logits_give_log_three(self):
        assert abs(sparse_ce_loss(np.zeros((4, 3)), [0, 1, 2, 1]) - math.log(3)) < 1e-6

    def test_confident_correct_prediction_is_near_zero(self):
        logits = np.array([[20.0, 0.0, 0.0]])
        assert sparse_ce_loss(logits, [0]) < 1e-8

    def test_large_logits_stay_finite(self):
        loss = sparse_ce_loss(np.array([[1000.0, -1000.0, 0.0]]), [1])
        assert_allclose(loss, 2000.0)

    def test_invalid_label(self):
        with pytest.raises(DataError, match="sample 0"):
            sparse_ce_loss(np.zeros((1, 3)), [-1])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            sparse_ce_loss(np.zeros((2, 3)), [0, 1, 2])


class TestConfusionMatrix:
    def test_diagonal_gives_accuracy_one(self):
        confusion = ConfusionMatrix(np.diag([3, 5, 2]))
        assert accuracy(confusion) == 1.0
        assert confusion.one_vs_rest_accuracy() == [1.0, 1.0, 1.0]

    def test_counts_and_derived_values(self):
        confusion = ConfusionMatrix.from_predictions(
            [0, 0, 1, 1, 2, 2], [0, 1, 1, 1, 0, 2], 3
        )
        assert_array_equal(confusion.counts, [[1, 1, 0], [0, 2, 0], [1, 0, 1]])
        assert confusion.true_positives(0) == 1
        assert confusion.false_negatives(0) == 1
        assert confusion.false_positives(0) == 1
        assert confusion.true_negatives(0) == 3
        assert confusion.correct == 4
        assert confusion.accuracy() == pytest.approx(4 / 6)
        assert confusion.one_vs_rest_accuracy()[0] == pytest.approx(4 / 6)

    def test_addition(self):
        a = ConfusionMatrix.from_predictions([0], [1], 2)
        b = ConfusionMatrix.from_predictions([1], [1], 2)
        assert_array_equal((a + b).counts, [[0, 1], [0, 1]])

    def test_empty_matrix_accuracy_is_undefined(self):
        with pytest.raises(UsageError):
            ConfusionMatrix.empty(3).accuracy()

    def test_two_class_one_vs_rest_matches_accuracy(self):
        rng = np.random.default_rng(4)
        confusion = ConfusionMatrix.from_predictions(
            rng.integers(0, 2, 50), rng.integers(0, 2, 50), 2
        )
        expected = np.trace(confusion.counts) / confusion.total
        assert confusion.accuracy() == pytest.approx(expected)
        assert confusion.one_vs_rest_accuracy() == pytest.approx([expected, expected])


class TestOptimizers:
    def test_adam_first_step_moves_by_learning_rate(self):
        """Bias correction makes the first step lr * sign(grad)."""
        adam = Adam(learning_rate=0.1)
        params = {"w": np.array([1.0, -2.0, 3.0])}
        grads = {"w": np.array([0.5, -4.0, 1e-3])}

        updated = adam.step(params, grads)

        assert_allclose(updated["w"], [0.9, -1.9, 2.9], atol=1e-5)

    def test_adam_decreases_quadratic(self):
        adam = Adam(learning_rate=0.1)
        w = np.array([40.0, -30.0, 20.0])
        losses = []
        for _ in range(100):
            losses.append(float((w**2).sum()))
            w = adam.step({"w": w}, {"w": 2 * w})["w"]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_sgd_with_momentum(self):
        sgd = SGD(learning_rate=0.1, momentum=0.9)
        w = {"w": np.array([1.0])}
        w = sgd.step(w, {"w": np.array([1.0])})
        assert_allclose(w["w"], [0.9])
        w = sgd.step(w, {"w": np.array([1.0])})
        assert_allclose(w["w"], [0.9 - 0.1 * 1.9])

    def test_preserves_dtype(self):
        w = {"w": np.ones(2, dtype=np.float32)}
        assert Adam().step(w, {"w": np.ones(2)})["w"].dtype == np.float32

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            Adam().step({"w": np.ones(2)}, {"w": np.ones(3)})
        with pytest.raises(DimensionError):
            Adam().step({"w": np.ones(2)}, {})

    def test_state_round_trip(self):
        adam = Adam(learning_rate=0.01)
        params = {"w": np.array([1.0, 2.0])}
        params = adam.step(params, {"w": np.array([0.3, -0.2])})
        restored = make_optimizer(adam.hyperparameters())
        restored.load_state_dict(adam.state_dict())

        assert restored.steps == 1
        assert_array_equal(
            restored.step(params, {"w": np.array([0.1, 0.1])})["w"],
            adam.step(params, {"w": np.array([0.1, 0.1])})["w"],
        )

    def test_foreign_state_is_rejected(self):
        with pytest.raises(CheckpointShapeError):
            SGD().load_state_dict({"step": np.asarray(1), "m.w": np.ones(2)})

    def test_invalid_settings(self):
        with pytest.raises(ConfigurationError):
            make_optimizer({"kind": "rmsprop"})
        with pytest.raises(ConfigurationError):
            SGD(momentum=1.0)
        with pytest.raises(ConfigurationError):
            Adam(learning_rate=-1.0)


class TestTrain:
    def test_history_and_best_model(self, dataset):
        model = tiny_model()
        config = TrainConfig(epochs=4, batch_size=4, learning_rate=0.01, record_timing=False)

        result = train(model, dataset, config)

        assert [r.epoch for r in result.history] == [1, 2, 3, 4]
        assert all(r.seconds == 0.0 for r in result.history)
        best = max(result.history, key=lambda r: r.val_acc)
        assert result.best_epoch == best.epoch
        assert result.best_val_accuracy == best.val_acc
        assert evaluate(model, dataset.val).accuracy == pytest.approx(best.val_acc)
        assert model.training

    def test_same_seed_same_run(self, dataset):
        config = TrainConfig(epochs=2, batch_size=4, seed=5, record_timing=False)
        runs = [train(tiny_model(), dataset, config) for _ in range(2)]
        assert runs[0].history == runs[1].history
        for key, value in runs[0].best_state.items():
            assert_array_equal(value, runs[1].best_state[key])

    def test_early_stopping(self, dataset):
        """With one validation sample accuracy can improve at most once."""
        single = SplitData.from_arrays(
            "val", dataset.val.images[:1], dataset.val.labels[:1]
        )
        config = TrainConfig(epochs=10, batch_size=4, learning_rate=0.0, patience=2)

        result = train(tiny_model(), Dataset(dataset.train, single, dataset.test), config)

        assert result.stopped_early
        assert len(result.history) == result.best_epoch + 2
        assert len(result.history) <= 4

    def test_non_finite_input_reports_epoch_and_batch(self, dataset):
        images = np.array(dataset.train.images)
        images[0, 0, 0, 0] = np.nan
        broken = Dataset(
            SplitData.from_arrays("train", images, dataset.train.labels),
            dataset.val,
            dataset.test,
        )
        with pytest.raises(TrainingError, match="epoch 1 batch"):
            train(tiny_model(), broken, TrainConfig(epochs=1, batch_size=4))

    def test_empty_validation_split(self, dataset):
        empty = SplitData.from_arrays("val", np.zeros((0, 1, 8, 8)), [])
        with pytest.raises(DataError, match="val"):
            train(tiny_model(), Dataset(dataset.train, empty, dataset.test), TrainConfig())

    def test_evaluate_restores_mode(self, dataset):
        model = tiny_model()
        result = evaluate(model, dataset.test, batch_size=4)
        assert model.training
        assert result.confusion.total == len(dataset.test)
        assert_allclose(result.probabilities.sum(axis=1), 1.0, atol=1e-5)

    def test_zero_learning_rate_leaves_parameters_unchanged(self, dataset):
        model = tiny_model()
        before = {name: np.array(value) for name, value in model.named_parameters()}

        train(model, dataset, TrainConfig(epochs=2, batch_size=4, learning_rate=0.0))

        for name, value in model.named_parameters():
            assert_array_equal(value, before[name])

    def test_small_step_does_not_raise_sample_loss(self, dataset):
        x, labels = dataset.train.images[:1], dataset.train.labels[:1]

        def sample_loss(model):
            tape = Tape()
            loss = cross_entropy(model(tape, tape.constant(x)), labels)
            return float(loss.value), backward(tape, loss)

        improved = 0
        for seed in range(20):
            model = tiny_model(seed)
            before, grads = sample_loss(model)
            step = Adam(learning_rate=1e-4).step(dict(model.named_parameters()), grads)
            model.assign_parameters(step)
            improved += sample_loss(model)[0] <= before
        assert improved >= 19

    def test_records_carry_epoch_field(self, dataset):
        records = []
        handler = logging.Handler()
        handler.emit = records.append
        handler.addFilter(ContextFilter())
        trainer_logger = logging.getLogger("skipnet.training.trainer")
        trainer_logger.addHandler(handler)
        level = trainer_logger.level
        trainer_logger.setLevel(logging.INFO)
        try:
            train(tiny_model(), dataset, TrainConfig(epochs=2, batch_size=4))
        finally:
            trainer_logger.removeHandler(handler)
            trainer_logger.setLevel(level)

        summaries = [r for r in records if r.getMessage().startswith("epoch ")]
        assert [r.context["epoch"] for r in summaries] == [1, 2]

    @pytest.mark.slow
    def test_overfits_small_synthetic_set(self):
        rng = np.random.default_rng(0)
        labels = [k % 3 for k in range(32)]
        images = np.stack([render_sample(k, 32, rng)[None] / 255.0 for k in labels])
        split = SplitData.from_arrays("train", images, labels)
        model = SKIPNetModel(
            ModelConfig(channels=[4, 8, 16, 32], input_size=32, hidden_units=32),
            seed=0,
        )
        config = TrainConfig(epochs=200, batch_size=8, patience=0, record_timing=False)

        train(model, Dataset(split, split, split), config)

        assert evaluate(model, split).accuracy >= 0.95


class TestReport:
    def test_metrics_csv_layout(self):
        history = [
            EpochRecord(
                epoch=1, train_loss=1.1, train_acc=0.5, val_loss=1.0, val_acc=0.25, seconds=0.0
            )
        ]
        confusion = ConfusionMatrix(np.array([[2, 0], [1, 1]]))

        text = metrics_csv(history, confusion, ["a", "b"])

        assert text.splitlines() == [
            METRICS_HEADER,
            "1,1.100000,0.500000,1.000000,0.250000,0.000",
            "",
            "confusion,a,b",
            "a,2,0",
            "b,1,1",
        ]

    def test_summary_and_confusion_entries(self):
        confusion = ConfusionMatrix(np.array([[1, 1], [0, 2]]))
        text = format_summary(
            {"accuracy": 0.75, "samples": 4, **confusion_entries(confusion, ["a", "b"])}
        )
        assert text == (
            "accuracy=0.750000\nsamples=4\novr_accuracy.a=0.750000\n"
            "ovr_accuracy.b=0.750000\nconfusion=1,1;0,2\n"
        )
