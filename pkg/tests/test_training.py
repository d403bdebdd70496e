"""Optimizer, metrics and training-loop tests, with a linearly separable
toy image set standing in for real data.
"""
import numpy as np
import pytest

from hqfnn.model import ModelConfig, init_params
from hqfnn.training import (
    AdamState,
    MetricsRecord,
    TrainConfig,
    adam_step,
    cross_entropy,
    evaluate,
    macro_metrics,
    train,
)

RNG_SEED = 5

TOY_CFG = ModelConfig(n_features=2, n_memberships=2, n_reuploads=1, n_qd_qubits=3,
                      hidden_dim=8, n_classes=2, image_size=8)


def toy_dataset(n=20, seed=0):
    """Two classes separated by which half of the image is bright."""
    rng = np.random.default_rng(seed)
    images = rng.normal(scale=0.1, size=(n, 1, 8, 8))
    labels = np.arange(n) % 2
    images[labels == 0, :, :4, :] += 1.0
    images[labels == 1, :, 4:, :] += 1.0
    return images, labels.astype(np.int64)


class TestCrossEntropy:
    def test_uniform(self):
        assert cross_entropy(np.zeros((3, 10)), np.array([0, 4, 9])) == pytest.approx(
            np.log(10.0), abs=1e-12)

    def test_saturated(self):
        logits = np.zeros((1, 4))
        logits[0, 1] = 1000.0
        assert cross_entropy(logits, np.array([1])) < 1e-6

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            cross_entropy(np.zeros((1, 3)), np.array([5]))


class TestAdam:
    def make(self, value=1.0):
        cfg = TOY_CFG
        params = init_params(cfg, seed=1)
        return params, AdamState.for_params(params)

    def test_zero_gradient_is_noop(self):
        params, state = self.make()
        before = params.copy()
        grads = {name: np.zeros_like(arr) for name, arr in params.named_tensors()}
        adam_step(params, grads, state, lr=0.1)
        for name, arr in params.named_tensors():
            assert np.array_equal(arr, getattr(before, name))
            assert np.all(state.m[name] == 0.0) and np.all(state.v[name] == 0.0)

    def test_first_step_is_signed_lr(self):
        """After one step the bias-corrected moments give m^ = g, v^ = g^2,
        so the update is -lr * sign(g) up to eps."""
        params, state = self.make()
        rng = np.random.default_rng(RNG_SEED)
        before = params.copy()
        grads = {name: rng.normal(size=arr.shape) + np.sign(rng.normal(size=arr.shape)) * 0.5
                 for name, arr in params.named_tensors()}
        lr = 0.01
        adam_step(params, grads, state, lr=lr)
        for name, arr in params.named_tensors():
            delta = arr - getattr(before, name)
            expected = -lr * np.sign(grads[name])
            assert np.max(np.abs(delta - expected)) < lr * 1e-3

    def test_two_steps_match_scalar_reference(self):
        """Hand-computed scalar Adam trace, two identical steps, 1e-12."""
        g, lr, b1, b2, eps = 0.3, 0.05, 0.9, 0.999, 1e-8
        theta, m, v = 0.0, 0.0, 0.0
        for t in (1, 2):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        params, state = self.make()
        for name, arr in params.named_tensors():
            arr[...] = 0.0
        grads = {name: np.full(arr.shape, g) for name, arr in params.named_tensors()}
        adam_step(params, grads, state, lr=lr)
        adam_step(params, grads, state, lr=lr)
        for name, arr in params.named_tensors():
            assert np.max(np.abs(arr - theta)) < 1e-12


class TestMetrics:
    def test_all_correct(self):
        p, r, f = macro_metrics(np.array([0, 1, 2]), np.array([0, 1, 2]), 3)
        assert p == r == f == 1.0

    def test_binary_confusion_example(self):
        """Samples (pred 1, label 1) and (pred 1, label 0): class 1 has
        TP=1 FP=1 FN=0, so precision 0.5, recall 1, F1 = 2/3."""
        predictions = np.array([1, 1])
        labels = np.array([1, 0])
        tp = int(np.sum((predictions == 1) & (labels == 1)))
        fp = int(np.sum((predictions == 1) & (labels == 0)))
        fn = int(np.sum((predictions != 1) & (labels == 1)))
        assert (tp, fp, fn) == (1, 1, 0)
        precision_1 = tp / (tp + fp)
        recall_1 = tp / (tp + fn)
        f1_1 = 2 * precision_1 * recall_1 / (precision_1 + recall_1)
        assert precision_1 == 0.5 and recall_1 == 1.0 and f1_1 == pytest.approx(2 / 3)
        # the macro average folds in class 0 with zero scores
        p, r, f = macro_metrics(predictions, labels, 2)
        assert p == pytest.approx(precision_1 / 2)
        assert r == pytest.approx(recall_1 / 2)
        assert f == pytest.approx(f1_1 / 2)

    def test_absent_class_contributes_zero(self):
        p, r, f = macro_metrics(np.array([0, 0]), np.array([0, 0]), 3)
        assert p == pytest.approx(1 / 3) and r == pytest.approx(1 / 3)

    def test_accuracy_matches_counting_loop(self):
        rng = np.random.default_rng(RNG_SEED)
        images, labels = toy_dataset(12)
        params = init_params(TOY_CFG, seed=2)
        rec = evaluate(params, TOY_CFG, images, labels, batch_size=5)
        from hqfnn.model import model_forward
        correct = 0
        for i in range(12):
            logits, _ = model_forward(images[i:i + 1], params, TOY_CFG)
            if int(logits.argmax()) == labels[i]:
                correct += 1
        assert rec.accuracy == pytest.approx(correct / 12)

    def test_metric_bounds_random(self):
        rng = np.random.default_rng(RNG_SEED)
        p, r, f = macro_metrics(rng.integers(0, 4, 50), rng.integers(0, 4, 50), 4)
        for value in (p, r, f):
            assert 0.0 <= value <= 1.0

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            evaluate(init_params(TOY_CFG, seed=0), TOY_CFG,
                     np.zeros((0, 1, 8, 8)), np.zeros(0, dtype=np.int64))


class TestTrainLoop:
    def test_zero_lr_keeps_params(self):
        images, labels = toy_dataset(8)
        params = init_params(TOY_CFG, seed=3)
        before = params.copy()
        cfg = TrainConfig(batch_size=4, lr0=0.0, epochs=1, milestones=(), seed=0)
        result = train(images, labels, images, labels, params, TOY_CFG, cfg)
        for name, arr in params.named_tensors():
            assert np.array_equal(arr, getattr(before, name)), name
        assert len(result.history) == 1
        assert np.isfinite(result.history[0].loss)

    def test_learns_separable_toy_set(self):
        """100% training accuracy on 20 separable samples within 50 epochs,
        and the loss at epoch 10 is below the epoch-1 loss."""
        images, labels = toy_dataset(20)
        params = init_params(TOY_CFG, seed=4)
        cfg = TrainConfig(batch_size=10, lr0=0.02, epochs=50, milestones=(), seed=1)
        result = train(images, labels, images, labels, params, TOY_CFG, cfg)
        best = evaluate(result.best_params, TOY_CFG, images, labels)
        assert best.accuracy == 1.0
        assert result.history[9].loss < result.history[0].loss

    def test_milestone_schedule(self):
        """Milestone at epoch 2 of 3: rates (lr0, lr0, 0.1 lr0); the decay
        lands after the milestone epoch's updates."""
        images, labels = toy_dataset(6)
        params = init_params(TOY_CFG, seed=5)
        cfg = TrainConfig(batch_size=6, lr0=0.001, epochs=3, milestones=(2,), seed=0)
        result = train(images, labels, images, labels, params, TOY_CFG, cfg)
        np.testing.assert_allclose(result.lr_schedule, [0.001, 0.001, 0.0001])

    def test_schedule_power_rule(self):
        """Rate during epoch t is lr0 * 0.1^(number of milestones before t)."""
        images, labels = toy_dataset(6)
        params = init_params(TOY_CFG, seed=6)
        cfg = TrainConfig(batch_size=6, lr0=0.01, epochs=5, milestones=(1, 3), seed=0)
        result = train(images, labels, images, labels, params, TOY_CFG, cfg)
        expected = [0.01 * 0.1 ** sum(1 for s in (1, 3) if s < t) for t in range(1, 6)]
        np.testing.assert_allclose(result.lr_schedule, expected)

    def test_seed_determinism(self):
        images, labels = toy_dataset(10)
        cfg = TrainConfig(batch_size=5, lr0=0.01, epochs=3, milestones=(), seed=9)
        histories = []
        for _ in range(2):
            params = init_params(TOY_CFG, seed=7)
            result = train(images, labels, images, labels, params, TOY_CFG, cfg)
            histories.append([(r.epoch, r.loss, r.accuracy, r.precision, r.recall, r.f1)
                              for r in result.history])
        assert histories[0] == histories[1]

    def test_best_checkpoint_retained(self):
        images, labels = toy_dataset(10)
        params = init_params(TOY_CFG, seed=8)
        cfg = TrainConfig(batch_size=5, lr0=0.02, epochs=6, milestones=(), seed=2)
        result = train(images, labels, images, labels, params, TOY_CFG, cfg)
        best = evaluate(result.best_params, TOY_CFG, images, labels)
        assert best.accuracy == pytest.approx(result.best_val_accuracy)
        assert result.best_val_accuracy >= max(r.accuracy for r in result.history) - 1e-12

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train(np.zeros((0, 1, 8, 8)), np.zeros(0, dtype=np.int64),
                  np.zeros((0, 1, 8, 8)), np.zeros(0, dtype=np.int64),
                  init_params(TOY_CFG, seed=0), TOY_CFG, TrainConfig(epochs=1, milestones=()))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr0=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=10, milestones=(0,))
        # milestones past the horizon never fire but are accepted
        assert TrainConfig(epochs=10).milestones == (100, 150)


def test_metrics_record_invariants():
    rec = MetricsRecord(epoch=1, loss=0.5, accuracy=0.9, precision=0.8, recall=0.7, f1=0.74)
    for value in (rec.accuracy, rec.precision, rec.recall, rec.f1):
        assert 0.0 <= value <= 1.0
    assert rec.loss >= 0.0
