from __future__ import annotations

import numpy as np
import pytest

from affectfuse.errors import NumericError, ParameterError
from affectfuse.seqmodel import (
    Adam,
    RegressorConfig,
    SequenceModel,
    ccc_guarded,
    ccc_loss,
    cross_entropy_loss,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

from _oracles import fd_gradient


def _toy_regression(rng, n_items=6, t=20, d=3):
    items = []
    for _ in range(n_items):
        x = rng.normal(size=(t, d))
        y = np.tanh(x @ np.array([0.5, -0.3, 0.2])) + 0.1 * rng.normal(size=t)
        items.append((x, y))
    return items


def _toy_classification(rng, n_items=10, t=15, d=3, n_classes=5):
    items = []
    for i in range(n_items):
        label = i % n_classes
        x = rng.normal(size=(t, d)) + label * 0.5
        items.append((x, label))
    return items


class TestConfig:
    def test_validation(self):
        with pytest.raises(ParameterError):
            RegressorConfig(input_dim=0)
        with pytest.raises(ParameterError):
            RegressorConfig(input_dim=3, hidden_dim=0)
        with pytest.raises(ParameterError):
            RegressorConfig(input_dim=3, layers=0)
        with pytest.raises(ParameterError):
            RegressorConfig(input_dim=3, head="ranking")
        with pytest.raises(ParameterError):
            RegressorConfig(input_dim=3, learning_rate=0.0)
        with pytest.raises(ParameterError):
            RegressorConfig(input_dim=3, patience=-1)


class TestInit:
    def test_param_count_formula(self):
        # per direction and layer: W (d_in x 4h) + U (h x 4h) + b (4h)
        cfg = RegressorConfig(input_dim=3, hidden_dim=4, layers=2, bidirectional=True)
        model = SequenceModel(cfg)
        h = 4
        layer1 = 2 * (3 * 4 * h + h * 4 * h + 4 * h)  # both directions read 3 dims
        layer2 = 2 * (2 * h * 4 * h + h * 4 * h + 4 * h)  # reads the 2h concat
        head = 2 * h + 1
        assert model.param_count() == layer1 + layer2 + head == 681

    def test_param_count_classification_head(self):
        cfg = RegressorConfig(
            input_dim=3, hidden_dim=4, layers=2, bidirectional=True, head="classification"
        )
        assert SequenceModel(cfg).param_count() == 717

    def test_deterministic_init(self):
        cfg = RegressorConfig(input_dim=3, hidden_dim=8, seed=9)
        m1, m2 = SequenceModel(cfg), SequenceModel(cfg)
        for name in m1.param_names:
            assert np.array_equal(m1.params[name], m2.params[name])

    def test_forget_gate_bias_offset(self):
        cfg = RegressorConfig(input_dim=3, hidden_dim=5)
        model = SequenceModel(cfg)
        b = model.params["l0f_b"]
        h = 5
        scale = 1.0 / np.sqrt(h)
        # forget slice carries the +1 offset; the other gates stay within
        # the init range
        assert np.all(b[h : 2 * h] > 1.0 - scale)
        assert np.all(np.abs(np.concatenate([b[:h], b[2 * h :]])) <= scale)


class TestCccLoss:
    def test_perfect_prediction_near_zero(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=50)
        loss, _ = ccc_loss(y, y)
        assert loss == pytest.approx(0.0, abs=1e-9)

    def test_sign_flip_near_two(self):
        rng = np.random.default_rng(2)
        y = rng.normal(size=80)
        y = y - y.mean()
        loss, _ = ccc_loss(-y, y)
        assert loss == pytest.approx(2.0, abs=1e-9)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        pred = rng.normal(size=30)
        gold = rng.normal(size=30)
        _, grad = ccc_loss(pred, gold)
        num = fd_gradient(lambda p: ccc_loss(p, gold)[0], pred)
        assert np.allclose(grad, num, atol=1e-7)

    def test_guarded_ccc_handles_constant(self):
        assert ccc_guarded(np.ones(10), np.arange(10.0)) == pytest.approx(0.0, abs=1e-6)


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss, grad = cross_entropy_loss(np.zeros(5), 2)
        assert loss == pytest.approx(np.log(5.0))
        expect = np.full(5, 0.2)
        expect[2] -= 1.0
        assert np.allclose(grad, expect)

    def test_large_logits_stable(self):
        logits = np.array([1e4, 0.0, -1e4])
        loss, grad = cross_entropy_loss(logits, 0)
        assert np.isfinite(loss)
        assert loss == pytest.approx(0.0, abs=1e-30)
        assert np.all(np.isfinite(grad))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        logits = rng.normal(size=5)
        _, grad = cross_entropy_loss(logits, 3)
        num = fd_gradient(lambda z: cross_entropy_loss(z, 3)[0], logits)
        assert np.allclose(grad, num, atol=1e-8)


class TestGradients:
    def _check_model(self, cfg, batch, tol=1e-4):
        model = SequenceModel(cfg)
        _, grads = model.loss_and_grads(batch)
        flat_analytic = model.flat_grads(grads)

        def loss_at(theta):
            saved = model.flat_params()
            model.set_flat_params(theta)
            loss, _ = model.loss_and_grads(batch)
            model.set_flat_params(saved)
            return loss

        theta0 = model.flat_params()
        rng = np.random.default_rng(0)
        idx = rng.choice(theta0.size, size=min(60, theta0.size), replace=False)
        for i in idx:
            step = np.zeros_like(theta0)
            step[i] = 1e-5
            num = (loss_at(theta0 + step) - loss_at(theta0 - step)) / 2e-5
            denom = max(abs(num), abs(flat_analytic[i]), 1e-8)
            assert abs(num - flat_analytic[i]) / denom < tol

    def test_regression_gradients(self):
        rng = np.random.default_rng(5)
        cfg = RegressorConfig(input_dim=3, hidden_dim=4, layers=1, seed=2)
        batch = [(rng.normal(size=(12, 3)), rng.normal(size=12)) for _ in range(2)]
        self._check_model(cfg, batch)

    def test_bidirectional_with_l2_gradients(self):
        rng = np.random.default_rng(6)
        cfg = RegressorConfig(
            input_dim=3, hidden_dim=4, layers=2, bidirectional=True, l2_penalty=0.01, seed=3
        )
        batch = [(rng.normal(size=(10, 3)), rng.normal(size=10))]
        self._check_model(cfg, batch)

    def test_classification_gradients(self):
        rng = np.random.default_rng(7)
        cfg = RegressorConfig(input_dim=3, hidden_dim=4, head="classification", seed=4)
        batch = [(rng.normal(size=(9, 3)), 2), (rng.normal(size=(9, 3)), 4)]
        self._check_model(cfg, batch)

    def test_l2_applies_to_weights_not_biases(self):
        rng = np.random.default_rng(8)
        cfg0 = RegressorConfig(input_dim=3, hidden_dim=4, l2_penalty=0.0, seed=5)
        cfg1 = RegressorConfig(input_dim=3, hidden_dim=4, l2_penalty=0.5, seed=5)
        batch = [(rng.normal(size=(8, 3)), rng.normal(size=8))]
        m0, m1 = SequenceModel(cfg0), SequenceModel(cfg1)
        loss0, g0 = m0.loss_and_grads(batch)
        loss1, g1 = m1.loss_and_grads(batch)
        w_sq = sum(
            float(np.sum(m0.params[n] ** 2)) for n in m0.param_names if not n.endswith("_b")
        )
        assert loss1 - loss0 == pytest.approx(0.5 * w_sq, rel=1e-9)
        for n in m0.param_names:
            if n.endswith("_b"):
                assert np.allclose(g0[n], g1[n])
            else:
                assert np.allclose(g1[n] - g0[n], 2 * 0.5 * m0.params[n])


class TestForward:
    def test_regression_output_shape(self):
        cfg = RegressorConfig(input_dim=4, hidden_dim=6)
        model = SequenceModel(cfg)
        out = model.predict(np.zeros((25, 4)))
        assert out.shape == (25,)

    def test_classification_logits_and_argmax(self):
        cfg = RegressorConfig(input_dim=4, hidden_dim=6, head="classification", n_classes=5)
        model = SequenceModel(cfg)
        x = np.random.default_rng(1).normal(size=(12, 4))
        out, _ = model.forward(x)
        assert out.shape == (5,)
        assert model.predict_class(x) == int(np.argmax(out))

    def test_wrong_input_width_rejected(self):
        model = SequenceModel(RegressorConfig(input_dim=4))
        with pytest.raises(ParameterError):
            model.predict(np.zeros((10, 3)))

    def test_bidirectional_uses_future_context(self):
        # flipping a late frame changes an early prediction only for the
        # bidirectional model
        rng = np.random.default_rng(9)
        x = rng.normal(size=(20, 3))
        x2 = x.copy()
        x2[-1] += 5.0
        uni = SequenceModel(RegressorConfig(input_dim=3, hidden_dim=6, seed=7))
        bi = SequenceModel(
            RegressorConfig(input_dim=3, hidden_dim=6, bidirectional=True, seed=7)
        )
        assert uni.predict(x)[0] == uni.predict(x2)[0]
        assert bi.predict(x)[0] != bi.predict(x2)[0]


class TestAdam:
    def test_single_step_hand_computed(self):
        cfg = RegressorConfig(input_dim=2, hidden_dim=3, learning_rate=0.1, seed=1)
        model = SequenceModel(cfg)
        before = model.params["head_W"].copy()
        grads = {n: np.zeros_like(p) for n, p in model.params.items()}
        grads["head_W"] = np.ones_like(before)
        adam = Adam(model)
        adam.step(model, grads)
        # with m_hat = g and v_hat = g*g, the first update is lr * g/(|g|+eps)
        expect = before - 0.1 * 1.0 / (1.0 + 1e-8)
        assert np.allclose(model.params["head_W"], expect, atol=1e-12)
        assert adam.t == 1

    def test_zero_grad_leaves_params(self):
        model = SequenceModel(RegressorConfig(input_dim=2, hidden_dim=3))
        adam = Adam(model)
        before = model.snapshot()
        adam.step(model, {n: np.zeros_like(p) for n, p in model.params.items()})
        for n, p in model.params.items():
            assert np.array_equal(p, before[n])


class TestTraining:
    def test_loss_decreases_on_learnable_data(self):
        rng = np.random.default_rng(10)
        items = _toy_regression(rng)
        cfg = RegressorConfig(
            input_dim=3, hidden_dim=8, learning_rate=5e-3, max_epochs=30, patience=30, seed=11
        )
        model = SequenceModel(cfg)
        history = train(model, items, items)
        losses = [row[1] for row in history.rows]
        assert losses[-1] < losses[0]
        assert history.best_metric() > 0.3

    def test_patience_zero_stops_at_first_non_improvement(self):
        rng = np.random.default_rng(11)
        items = _toy_regression(rng, n_items=3)
        # lr so small nothing changes: epoch 2 cannot improve on epoch 1
        cfg = RegressorConfig(
            input_dim=3, hidden_dim=4, learning_rate=1e-30, max_epochs=50, patience=0, seed=12
        )
        history = train(SequenceModel(cfg), items, items)
        assert history.stopped_early
        assert len(history.rows) == 2

    def test_best_snapshot_restored(self):
        rng = np.random.default_rng(12)
        items = _toy_regression(rng, n_items=4)
        cfg = RegressorConfig(
            input_dim=3, hidden_dim=6, learning_rate=5e-3, max_epochs=15, patience=15, seed=13
        )
        model = SequenceModel(cfg)
        history = train(model, items, items)
        assert evaluate(model, items) == pytest.approx(history.best_metric(), abs=1e-12)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_gold_raises_numeric_error(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(10, 3))
        y = np.full(10, 1e200)
        y[0] = -1e200
        cfg = RegressorConfig(
            input_dim=3, hidden_dim=4, learning_rate=1e-2, max_epochs=5, patience=5, seed=14
        )
        with pytest.raises(NumericError):
            train(SequenceModel(cfg), [(x, y)], [(x, y)])

    def test_empty_training_set_rejected(self):
        model = SequenceModel(RegressorConfig(input_dim=3))
        with pytest.raises(ParameterError):
            train(model, [], [])

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(14)
        items = _toy_regression(rng, n_items=4)
        cfg = RegressorConfig(
            input_dim=3, hidden_dim=5, learning_rate=2e-3, max_epochs=8, patience=8, seed=21
        )
        m1, m2 = SequenceModel(cfg), SequenceModel(cfg)
        h1 = train(m1, items, items)
        h2 = train(m2, items, items)
        assert h1.rows == h2.rows
        for n in m1.param_names:
            assert np.array_equal(m1.params[n], m2.params[n])

    def test_classification_training_improves_f1(self):
        rng = np.random.default_rng(15)
        items = _toy_classification(rng, n_items=20)
        cfg = RegressorConfig(
            input_dim=3,
            hidden_dim=8,
            head="classification",
            learning_rate=1e-2,
            max_epochs=40,
            patience=40,
            batch_size=4,
            seed=16,
        )
        model = SequenceModel(cfg)
        before = evaluate(model, items)
        history = train(model, items, items)
        assert history.best_metric() > before
        assert history.best_metric() > 0.8


class TestHistory:
    def test_csv_format(self, tmp_path):
        from affectfuse.seqmodel import TrainHistory

        history = TrainHistory(rows=[(1, 0.5, 0.1), (2, 0.25, 0.4)], best_epoch=2)
        path = tmp_path / "history.csv"
        history.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,train_loss,devel_metric"
        assert lines[1] == "1,0.5,0.1"
        assert history.best_metric() == 0.4

    def test_best_metric_unknown_epoch(self):
        from affectfuse.seqmodel import TrainHistory

        assert TrainHistory().best_metric() == float("-inf")


class TestCheckpoint:
    def test_roundtrip_exact(self, tmp_path):
        cfg = RegressorConfig(input_dim=3, hidden_dim=5, bidirectional=True, seed=31)
        model = SequenceModel(cfg)
        adam = Adam(model)
        rng = np.random.default_rng(17)
        batch = [(rng.normal(size=(8, 3)), rng.normal(size=8))]
        _, grads = model.loss_and_grads(batch)
        adam.step(model, grads)
        path = tmp_path / "model.json"
        save_checkpoint(path, model, adam)
        back, adam2 = load_checkpoint(path)
        assert back.config == cfg
        for n in model.param_names:
            assert np.array_equal(back.params[n], model.params[n])
        assert adam2 is not None
        assert adam2.t == 1
        for n in model.param_names:
            assert np.array_equal(adam2.m[n], adam.m[n])
            assert np.array_equal(adam2.v[n], adam.v[n])

    def test_roundtrip_without_optimizer(self, tmp_path):
        model = SequenceModel(RegressorConfig(input_dim=2, hidden_dim=3))
        path = tmp_path / "model.json"
        save_checkpoint(path, model)
        back, adam = load_checkpoint(path)
        assert adam is None
        x = np.random.default_rng(0).normal(size=(6, 2))
        assert np.array_equal(back.predict(x), model.predict(x))

    def test_rejects_foreign_payload(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"kind": "class_model", "format_version": 1}\n')
        with pytest.raises(ParameterError):
            load_checkpoint(path)

    def test_deterministic_bytes(self, tmp_path):
        model = SequenceModel(RegressorConfig(input_dim=2, hidden_dim=3, seed=5))
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_checkpoint(p1, model)
        save_checkpoint(p2, model)
        assert p1.read_bytes() == p2.read_bytes()
