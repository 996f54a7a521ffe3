import numpy as np
import pytest

from weavecount.nn import Adam, Tensor, adam_update, build_model, evaluate, toy_config, train
from weavecount.nn.train import _to_arrays
from weavecount.dataset import WeaveParams, synth_fabric


class TestAdamUpdate:
    def test_zero_gradient_keeps_weights(self):
        # from a fresh state a zero gradient moves nothing
        w = np.array([1.0, -2.0])
        w2, m2, v2 = adam_update(w, np.zeros(2), np.zeros(2), np.zeros(2), t=1)
        assert np.array_equal(w2, w)
        assert np.all(m2 == 0) and np.all(v2 == 0)
        # accumulated moments decay by their betas under a zero gradient
        _, m3, v3 = adam_update(w, np.zeros(2), np.array([0.5, 0.5]), np.array([0.25, 0.25]), t=3)
        assert np.allclose(m3, 0.9 * 0.5)
        assert np.allclose(v3, 0.999 * 0.25)

    def test_constant_gradient_step_approaches_lr(self):
        w = np.array([0.0])
        m = np.zeros(1)
        v = np.zeros(1)
        g = np.array([0.37])
        prev = w
        for t in range(1, 400):
            w, m, v = adam_update(w, g, m, v, t, lr=1e-3)
            step = prev - w
            prev = w
        # steady-state Adam step for a constant gradient is lr
        assert step[0] == pytest.approx(1e-3, rel=1e-3)

    def test_scalar_quadratic_converges(self):
        # minimize (w - 0.5)^2 with analytic gradient 2(w - 0.5); Adam's
        # per-step movement is ~lr, so 2000 steps cover the distance and
        # anneal well below 1e-4
        w = np.array([0.0])
        m = np.zeros(1)
        v = np.zeros(1)
        for t in range(1, 2001):
            g = 2.0 * (w - 0.5)
            w, m, v = adam_update(w, g, m, v, t, lr=1e-3)
        assert abs(w[0] - 0.5) < 1e-4

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_update(np.zeros(2), np.zeros(3), np.zeros(2), np.zeros(2), 1)


class TestAdamClass:
    def test_step_uses_grad_and_zero_grad_clears(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam([p], lr=0.1)
        p.grad = np.array([1.0])
        opt.step()
        assert p.data[0] < 1.0
        opt.zero_grad()
        assert p.grad is None


def _tiny_dataset(count, seed0, size=48):
    out = []
    for i in range(count):
        rng = np.random.default_rng(seed0 + i)
        params = WeaveParams(
            h_density=float(rng.uniform(9, 14)),
            v_density=float(rng.uniform(9, 14)),
            noise_sigma=0.02,
            thread_width_ratio=0.5,
            seed=seed0 + i,
        )
        sample = synth_fabric(params, size=size)
        out.append((sample.image.pixels, sample.mask.astype(float)))
    return out


class TestTrainLoop:
    def test_early_stop_contract_decreasing_accuracy(self, monkeypatch):
        # With validation accuracy strictly decreasing from epoch 1, the
        # run must stop after epoch 1 + patience and restore epoch-1 state.
        net = build_model(toy_config("inc-dice", 2, 1), seed=0)
        data = _tiny_dataset(4, 100, size=32)

        fake_scores = iter([0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2])
        state_at_epoch1 = {}

        import importlib

        train_mod = importlib.import_module("weavecount.nn.train")

        def fake_evaluate(net_, x, y, batch=8):
            score = next(fake_scores)
            if not state_at_epoch1:
                state_at_epoch1.update(net_.export_state())
            return 0.0, score

        monkeypatch.setattr(train_mod, "evaluate", fake_evaluate)
        history = train_mod.train(net, data, data, batch=2, patience=5, max_epochs=50, seed=0)
        assert len(history.records) == 6  # epoch 1 best + 5 failures
        assert history.stopped_early
        assert history.best_epoch == 1
        restored = net.export_state()
        for name, arr in state_at_epoch1.items():
            assert np.array_equal(restored[name], arr)

    def test_training_improves_over_untrained(self):
        train_set = _tiny_dataset(24, 0)
        val_set = _tiny_dataset(8, 500)
        net = build_model(toy_config("inc-dice", 3, 2), seed=1)
        x_val, y_val = _to_arrays(val_set)
        loss_before, acc_before = evaluate(net, x_val, y_val)
        history = train(net, train_set, val_set, batch=8, patience=5, max_epochs=8, seed=0)
        loss_after, acc_after = evaluate(net, x_val, y_val)
        assert acc_after > acc_before
        assert loss_after < loss_before
        assert len(history.records) <= 8

    def test_fixed_seed_reproducible_history(self):
        train_set = _tiny_dataset(12, 50, size=32)
        val_set = _tiny_dataset(4, 700, size=32)
        histories = []
        for _ in range(2):
            net = build_model(toy_config("inc-dice", 2, 1), seed=3)
            history = train(net, train_set, val_set, batch=4, patience=5, max_epochs=3, seed=9)
            histories.append([(r.train_loss, r.val_accuracy) for r in history.records])
        assert histories[0] == histories[1]

    def test_empty_dataset_rejected(self):
        net = build_model(toy_config("inc-dice", 2, 1), seed=0)
        with pytest.raises(ValueError):
            train(net, [], _tiny_dataset(2, 0, size=32), max_epochs=1)

    def test_history_csv(self, tmp_path):
        net = build_model(toy_config("inc-dice", 2, 1), seed=0)
        data = _tiny_dataset(4, 30, size=32)
        history = train(net, data, data, batch=2, patience=5, max_epochs=2, seed=0)
        path = tmp_path / "history.csv"
        history.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,train_loss,val_accuracy"
        assert len(lines) == 1 + len(history.records)
