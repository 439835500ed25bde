import json
from dataclasses import replace

import numpy as np
import pytest
import torch

from conftest import double_model, random_inputs, tiny_config
from loadlens.dataset import SyntheticSpec, WindowSet, generate_synthetic, window_set
from loadlens.errors import (
    EmptySplit,
    KernelTooLarge,
    LengthMismatch,
    NotTrained,
    ShapeMismatch,
    ValidationError,
)
from loadlens.model import (
    CHECKPOINT_VERSION,
    AdditiveForecaster,
    TrainConfig,
    assemble_inputs,
    file_hash,
    forecast_sample,
    load_checkpoint,
    mse_loss,
    persistence_forecast,
    positional_encoding,
    predict,
    prepare_inputs,
    read_checkpoint_meta,
    save_checkpoint,
    train,
)
from loadlens.pipeline import prepare_data


class TestAssembleInputs:
    def test_shapes_and_columns(self):
        t, r, f = np.arange(4.0), -np.arange(4.0), np.full(4, 9.0)
        t_in, r_in = assemble_inputs(t, r, f)
        assert t_in.shape == r_in.shape == (4, 2)
        np.testing.assert_array_equal(t_in[:, 0], t)
        np.testing.assert_array_equal(r_in[:, 0], r)
        np.testing.assert_array_equal(t_in[:, 1], f)

    def test_zero_feature_and_swap(self):
        t, r = np.arange(4.0), np.ones(4)
        t_in, r_in = assemble_inputs(t, r, np.zeros(4))
        assert not t_in[:, 1].any()
        s_t, s_r = assemble_inputs(r, t, np.zeros(4))
        np.testing.assert_array_equal(s_t, r_in)
        np.testing.assert_array_equal(s_r, t_in)

    def test_torch_batches(self):
        x = torch.zeros(3, 5)
        t_in, _ = assemble_inputs(x, x, x)
        assert t_in.shape == (3, 5, 2)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            assemble_inputs(np.zeros(4), np.zeros(4), np.zeros(3))


class TestForward:
    def test_combiner_cases(self):
        cfg = tiny_config()
        m = double_model(cfg)
        x = random_inputs(cfg)
        with torch.no_grad():
            tr, rs = m.branch_outputs(*x)
            m.alpha.zero_()
            m.beta.zero_()
            assert torch.equal(m(*x), torch.zeros(5, cfg.T, dtype=torch.float64))
            m.alpha.copy_(torch.tensor([0.0, 1.0]))
            torch.testing.assert_close(m(*x), tr[:, 1], rtol=0, atol=1e-14)
            once = m(*x)
            m.alpha.mul_(2)
            torch.testing.assert_close(m(*x), 2 * once, rtol=0, atol=1e-13)

    def test_linear_in_combiners(self):
        cfg = tiny_config()
        m = double_model(cfg)
        x = random_inputs(cfg, seed=3)
        c1 = (torch.tensor([0.3, -1.2], dtype=torch.float64), torch.tensor([0.5, 2.0], dtype=torch.float64))
        c2 = (torch.tensor([-0.7, 0.1], dtype=torch.float64), torch.tensor([1.5, -0.4], dtype=torch.float64))

        def run(a, b):
            with torch.no_grad():
                m.alpha.copy_(a)
                m.beta.copy_(b)
                return m(*x)

        torch.testing.assert_close(run(c1[0] + c2[0], c1[1] + c2[1]), run(*c1) + run(*c2), rtol=0, atol=1e-6)

    def test_shape_checks(self):
        cfg = tiny_config()
        m = double_model(cfg)
        tr, rs, ft = random_inputs(cfg)
        with pytest.raises(ShapeMismatch):
            m(tr[:, :1], rs[:, :1], ft)
        with pytest.raises(ShapeMismatch):
            m(tr, rs, ft[..., :2])

    def test_initial_combiners(self):
        m = AdditiveForecaster(tiny_config(kernels=(3, 5, 7)))
        assert torch.allclose(m.alpha, torch.full((3,), 1 / 6))
        assert torch.allclose(m.beta, torch.full((3,), 1 / 6))
        assert torch.allclose(m.features.gamma, torch.full((3,), 1 / 3))

    def test_combiner_gradients_match_finite_differences(self):
        cfg = tiny_config()
        m = double_model(cfg)
        x = random_inputs(cfg, seed=1)
        y = torch.randn(5, cfg.T, dtype=torch.float64, generator=torch.Generator().manual_seed(9))
        m.zero_grad()
        mse_loss(m(*x), y).backward()
        h = 1e-6
        for param in (m.alpha, m.beta, m.features.gamma):
            for i in range(param.numel()):
                with torch.no_grad():
                    param[i] += h
                    up = float(mse_loss(m(*x), y))
                    param[i] -= 2 * h
                    down = float(mse_loss(m(*x), y))
                    param[i] += h
                fd, an = (up - down) / (2 * h), float(param.grad[i])
                assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an)) + 1e-10

    def test_positional_encoding_depends_only_on_shape(self):
        assert torch.equal(positional_encoding(16, 8), positional_encoding(16, 8))
        assert positional_encoding(16, 8).shape == (16, 8)


class TestConfig:
    def test_kernel_larger_than_window(self):
        with pytest.raises(KernelTooLarge):
            tiny_config(kernels=(17,))

    def test_cannot_drop_everything(self):
        with pytest.raises(ValidationError):
            tiny_config(kernels=(3,), drop_trend=(3,), drop_residual=(3,))

    def test_round_trip(self):
        cfg = tiny_config(drop_trend=(3,))
        assert type(cfg).from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


class TestMseLoss:
    def test_examples(self):
        assert mse_loss(np.ones((2, 3)), np.ones((2, 3))) == 0.0
        assert mse_loss(np.array([[2.0, 4.0]]), np.array([[1.0, 2.0]])) == 2.5
        assert float(mse_loss(torch.tensor([[2.0, 4.0]]), torch.tensor([[1.0, 2.0]]))) == 2.5

    def test_scaling_identity(self, rng):
        yhat, y = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
        sigma, mu = 3.7, -1.2
        scaled = mse_loss(sigma * yhat + mu, sigma * y + mu)
        assert mse_loss(yhat, y) == pytest.approx(scaled / sigma**2, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            mse_loss(np.zeros((2, 3)), np.zeros((3, 2)))


@pytest.fixture(scope="module")
def data():
    ds = generate_synthetic(SyntheticSpec(length=300, seed=4, seasonal={12: 1.0, 24: 0.5},
                                          coupling={"temperature": 0.8}, noise_std=0.05))
    return prepare_data(ds, P=16, T=4)


def small_cfg(data, **kw):
    return tiny_config(feature_names=data.train.feature_names, **kw)


class TestTraining:
    def test_smoke_one_epoch_eight_samples(self, data):
        ws = data.train_windows
        eight = WindowSet(ws.origins[:8], ws.load[:8], ws.features[:8], ws.target[:8], ws.feature_names)
        tm = train(AdditiveForecaster(small_cfg(data)), eight, data.val_windows, TrainConfig(epochs=1, batch_size=4))
        assert len(tm.log) == 1
        row = tm.log[0]
        assert np.isfinite(row["train_mse"]) and np.isfinite(row["val_mse"])
        assert row["train_loss_per_window"] == pytest.approx(row["train_mse"] * 4)

    def test_empty_split(self, data):
        ws = data.train_windows
        empty = WindowSet(ws.origins[:0], ws.load[:0], ws.features[:0], ws.target[:0], ws.feature_names)
        with pytest.raises(EmptySplit):
            train(AdditiveForecaster(small_cfg(data)), empty, data.val_windows)

    def test_same_seed_same_result(self, data, tmp_path):
        cfg, tcfg = small_cfg(data, seed=5), TrainConfig(epochs=2, seed=5)
        a = train(AdditiveForecaster(cfg), data.train_windows, data.val_windows, tcfg, data.stats)
        b = train(AdditiveForecaster(cfg), data.train_windows, data.val_windows, tcfg, data.stats)
        assert a.log == b.log
        assert save_checkpoint(a, tmp_path / "a.ckpt") == save_checkpoint(b, tmp_path / "b.ckpt")

    def test_early_stopping_keeps_best(self, data):
        tm = train(AdditiveForecaster(small_cfg(data)), data.train_windows, data.val_windows,
                   TrainConfig(epochs=40, patience=2, lr=5e-2))
        best = min(r["val_mse"] for r in tm.log)
        val = mse_loss(predict(tm, data.val_windows), data.val_windows.target)
        assert val == pytest.approx(best, rel=1e-5)

    def test_ablation_variants_train(self, data):
        for kw in ({"raw_inputs": True}, {"trend_branches": False}, {"residual_branches": False},
                   {"drop_trend": (3,)}):
            cfg = small_cfg(data, **kw)
            tm = train(AdditiveForecaster(cfg), data.train_windows, data.val_windows, TrainConfig(epochs=1))
            assert predict(tm, data.test_windows).shape == (len(data.test_windows), 4)

    def test_raw_inputs_feed_undecomposed_load(self, data):
        inputs = prepare_inputs(small_cfg(data, raw_inputs=True), data.val_windows)
        load = torch.as_tensor(data.val_windows.load, dtype=torch.float32)
        for i in range(2):
            assert torch.equal(inputs.trends[:, i], load)
            assert torch.equal(inputs.residuals[:, i], load)


@pytest.fixture(scope="module")
def trained(data):
    return train(AdditiveForecaster(small_cfg(data)), data.train_windows, data.val_windows,
                 TrainConfig(epochs=2), data.stats)


class TestPredict:
    def test_untrained(self, data):
        with pytest.raises(NotTrained):
            predict(AdditiveForecaster(small_cfg(data)), data.test_windows)

    def test_single_window(self, trained, data):
        sample = data.test_windows.samples()[0]
        out = forecast_sample(trained.model, sample)
        assert out.shape == (4,)
        np.testing.assert_allclose(out, predict(trained, data.test_windows)[0], atol=1e-6)

    def test_inverse_transform(self, trained, data):
        std = predict(trained, data.test_windows)
        raw = predict(trained, data.test_windows, inverse=True)
        mu, sigma = data.stats.mean["load"], data.stats.std["load"]
        np.testing.assert_allclose(raw, std * sigma + mu, atol=1e-6)

    def test_checkpoint_round_trip(self, trained, data, tmp_path):
        path = tmp_path / "m.ckpt"
        digest = save_checkpoint(trained, path)
        assert digest == file_hash(path)
        meta = read_checkpoint_meta(path)
        assert meta["version"] == CHECKPOINT_VERSION
        assert meta["seed"] == trained.model.cfg.seed
        back = load_checkpoint(path)
        assert back.config == trained.config
        assert back.log == trained.log
        assert back.standardization == trained.standardization
        np.testing.assert_array_equal(predict(back, data.test_windows), predict(trained, data.test_windows))

    def test_untrained_checkpoint_refuses_to_predict(self, data, tmp_path):
        from loadlens.model import TrainedModel

        save_checkpoint(TrainedModel(AdditiveForecaster(small_cfg(data)), TrainConfig()), tmp_path / "u.ckpt")
        with pytest.raises(NotTrained):
            predict(load_checkpoint(tmp_path / "u.ckpt"), data.test_windows)


class TestPersistence:
    def test_last_block(self):
        h = np.arange(10.0)[None]
        np.testing.assert_array_equal(persistence_forecast(h, 3), [[7, 8, 9]])
        np.testing.assert_array_equal(persistence_forecast(h[:, :2], 5), [[0, 1, 0, 1, 0]])

    def test_last_value(self):
        np.testing.assert_array_equal(persistence_forecast(np.arange(4.0), 2, "last_value"), [[3, 3]])

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            persistence_forecast(np.zeros(3), 2, "mean")
