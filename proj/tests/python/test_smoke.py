import json

import numpy as np
import pytest

import csnet


def small_model_config():
    return {
        "variant": "csnet3",
        "window": 8,
        "horizon": 2,
        "epochs": 2,
        "n_kernels": 2,
        "d_model": 4,
        "n_heads": 2,
        "d_ff": 4,
        "mlp_hidden": [4],
        "record_loss": True,
    }


def test_synthetic_shape_and_determinism():
    a = csnet.synthetic(30, 2, 3, seed=1, noise_std=1.0)
    b = csnet.synthetic(30, 2, 3, seed=1, noise_std=1.0)
    assert a.shape == (30, 2, 3)
    assert np.array_equal(a, b)
    assert (a >= 0).all()


def test_metrics():
    assert csnet.mase([1, 2, 3, 4, 5], [6, 7], [6, 8]) == pytest.approx(0.5, abs=1e-12)
    assert csnet.mse([1, 2], [1, 4]) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(csnet.CsNetError) as info:
        csnet.mase([3, 3, 3], [1], [2])
    assert info.value.code == "UndefinedScale"


def test_count_windows():
    assert csnet.count_windows(215, initial_train=100, horizon=4) == 112
    with pytest.raises(csnet.CsNetError):
        csnet.count_windows(103, initial_train=100, horizon=4)


def test_var_forecast_shape():
    rng = np.random.default_rng(0)
    history = rng.normal(size=(200, 3))
    out = csnet.var_forecast(history, lag=2, ridge=0.1, horizon=5)
    assert out.shape == (5, 3)
    assert np.isfinite(out).all()


def test_train_predict_save_load(tmp_path):
    data = csnet.synthetic(40, 2, 3, seed=2, noise_std=1.0)
    model = csnet.train(data, small_model_config())
    assert model.variant == "full"  # canonical name of csnet3
    assert model.shape == (2, 3)
    assert len(model.loss_history) == 2
    forecast = model.predict(data)
    assert forecast.shape == (2, 2, 3)
    path = tmp_path / "m.csnet"
    model.save(path)
    again = csnet.load_model(path)
    assert np.array_equal(again.predict(data), forecast)
    with pytest.raises(csnet.CsNetError) as info:
        csnet.train(data, {"unknown": 1})
    assert info.value.code == "InvalidConfig"


def test_backtest_from_config(tmp_path):
    cfg = {
        "data": {"synthetic": {"t_len": 40, "e_len": 2, "r_len": 3, "noise_std": 1.0}},
        "model": {k: v for k, v in small_model_config().items() if k != "variant"},
        "protocol": {"initial_train": 30, "step": 5},
        "output_dir": str(tmp_path / "out"),
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    report = csnet.backtest(path, variant="var", seed=3)
    assert report["forecaster"] == "var"
    assert len(report["windows"]) == 2
    assert report["aggregate"]["mase"] > 0
