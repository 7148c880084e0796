"""Rolling windows, the attention forecaster, and evaluation arithmetic."""

import datetime as dt

import numpy as np
import pytest

from bondsent import forecast
from bondsent.corpus import FEATURE_NAMES, BondPanel


def _panel(n_days, bond_id="B1", seed=0):
    rng = np.random.default_rng(seed)
    start = dt.date(2020, 1, 1)
    return BondPanel(
        bond_id=bond_id,
        dates=[start + dt.timedelta(days=i) for i in range(n_days)],
        features=rng.normal(size=(n_days, len(FEATURE_NAMES))),
        spreads=rng.normal(loc=7.0, scale=0.5, size=n_days),
    )


def test_window_count_formula():
    panel = _panel(25)
    samples = forecast.build_windows(panel, T=21, q=2)
    assert len(samples) == 25 - 21 - 2 + 1 == 3
    assert forecast.build_windows(_panel(23), T=21, q=2)  # exactly one
    assert forecast.build_windows(_panel(22), T=21, q=2) == []


def test_window_alignment_and_target():
    panel = _panel(30)
    samples = forecast.build_windows(panel, T=5, q=2)
    s = samples[3]  # rows 3..7 predict row 9
    np.testing.assert_array_equal(s.window[:, : len(FEATURE_NAMES)],
                                  panel.features[3:8])
    assert s.target == panel.spreads[9]
    assert s.target_date == panel.dates[9]
    assert s.bond_id == "B1"


def test_window_column_budget():
    panel = _panel(30)
    sent = np.zeros(30)
    d = len(FEATURE_NAMES)
    cases = [
        (dict(with_sentiment=False, include_target_history=False), d),
        (dict(with_sentiment=True, composite=sent, include_target_history=False), d + 1),
        (dict(with_sentiment=False), d + 1),
        (dict(with_sentiment=True, composite=sent), d + 2),
    ]
    for kwargs, want in cases:
        got = forecast.build_windows(panel, T=5, q=2, **kwargs)[0].window.shape[1]
        assert got == want, kwargs
    assert len(forecast.feature_columns(True, True)) == d + 2
    assert forecast.feature_columns(True, False)[-1] == forecast.SENTIMENT_FEATURE
    assert forecast.feature_columns(False, True)[-1] == "credit_spread_history"


def test_window_accepts_multi_stream_sentiment_block():
    panel = _panel(30)
    block = np.zeros((30, 2))
    samples = forecast.build_windows(panel, T=5, q=2, with_sentiment=True,
                                     composite=block)
    assert samples[0].window.shape[1] == len(FEATURE_NAMES) + 3


def test_window_sentiment_length_must_match_panel():
    panel = _panel(30)
    with pytest.raises(ValueError, match="composite shape"):
        forecast.build_windows(panel, T=5, q=2, with_sentiment=True,
                               composite=np.zeros(29))
    with pytest.raises(ValueError, match="needs the composite"):
        forecast.build_windows(panel, T=5, q=2, with_sentiment=True)


def test_standardize_windows_uses_train_statistics_only():
    train = forecast.build_windows(_panel(40, seed=1), T=5, q=2)
    test = forecast.build_windows(_panel(40, "B2", seed=2), T=5, q=2)
    train_std, test_std, stats = forecast.standardize_windows(train, test)

    rows = np.vstack([s.window for s in train_std])
    np.testing.assert_allclose(rows.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(rows.std(axis=0), 1.0, atol=1e-10)

    # test windows get the train statistics, not their own
    want = (test[0].window - stats.mean) / stats.std
    np.testing.assert_allclose(test_std[0].window, want, atol=1e-12)
    # targets untouched
    assert test_std[0].target == test[0].target


def test_forecast_config_validation():
    with pytest.raises(ValueError, match="divide"):
        forecast.ForecastConfig(d_model=10, heads=4)
    with pytest.raises(ValueError, match="pooling"):
        forecast.ForecastConfig(pool="cls")
    with pytest.raises(ValueError):
        forecast.ForecastConfig(T=0)


def _toy_config(**overrides):
    base = dict(T=5, q=1, d_model=8, layers=1, heads=2, ff=16,
                lr=1e-3, epochs=2, batch_size=16, seed=0)
    base.update(overrides)
    return forecast.ForecastConfig(**base)


def _toy_samples(cfg, n=24, d=6, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        out.append(forecast.WindowSample(
            bond_id="B1",
            window=rng.normal(size=(cfg.T, d)),
            target=float(rng.normal(loc=7.0)),
            target_date=dt.date(2020, 1, 1) + dt.timedelta(days=i),
        ))
    return out


def test_training_is_deterministic_per_seed():
    cfg = _toy_config()
    samples = _toy_samples(cfg)
    a = forecast.train_forecaster(samples, cfg)
    b = forecast.train_forecaster(samples, cfg)
    x, _ = forecast.stack_windows(samples)
    np.testing.assert_array_equal(a.predict_batch(x), b.predict_batch(x))
    assert a.loss_history == b.loss_history


def test_training_reduces_loss_on_learnable_signal():
    cfg = _toy_config(epochs=30, lr=1e-2)
    rng = np.random.default_rng(4)
    samples = []
    for i in range(64):
        window = rng.normal(size=(cfg.T, 3))
        target = float(window.mean())  # directly recoverable after pooling
        samples.append(forecast.WindowSample("B1", window, target,
                                             dt.date(2020, 1, 1) + dt.timedelta(days=i)))
    model = forecast.train_forecaster(samples, cfg)
    assert model.loss_history[-1] < 0.5 * model.loss_history[0]


def test_validation_history_tracks_holdout():
    cfg = _toy_config(epochs=3)
    samples = _toy_samples(cfg, n=32)
    model = forecast.train_forecaster(samples, cfg, valid_samples=samples[-8:])
    assert len(model.valid_history) == 3
    assert all(np.isfinite(v) for v in model.valid_history)


def test_forecaster_save_load_round_trip(tmp_path):
    cfg = _toy_config()
    samples = _toy_samples(cfg)
    model = forecast.train_forecaster(samples, cfg)
    path = tmp_path / "model.json"
    model.save(path)
    loaded = forecast.Forecaster.load(path)
    assert loaded.input_dim == model.input_dim
    # architecture fields round trip; training hyperparameters are not persisted
    for field in ("T", "q", "d_model", "layers", "heads", "ff", "pool",
                  "include_target_history"):
        assert getattr(loaded.cfg, field) == getattr(model.cfg, field)
    x, _ = forecast.stack_windows(samples)
    np.testing.assert_allclose(loaded.predict_batch(x), model.predict_batch(x),
                               atol=1e-12)


def test_predict_single_window_matches_batch():
    cfg = _toy_config()
    samples = _toy_samples(cfg, n=8)
    model = forecast.train_forecaster(samples, cfg)
    x, _ = forecast.stack_windows(samples)
    single = forecast.predict(model, samples[2].window)
    assert single == pytest.approx(model.predict_batch(x)[2], abs=1e-12)
    with pytest.raises(ValueError, match="single"):
        forecast.predict(model, x)


def test_evaluate_worked_example():
    mae, mape = forecast.evaluate([1.0, 2.0], [1.1, 1.8])
    assert mae == pytest.approx(0.15)
    # |1-1.1|/1.1 = 0.0909..., |2-1.8|/1.8 = 0.111..., mean = 0.10101...
    assert mape == pytest.approx((0.1 / 1.1 + 0.2 / 1.8) / 2)


def test_evaluate_rejects_zero_targets_and_bad_shapes():
    with pytest.raises(ValueError, match="zero targets"):
        forecast.evaluate([1.0, 1.0], [0.0, 2.0])
    with pytest.raises(ValueError, match="bad shapes"):
        forecast.evaluate([1.0], [1.0, 2.0])


def test_delta_report_published_values():
    # MAE 8.9683 -> 8.6765 and MAPE 8.0033% -> 7.1257% are the q=2
    # headline improvements; deltas land at 3.2539% and 10.9658%
    d_mae, _ = forecast.delta_report(
        forecast.EvalReport(mae=8.9683, mape=1.0, n_test=1),
        forecast.EvalReport(mae=8.6765, mape=1.0, n_test=1),
    )
    _, d_mape = forecast.delta_report(
        forecast.EvalReport(mae=1.0, mape=0.080033, n_test=1),
        forecast.EvalReport(mae=1.0, mape=0.071257, n_test=1),
    )
    assert d_mae == pytest.approx(3.2539, abs=1e-3)
    assert d_mape == pytest.approx(10.9658, abs=1e-3)


def test_delta_report_rejects_zero_baseline():
    with pytest.raises(ValueError, match="baseline metric is zero"):
        forecast.delta_report(
            forecast.EvalReport(mae=0.0, mape=1.0, n_test=1),
            forecast.EvalReport(mae=1.0, mape=1.0, n_test=1),
        )


def test_positional_encoding_shape_and_range():
    table = forecast._positional_encoding(21, 16)
    assert table.shape == (21, 16)
    assert np.abs(table).max() <= 1.0
    assert table[0, 0] == 0.0 and table[0, 1] == 1.0  # sin(0), cos(0)
