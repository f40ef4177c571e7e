"""Cross-sectional multivariate forecasting: training, VAR baselines and backtests."""

from ._csnet import (
    CsNetError,
    Model,
    backtest,
    count_windows,
    load_model,
    mase,
    mse,
    synthetic,
    train,
    var_forecast,
)

__all__ = [
    "CsNetError",
    "Model",
    "backtest",
    "count_windows",
    "load_model",
    "mase",
    "mse",
    "synthetic",
    "train",
    "var_forecast",
]
