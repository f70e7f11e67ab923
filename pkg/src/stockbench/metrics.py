"""Forecast error metrics and per-cell report records."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MinMaxNormalizer, WindowedDataset
from .errors import ContractError


def _paired(y, yhat):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    if y.size == 0:
        raise ContractError("metrics need at least one prediction")
    if y.size != yhat.size:
        raise ContractError(f"length mismatch: {y.size} true vs {yhat.size} predicted")
    if not (np.isfinite(y).all() and np.isfinite(yhat).all()):
        raise ContractError("metrics need finite inputs")
    return y, yhat


def mae(y, yhat) -> float:
    """Mean absolute error."""
    y, yhat = _paired(y, yhat)
    return float(np.abs(y - yhat).mean())


def mse(y, yhat) -> float:
    """Mean squared error."""
    y, yhat = _paired(y, yhat)
    d = y - yhat
    return float((d * d).mean())


@dataclass
class MetricsReport:
    """MAE/MSE for one (model, window, horizon) cell, on both the normalized
    scale the models train in and the original price scale."""

    model: str
    window: int
    horizon: int
    mae_normalized: float
    mse_normalized: float
    mae_price_units: float
    mse_price_units: float
    n_test: int

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "window": self.window,
            "horizon": self.horizon,
            "mae_normalized": self.mae_normalized,
            "mse_normalized": self.mse_normalized,
            "mae_price_units": self.mae_price_units,
            "mse_price_units": self.mse_price_units,
            "n_test": self.n_test,
        }


def evaluate(
    model,
    test: WindowedDataset,
    normalizer: MinMaxNormalizer,
    model_id: str = "",
) -> MetricsReport:
    """Score a fitted model on a test split, pooling every horizon step.

    Predictions and targets are compared both as-is (normalized) and after
    inverting the normalizer (price units).
    """
    if len(test) == 0:
        raise ContractError("cannot evaluate on an empty test set")
    predictions = np.asarray(model.predict(test.inputs), dtype=np.float64)
    if predictions.ndim == 1:
        predictions = predictions[:, None]
    if predictions.shape != test.targets.shape:
        raise ContractError(
            f"prediction shape {predictions.shape} != target shape {test.targets.shape}"
        )
    y_n = test.targets
    y_p = normalizer.inverse_transform(y_n)
    pred_p = normalizer.inverse_transform(predictions)
    return MetricsReport(
        model=model_id or type(model).__name__,
        window=test.window,
        horizon=test.horizon,
        mae_normalized=mae(y_n, predictions),
        mse_normalized=mse(y_n, predictions),
        mae_price_units=mae(y_p, pred_p),
        mse_price_units=mse(y_p, pred_p),
        n_test=len(test),
    )
