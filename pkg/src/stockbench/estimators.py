"""Scikit-learn style estimators over the neural forecasters, plus the
persistence reference and a per-horizon wrapper for single-output models.

All estimators consume window matrices X of shape [n, window] and target
matrices y of shape [n, horizon] (already normalized), and predict
[n, horizon] arrays, so they compose with standard tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone

from .autodiff import Tensor
from .errors import ContractError
from .networks import ModelConfig, decoder_positionwise_states, forward, init_parameters
from .training import TrainConfig, train_model
from .validation import as_float_matrix, check_windows_against


class NeuralForecaster(BaseEstimator, RegressorMixin):
    """One of the seven neural architectures behind a fit/predict surface.

    Architecture knobs mirror ModelConfig; optimization knobs mirror
    TrainConfig. After ``fit``, ``history_`` holds the per-epoch loss curve
    and ``params_`` the trained tensors.
    """

    def __init__(
        self,
        variant="decoder_only",
        window=10,
        horizon=1,
        d_model=64,
        n_heads=8,
        n_encoder_layers=3,
        n_decoder_layers=2,
        ffn_dim=None,
        dropout=0.1,
        seed=0,
        encoder_pool="mean",
        keep_positional_encoding=False,
        sparse_decoder=False,
        sample_factor=5.0,
        top_factor=5.0,
        learning_rate=1e-3,
        batch_size=32,
        max_epochs=200,
        early_stop_patience=20,
        val_fraction=0.1,
        gradient_clip_norm=1.0,
    ):
        self.variant = variant
        self.window = window
        self.horizon = horizon
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_encoder_layers = n_encoder_layers
        self.n_decoder_layers = n_decoder_layers
        self.ffn_dim = ffn_dim
        self.dropout = dropout
        self.seed = seed
        self.encoder_pool = encoder_pool
        self.keep_positional_encoding = keep_positional_encoding
        self.sparse_decoder = sparse_decoder
        self.sample_factor = sample_factor
        self.top_factor = top_factor
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.early_stop_patience = early_stop_patience
        self.val_fraction = val_fraction
        self.gradient_clip_norm = gradient_clip_norm

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            variant=self.variant,
            window=self.window,
            horizon=self.horizon,
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_encoder_layers=self.n_encoder_layers,
            n_decoder_layers=self.n_decoder_layers,
            ffn_dim=self.ffn_dim,
            dropout=self.dropout,
            seed=self.seed,
            encoder_pool=self.encoder_pool,
            keep_positional_encoding=self.keep_positional_encoding,
            sparse_decoder=self.sparse_decoder,
            sample_factor=self.sample_factor,
            top_factor=self.top_factor,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            early_stop_patience=self.early_stop_patience,
            val_fraction=self.val_fraction,
            seed=self.seed,
            gradient_clip_norm=self.gradient_clip_norm,
        )

    def initialize(self) -> "NeuralForecaster":
        """Create untrained parameters (deterministic in ``seed``)."""
        self.config_ = self.model_config()
        self.params_ = init_parameters(self.config_)
        return self

    def fit(self, X, y):
        X = check_windows_against(X, self.window)
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape != (X.shape[0], self.horizon):
            raise ContractError(
                f"y shaped {y.shape} does not match n={X.shape[0]}, horizon={self.horizon}"
            )
        self.initialize()
        self.history_ = train_model(self.config_, self.params_, X, y, self.train_config())
        return self

    def _require_fitted(self):
        if not hasattr(self, "params_"):
            raise ContractError("estimator is not fitted; call fit or initialize first")

    def predict(self, X):
        self._require_fitted()
        X = check_windows_against(X, self.window)
        if X.shape[0] == 0:
            return np.zeros((0, self.horizon))
        return forward(self.config_, self.params_, Tensor(X), train=False).data.copy()

    def predict_window(self, window) -> np.ndarray:
        """Predict from a single window given as [w] or [w, 1]."""
        window = np.asarray(window, dtype=np.float64).reshape(1, -1)
        return self.predict(window)[0]

    def decoder_states(self, X) -> np.ndarray:
        """Per-position decoder outputs (decoder_only variant only)."""
        self._require_fitted()
        X = check_windows_against(X, self.window)
        return decoder_positionwise_states(self.config_, self.params_, Tensor(X)).data


class PersistenceBaseline(BaseEstimator, RegressorMixin):
    """Predicts the window's last observed value for every horizon step.

    The weakest credible reference: any trained forecaster should beat it
    on a series with learnable structure.
    """

    def __init__(self, horizon=1):
        self.horizon = horizon

    def fit(self, X, y=None):
        X = as_float_matrix(X, "X")
        self.window_ = X.shape[1]
        return self

    def predict(self, X):
        X = as_float_matrix(X, "X")
        return np.repeat(X[:, -1:], self.horizon, axis=1)


class MultiHorizonRegressor(BaseEstimator, RegressorMixin):
    """Fits one clone of a single-output regressor per horizon step.

    Direct (non-recursive) multi-step scheme: step j is predicted by its own
    model trained on target column j, mirroring how the neural variants emit
    all steps in one pass.
    """

    def __init__(self, base, horizon=1):
        self.base = base
        self.horizon = horizon

    def fit(self, X, y):
        X = as_float_matrix(X, "X")
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape != (X.shape[0], self.horizon):
            raise ContractError(
                f"y shaped {y.shape} does not match n={X.shape[0]}, horizon={self.horizon}"
            )
        self.models_ = []
        for j in range(self.horizon):
            model = clone(self.base)
            if "seed" in model.get_params():
                model.set_params(seed=int(model.get_params()["seed"]) + j)
            self.models_.append(model.fit(X, y[:, j]))
        self.window_ = X.shape[1]
        return self

    def predict(self, X):
        if not hasattr(self, "models_"):
            raise ContractError("estimator is not fitted")
        X = check_windows_against(X, self.window_)
        if X.shape[0] == 0:
            return np.zeros((0, self.horizon))
        return np.column_stack([m.predict(X) for m in self.models_])
