"""Desk-scale benchmark of transformer variants (encoder-only, decoder-only,
encoder-decoder, embedding-free, query-sparse attention) against LSTM, TCN,
SVR, and random-forest baselines for stock-index forecasting."""

from .autodiff import ComputationTape, Tensor, backward, finite_diff_check
from .attention import (
    AttentionInputs,
    ProbSparseConfig,
    causal_mask,
    full_attention,
    probsparse_attention,
    select_top_u,
    sparsity_measure_approx,
    sparsity_measure_exact,
)
from .data import (
    MinMaxNormalizer,
    PriceSeries,
    WindowedDataset,
    chronological_split,
    load_csv,
    make_windows,
    prepare_cell_data,
    synth_series,
    write_csv,
)
from .estimators import MultiHorizonRegressor, NeuralForecaster, PersistenceBaseline
from .forest import RandomForestRegressor
from .grid import ExperimentConfig, GridResult, emit_table, parse_config, run_grid
from .metrics import MetricsReport, evaluate, mae, mse
from .networks import ModelConfig, VARIANTS
from .svr import SupportVectorRegressor
from .training import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "AttentionInputs",
    "ComputationTape",
    "ExperimentConfig",
    "GridResult",
    "MetricsReport",
    "MinMaxNormalizer",
    "ModelConfig",
    "MultiHorizonRegressor",
    "NeuralForecaster",
    "PersistenceBaseline",
    "PriceSeries",
    "ProbSparseConfig",
    "RandomForestRegressor",
    "SupportVectorRegressor",
    "Tensor",
    "TrainConfig",
    "VARIANTS",
    "WindowedDataset",
    "backward",
    "causal_mask",
    "chronological_split",
    "emit_table",
    "evaluate",
    "finite_diff_check",
    "full_attention",
    "load_csv",
    "mae",
    "make_windows",
    "mse",
    "parse_config",
    "prepare_cell_data",
    "probsparse_attention",
    "run_grid",
    "select_top_u",
    "sparsity_measure_approx",
    "sparsity_measure_exact",
    "synth_series",
    "write_csv",
]
