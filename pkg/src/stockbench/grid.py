"""Experiment grid runner: every (model, window, horizon) cell trained,
evaluated, and persisted under a resumable manifest.

Run directory layout::

    <out_dir>/
      config.resolved          # canonical key=value dump of the config
      manifest                 # JSON: config hash, per-cell status + seed
      cells/<model>_<w>_<h>/
        checkpoint             # fitted model (see checkpoint module)
        losses.csv             # per-epoch train/val MSE (neural cells)
        metrics.csv            # one-row MetricsReport
        predictions.csv        # date, actual_price, predicted_price (step 1)

The manifest is rewritten atomically (write-new + rename) after every cell,
so an interrupted or parallel run never leaves it half-written. Completed
cells are skipped on rerun as long as the config hash matches; a changed
config against the same directory is an error rather than a silent mix.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .data import PriceSeries, load_csv, prepare_cell_data
from .errors import ConfigError, ContractError, DataError
from .estimators import MultiHorizonRegressor, NeuralForecaster
from .forest import RandomForestRegressor
from .checkpoint import load_model, save_model
from .metrics import MetricsReport, evaluate
from .svr import SupportVectorRegressor

MODEL_IDS = (
    "encoder_only",
    "decoder_only",
    "vanilla",
    "no_embedding",
    "probsparse",
    "lstm",
    "tcn",
    "svr",
    "random_forest",
)
DEFAULT_WINDOWS = (5, 10, 15)
DEFAULT_HORIZONS = (1, 5, 10)


@dataclass
class ExperimentConfig:
    """Everything a grid run needs, parseable from a flat key=value file."""

    data: str = ""
    out_dir: str = ""
    models: tuple = MODEL_IDS
    windows: tuple = DEFAULT_WINDOWS
    horizons: tuple = DEFAULT_HORIZONS
    train_fraction: float = 0.7
    seed: int = 0
    parallel: int = 1
    # optimization
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    early_stop_patience: int = 20
    val_fraction: float = 0.1
    gradient_clip_norm: float = 1.0
    # neural architecture
    d_model: int = 64
    n_heads: int = 8
    n_encoder_layers: int = 3
    n_decoder_layers: int = 2
    dropout: float = 0.1
    # classical baselines
    svr_c: float = 10.0
    svr_epsilon: float = 0.01
    rf_trees: int = 100
    rf_depth: int = 10
    rf_min_leaf: int = 2

    def __post_init__(self):
        if not self.data:
            raise ConfigError("config needs a 'data' path")
        if not self.out_dir:
            raise ConfigError("config needs an 'out_dir'")
        unknown = [m for m in self.models if m not in MODEL_IDS]
        if unknown:
            raise ConfigError(f"unknown models {unknown}; valid ids: {MODEL_IDS}")
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1")

    def canonical_text(self, include_out_dir: bool = True) -> str:
        lines = []
        for f in fields(self):
            if not include_out_dir and f.name in ("out_dir", "parallel"):
                continue  # where results land / how many workers never changes them
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ", ".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text(include_out_dir=False).encode()).hexdigest()[:16]


def _parse_int_list(text: str) -> tuple:
    return tuple(int(v.strip()) for v in text.split(",") if v.strip())


def _parse_str_list(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


_KEY_PARSERS = {
    "data": str,
    "out_dir": str,
    "models": _parse_str_list,
    "windows": _parse_int_list,
    "horizons": _parse_int_list,
    "train_fraction": float,
    "seed": int,
    "parallel": int,
    "learning_rate": float,
    "batch_size": int,
    "max_epochs": int,
    "early_stop_patience": int,
    "val_fraction": float,
    "gradient_clip_norm": float,
    "d_model": int,
    "n_heads": int,
    "n_encoder_layers": int,
    "n_decoder_layers": int,
    "dropout": float,
    "svr_c": float,
    "svr_epsilon": float,
    "rf_trees": int,
    "rf_depth": int,
    "rf_min_leaf": int,
}


def parse_config(path) -> ExperimentConfig:
    """Read a flat ``key = value`` config file; unknown keys are errors."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _KEY_PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _KEY_PARSERS[key](value.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
    return ExperimentConfig(**values)


def cell_id(model: str, window: int, horizon: int) -> str:
    return f"{model}_{window}_{horizon}"


def cell_seed(base_seed: int, model: str, window: int, horizon: int) -> int:
    """Stable per-cell seed so cells are independent and resumable."""
    digest = hashlib.sha256(f"{base_seed}:{model}:{window}:{horizon}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def make_estimator(cfg: ExperimentConfig, model: str, window: int, horizon: int):
    seed = cell_seed(cfg.seed, model, window, horizon)
    if model == "svr":
        base = SupportVectorRegressor(C=cfg.svr_c, epsilon=cfg.svr_epsilon)
        return MultiHorizonRegressor(base, horizon=horizon)
    if model == "random_forest":
        base = RandomForestRegressor(
            n_trees=cfg.rf_trees, max_depth=cfg.rf_depth, min_leaf=cfg.rf_min_leaf, seed=seed
        )
        return MultiHorizonRegressor(base, horizon=horizon)
    return NeuralForecaster(
        variant=model,
        window=window,
        horizon=horizon,
        d_model=cfg.d_model,
        n_heads=cfg.n_heads,
        n_encoder_layers=cfg.n_encoder_layers,
        n_decoder_layers=cfg.n_decoder_layers,
        dropout=cfg.dropout,
        seed=seed,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        max_epochs=cfg.max_epochs,
        early_stop_patience=cfg.early_stop_patience,
        val_fraction=cfg.val_fraction,
        gradient_clip_norm=cfg.gradient_clip_norm,
    )


@dataclass
class GridResult:
    reports: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)
    skipped: int = 0  # cells restored from the manifest instead of retrained

    def report_for(self, model: str, window: int, horizon: int) -> Optional[MetricsReport]:
        for r in self.reports:
            if (r.model, r.window, r.horizon) == (model, window, horizon):
                return r
        return None


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _load_manifest(path: Path) -> Optional[dict]:
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def _metrics_csv(report: MetricsReport) -> str:
    head = "model,window,horizon,mae_normalized,mse_normalized,mae_price_units,mse_price_units,n_test"
    row = (
        f"{report.model},{report.window},{report.horizon},"
        f"{report.mae_normalized!r},{report.mse_normalized!r},"
        f"{report.mae_price_units!r},{report.mse_price_units!r},{report.n_test}"
    )
    return head + "\n" + row + "\n"


def _parse_metrics_csv(text: str) -> MetricsReport:
    lines = text.strip().splitlines()
    vals = lines[1].split(",")
    return MetricsReport(
        model=vals[0],
        window=int(vals[1]),
        horizon=int(vals[2]),
        mae_normalized=float(vals[3]),
        mse_normalized=float(vals[4]),
        mae_price_units=float(vals[5]),
        mse_price_units=float(vals[6]),
        n_test=int(vals[7]),
    )


def _losses_csv(history) -> str:
    lines = ["epoch,train_mse,val_mse"]
    for i, (tr, va) in enumerate(zip(history.train_mse, history.val_mse)):
        lines.append(f"{i},{tr!r},{va!r}")
    return "\n".join(lines) + "\n"


def emit_predictions(model, test, normalizer, path) -> None:
    """Step-1-ahead trace in price units: date, actual_price, predicted_price.

    The actual column carries the source series values verbatim; predictions
    are inverse-transformed back to price units.
    """
    if len(test) == 0:
        raise ContractError("cannot dump predictions for an empty test set")
    predictions = np.asarray(model.predict(test.inputs), dtype=np.float64)
    if predictions.ndim == 1:
        predictions = predictions[:, None]
    predicted_price = normalizer.inverse_transform(predictions[:, 0])
    if test.first_targets_raw is not None:
        actual = np.asarray(test.first_targets_raw, dtype=np.float64)
    else:
        actual = normalizer.inverse_transform(test.targets[:, 0])
    dates = test.target_dates or [""] * len(test)
    lines = ["date,actual_price,predicted_price"]
    for day, act, pred in zip(dates, actual, predicted_price):
        day_text = day.isoformat() if hasattr(day, "isoformat") else str(day)
        lines.append(f"{day_text},{act!r},{pred!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _run_cell(cfg: ExperimentConfig, series: PriceSeries, model: str, window: int, horizon: int,
              cell_dir: Path) -> MetricsReport:
    train_ds, test_ds, norm = prepare_cell_data(series, window, horizon, cfg.train_fraction)
    estimator = make_estimator(cfg, model, window, horizon)
    estimator.fit(train_ds.inputs, train_ds.targets)
    report = evaluate(estimator, test_ds, norm, model_id=model)
    cell_dir.mkdir(parents=True, exist_ok=True)
    save_model(cell_dir / "checkpoint", estimator)
    history = getattr(estimator, "history_", None)
    if history is not None:
        (cell_dir / "losses.csv").write_text(_losses_csv(history), encoding="utf-8")
    else:
        (cell_dir / "losses.csv").write_text("epoch,train_mse,val_mse\n", encoding="utf-8")
    (cell_dir / "metrics.csv").write_text(_metrics_csv(report), encoding="utf-8")
    emit_predictions(estimator, test_ds, norm, cell_dir / "predictions.csv")
    return report


def run_grid(cfg: ExperimentConfig, log=print) -> GridResult:
    """Train and evaluate every grid cell, skipping cells the manifest
    already marks complete. Raises ConfigError when the output directory
    holds a run with a different config."""
    series = load_csv(cfg.data)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest"
    config_hash = cfg.config_hash()

    manifest = _load_manifest(manifest_path)
    if manifest is None:
        manifest = {"version": 1, "config_hash": config_hash, "base_seed": cfg.seed, "cells": {}}
    elif manifest.get("config_hash") != config_hash:
        raise ConfigError(
            f"{out_dir} holds a run with config hash {manifest.get('config_hash')}, "
            f"current config hashes to {config_hash}; use a fresh out_dir"
        )
    _atomic_write(out_dir / "config.resolved", cfg.canonical_text())

    lock = threading.Lock()
    result = GridResult()

    def flush_manifest():
        _atomic_write(manifest_path, json.dumps(manifest, indent=2, sort_keys=True))

    cells = [
        (model, w, h)
        for w in cfg.windows
        for h in cfg.horizons
        for model in cfg.models
    ]

    def handle(cell):
        model, w, h = cell
        cid = cell_id(model, w, h)
        cell_dir = out_dir / "cells" / cid
        entry = manifest["cells"].get(cid)
        if entry and entry.get("status") == "done":
            report = _parse_metrics_csv((cell_dir / "metrics.csv").read_text(encoding="utf-8"))
            with lock:
                result.reports.append(report)
                result.skipped += 1
            log(f"[skip] {cid} (already complete)")
            return
        try:
            report = _run_cell(cfg, series, model, w, h, cell_dir)
        except Exception as exc:  # cell failures must not sink the grid
            with lock:
                result.failures[cid] = f"{type(exc).__name__}: {exc}"
                manifest["cells"][cid] = {
                    "status": "failed",
                    "seed": cell_seed(cfg.seed, model, w, h),
                    "error": result.failures[cid],
                }
                flush_manifest()
            log(f"[FAIL] {cid}: {result.failures[cid]}")
            return
        with lock:
            result.reports.append(report)
            manifest["cells"][cid] = {
                "status": "done",
                "seed": cell_seed(cfg.seed, model, w, h),
                "mae_normalized": report.mae_normalized,
            }
            flush_manifest()
        log(f"[done] {cid}: mae={report.mae_normalized:.6f} mse={report.mse_normalized:.6f}")

    if cfg.parallel > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallel) as pool:
            list(pool.map(handle, cells))
    else:
        for cell in cells:
            handle(cell)
    return result


# -- results tables ------------------------------------------------------------------


def best_model_per_cell(result: GridResult, cfg: ExperimentConfig) -> dict:
    """(window, horizon) -> winning model id, minimizing MAE with ties broken
    by MSE then by model declaration order."""
    winners = {}
    for w in cfg.windows:
        for h in cfg.horizons:
            candidates = []
            for order, model in enumerate(cfg.models):
                r = result.report_for(model, w, h)
                if r is not None:
                    candidates.append((r.mae_normalized, r.mse_normalized, order, model))
            if candidates:
                winners[(w, h)] = min(candidates)[3]
    return winners


def emit_table(result: GridResult, cfg: ExperimentConfig, fmt: str = "markdown") -> str:
    """Render the grid as markdown (winner bolded per cell) or CSV."""
    if fmt not in ("markdown", "md", "csv"):
        raise ContractError(f"unknown table format {fmt!r}")
    rows = []
    for w in cfg.windows:
        for h in cfg.horizons:
            for model in cfg.models:
                r = result.report_for(model, w, h)
                if r is not None:
                    rows.append(r)
    if fmt == "csv":
        lines = ["input_window,horizon,model,mae,mse"]
        for r in rows:
            lines.append(f"{r.window},{r.horizon},{r.model},{r.mae_normalized!r},{r.mse_normalized!r}")
        return "\n".join(lines) + "\n"
    winners = best_model_per_cell(result, cfg)
    lines = [
        "| Input Window | Horizon | Model | MAE | MSE |",
        "| --- | --- | --- | --- | --- |",
    ]
    for r in rows:
        name = f"**{r.model}**" if winners.get((r.window, r.horizon)) == r.model else r.model
        lines.append(
            f"| {r.window} | {r.horizon} | {name} | {r.mae_normalized:.4f} | {r.mse_normalized:.4f} |"
        )
    return "\n".join(lines) + "\n"


def parse_table_csv(text: str) -> list:
    """Inverse of emit_table(fmt='csv'): [(window, horizon, model, mae, mse)]."""
    lines = text.strip().splitlines()
    if lines[0] != "input_window,horizon,model,mae,mse":
        raise ContractError("not a results-table CSV")
    out = []
    for line in lines[1:]:
        w, h, model, mae_v, mse_v = line.split(",")
        out.append((int(w), int(h), model, float(mae_v), float(mse_v)))
    return out


def load_grid(out_dir) -> tuple:
    """Rebuild (GridResult, ExperimentConfig) from a finished run directory."""
    out_dir = Path(out_dir)
    resolved = out_dir / "config.resolved"
    if not resolved.exists():
        raise ConfigError(f"{out_dir} has no config.resolved; not a run directory")
    cfg = parse_config(resolved)
    manifest = _load_manifest(out_dir / "manifest") or {"cells": {}}
    result = GridResult()
    for cid, entry in manifest["cells"].items():
        if entry.get("status") == "done":
            metrics = out_dir / "cells" / cid / "metrics.csv"
            result.reports.append(_parse_metrics_csv(metrics.read_text(encoding="utf-8")))
        elif entry.get("status") == "failed":
            result.failures[cid] = entry.get("error", "unknown failure")
    return result, cfg
