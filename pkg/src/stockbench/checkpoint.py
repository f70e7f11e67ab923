"""Versioned binary checkpoints: named flat arrays plus JSON metadata.

Layout (all integers little-endian):

    bytes 0..3    magic ``SBCK``
    bytes 4..7    format version (u32), currently 1
    bytes 8..15   header length in bytes (u64)
    header        UTF-8 JSON: {"meta": {...}, "arrays": [{name, dtype, shape}]}
    payload       each array's raw bytes, C-order, in header order

Arrays are stored as little-endian float64 or int64 regardless of the host,
so checkpoints are portable across machines.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ContractError
from .estimators import MultiHorizonRegressor, NeuralForecaster, PersistenceBaseline
from .forest import RandomForestRegressor, _Tree
from .svr import SupportVectorRegressor

MAGIC = b"SBCK"
VERSION = 1
_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


def save_checkpoint(path, arrays: dict, meta: dict) -> None:
    entries = []
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype.kind == "f":
            arr = arr.astype("<f8")
        elif arr.dtype.kind in "iu":
            arr = arr.astype("<i8")
        else:
            raise ContractError(f"array {name!r} has unsupported dtype {arr.dtype}")
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ContractError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ContractError(f"{path}: unsupported checkpoint version {version}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        arrays = {}
        for entry in header["arrays"]:
            dtype = _DTYPES[entry["dtype"]]
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            data = np.frombuffer(fh.read(count * dtype.itemsize), dtype=dtype)
            arrays[entry["name"]] = data.reshape(entry["shape"]).copy()
    return arrays, header["meta"]


# -- model (de)serialization ------------------------------------------------------


def _neural_to_arrays(model: NeuralForecaster):
    arrays = {name: tensor.data for name, tensor in model.params_.items()}
    return arrays, {"kind": "neural", "params": model.get_params()}


def _neural_from_arrays(arrays, meta):
    model = NeuralForecaster(**meta["params"])
    model.initialize()
    for name, tensor in model.params_.items():
        if name not in arrays:
            raise ContractError(f"checkpoint missing parameter {name!r}")
        if tuple(arrays[name].shape) != tensor.shape:
            raise ContractError(
                f"parameter {name!r} shaped {arrays[name].shape}, expected {tensor.shape}"
            )
        tensor.data = arrays[name].astype(np.float64)
    return model


def _svr_to_arrays(model: SupportVectorRegressor):
    arrays = {
        "support_vectors": model.support_vectors_,
        "dual_coef": model.dual_coef_,
    }
    meta = {
        "kind": "svr",
        "params": model.get_params(),
        "intercept": model.intercept_,
        "gamma": model.gamma_,
        "kkt_violation": model.kkt_violation_,
        "n_features_in": model.n_features_in_,
    }
    return arrays, meta


def _svr_from_arrays(arrays, meta):
    model = SupportVectorRegressor(**meta["params"])
    model.support_vectors_ = arrays["support_vectors"].astype(np.float64)
    model.dual_coef_ = arrays["dual_coef"].astype(np.float64)
    model.intercept_ = float(meta["intercept"])
    model.gamma_ = float(meta["gamma"])
    model.kkt_violation_ = float(meta["kkt_violation"])
    model.n_features_in_ = int(meta["n_features_in"])
    return model


def _forest_to_arrays(model: RandomForestRegressor):
    arrays = {}
    for i, tree in enumerate(model.trees_):
        arrays[f"tree{i}.feature"] = np.asarray(tree.feature, dtype=np.int64)
        arrays[f"tree{i}.threshold"] = np.asarray(tree.threshold)
        arrays[f"tree{i}.left"] = np.asarray(tree.left, dtype=np.int64)
        arrays[f"tree{i}.right"] = np.asarray(tree.right, dtype=np.int64)
        arrays[f"tree{i}.value"] = np.asarray(tree.value)
    meta = {
        "kind": "forest",
        "params": model.get_params(),
        "n_trees": len(model.trees_),
        "n_features_in": model.n_features_in_,
        "y_range": list(model.y_range_),
    }
    return arrays, meta


def _forest_from_arrays(arrays, meta):
    model = RandomForestRegressor(**meta["params"])
    model.trees_ = []
    for i in range(int(meta["n_trees"])):
        tree = _Tree(
            feature=arrays[f"tree{i}.feature"].tolist(),
            threshold=arrays[f"tree{i}.threshold"].tolist(),
            left=arrays[f"tree{i}.left"].tolist(),
            right=arrays[f"tree{i}.right"].tolist(),
            value=arrays[f"tree{i}.value"].tolist(),
        )
        model.trees_.append(tree)
    model.n_features_in_ = int(meta["n_features_in"])
    model.y_range_ = tuple(meta["y_range"])
    return model


def _multi_to_arrays(model: MultiHorizonRegressor):
    arrays = {}
    subs = []
    for j, sub in enumerate(model.models_):
        sub_arrays, sub_meta = _TO_ARRAYS[type(sub)](sub)
        subs.append(sub_meta)
        for name, arr in sub_arrays.items():
            arrays[f"h{j}.{name}"] = arr
    meta = {
        "kind": "multi_horizon",
        "horizon": model.horizon,
        "window": model.window_,
        "submodels": subs,
    }
    return arrays, meta


def _multi_from_arrays(arrays, meta):
    models = []
    for j, sub_meta in enumerate(meta["submodels"]):
        prefix = f"h{j}."
        sub_arrays = {
            name[len(prefix):]: arr for name, arr in arrays.items() if name.startswith(prefix)
        }
        models.append(_FROM_ARRAYS[sub_meta["kind"]](sub_arrays, sub_meta))
    model = MultiHorizonRegressor(base=models[0] if models else None, horizon=int(meta["horizon"]))
    model.models_ = models
    model.window_ = int(meta["window"])
    return model


def _persistence_to_arrays(model: PersistenceBaseline):
    return {}, {"kind": "persistence", "horizon": model.horizon, "window": model.window_}


def _persistence_from_arrays(arrays, meta):
    model = PersistenceBaseline(horizon=int(meta["horizon"]))
    model.window_ = int(meta["window"])
    return model


_TO_ARRAYS = {
    NeuralForecaster: _neural_to_arrays,
    SupportVectorRegressor: _svr_to_arrays,
    RandomForestRegressor: _forest_to_arrays,
    MultiHorizonRegressor: _multi_to_arrays,
    PersistenceBaseline: _persistence_to_arrays,
}

_FROM_ARRAYS = {
    "neural": _neural_from_arrays,
    "svr": _svr_from_arrays,
    "forest": _forest_from_arrays,
    "multi_horizon": _multi_from_arrays,
    "persistence": _persistence_from_arrays,
}


def save_model(path, model) -> None:
    """Serialize any fitted benchmark model to one checkpoint file."""
    try:
        to_arrays = _TO_ARRAYS[type(model)]
    except KeyError:
        raise ContractError(f"cannot checkpoint models of type {type(model).__name__}") from None
    arrays, meta = to_arrays(model)
    save_checkpoint(path, arrays, meta)


def load_model(path):
    """Rebuild a fitted model from a checkpoint written by save_model."""
    arrays, meta = load_checkpoint(path)
    try:
        from_arrays = _FROM_ARRAYS[meta["kind"]]
    except KeyError:
        raise ContractError(f"unknown checkpoint kind {meta.get('kind')!r}") from None
    return from_arrays(arrays, meta)
