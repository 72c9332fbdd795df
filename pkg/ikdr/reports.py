"""JSON/CSV report writers and model persistence."""

import json
import math
import os
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import Hyperparams
from .core import EmbeddingModel, ObjectiveTerms
from .errors import DataFileError, InputError, SchemaError
from .logger import get_logger

logger = get_logger(__name__)

SCHEMA_VERSION = 1
MODEL_FILE = "model.json"
TRAIN_FILE = "train.csv"


def format_number(x: float) -> str:
    """Format a float with 12 significant digits."""
    return "%.12g" % x


def _plain(value: Any) -> Any:
    """Convert numpy containers to JSON-ready values, floats rounded to 12 digits."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(format_number(value))
    return value


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format_number(float(value))
    return str(value)


def write_json(path: str, document: Dict[str, Any]) -> None:
    """Write a report document; identical inputs give identical bytes."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(_plain(document), handle, indent=2, allow_nan=False)
        handle.write("\n")
    logger.debug(f"Wrote {path}")


def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    frame = pd.DataFrame([[_cell(v) for v in row] for row in rows], columns=list(header))
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    logger.debug(f"Wrote {path} ({len(rows)} rows)")


def write_embedding_csv(path: str, embedding: np.ndarray) -> None:
    """One row per sample, one column per embedding dimension."""
    k = embedding.shape[0]
    write_csv(path, [f"dim_{i}" for i in range(k)], embedding.T.tolist())


def write_trace_csv(path: str, trace: Sequence[Tuple[int, float, float, float]]) -> None:
    write_csv(path, ["iter", "primal_res_eq", "primal_res_pos", "objective"],
              [(int(i), eq, pos, obj) for i, eq, pos, obj in trace])


def write_kernel_csv(path: str, K: np.ndarray) -> None:
    """Plain N x N matrix without header."""
    frame = pd.DataFrame([[format_number(v) for v in row] for row in np.asarray(K, dtype=float)])
    frame.to_csv(path, index=False, header=False, lineterminator="\n", encoding="utf-8")
    logger.info(f"Kernel matrix written to {path}")


def write_class_scores_csv(path: str, scores: np.ndarray, label_names: Sequence[str]) -> None:
    """Long format `class,dim,score` of a C x k class-score matrix."""
    rows: List[Tuple[str, int, float]] = []
    for q in range(scores.shape[0]):
        for i in range(scores.shape[1]):
            rows.append((label_names[q], i, float(scores[q, i])))
    write_csv(path, ["class", "dim", "score"], rows)


def save_model(model: EmbeddingModel, directory: str, label_names: Sequence[str],
               feature_names: Sequence[str], label_column: str = "label") -> None:
    """Persist a fitted model as model.json plus the training CSV.

    Numbers are stored at full precision so a reloaded model transforms
    exactly like the original.

    Args:
        model: The fitted model
        directory: Target directory, created if missing
        label_names: Original label value of every class id
        feature_names: Feature column names, in training order
        label_column: Name of the label column in train.csv
    """
    os.makedirs(directory, exist_ok=True)
    document = {
        "schema_version": SCHEMA_VERSION,
        "mode": model.mode,
        "k": model.k,
        "hyperparams": model.hyper.to_dict(),
        "label_column": label_column,
        "label_map": {str(name): q for q, name in enumerate(label_names)},
        "feature_names": list(feature_names),
        "bandwidths": [float(b) for b in model.bandwidths],
        "flagged": [int(m) for m in model.flagged],
        "alpha": np.asarray(model.alpha, dtype=float).tolist(),
        "alpha_gradient": [float(g) for g in model.alpha_gradient],
        "A": np.asarray(model.A, dtype=float).tolist(),
        "objective_trace": [terms.as_dict() for terms in model.objective_trace],
    }
    with open(os.path.join(directory, MODEL_FILE), "w", encoding="utf-8", newline="\n") as handle:
        json.dump(document, handle, indent=2)
        handle.write("\n")

    frame = pd.DataFrame(np.asarray(model.train_features), columns=list(feature_names))
    frame[label_column] = [label_names[q] for q in model.train_labels]
    frame.to_csv(os.path.join(directory, TRAIN_FILE), index=False, lineterminator="\n", encoding="utf-8")
    logger.info(f"Model saved to {directory}")


def load_model(directory: str) -> Tuple[EmbeddingModel, List[str], List[str]]:
    """Load a model written by save_model.

    Returns:
        (model, label names, feature names)
    """
    model_path = os.path.join(directory, MODEL_FILE)
    train_path = os.path.join(directory, TRAIN_FILE)
    if not os.path.isfile(model_path):
        raise DataFileError("model file not found", path=model_path)
    try:
        with open(model_path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
    except json.JSONDecodeError as e:
        raise DataFileError(f"model file is not valid JSON: {e}", path=model_path)

    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"model schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")

    try:
        label_map: Dict[str, int] = document["label_map"]
        feature_names: List[str] = list(document["feature_names"])
        label_column: str = document["label_column"]
        hyper = Hyperparams.from_dict(document["hyperparams"])
        A = np.array(document["A"], dtype=float)
        alpha = np.array(document["alpha"], dtype=float)
        bandwidths = tuple(float(b) for b in document["bandwidths"])
        flagged = tuple(int(m) for m in document.get("flagged", []))
        alpha_gradient = tuple(float(g) for g in document.get("alpha_gradient", []))
        mode = document["mode"]
        trace = tuple(ObjectiveTerms(**terms) for terms in document.get("objective_trace", []))
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"model file {model_path} is malformed: {e}")

    if not os.path.isfile(train_path):
        raise DataFileError("training data file not found", path=train_path)
    frame = pd.read_csv(train_path, float_precision="round_trip", dtype={label_column: str},
                        keep_default_na=False, encoding="utf-8")
    missing = [c for c in feature_names + [label_column] if c not in frame.columns]
    if missing:
        raise DataFileError(f"missing column(s): {', '.join(missing)}", path=train_path)
    unknown = set(frame[label_column]) - set(label_map)
    if unknown:
        raise DataFileError(f"labels not in the model's label map: {sorted(unknown)}", path=train_path)

    features = frame[feature_names].to_numpy(dtype=float)
    labels = frame[label_column].map(label_map).to_numpy(dtype=int)
    if A.shape[0] != features.shape[0]:
        raise InputError(f"A has {A.shape[0]} rows but {train_path} holds {features.shape[0]} samples")

    label_names = [name for name, _ in sorted(label_map.items(), key=lambda item: item[1])]
    model = EmbeddingModel(
        A=A,
        alpha=alpha,
        train_features=features,
        train_labels=labels,
        bandwidths=bandwidths,
        hyper=hyper,
        mode=mode,
        class_count=len(label_map),
        flagged=flagged,
        objective_trace=trace,
        alpha_gradient=alpha_gradient,
    )
    logger.info(f"Loaded model from {directory}: N={features.shape[0]}, k={model.k}, mode={mode}")
    return model, label_names, feature_names
