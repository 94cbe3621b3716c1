"""Logistic-regression detector trained with full-batch gradient descent.

Training standardizes features to zero mean and unit variance, then
minimizes mean log-loss with L2 regularization on the weights (never the
bias).  Everything is deterministic: weights start at zero and the data
order never changes, so two runs on the same examples produce
bit-identical models.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateLabels,
    NonFiniteLoss,
    ParseError,
    SchemaMismatch,
    VersionMismatch,
)
from .features import FeatureVector, format_float

MODEL_FORMAT_VERSION = "detector-model-v1"
LABELS = ("human", "machine")
DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 500
    l2: float = 1e-4
    seed: int = 0
    record_loss_history: bool = False

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")


@dataclass
class DetectorModel:
    """Trained detector: weights over standardized features plus the
    standardization statistics themselves."""

    weights: np.ndarray
    bias: float
    schema_fingerprint: str
    feature_means: np.ndarray
    feature_stds: np.ndarray
    threshold: float = DEFAULT_THRESHOLD
    training_meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])


@dataclass(frozen=True)
class Prediction:
    probability_machine: float
    label: str
    features: FeatureVector


def _sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically safe logistic function."""
    out = np.empty_like(z, dtype=np.float64)
    positive = z >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-z[positive]))
    exp_z = np.exp(z[~positive])
    out[~positive] = exp_z / (1.0 + exp_z)
    return out


def logistic_loss_and_grad(
    weights: np.ndarray,
    bias: float,
    X: np.ndarray,
    y: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, float]:
    """Mean regularized log-loss and its analytic gradient.

    loss = mean(log(1 + exp(z)) - y*z) + (l2/2) * ||w||^2  with z = Xw + b.
    The log term goes through logaddexp so large |z| cannot overflow.
    """
    # Divergence shows up as inf/nan in the loss; the caller guards on
    # finiteness, so the overflow itself is not warning-worthy.
    with np.errstate(over="ignore", invalid="ignore"):
        z = X @ weights + bias
        probabilities = _sigmoid(z)
        n = X.shape[0]
        loss = float(
            np.mean(np.logaddexp(0.0, z) - y * z)
            + 0.5 * l2 * float(weights @ weights)
        )
        grad_weights = X.T @ (probabilities - y) / n + l2 * weights
        grad_bias = float(np.mean(probabilities - y))
    return loss, grad_weights, grad_bias


def standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column z-scores plus the (means, stds) used.

    A constant column keeps scale 1 and so stays at (numerically) zero.
    The constancy check is relative: rounding in the mean can leave a
    truly constant column with a std around 1e-16, and dividing by that
    would blow the column up into a duplicate of the bias.
    """
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    negligible = stds <= 1e-12 * np.maximum(np.abs(means), 1.0)
    stds = np.where(negligible, 1.0, stds)
    return (X - means) / stds, means, stds


def train(
    examples: Sequence[tuple[FeatureVector, str]],
    config: TrainConfig = TrainConfig(),
) -> DetectorModel:
    """Fit a detector on (feature vector, label) pairs.

    Raises DegenerateLabels unless both labels are present,
    SchemaMismatch if examples disagree on their schema, and
    NonFiniteLoss as soon as the loss leaves the reals.
    """
    if not examples:
        raise DegenerateLabels("no training examples")
    fingerprints = {vector.schema_fingerprint for vector, _ in examples}
    if len(fingerprints) != 1:
        raise SchemaMismatch(
            f"training examples span {len(fingerprints)} feature schemas"
        )
    labels = [label for _, label in examples]
    bad = sorted(set(labels) - set(LABELS))
    if bad:
        raise ValueError(f"unknown labels {bad}; expected {LABELS}")
    if set(labels) != set(LABELS):
        raise DegenerateLabels(
            f"training needs both labels, got only {sorted(set(labels))}"
        )
    X = np.array([vector.values for vector, _ in examples], dtype=np.float64)
    y = np.array([1.0 if label == "machine" else 0.0 for label in labels])
    Z, means, stds = standardize(X)
    weights = np.zeros(X.shape[1], dtype=np.float64)
    bias = 0.0
    history: list[float] = []
    for _ in range(config.epochs):
        loss, grad_weights, grad_bias = logistic_loss_and_grad(
            weights, bias, Z, y, config.l2
        )
        if not math.isfinite(loss):
            raise NonFiniteLoss(f"training loss became {loss}")
        if config.record_loss_history:
            history.append(loss)
        weights = weights - config.learning_rate * grad_weights
        bias = bias - config.learning_rate * grad_bias
    final_loss, _, _ = logistic_loss_and_grad(weights, bias, Z, y, config.l2)
    if not math.isfinite(final_loss):
        raise NonFiniteLoss(f"training loss became {final_loss}")
    meta = {
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "l2": config.l2,
        "seed": config.seed,
        "examples": len(examples),
        "final_loss": final_loss,
    }
    if config.record_loss_history:
        meta["loss_history"] = history
    return DetectorModel(
        weights=weights,
        bias=float(bias),
        schema_fingerprint=next(iter(fingerprints)),
        feature_means=means,
        feature_stds=stds,
        threshold=DEFAULT_THRESHOLD,
        training_meta=meta,
    )


def predict(model: DetectorModel, vector: FeatureVector) -> Prediction:
    """Score one feature vector.

    Probability at or above the threshold reads ``machine``; exactly at
    the threshold counts as machine.  Refuses vectors whose schema does
    not match the model's.
    """
    if vector.schema_fingerprint != model.schema_fingerprint:
        raise SchemaMismatch(
            "feature schema "
            f"{vector.schema_fingerprint[:12]}... does not match model schema "
            f"{model.schema_fingerprint[:12]}..."
        )
    x = np.asarray(vector.values, dtype=np.float64)
    if x.shape != model.weights.shape:
        raise SchemaMismatch(
            f"feature length {x.shape[0]} does not match model dim {model.dim}"
        )
    z = float(model.weights @ ((x - model.feature_means) / model.feature_stds)
              + model.bias)
    probability = float(_sigmoid(np.array([z]))[0])
    label = "machine" if probability >= model.threshold else "human"
    return Prediction(probability_machine=probability, label=label, features=vector)


def save_model(path: str, model: DetectorModel) -> None:
    """Write a model as a JSON header line plus one value per line.

    Values go through 17-significant-digit formatting so loading
    reproduces every float bit for bit.
    """
    header = {
        "version": MODEL_FORMAT_VERSION,
        "schema_fingerprint": model.schema_fingerprint,
        "dim": model.dim,
        "threshold": model.threshold,
        "meta": model.training_meta,
    }
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(header, sort_keys=True) + "\n")
        for prefix, values in (
            ("w", model.weights),
            ("m", model.feature_means),
            ("s", model.feature_stds),
        ):
            for value in values:
                handle.write(f"{prefix} {format_float(value)}\n")
        handle.write(f"b {format_float(model.bias)}\n")


def load_model(path: str) -> DetectorModel:
    """Read a model written by :func:`save_model`.

    Raises VersionMismatch for an unsupported format version and
    ParseError for structural damage (wrong counts, junk lines).
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read model {path!r}: {exc}") from exc
    if not lines:
        raise ParseError(f"{path}: model file is empty")
    try:
        header = json.loads(lines[0])
        version = header["version"]
        fingerprint = str(header["schema_fingerprint"])
        dim = int(header["dim"])
        threshold = float(header["threshold"])
        meta = dict(header.get("meta", {}))
    except (ValueError, TypeError, KeyError) as exc:
        raise ParseError(f"{path}:1: bad model header: {exc}") from exc
    if version != MODEL_FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: model format {version!r} is not {MODEL_FORMAT_VERSION!r}"
        )
    if dim < 1:
        raise ParseError(f"{path}: model dim must be >= 1, got {dim}")
    expected = [("w", dim), ("m", dim), ("s", dim), ("b", 1)]
    values: dict[str, list[float]] = {prefix: [] for prefix, _ in expected}
    cursor = 1
    for prefix, count in expected:
        for _ in range(count):
            if cursor >= len(lines):
                raise ParseError(f"{path}: truncated model file")
            parts = lines[cursor].split()
            if len(parts) != 2 or parts[0] != prefix:
                raise ParseError(
                    f"{path}:{cursor + 1}: expected a {prefix!r} value line"
                )
            try:
                values[prefix].append(float(parts[1]))
            except ValueError as exc:
                raise ParseError(f"{path}:{cursor + 1}: bad float") from exc
            cursor += 1
    if any(line.strip() for line in lines[cursor:]):
        raise ParseError(f"{path}:{cursor + 1}: trailing content after model values")
    return DetectorModel(
        weights=np.array(values["w"], dtype=np.float64),
        bias=values["b"][0],
        schema_fingerprint=fingerprint,
        feature_means=np.array(values["m"], dtype=np.float64),
        feature_stds=np.array(values["s"], dtype=np.float64),
        threshold=threshold,
        training_meta=meta,
    )
