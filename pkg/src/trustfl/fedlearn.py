"""Sequential ("vanilla") federated learning with a logistic-regression model.

The coordinator benchmarks the current model on its validation set, hands
it to the next hospital, receives the locally trained model back, and
repeats until every hospital has been visited.  There is no averaging.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import crypto
from .errors import DivergenceError, HospitalTimeoutError, ShapeError, UntrustedConnectionError

log = logging.getLogger(__name__)


@dataclass(eq=False)
class ModelParams:
    weights: np.ndarray
    bias: float = 0.0
    version: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.bias = float(self.bias)
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise DivergenceError("model parameters must be finite")

    @classmethod
    def zeros(cls, d: int) -> "ModelParams":
        return cls(np.zeros(d), 0.0, 0)

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    def equals(self, other: "ModelParams") -> bool:
        return (
            self.version == other.version
            and self.bias == other.bias
            and np.array_equal(self.weights, other.weights)
        )

    def fingerprint(self) -> str:
        return crypto.digest(serialize_model(self).encode("utf-8")).hex()


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.labels = np.asarray(self.labels).reshape(-1).astype(np.int64)
        if self.features.shape[0] < 1:
            raise ShapeError("dataset needs at least one row")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ShapeError("features and labels disagree on n")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be 0 or 1")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 50
    threshold: float = 0.5

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError("epochs must be a positive integer")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_dims(model: ModelParams, d: int):
    if model.d != d:
        raise ShapeError(f"model has d={model.d} but data has d={d}")


def predict(model: ModelParams, row) -> float:
    row = np.asarray(row, dtype=np.float64).reshape(-1)
    _check_dims(model, row.shape[0])
    return float(sigmoid(np.dot(model.weights, row) + model.bias))


def predict_proba(model: ModelParams, features: np.ndarray) -> np.ndarray:
    features = np.atleast_2d(features)
    _check_dims(model, features.shape[1])
    return sigmoid(features @ model.weights + model.bias)


def loss(weights: np.ndarray, bias: float, dataset: Dataset) -> float:
    """Mean binary cross-entropy, computed in the log domain."""
    z = dataset.features @ weights + bias
    y = dataset.labels
    # -[y log s(z) + (1-y) log(1-s(z))] = logaddexp(0, z) - y z
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def gradient(weights: np.ndarray, bias: float, dataset: Dataset) -> tuple[np.ndarray, float]:
    residual = sigmoid(dataset.features @ weights + bias) - dataset.labels
    return dataset.features.T @ residual / dataset.n, float(np.mean(residual))


def train_local(model: ModelParams, dataset: Dataset, config: TrainConfig) -> ModelParams:
    _check_dims(model, dataset.d)
    w = model.weights.copy()
    b = model.bias
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
        for _ in range(int(config.epochs)):
            gw, gb = gradient(w, b, dataset)
            w -= config.learning_rate * gw
            b -= config.learning_rate * gb
    if not (np.all(np.isfinite(w)) and np.isfinite(b)):
        raise DivergenceError("training produced non-finite parameters")
    return ModelParams(w, b, model.version + 1)


def evaluate(model: ModelParams, dataset: Dataset, threshold: float = 0.5) -> ConfusionMatrix:
    predicted = predict_proba(model, dataset.features) >= threshold
    actual = dataset.labels == 1
    return ConfusionMatrix(
        tp=int(np.sum(predicted & actual)),
        fp=int(np.sum(predicted & ~actual)),
        tn=int(np.sum(~predicted & ~actual)),
        fn=int(np.sum(~predicted & actual)),
    )


# --- data -----------------------------------------------------------------

@dataclass
class Partition:
    role: str  # "train" or "validation"
    data: Dataset


def partition(dataset: Dataset, k: int = 4, seed: int = 0) -> list[Partition]:
    """Shuffle, then cut into ``k`` near-equal parts; the last one validates."""
    if k < 2:
        raise ValueError("need at least one training and one validation partition")
    if dataset.n < k:
        raise ValueError(f"cannot split {dataset.n} rows into {k} partitions")
    order = np.random.default_rng(seed).permutation(dataset.n)
    base, extra = divmod(dataset.n, k)
    parts, start = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        idx = order[start : start + size]
        start += size
        role = "validation" if i == k - 1 else "train"
        parts.append(Partition(role, Dataset(dataset.features[idx], dataset.labels[idx])))
    return parts


def synthetic_dataset(n: int = 1000, d: int = 10, separation: float = 3.0, seed: int = 0) -> Dataset:
    """Two unit-covariance Gaussian clusters whose means are ``separation`` apart."""
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=np.int64)
    labels[n // 2 :] = 1
    rng.shuffle(labels)
    direction = np.ones(d) / np.sqrt(d)
    means = np.where(labels[:, None] == 1, 0.5, -0.5) * separation * direction
    return Dataset(means + rng.standard_normal((n, d)), labels)


def flip_labels(dataset: Dataset, rate: float, seed: int = 0) -> Dataset:
    if rate <= 0:
        return dataset
    flip = np.random.default_rng(seed).random(dataset.n) < rate
    return Dataset(dataset.features.copy(), np.where(flip, 1 - dataset.labels, dataset.labels))


def load_csv(path: Union[str, Path]) -> Dataset:
    """Read a header-first CSV whose last column is the 0/1 label."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise ValueError(f"{path}: expected a header with at least one feature and a label column")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    if table.shape[1] != len(header):
        raise ShapeError(f"{path}: rows do not match header width")
    labels = table[:, -1]
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError(f"{path}: label column must contain only 0 and 1")
    return Dataset(table[:, :-1], labels.astype(np.int64))


# --- model text format ----------------------------------------------------

def serialize_model(model: ModelParams) -> str:
    return "\n".join(
        [
            f"d={model.d}",
            f"version={model.version}",
            f"bias={float(model.bias)!r}",
            "w=" + ",".join(repr(float(x)) for x in model.weights),
        ]
    )


def deserialize_model(text: str, expected_d: Optional[int] = None) -> ModelParams:
    fields = {}
    for line in text.split("\n"):
        key, sep, value = line.partition("=")
        if not sep or key in fields:
            raise ValueError(f"malformed model line {line!r}")
        fields[key] = value
    if set(fields) != {"d", "version", "bias", "w"}:
        raise ValueError(f"model text needs d, version, bias, w; got {sorted(fields)}")
    d = int(fields["d"])
    weights = [float(x) for x in fields["w"].split(",")] if fields["w"] else []
    if len(weights) != d:
        raise ShapeError(f"model declares d={d} but carries {len(weights)} weights")
    if expected_d is not None and d != expected_d:
        raise ShapeError(f"model has d={d}, expected {expected_d}")
    return ModelParams(np.array(weights, dtype=np.float64), float(fields["bias"]), int(fields["version"]))


# --- coordinator loop -----------------------------------------------------

@dataclass
class LineageStep:
    batch: int
    hospital: str
    sent: str  # fingerprint of the model handed to the hospital
    returned: str  # fingerprint of the model it sent back
    sent_version: int
    returned_version: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FLResult:
    history: list[tuple[int, ConfusionMatrix]]
    model: ModelParams
    lineage: list[LineageStep] = field(default_factory=list)


def run_vanilla_fl(
    coordinator,
    connection_ids: Sequence[str],
    validation: Dataset,
    config: TrainConfig,
    *,
    network,
    model: Optional[ModelParams] = None,
    budget: int = 10_000,
    on_round: Optional[Callable[[int], None]] = None,
) -> FLResult:
    """Visit each hospital once, in order, benchmarking before and after.

    ``coordinator`` is an agent that can send train requests; ``network``
    delivers messages until a reply arrives or ``budget`` steps pass.
    Returns ``len(connection_ids) + 1`` confusion matrices.
    """
    untrusted = [cid for cid in connection_ids if not coordinator.is_mutually_trusted(cid)]
    if untrusted:
        raise UntrustedConnectionError(f"refusing to run FL over untrusted connections {untrusted}")
    model = model if model is not None else ModelParams.zeros(validation.d)
    _check_dims(model, validation.d)

    history = [(0, evaluate(model, validation, config.threshold))]
    lineage = []
    if on_round:
        on_round(0)
    for batch, cid in enumerate(connection_ids, start=1):
        sent_text = serialize_model(model)
        thid = coordinator.send_train_request(cid, sent_text, batch)
        done = network.run_until(lambda: thid in coordinator.train_results, budget)
        if not done:
            raise HospitalTimeoutError(coordinator.peer_label(cid), budget)
        returned = deserialize_model(coordinator.train_results[thid], expected_d=validation.d)
        lineage.append(
            LineageStep(
                batch=batch,
                hospital=coordinator.peer_label(cid),
                sent=model.fingerprint(),
                returned=returned.fingerprint(),
                sent_version=model.version,
                returned_version=returned.version,
            )
        )
        model = returned
        cm = evaluate(model, validation, config.threshold)
        log.info("batch %d via %s: %s acc=%.3f", batch, coordinator.peer_label(cid), cm.to_dict(), cm.accuracy)
        history.append((batch, cm))
        if on_round:
            on_round(batch)
    return FLResult(history, model, lineage)
