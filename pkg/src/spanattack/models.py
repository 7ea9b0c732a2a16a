"""Target classifiers, the query-counting oracle, and model/dataset files.

Model file (JSON text). Common keys: ``kind`` ("knn" | "svm" | "mlp"),
``dim`` (input dimension D) and ``classes`` (C). Kind-specific keys:

* knn: ``k`` (int), ``train_x`` (N x D list), ``train_y`` (N ints)
* svm: ``weights`` (R x D), ``biases`` (R). R == 1 means a binary model
  with scores (-s, +s), s = w.x + b; otherwise R == C one-vs-rest rows.
* mlp: ``layers``: list of {``weights`` (out x in), ``bias`` (out),
  ``activation`` in {"relu", "tanh", "identity"}}; last width == C.

Floats are written with ``repr`` so a save/load cycle is bit-exact.

Dataset file (CSV): one row per instance, D float columns, then an optional
integer label column. An optional header row is skipped when ``header=True``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExhausted, DataError, InputError

ACTIVATIONS = {
    "relu": lambda z: np.maximum(z, 0.0),
    "tanh": np.tanh,
    "identity": lambda z: z,
}


@dataclass(frozen=True)
class LabeledInstance:
    x: np.ndarray
    y: int


class KNNModel:
    """K-nearest-neighbour classifier; soft scores are per-class vote counts.

    Equidistant training points are ranked by training-set index.
    """

    kind = "knn"

    def __init__(self, train_x, train_y, k, classes=None):
        self.train_x = np.asarray(train_x, dtype=np.float64)
        self.train_y = np.asarray(train_y, dtype=np.int64)
        self.k = int(k)
        self.classes = int(classes if classes is not None else self.train_y.max() + 1)
        self.dim = self.train_x.shape[1]
        self._sqnorm = np.sum(self.train_x**2, axis=1)
        self._max_norm = float(np.sqrt(self._sqnorm.max()))

    def neighbors(self, x) -> np.ndarray:
        """Indices of the k nearest training points, nearest first."""
        # Shortlist with the Gram expansion, then rank the shortlist by exact
        # distance so ties still resolve by index.
        approx = self._sqnorm - 2.0 * (self.train_x @ x)
        kth = np.partition(approx, self.k - 1)[self.k - 1]
        tol = 1e-9 * (self._max_norm + float(np.linalg.norm(x))) ** 2 + 1e-300
        cand = np.flatnonzero(approx <= kth + tol)
        exact = np.sum((self.train_x[cand] - x) ** 2, axis=1)
        return cand[np.argsort(exact, kind="stable")[: self.k]]

    def scores(self, x):
        idx = self.neighbors(x)
        return np.bincount(self.train_y[idx], minlength=self.classes).astype(np.float64)

    def to_dict(self):
        return {"k": self.k, "train_x": self.train_x.tolist(), "train_y": self.train_y.tolist()}


class LinearSVM:
    """Linear SVM: a single binary hyperplane or one-vs-rest rows."""

    kind = "svm"

    def __init__(self, weights, biases):
        self.weights = np.array(weights, dtype=np.float64, ndmin=2)
        self.biases = np.array(biases, dtype=np.float64, ndmin=1)
        self.dim = self.weights.shape[1]
        self.binary = self.weights.shape[0] == 1
        self.classes = 2 if self.binary else self.weights.shape[0]

    def scores(self, x):
        m = self.weights @ x + self.biases
        if self.binary:
            return np.array([-m[0], m[0]])
        return m

    def to_dict(self):
        return {"weights": self.weights.tolist(), "biases": self.biases.tolist()}


class MLPModel:
    """Feed-forward network returning final-layer logits (no softmax)."""

    kind = "mlp"

    def __init__(self, layers):
        self.layers = [
            (np.array(w, dtype=np.float64, ndmin=2), np.array(b, dtype=np.float64, ndmin=1), act)
            for w, b, act in layers
        ]
        self.dim = self.layers[0][0].shape[1]
        self.classes = self.layers[-1][0].shape[0]

    def scores(self, x):
        h = x
        for w, b, act in self.layers:
            h = ACTIVATIONS[act](w @ h + b)
        return h

    def to_dict(self):
        return {
            "layers": [
                {"weights": w.tolist(), "bias": b.tolist(), "activation": act} for w, b, act in self.layers
            ]
        }


@dataclass
class QueryCounter:
    soft_queries: int = 0
    hard_queries: int = 0

    @property
    def total(self) -> int:
        return self.soft_queries + self.hard_queries


def _check_input(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.dim:
        raise InputError(f"expected a vector of dimension {model.dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("query input contains non-finite values")
    return x


def query_soft(model, counter: QueryCounter, x) -> np.ndarray:
    x = _check_input(model, x)
    counter.soft_queries += 1
    return model.scores(x)


def query_hard(model, counter: QueryCounter, x) -> int:
    """Predicted label; ties go to the lowest class index."""
    x = _check_input(model, x)
    counter.hard_queries += 1
    return int(np.argmax(model.scores(x)))


def predict(model, x) -> int:
    """Uncounted label lookup for harness bookkeeping and out-of-band checks."""
    return int(np.argmax(model.scores(np.asarray(x, dtype=np.float64))))


@dataclass
class QueryOracle:
    """A model behind counted query endpoints with an optional hard budget.

    ``used`` counts queries issued through this oracle; ``counter`` may be
    shared with an outer caller that wants running totals.
    """

    model: object
    budget: int | None = None
    counter: QueryCounter = field(default_factory=QueryCounter)
    used: int = 0

    @property
    def remaining(self) -> float:
        return float("inf") if self.budget is None else self.budget - self.used

    def _check_budget(self):
        if self.budget is not None and self.used >= self.budget:
            raise BudgetExhausted(f"budget of {self.budget} queries exhausted")

    def soft(self, x) -> np.ndarray:
        self._check_budget()
        scores = query_soft(self.model, self.counter, x)
        self.used += 1
        return scores

    def hard(self, x) -> int:
        self._check_budget()
        label = query_hard(self.model, self.counter, x)
        self.used += 1
        return label


# ---------------------------------------------------------------- files


def _finite_array(value, name, ndim):
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise DataError(f"not a numeric array ({exc})", field=name) from None
    if arr.ndim != ndim:
        raise DataError(f"expected a {ndim}-D array, got {arr.ndim}-D", field=name)
    if not np.all(np.isfinite(arr)):
        raise DataError("non-finite parameter", field=name)
    return arr


def model_from_dict(data: dict):
    for key in ("kind", "dim", "classes"):
        if key not in data:
            raise DataError("missing key", field=key)
    kind, dim, classes = data["kind"], int(data["dim"]), int(data["classes"])
    if classes < 2:
        raise DataError("need at least 2 classes", field="classes")
    if kind == "knn":
        tx = _finite_array(data.get("train_x"), "train_x", 2)
        ty = np.array(data.get("train_y"), dtype=np.int64)
        k = int(data.get("k", 0))
        if tx.shape[1] != dim:
            raise DataError(f"width {tx.shape[1]} != dim {dim}", field="train_x")
        if ty.shape != (tx.shape[0],):
            raise DataError(f"expected {tx.shape[0]} labels", field="train_y")
        if ty.min() < 0 or ty.max() >= classes:
            raise DataError(f"labels must lie in [0, {classes})", field="train_y")
        if not 1 <= k <= tx.shape[0]:
            raise DataError(f"k must lie in [1, {tx.shape[0]}]", field="k")
        return KNNModel(tx, ty, k, classes)
    if kind == "svm":
        w = _finite_array(data.get("weights"), "weights", 2)
        b = _finite_array(data.get("biases"), "biases", 1)
        if w.shape[1] != dim:
            raise DataError(f"width {w.shape[1]} != dim {dim}", field="weights")
        if b.shape[0] != w.shape[0]:
            raise DataError(f"expected {w.shape[0]} biases", field="biases")
        model = LinearSVM(w, b)
        if model.classes != classes:
            raise DataError(f"weights imply {model.classes} classes, file says {classes}", field="classes")
        return model
    if kind == "mlp":
        raw = data.get("layers")
        if not raw:
            raise DataError("need at least one layer", field="layers")
        layers, width = [], dim
        for i, layer in enumerate(raw):
            w = _finite_array(layer.get("weights"), f"layers[{i}].weights", 2)
            b = _finite_array(layer.get("bias"), f"layers[{i}].bias", 1)
            act = layer.get("activation", "identity")
            if act not in ACTIVATIONS:
                raise DataError(f"unknown activation {act!r}", field=f"layers[{i}].activation")
            if w.shape[1] != width:
                raise DataError(f"input width {w.shape[1]} != {width}", field=f"layers[{i}].weights")
            if b.shape[0] != w.shape[0]:
                raise DataError(f"expected {w.shape[0]} entries", field=f"layers[{i}].bias")
            layers.append((w, b, act))
            width = w.shape[0]
        if width != classes:
            raise DataError(f"final width {width} != classes {classes}", field="layers")
        return MLPModel(layers)
    raise DataError(f"unknown model kind {kind!r}", field="kind")


def model_to_dict(model) -> dict:
    return {"kind": model.kind, "dim": model.dim, "classes": model.classes, **model.to_dict()}


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


def load_model(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"parse error: {exc}", field=str(path)) from None
    if not isinstance(data, dict):
        raise DataError("top level must be an object", field=str(path))
    return model_from_dict(data)


def save_dataset(path, x, y=None, header=False) -> None:
    x = np.asarray(x, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow([f"x{i}" for i in range(x.shape[1])] + (["label"] if y is not None else []))
        for i, row in enumerate(x):
            cells = [repr(float(v)) for v in row]
            if y is not None:
                cells.append(str(int(y[i])))
            writer.writerow(cells)


def load_dataset(path, labeled=True, header=False):
    """Return ``(X, y)``; ``y`` is None for unlabeled files."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if header:
        rows = rows[1:]
    rows = [r for r in rows if r]
    if not rows:
        raise DataError("no data rows", field=str(path))
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"row {i} has {len(r)} columns, expected {width}", field=str(path))
    try:
        if labeled:
            if width < 2:
                raise DataError("labeled rows need at least one feature column", field=str(path))
            x = np.array([[float(v) for v in r[:-1]] for r in rows])
            y = np.array([int(r[-1]) for r in rows], dtype=np.int64)
        else:
            x = np.array([[float(v) for v in r] for r in rows])
            y = None
    except ValueError as exc:
        raise DataError(f"parse error: {exc}", field=str(path)) from None
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite feature value", field=str(path))
    if y is not None and y.min() < 0:
        raise DataError("negative label", field=str(path))
    return x, y


def instances(x, y):
    return [LabeledInstance(np.asarray(xi, dtype=np.float64), int(yi)) for xi, yi in zip(x, y)]
