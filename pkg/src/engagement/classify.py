"""Linear classifier with calibrated per-class probabilities.

Multinomial logistic regression trained by seeded minibatch SGD. The
softmax head makes every prediction a true probability simplex, which is
what downstream scoring accumulates. Training is deterministic for a fixed
(features, labels, config): the only randomness is a seeded generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ClassifierError
from .hashing import digest_parts

FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class ProbVector:
    """Per-class probabilities on the simplex (each >= 0, sum within 1e-9 of 1)."""

    class_ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        if not self.class_ids:
            raise ClassifierError("probability vector has no classes")
        if list(self.class_ids) != sorted(self.class_ids):
            raise ClassifierError("probability vector class_ids must be sorted")
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.shape != (len(self.class_ids),):
            raise ClassifierError("probability vector length does not match class count")
        if not np.all(np.isfinite(vals)):
            raise ClassifierError("probabilities contain non-finite values")
        if np.any(vals < 0):
            raise ClassifierError("probabilities must be non-negative")
        total = float(vals.sum())
        if abs(total - 1.0) > 1e-9:
            raise ClassifierError(f"probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "values", vals)

    def as_dict(self) -> dict[str, float]:
        return {c: float(p) for c, p in zip(self.class_ids, self.values)}

    def __getitem__(self, class_id: str) -> float:
        try:
            return float(self.values[self.class_ids.index(class_id)])
        except ValueError:
            raise KeyError(class_id) from None

    def argmax_class(self) -> str:
        # np.argmax returns the first maximum; class_ids are sorted, so ties
        # resolve to the lexicographically smallest class.
        return self.class_ids[int(np.argmax(self.values))]

    def top(self, n: int) -> list[tuple[str, float]]:
        order = sorted(zip(self.class_ids, self.values), key=lambda cp: (-cp[1], cp[0]))
        return [(c, float(p)) for c, p in order[:n]]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 0.5
    l2_penalty: float = 1e-5
    batch_size: int = 128
    holdout_fraction: float = 0.1
    lr_decay: float = 0.0  # lr_t = learning_rate / (1 + lr_decay * epoch)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ClassifierError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ClassifierError("learning_rate must be positive")
        if self.l2_penalty < 0:
            raise ClassifierError("l2_penalty must be >= 0")
        if self.batch_size < 1:
            raise ClassifierError("batch_size must be >= 1")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ClassifierError("holdout_fraction must lie in [0, 1)")
        if self.lr_decay < 0:
            raise ClassifierError("lr_decay must be >= 0")


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    class_ids: tuple[str, ...]
    weights: np.ndarray  # (C, F)
    biases: np.ndarray  # (C,)
    feature_space: str  # "tfidf-sparse" or "reduced-dense"

    def __post_init__(self) -> None:
        if len(self.class_ids) < 2:
            raise ClassifierError("classifier needs at least two classes")
        if list(self.class_ids) != sorted(self.class_ids):
            raise ClassifierError("class_ids must be sorted")
        W = np.ascontiguousarray(self.weights, dtype=np.float64)
        b = np.ascontiguousarray(self.biases, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != len(self.class_ids):
            raise ClassifierError("weights must be (n_classes, n_features)")
        if b.shape != (len(self.class_ids),):
            raise ClassifierError("biases must have one entry per class")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ClassifierError("model parameters contain non-finite values")
        if not self.feature_space:
            raise ClassifierError("feature_space tag is required")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", b)

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def _scores(self, x) -> np.ndarray:
        if isinstance(x, Mapping):
            if not x:
                return self.biases.copy()
            idx = np.fromiter(x.keys(), dtype=np.int64, count=len(x))
            vals = np.fromiter(x.values(), dtype=np.float64, count=len(x))
            if idx.min() < 0 or idx.max() >= self.n_features:
                raise ClassifierError("feature index out of range")
            return self.weights[:, idx] @ vals + self.biases
        if sp.issparse(x):
            x = np.asarray(x.todense()).ravel()
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise ClassifierError(f"expected {self.n_features} features, got {x.shape}")
        return self.weights @ x + self.biases

    def predict_proba(self, x) -> ProbVector:
        z = self._scores(x)
        z = z - z.max()
        e = np.exp(z)
        return ProbVector(self.class_ids, e / e.sum())

    def predict_proba_matrix(self, X) -> np.ndarray:
        """(n, C) matrix of row simplexes for a feature matrix."""
        Z = X @ self.weights.T + self.biases
        Z = np.asarray(Z, dtype=np.float64)
        Z -= Z.max(axis=1, keepdims=True)
        np.exp(Z, out=Z)
        Z /= Z.sum(axis=1, keepdims=True)
        return Z

    def digest(self) -> str:
        return digest_parts(
            "linear-classifier",
            "\n".join(self.class_ids),
            self.weights,
            self.biases,
            self.feature_space,
        )


def loss_and_grad(
    weights: np.ndarray,
    biases: np.ndarray,
    X,
    y_idx: np.ndarray,
    l2_penalty: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy with L2, and its exact gradient.

    This is the objective the trainer descends; tests compare the gradient
    against central finite differences.
    """
    n = X.shape[0]
    Z = np.asarray(X @ weights.T + biases, dtype=np.float64)
    m = Z.max(axis=1, keepdims=True)
    shifted = Z - m
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    loss = -float(log_probs[np.arange(n), y_idx].mean())
    with np.errstate(over="ignore"):  # diverging weights overflow to inf; train() checks
        loss += 0.5 * l2_penalty * float(np.sum(weights * weights))
    G = exp / denom
    G[np.arange(n), y_idx] -= 1.0
    G /= n
    grad_w = (X.T @ G).T + l2_penalty * weights
    grad_b = G.sum(axis=0)
    return loss, np.ascontiguousarray(grad_w), grad_b


@dataclass(frozen=True)
class TrainResult:
    model: LinearClassifier
    held_out_accuracy: float | None
    final_loss: float
    n_train: int
    n_holdout: int


def train(
    features,
    labels: Sequence[str],
    config: TrainConfig = TrainConfig(),
    feature_space: str = "tfidf-sparse",
) -> TrainResult:
    """Fit the classifier; deterministic given (features, labels, config)."""
    n = features.shape[0]
    if n != len(labels):
        raise ClassifierError(f"{n} feature rows but {len(labels)} labels")
    if n == 0:
        raise ClassifierError("cannot train on an empty corpus")
    class_ids = tuple(sorted(set(labels)))
    if len(class_ids) < 2:
        raise ClassifierError("training needs at least two classes")
    index = {c: i for i, c in enumerate(class_ids)}
    y = np.array([index[l] for l in labels], dtype=np.int64)

    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(n)
    n_holdout = int(round(config.holdout_fraction * n))
    if n - n_holdout < len(class_ids):
        raise ClassifierError("holdout leaves fewer training rows than classes")
    holdout_idx, train_idx = perm[:n_holdout], perm[n_holdout:]
    X_train, y_train = features[train_idx], y[train_idx]
    n_train = len(train_idx)

    C, F = len(class_ids), features.shape[1]
    W = np.zeros((C, F))
    b = np.zeros(C)
    last_loss = float("nan")
    for epoch in range(config.epochs):
        lr = config.learning_rate / (1.0 + config.lr_decay * epoch)
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_train, config.batch_size):
            rows = order[start : start + config.batch_size]
            loss, grad_w, grad_b = loss_and_grad(W, b, X_train[rows], y_train[rows], config.l2_penalty)
            W -= lr * grad_w
            b -= lr * grad_b
            epoch_loss += loss
            n_batches += 1
        last_loss = epoch_loss / n_batches
        if not np.isfinite(last_loss):
            raise ClassifierError(
                f"training diverged at epoch {epoch} (loss {last_loss}); lower the learning rate"
            )

    model = LinearClassifier(class_ids, W, b, feature_space)
    held_out_accuracy = None
    if n_holdout:
        probs = model.predict_proba_matrix(features[holdout_idx])
        held_out_accuracy = float(np.mean(np.argmax(probs, axis=1) == y[holdout_idx]))
    return TrainResult(model, held_out_accuracy, last_loss, n_train, n_holdout)


def predict_proba(model: LinearClassifier, x) -> ProbVector:
    """Simplex probabilities for one feature vector (sparse map, array, or sparse row)."""
    return model.predict_proba(x)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    macro_f1: float
    per_class: dict[str, ClassMetrics] = field(compare=False)


def evaluate(model: LinearClassifier, features, labels: Sequence[str]) -> EvalReport:
    """Accuracy, macro-F1, and per-class precision/recall/F1/support.

    Macro-F1 averages over the model's full class list (absent classes
    contribute 0), matching a fixed-label-set convention. Argmax ties pick
    the lexicographically smallest class via first-maximum.
    """
    if features.shape[0] == 0:
        raise ClassifierError("cannot evaluate on an empty test set")
    if features.shape[0] != len(labels):
        raise ClassifierError(f"{features.shape[0]} feature rows but {len(labels)} labels")
    unknown = sorted(set(labels) - set(model.class_ids))
    if unknown:
        raise ClassifierError(f"test labels outside the model's classes: {unknown}")
    index = {c: i for i, c in enumerate(model.class_ids)}
    y_true = np.array([index[l] for l in labels], dtype=np.int64)
    probs = model.predict_proba_matrix(features)
    y_pred = np.argmax(probs, axis=1)

    C = len(model.class_ids)
    true_pos = np.zeros(C, dtype=np.int64)
    pred_count = np.zeros(C, dtype=np.int64)
    support = np.zeros(C, dtype=np.int64)
    np.add.at(pred_count, y_pred, 1)
    np.add.at(support, y_true, 1)
    hits = y_pred == y_true
    np.add.at(true_pos, y_true[hits], 1)

    per_class: dict[str, ClassMetrics] = {}
    f1s = np.zeros(C)
    for i, class_id in enumerate(model.class_ids):
        precision = true_pos[i] / pred_count[i] if pred_count[i] else 0.0
        recall = true_pos[i] / support[i] if support[i] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        f1s[i] = f1
        per_class[class_id] = ClassMetrics(float(precision), float(recall), float(f1), int(support[i]))
    return EvalReport(float(np.mean(hits)), float(f1s.mean()), per_class)


def save_classifier(model: LinearClassifier, path: str | Path) -> None:
    from .embed import _npz_path, _pack_terms

    np.savez_compressed(
        _npz_path(path),
        format_version=np.int64(FORMAT_VERSION),
        kind=np.frombuffer(b"linear-classifier", dtype=np.uint8),
        class_ids=_pack_terms(model.class_ids),
        weights=model.weights,
        biases=model.biases,
        feature_space=np.frombuffer(model.feature_space.encode("utf-8"), dtype=np.uint8),
    )


def load_classifier(path: str | Path) -> LinearClassifier:
    from .embed import _open_artifact, _unpack_terms

    data = _open_artifact(path, "linear-classifier")
    return LinearClassifier(
        class_ids=_unpack_terms(data["class_ids"]),
        weights=data["weights"],
        biases=data["biases"],
        feature_space=data["feature_space"].tobytes().decode("utf-8"),
    )
