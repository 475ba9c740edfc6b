"""Logistic-regression transaction scorer.

The model predicts the probability that a transaction is fraudulent via the
logistic function over a linear combination of standardized features.
Training runs full-batch gradient descent on the L2-regularized negative
log-likelihood: deterministic, no stochastic shuffling, so fixed data and
hyperparameters reproduce bit-identical coefficients.

Scores at or above the decision threshold classify as fraud.  The tie goes
to fraud deliberately: the approval pipeline only proceeds on scores
strictly below the threshold, so the boundary case fails safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import CardlessError
from .features import FeatureVector

FRAUD = "fraud"
LEGIT = "legit"

# Open-interval clamp for probabilities: keeps predict_proba strictly inside
# (0, 1) even when the logit saturates float64 (|logit| >= ~37), and keeps
# log() finite in the loss.
_P_FLOOR = 1e-300
_P_CEIL = float(np.nextafter(1.0, 0.0))


class DivergenceError(CardlessError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged at epoch {epoch}")
        self.epoch = epoch


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, _P_FLOOR, _P_CEIL)


@dataclass
class LabeledDataset:
    """Feature vectors with 0 (legit) / 1 (fraud) labels."""

    rows: list[tuple[FeatureVector, int]]

    def __len__(self) -> int:
        return len(self.rows)

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.array([fv.as_array() for fv, _ in self.rows], dtype=np.float64)
        y = np.array([label for _, label in self.rows], dtype=np.float64)
        return X, y


@dataclass
class FraudModel:
    """Trained coefficients plus the standardization frozen at training time."""

    beta0: float
    betas: np.ndarray
    feature_means: np.ndarray
    feature_stds: np.ndarray
    threshold: float = 0.5

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        self.feature_means = np.asarray(self.feature_means, dtype=np.float64)
        self.feature_stds = np.asarray(self.feature_stds, dtype=np.float64)
        if not (len(self.betas) == len(self.feature_means) == len(self.feature_stds)):
            raise ValueError("coefficient and standardization dimensions disagree")
        if np.any(self.feature_stds <= 0):
            raise ValueError("feature stds must be strictly positive")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly between 0 and 1")

    @property
    def dim(self) -> int:
        return len(self.betas)

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feature_means) / self.feature_stds

    def predict_proba(self, x: FeatureVector | np.ndarray) -> float:
        """Fraud probability, strictly inside (0, 1)."""
        raw = x.as_array() if isinstance(x, FeatureVector) else np.asarray(x, dtype=np.float64)
        if raw.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} features, got shape {raw.shape}")
        z = self.beta0 + float(self._standardize(raw) @ self.betas)
        return float(_sigmoid(np.array([z]))[0])

    def predict_proba_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected (n, {self.dim}) features, got shape {X.shape}")
        z = self.beta0 + ((X - self.feature_means) / self.feature_stds) @ self.betas
        return _sigmoid(z)

    def classify(self, x: FeatureVector | np.ndarray) -> str:
        return FRAUD if self.predict_proba(x) >= self.threshold else LEGIT


def regularized_nll(beta: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Mean negative log-likelihood plus (l2/2)*|w|^2; intercept unpenalized.

    beta[0] is the intercept, beta[1:] the feature weights; X is already
    standardized here.
    """
    z = beta[0] + X @ beta[1:]
    p = _sigmoid(z)
    nll = -float(np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    return nll + 0.5 * l2 * float(beta[1:] @ beta[1:])


def regularized_nll_grad(beta: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    """Analytic gradient of regularized_nll with respect to beta."""
    m = X.shape[0]
    z = beta[0] + X @ beta[1:]
    residual = _sigmoid(z) - y
    grad = np.empty_like(beta)
    grad[0] = float(np.sum(residual)) / m
    grad[1:] = X.T @ residual / m + l2 * beta[1:]
    return grad


def train(
    data: LabeledDataset,
    lr: float = 0.1,
    epochs: int = 500,
    l2: float = 1e-4,
    threshold: float = 0.5,
) -> FraudModel:
    """Full-batch gradient descent from zero-initialized coefficients.

    Standardization parameters come from the training data and ship inside
    the model so inference sees identically scaled features.  Raises
    DivergenceError (with the epoch index) if the loss goes non-finite.
    """
    if len(data) == 0:
        raise ValueError("training data is empty")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    X_raw, y = data.to_arrays()
    classes = set(np.unique(y))
    if classes != {0.0, 1.0}:
        raise ValueError(f"training data must contain both classes, got labels {sorted(classes)}")

    means = X_raw.mean(axis=0)
    stds = X_raw.std(axis=0)
    stds[stds == 0] = 1.0  # constant columns carry no signal; leave them unscaled
    X = (X_raw - means) / stds

    beta = np.zeros(X.shape[1] + 1, dtype=np.float64)
    for epoch in range(epochs):
        beta = beta - lr * regularized_nll_grad(beta, X, y, l2)
        if not np.all(np.isfinite(beta)) or not math.isfinite(regularized_nll(beta, X, y, l2)):
            raise DivergenceError(epoch)

    return FraudModel(
        beta0=float(beta[0]),
        betas=beta[1:].copy(),
        feature_means=means,
        feature_stds=stds,
        threshold=threshold,
    )


@dataclass
class Metrics:
    true_positives: int
    false_positives: int
    true_negatives: int
    false_negatives: int
    precision: float
    recall: float
    auc: float

    @property
    def confusion(self) -> tuple[int, int, int, int]:
        return (self.true_positives, self.false_positives, self.true_negatives, self.false_negatives)


def rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """AUC as the Mann-Whitney rank statistic, with average ranks on ties.

    A constant scorer therefore lands at exactly 0.5.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # average 1-based rank
        i = j + 1
    rank_sum_pos = float(np.sum(ranks[labels == 1]))
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate(model: FraudModel, data: LabeledDataset) -> Metrics:
    """Confusion matrix at the model threshold, precision/recall, rank AUC."""
    if len(data) == 0:
        raise ValueError("evaluation data is empty")
    X, y = data.to_arrays()
    p = model.predict_proba_batch(X)
    predicted_fraud = p >= model.threshold
    actual_fraud = y == 1
    tp = int(np.sum(predicted_fraud & actual_fraud))
    fp = int(np.sum(predicted_fraud & ~actual_fraud))
    tn = int(np.sum(~predicted_fraud & ~actual_fraud))
    fn = int(np.sum(~predicted_fraud & actual_fraud))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    auc = rank_auc(p, y.astype(int))
    return Metrics(tp, fp, tn, fn, precision, recall, auc)


# ---------------------------------------------------------------------------
# Serialization: versioned plain text, shortest round-trip decimals.

_FORMAT_HEADER = "cardless-fraud-model v1"


def save_model(model: FraudModel, path) -> None:
    lines = [
        _FORMAT_HEADER,
        f"dim {model.dim}",
        "means " + " ".join(repr(float(v)) for v in model.feature_means),
        "stds " + " ".join(repr(float(v)) for v in model.feature_stds),
        f"beta0 {float(model.beta0)!r}",
        "betas " + " ".join(repr(float(v)) for v in model.betas),
        f"threshold {float(model.threshold)!r}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> FraudModel:
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or lines[0] != _FORMAT_HEADER:
        raise ValueError(f"unrecognized model file header: {lines[0] if lines else '<empty>'}")
    fields: dict[str, str] = {}
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        fields[key] = rest
    dim = int(fields["dim"])
    means = np.array([float(v) for v in fields["means"].split()])
    stds = np.array([float(v) for v in fields["stds"].split()])
    betas = np.array([float(v) for v in fields["betas"].split()])
    if not (len(means) == len(stds) == len(betas) == dim):
        raise ValueError("model file dimensions disagree with declared dim")
    return FraudModel(
        beta0=float(fields["beta0"]),
        betas=betas,
        feature_means=means,
        feature_stds=stds,
        threshold=float(fields["threshold"]),
    )
