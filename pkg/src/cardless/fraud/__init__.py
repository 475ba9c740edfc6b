from .features import FeatureVector, OrderingError, TransactionRecord, extract_features
from .model import (
    DivergenceError,
    FraudModel,
    LabeledDataset,
    Metrics,
    evaluate,
    load_model,
    regularized_nll,
    regularized_nll_grad,
    save_model,
    train,
)

__all__ = [
    "FeatureVector",
    "TransactionRecord",
    "OrderingError",
    "extract_features",
    "FraudModel",
    "LabeledDataset",
    "Metrics",
    "DivergenceError",
    "train",
    "evaluate",
    "save_model",
    "load_model",
    "regularized_nll",
    "regularized_nll_grad",
]
