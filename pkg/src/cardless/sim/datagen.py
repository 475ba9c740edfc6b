"""Synthetic labeled datasets for training and evaluating the fraud scorer.

Legitimate rows are drawn around a fixed baseline profile.  Fraud rows are
the same profile pushed away by `separation` standard deviations on the
amount-deviation and velocity axes, with proportional drift on the novelty
flags and recency.  At separation 0 the two classes coincide exactly, so a
model trained on such data can do no better than chance; at separation 2
the classes are far enough apart for high-recall detection.  Everything is
deterministic per seed.
"""

from __future__ import annotations

import csv

import numpy as np

from ..fraud.features import FeatureVector
from ..fraud.model import LabeledDataset

_BASE_VELOCITY_MEAN = 1.5
_BASE_VELOCITY_STD = 1.2
_BASE_FLAG_P = 0.05
_BASE_RECENCY_MEAN = 0.5
_BASE_RECENCY_STD = 0.15


def gen_dataset(seed: int, n: int, fraud_rate: float, separation: float) -> LabeledDataset:
    if not 0.0 <= fraud_rate <= 1.0:
        raise ValueError("fraud_rate must be within [0, 1]")
    if separation < 0:
        raise ValueError("separation must be non-negative")
    rng = np.random.default_rng(seed)
    rows: list[tuple[FeatureVector, int]] = []
    flag_p_fraud = min(_BASE_FLAG_P + 0.225 * separation, 0.95)
    for _ in range(n):
        label = int(rng.random() < fraud_rate)
        shift = separation if label else 0.0

        zscore = rng.normal(shift, 1.0)
        # Amount follows the deviation axis so the two stay coherent.
        amount = max(1, round(10 ** (2.6 + 0.25 * zscore + 0.1 * rng.normal())))
        velocity = max(0.0, round(rng.normal(_BASE_VELOCITY_MEAN + shift * _BASE_VELOCITY_STD, _BASE_VELOCITY_STD)))
        novelty = float(rng.random() < (flag_p_fraud if label else _BASE_FLAG_P))
        recency = float(np.clip(rng.normal(_BASE_RECENCY_MEAN - 0.15 * shift, _BASE_RECENCY_STD), 0.0, 1.0))
        mismatch = float(rng.random() < (flag_p_fraud if label else _BASE_FLAG_P))

        rows.append(
            (
                FeatureVector(
                    amount_zscore=float(zscore),
                    log_amount=float(np.log10(1.0 + amount)),
                    txns_last_hour=float(velocity),
                    category_novelty=novelty,
                    recency=recency,
                    channel_mismatch=mismatch,
                ),
                label,
            )
        )
    return LabeledDataset(rows=rows)


_CSV_HEADER = ["amount_zscore", "log_amount", "txns_last_hour", "category_novelty", "recency", "channel_mismatch", "label"]


def save_dataset(data: LabeledDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for fv, label in data.rows:
            writer.writerow([repr(v) for v in fv.as_array().tolist()] + [label])


def load_dataset(path) -> LabeledDataset:
    rows: list[tuple[FeatureVector, int]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _CSV_HEADER:
            raise ValueError(f"unexpected dataset header: {header}")
        for row in reader:
            if not row:
                continue
            rows.append((FeatureVector.from_array([float(v) for v in row[:6]]), int(row[6])))
    return LabeledDataset(rows=rows)
