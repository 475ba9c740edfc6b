"""Account-history features for transaction scoring.

Six numbers summarize how a candidate transaction sits against the
account's past behavior: amount deviation, absolute size, velocity,
category novelty, recency, and channel consistency.  All of them are
computable from the transaction records the protocol engine appends to an
account, with defined base cases for brand-new accounts.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..errors import CardlessError

# Recency is measured in minutes since the previous transaction, capped at
# one day and scaled into [0, 1].
RECENCY_CAP_MINUTES = 1440.0

CHANNELS = ("merchant", "atm", "transfer")


class OrderingError(CardlessError, ValueError):
    """Candidate transaction is older than the account's latest history row."""


@dataclass(frozen=True)
class TransactionRecord:
    """One row of account history.

    Declined attempts are recorded too (they carry behavioral signal for
    velocity) but are excluded from spend statistics.
    """

    timestamp: float
    amount_minor_units: int
    category: str
    channel: str
    approved: bool = True


@dataclass(frozen=True)
class FeatureVector:
    amount_zscore: float
    log_amount: float
    txns_last_hour: float
    category_novelty: float
    recency: float
    channel_mismatch: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.amount_zscore,
                self.log_amount,
                self.txns_last_hour,
                self.category_novelty,
                self.recency,
                self.channel_mismatch,
            ],
            dtype=np.float64,
        )

    @staticmethod
    def from_array(values) -> "FeatureVector":
        v = [float(x) for x in values]
        if len(v) != 6:
            raise ValueError(f"expected 6 features, got {len(v)}")
        return FeatureVector(*v)


FEATURE_DIM = 6


def modal_channel(history: list[TransactionRecord]) -> str | None:
    """Most frequent channel; ties broken lexicographically for determinism."""
    if not history:
        return None
    counts = Counter(row.channel for row in history)
    top = max(counts.values())
    return min(name for name, c in counts.items() if c == top)


def extract_features(history: list[TransactionRecord], txn: TransactionRecord) -> FeatureVector:
    """Features of a candidate transaction against the account's history.

    Empty history is the defined base case: zero amount deviation, both
    novelty flags raised (everything is first-seen), maximal staleness.
    """
    if txn.amount_minor_units < 0:
        raise ValueError("transaction amount must be non-negative")
    if history:
        latest = max(row.timestamp for row in history)
        if txn.timestamp < latest:
            raise OrderingError(
                f"candidate timestamp {txn.timestamp} precedes latest history row {latest}"
            )

    # Spend statistics only count approved rows; fewer than two observations
    # give no spread, and zero spread gives no meaningful deviation.
    approved_amounts = [row.amount_minor_units for row in history if row.approved]
    zscore = 0.0
    if len(approved_amounts) >= 2:
        mean = float(np.mean(approved_amounts))
        std = float(np.std(approved_amounts))
        if std > 0:
            zscore = (txn.amount_minor_units - mean) / std

    log_amount = math.log10(1.0 + txn.amount_minor_units)

    hour_ago = txn.timestamp - 3600.0
    txns_last_hour = float(sum(1 for row in history if row.timestamp > hour_ago))

    seen_categories = {row.category for row in history}
    category_novelty = 0.0 if txn.category in seen_categories else 1.0

    if history:
        latest = max(row.timestamp for row in history)
        minutes = (txn.timestamp - latest) / 60.0
        recency = min(minutes, RECENCY_CAP_MINUTES) / RECENCY_CAP_MINUTES
    else:
        recency = 1.0

    modal = modal_channel(history)
    channel_mismatch = 1.0 if modal is None or txn.channel != modal else 0.0

    return FeatureVector(
        amount_zscore=zscore,
        log_amount=log_amount,
        txns_last_hour=txns_last_hour,
        category_novelty=category_novelty,
        recency=recency,
        channel_mismatch=channel_mismatch,
    )
