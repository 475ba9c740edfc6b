"""Domain types for the payment protocol.

A payment session walks the numbered phases of the transaction flow:
issuance covers phases 1-5 (request, network generation, delivery), and a
payment covers phases 6-11 (presentation, validation and adjudication, user
confirmation, settlement, notifications).  Phase numbers are carried
verbatim in event records so traces can be audited against the flow.

Five terminal outcome strings are canonical and byte-exact; protocol-level
declines (bad token, replay, insufficient funds) terminate sessions with
distinct "Declined: ..." reasons since the canonical set assigns them no
string of their own.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from ..card_numbering import PanParts
from ..credentials import CredentialRecord
from ..crypto_vault import Ciphertext
from ..fraud.features import TransactionRecord

# Canonical terminal outcomes.
PAYMENT_COMPLETED = "Payment completed successfully!"
USER_APPROVAL_FAILED = "User approval failed!"
FRAUDULENT_TRANSACTION = "Fraudulent transaction!"
FRAUD_DETECTION_FAILED = "Fraud detection failed!"
CARD_GENERATE_FAILED = "Virtual card generate failed!"

TERMINAL_OUTCOMES = (
    PAYMENT_COMPLETED,
    USER_APPROVAL_FAILED,
    FRAUDULENT_TRANSACTION,
    FRAUD_DETECTION_FAILED,
    CARD_GENERATE_FAILED,
)

# Protocol declines outside the canonical set.
DECLINED_TOKEN_FORMAT = "Declined: token format invalid"
DECLINED_TOKEN_AUTH = "Declined: token authentication failed"
DECLINED_TOKEN_EXPIRED = "Declined: token expired"
DECLINED_CARD_NOT_ACTIVE = "Declined: card not active"
DECLINED_INSUFFICIENT_FUNDS = "Declined: insufficient funds"

# Phase numbers.
PHASE_CARD_REQUEST = 1
PHASE_NETWORK_REQUEST = 2
PHASE_CARD_CREATED = 3
PHASE_CARD_SEALED = 4
PHASE_CARD_DELIVERED = 5
PHASE_PRESENTED = 6
PHASE_VALIDATED = 7
PHASE_USER_CONFIRMATION = 8
PHASE_ORDER_ACCEPTED = 9
PHASE_MERCHANT_NOTIFIED = 10
PHASE_USER_NOTIFIED = 11


class Usage(enum.Enum):
    ONE_TIME = "one_time"
    MULTI_USE = "multi_use"


class CardState(enum.Enum):
    ISSUED = "issued"
    ACTIVE = "active"
    RETIRED = "retired"


@dataclass(frozen=True)
class CardPolicy:
    usage: Usage
    limit_minor_units: int
    valid_for_seconds: int
    networks_allowed: frozenset[int] = frozenset({1})

    def problems(self) -> list[str]:
        issues = []
        if self.limit_minor_units <= 0:
            issues.append("limit must be positive")
        if self.valid_for_seconds <= 0:
            issues.append("validity period must be positive")
        if not self.networks_allowed:
            issues.append("at least one network must be allowed")
        return issues


@dataclass(frozen=True)
class Counterparty:
    kind: str  # "merchant" | "atm"
    id: str
    category: str = "general"

    def __post_init__(self):
        if self.kind not in ("merchant", "atm"):
            raise ValueError(f"counterparty kind must be merchant or atm, got {self.kind!r}")

    @property
    def channel(self) -> str:
        return self.kind


@dataclass
class VirtualCard:
    pan_parts: PanParts
    policy: CardPolicy
    issued_at: float
    expires_at: float
    state: CardState
    spent_accumulator: Ciphertext
    owner: str  # account id
    token_id: bytes = b""
    qr_payload: str = ""

    @property
    def pan(self) -> str:
        return self.pan_parts.pan

    def masked_pan(self) -> str:
        return self.pan_parts.masked()


@dataclass
class Account:
    account_id: str
    username: str
    credentials: CredentialRecord
    balance_minor_units: int
    history: list[TransactionRecord] = field(default_factory=list)


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    timestamp: float
    actor: str  # "user" | "bank" | "network" | "merchant" | "atm"
    phase: int
    detail: dict

    def as_dict(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "actor": self.actor,
            "phase": self.phase,
            "detail": dict(self.detail),
        }


class OutcomeAlreadySet(RuntimeError):
    pass


@dataclass
class PaymentSession:
    """One transaction's walk through phases 6-11.

    Events are append-only, one per phase reached, strictly ordered by seq.
    The outcome is set exactly once; the final event carries it in its
    detail.
    """

    session_id: str
    token_id_hex: str
    counterparty: Counterparty
    amount_minor_units: int
    opened_at: float
    phase: int = PHASE_PRESENTED
    fraud_score: float | None = None
    outcome: str = "pending"
    events: list[SessionEvent] = field(default_factory=list)
    # Internal linkage; never exposed in counterparty-visible event details.
    card_pan: str | None = None
    account_id: str | None = None

    def add_event(self, timestamp: float, actor: str, phase: int, detail: dict) -> SessionEvent:
        if self.events and phase < self.events[-1].phase:
            raise ValueError("phases advance monotonically")
        event = SessionEvent(
            seq=len(self.events),
            timestamp=timestamp,
            actor=actor,
            phase=phase,
            detail=detail,
        )
        self.events.append(event)
        self.phase = phase
        return event

    def set_outcome(self, outcome: str) -> None:
        if self.outcome != "pending":
            raise OutcomeAlreadySet(f"outcome already set to {self.outcome!r}")
        self.outcome = outcome

    @property
    def pending(self) -> bool:
        return self.outcome == "pending"


def session_trace(session: PaymentSession) -> tuple[SessionEvent, ...]:
    """Immutable snapshot of the session's ordered events."""
    return tuple(session.events)
