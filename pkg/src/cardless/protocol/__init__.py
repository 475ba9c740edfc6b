from .approval import (
    ApprovalBroker,
    ApprovalQuery,
    ApprovalSource,
    Decision,
    ScriptedApprovals,
)
from .engine import CardGenerateFailed, IssuedCard, ProtocolEngine
from .types import (
    CARD_GENERATE_FAILED,
    DECLINED_CARD_NOT_ACTIVE,
    DECLINED_INSUFFICIENT_FUNDS,
    DECLINED_TOKEN_AUTH,
    DECLINED_TOKEN_EXPIRED,
    DECLINED_TOKEN_FORMAT,
    FRAUD_DETECTION_FAILED,
    FRAUDULENT_TRANSACTION,
    PAYMENT_COMPLETED,
    TERMINAL_OUTCOMES,
    USER_APPROVAL_FAILED,
    Account,
    CardPolicy,
    CardState,
    Counterparty,
    PaymentSession,
    SessionEvent,
    Usage,
    VirtualCard,
    session_trace,
)

__all__ = [
    "ProtocolEngine",
    "IssuedCard",
    "CardGenerateFailed",
    "ApprovalSource",
    "ApprovalQuery",
    "ApprovalBroker",
    "ScriptedApprovals",
    "Decision",
    "Account",
    "CardPolicy",
    "CardState",
    "Counterparty",
    "PaymentSession",
    "SessionEvent",
    "Usage",
    "VirtualCard",
    "session_trace",
    "PAYMENT_COMPLETED",
    "USER_APPROVAL_FAILED",
    "FRAUDULENT_TRANSACTION",
    "FRAUD_DETECTION_FAILED",
    "CARD_GENERATE_FAILED",
    "TERMINAL_OUTCOMES",
    "DECLINED_TOKEN_FORMAT",
    "DECLINED_TOKEN_AUTH",
    "DECLINED_TOKEN_EXPIRED",
    "DECLINED_CARD_NOT_ACTIVE",
    "DECLINED_INSUFFICIENT_FUNDS",
]
