"""Cardholder approval sources.

Every payment needs an explicit yes from the cardholder before settlement.
The engine blocks on an ApprovalSource; two implementations exist:

* ScriptedApprovals answers instantly from a queue of scripted decisions —
  the simulator's stand-in for the human, so headless runs never wait.
* ApprovalBroker parks the adjudicating thread on a condition variable and
  exposes a pending inbox that the gateway serves to a polling wallet
  client; a resolution is delivered exactly once.
"""

from __future__ import annotations

import enum
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

from .types import Counterparty


class Decision(enum.Enum):
    APPROVE = "approve"
    DECLINE = "decline"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class ApprovalQuery:
    session_id: str
    account_id: str
    counterparty: Counterparty
    amount_minor_units: int
    requested_at: float


class ApprovalSource(Protocol):
    def request_approval(self, query: ApprovalQuery, timeout: float) -> Decision: ...


class ScriptedApprovals:
    """FIFO of scripted answers; falls back to a default when exhausted."""

    def __init__(self, decisions=(), default: Decision = Decision.APPROVE):
        self._queue = deque(Decision(d) if not isinstance(d, Decision) else d for d in decisions)
        self._default = default

    def push(self, decision: Decision | str) -> None:
        self._queue.append(Decision(decision) if not isinstance(decision, Decision) else decision)

    def request_approval(self, query: ApprovalQuery, timeout: float) -> Decision:
        if self._queue:
            return self._queue.popleft()
        return self._default


@dataclass
class _Pending:
    query: ApprovalQuery
    resolved: threading.Event = field(default_factory=threading.Event)
    decision: Decision | None = None


class ApprovalBroker:
    """Blocking approval channel between adjudication threads and the wallet.

    A pending query becomes visible to pollers the moment it is created
    (the condition broadcast wakes any long-poll waiters), and exactly one
    resolution wins; later ones are rejected.
    """

    def __init__(self):
        self._pending: dict[str, _Pending] = {}
        self._cond = threading.Condition()

    def request_approval(self, query: ApprovalQuery, timeout: float) -> Decision:
        entry = _Pending(query=query)
        with self._cond:
            self._pending[query.session_id] = entry
            self._cond.notify_all()
        try:
            if not entry.resolved.wait(timeout):
                return Decision.TIMEOUT
            return entry.decision if entry.decision is not None else Decision.TIMEOUT
        finally:
            with self._cond:
                self._pending.pop(query.session_id, None)
                self._cond.notify_all()

    def pending_for(self, account_id: str) -> list[ApprovalQuery]:
        with self._cond:
            return [p.query for p in self._pending.values() if p.query.account_id == account_id]

    def wait_for_pending(self, account_id: str, hold_seconds: float) -> list[ApprovalQuery]:
        """Long-poll: return pending queries, holding up to hold_seconds for one."""
        deadline = time.monotonic() + max(hold_seconds, 0.0)
        with self._cond:
            while True:
                found = [p.query for p in self._pending.values() if p.query.account_id == account_id]
                remaining = deadline - time.monotonic()
                if found or remaining <= 0:
                    return found
                self._cond.wait(remaining)

    def resolve(self, session_id: str, decision: Decision) -> bool:
        """Deliver a decision; False if unknown session or already resolved."""
        with self._cond:
            entry = self._pending.get(session_id)
            if entry is None or entry.decision is not None:
                return False
            entry.decision = decision
            entry.resolved.set()
            return True

    def has_pending(self, session_id: str) -> bool:
        with self._cond:
            entry = self._pending.get(session_id)
            return entry is not None and entry.decision is None
