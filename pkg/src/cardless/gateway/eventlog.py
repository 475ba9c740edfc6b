"""Append-only event log and state reconstruction.

Persistence is event sourcing over a line-delimited UTF-8 text file: one
JSON record per line, sequence numbers strictly increasing, no record ever
rewritten.  Replaying a log into a fresh engine (built with the same key
material) reproduces the live state exactly, including the encrypted spend
accumulators: settlement events carry the serialized amount ciphertexts, so
the replayed homomorphic products are bit-identical.

No secret ever enters the log in cleartext.  Card numbers appear masked or
sealed, credentials only as salted digests.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass

from ..card_numbering import PanParts
from ..clock import Clock, SystemClock
from ..credentials import CredentialRecord
from ..crypto_vault import deserialize_ciphertext, deserialize_sealed, he_add, he_zero, open_card
from ..errors import CardlessError
from ..fraud.features import TransactionRecord
from ..protocol.engine import ProtocolEngine
from ..protocol.types import (
    Account,
    CardPolicy,
    CardState,
    Counterparty,
    PaymentSession,
    SessionEvent,
    Usage,
    VirtualCard,
)


class ReplayError(CardlessError):
    def __init__(self, message: str, line_number: int, last_good_seq: int | None):
        suffix = f" (line {line_number}, last good seq {last_good_seq})"
        super().__init__(message + suffix)
        self.line_number = line_number
        self.last_good_seq = last_good_seq


@dataclass(frozen=True)
class EventRecord:
    seq: int
    timestamp: float
    kind: str
    payload: dict

    def to_line(self) -> str:
        return json.dumps(
            {"seq": self.seq, "timestamp": self.timestamp, "kind": self.kind, "payload": self.payload},
            sort_keys=True,
            separators=(",", ":"),
        )


class EventLog:
    """Single-writer append log, optionally mirrored to a file.

    Appends are serialized by a lock; sequence numbers are assigned under
    it, so the log order is a total order.
    """

    def __init__(self, path=None, clock: Clock | None = None, start_seq: int = 0):
        self._path = path
        self._clock = clock or SystemClock()
        self._records: list[EventRecord] = []
        self._next_seq = start_seq
        self._lock = threading.Lock()
        self._fh = open(path, "a", encoding="utf-8") if path else None

    def append(self, kind: str, payload: dict) -> int:
        with self._lock:
            record = EventRecord(
                seq=self._next_seq, timestamp=self._clock.now(), kind=kind, payload=payload
            )
            self._next_seq += 1
            self._records.append(record)
            if self._fh is not None:
                self._fh.write(record.to_line() + "\n")
                self._fh.flush()
            return record.seq

    def sink(self):
        """Adapter usable as a ProtocolEngine event_sink."""

        def _sink(kind: str, payload: dict) -> None:
            self.append(kind, payload)

        return _sink

    def records(self) -> list[EventRecord]:
        with self._lock:
            return list(self._records)

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None


def read_records(path) -> list[EventRecord]:
    """Parse a log file; a corrupt line fails with its line number."""
    records: list[EventRecord] = []
    last_good: int | None = None
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                record = EventRecord(
                    seq=int(raw["seq"]),
                    timestamp=float(raw["timestamp"]),
                    kind=str(raw["kind"]),
                    payload=dict(raw["payload"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ReplayError(f"corrupt event record: {exc}", line_number, last_good) from exc
            if last_good is not None and record.seq <= last_good:
                raise ReplayError(
                    f"sequence went backwards: {record.seq} after {last_good}", line_number, last_good
                )
            records.append(record)
            last_good = record.seq
    return records


def canonical_digest(records) -> str:
    """Order-independent digest: records sorted by (time, session, phase, kind)."""

    def key(record: EventRecord):
        payload = record.payload
        return (
            record.timestamp,
            str(payload.get("session_id", "")),
            int(payload.get("phase", -1)),
            record.kind,
            json.dumps(payload, sort_keys=True, separators=(",", ":")),
        )

    h = hashlib.sha256()
    for record in sorted(records, key=key):
        line = json.dumps(
            {"timestamp": record.timestamp, "kind": record.kind, "payload": record.payload},
            sort_keys=True,
            separators=(",", ":"),
        )
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def state_digest(engine: ProtocolEngine) -> str:
    snapshot = engine.state_snapshot()
    return hashlib.sha256(
        json.dumps(snapshot, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()


def replay_into(engine: ProtocolEngine, records) -> None:
    """Rebuild engine state from an event stream.

    The engine must carry the same key ring as the one that wrote the log;
    sealed card numbers in the log are opened with the storage key, and
    accumulator ciphertexts fold with the same public key.
    """
    pk = engine.he_keys.public_key

    for record in records:
        kind, p = record.kind, record.payload
        if kind == "account_registered":
            creds = CredentialRecord(
                username=p["username"],
                salt=bytes.fromhex(p["salt"]),
                password_digest=bytes.fromhex(p["password_digest"]),
                pin_digest=bytes.fromhex(p["pin_digest"]),
                iterations=int(p["iterations"]),
            )
            account = Account(
                account_id=p["account_id"],
                username=p["username"],
                credentials=creds,
                balance_minor_units=int(p["balance_minor_units"]),
            )
            engine.accounts[account.account_id] = account
            engine._by_username[account.username] = account.account_id
        elif kind == "card_issued":
            pan = open_card(
                deserialize_sealed(bytes.fromhex(p["sealed_pan"])), engine.keyring.storage_key
            ).decode("ascii")
            card = VirtualCard(
                pan_parts=PanParts(iin=pan[:6], account_id=pan[6:15], check_digit=int(pan[15])),
                policy=CardPolicy(
                    usage=Usage(p["usage"]),
                    limit_minor_units=int(p["limit_minor_units"]),
                    valid_for_seconds=int(p["valid_for_seconds"]),
                    networks_allowed=frozenset(int(n) for n in p["networks_allowed"]),
                ),
                issued_at=float(p["issued_at"]),
                expires_at=float(p["expires_at"]),
                state=CardState.ACTIVE,
                spent_accumulator=he_zero(pk),
                owner=p["account_id"],
                token_id=bytes.fromhex(p["token_id"]),
                qr_payload=p.get("qr_payload", ""),
            )
            engine.registry.register_unique(pan)
            engine._cards_by_pan[pan] = card
            engine._pan_by_token[card.token_id.hex()] = pan
        elif kind == "history_appended":
            account = engine.accounts[p["account_id"]]
            account.history.append(
                TransactionRecord(
                    timestamp=float(p["timestamp"]),
                    amount_minor_units=int(p["amount_minor_units"]),
                    category=p["category"],
                    channel=p["channel"],
                    approved=bool(p["approved"]),
                )
            )
        elif kind == "settled":
            card = engine.card_by_token_id(p["token_id"])
            amount_ct = deserialize_ciphertext(bytes.fromhex(p["amount_ciphertext"]))
            card.spent_accumulator = he_add(pk, card.spent_accumulator, amount_ct)
            account = engine.accounts[card.owner]
            account.balance_minor_units = int(p["new_balance_minor_units"])
            cp = p["counterparty_id"]
            engine.merchant_credits[cp] = engine.merchant_credits.get(cp, 0) + int(p["amount_minor_units"])
        elif kind == "card_retired":
            card = engine.card_by_token_id(p["token_id"])
            if card is not None and card.state is not CardState.RETIRED:
                engine.registry.retire(card.pan)
                card.state = CardState.RETIRED
        elif kind == "session_opened":
            session = PaymentSession(
                session_id=p["session_id"],
                token_id_hex=p["token_id"],
                counterparty=Counterparty(
                    kind=p["counterparty_kind"], id=p["counterparty_id"], category=p["category"]
                ),
                amount_minor_units=int(p["amount_minor_units"]),
                opened_at=float(p["opened_at"]),
            )
            engine.sessions[session.session_id] = session
        elif kind == "session_event":
            session = engine.sessions[p["session_id"]]
            event = SessionEvent(
                seq=int(p["seq"]),
                timestamp=float(p["timestamp"]),
                actor=p["actor"],
                phase=int(p["phase"]),
                detail=dict(p["detail"]),
            )
            session.events.append(event)
            session.phase = event.phase
            if "fraud_score" in event.detail:
                session.fraud_score = float(event.detail["fraud_score"])
        elif kind == "session_outcome":
            engine.sessions[p["session_id"]].set_outcome(p["outcome"])
        # issuance_event / issuance_failed carry no replayable state.
