"""Multi-actor payment engine.

One engine instance embodies a bank, its card network, and the accounts it
serves.  Card issuance (phases 1-5) generates a unique PAN, seals the card
for the cardholder, and issues the network presentation token.  A payment
(phases 6-11) decodes and authenticates the token, scores the transaction
for fraud, verifies funds against both the card's policy limit and the
account balance, waits for explicit cardholder approval, then settles.

Shared money state (balances, spend accumulators, card lifecycle) mutates
only under one lock, and settlement re-verifies everything it is about to
change, so concurrent sessions against one card can neither double-spend a
one-time card nor push a multi-use card past its limit.  Approval waits
happen outside the lock and never block other sessions.

The cumulative spend of each card is kept encrypted under the bank's
additively homomorphic key: settlement folds the encrypted amount into the
accumulator, and limit checks decrypt the running total.

Each session records exactly one event per phase it reaches; a session that
terminates early carries its outcome in the detail of its final event.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass

from .. import token_codec
from ..card_numbering import PanRegistry, issue_unique_pan
from ..clock import Clock, SystemClock
from ..credentials import make_credentials, verify_user
from ..crypto_vault import (
    HeKeyPair,
    SealAuthError,
    deserialize_sealed,
    he_add,
    he_decrypt,
    he_encrypt,
    he_keygen,
    he_zero,
    open_card,
    seal_card,
)
from ..errors import (
    AuthenticationError,
    CardlessError,
    FormatError,
    NotActiveError,
    RegistryExhaustedError,
)
from ..fraud.features import TransactionRecord, extract_features
from ..keyring import KeyRing, Rng
from .approval import ApprovalQuery, ApprovalSource, Decision
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
    PHASE_CARD_CREATED,
    PHASE_CARD_DELIVERED,
    PHASE_CARD_REQUEST,
    PHASE_CARD_SEALED,
    PHASE_MERCHANT_NOTIFIED,
    PHASE_NETWORK_REQUEST,
    PHASE_ORDER_ACCEPTED,
    PHASE_PRESENTED,
    PHASE_USER_CONFIRMATION,
    PHASE_USER_NOTIFIED,
    PHASE_VALIDATED,
    USER_APPROVAL_FAILED,
    Account,
    CardPolicy,
    CardState,
    Counterparty,
    PaymentSession,
    SessionEvent,
    Usage,
    VirtualCard,
)


class CardGenerateFailed(CardlessError):
    """Issuance failed; the message is the canonical terminal string."""

    def __init__(self, reason: str):
        super().__init__(CARD_GENERATE_FAILED)
        self.reason = reason
        self.outcome = CARD_GENERATE_FAILED


@dataclass
class IssuedCard:
    card: VirtualCard
    sealed_card: bytes  # sealed under the cardholder's envelope key
    token: bytes        # network presentation token
    qr: str
    events: list[SessionEvent]  # issuance phases 1-5


class ProtocolEngine:
    def __init__(
        self,
        *,
        keyring: KeyRing | None = None,
        clock: Clock | None = None,
        rng: Rng | None = None,
        iin: str = "444433",
        network_id: int = 1,
        fraud_model=None,
        approval_timeout: float = 120.0,
        he_bits: int = 512,
        event_sink=None,
    ):
        self.rng = rng or Rng()
        self.clock = clock or SystemClock()
        self.keyring = keyring or KeyRing(seed=self.rng.seed)
        self.iin = iin
        self.network_id = network_id
        self.fraud_model = fraud_model
        self.approval_timeout = approval_timeout
        self.event_sink = event_sink

        self.registry = PanRegistry()
        self.accounts: dict[str, Account] = {}
        self.sessions: dict[str, PaymentSession] = {}
        self.merchant_credits: dict[str, int] = {}
        self.he_keys: HeKeyPair = he_keygen(he_bits, self.rng)
        self._cards_by_pan: dict[str, VirtualCard] = {}
        self._pan_by_token: dict[str, str] = {}
        self._by_username: dict[str, str] = {}
        self._lock = threading.RLock()

    # ------------------------------------------------------------------
    # event plumbing

    def _emit(self, kind: str, **payload) -> None:
        if self.event_sink is not None:
            self.event_sink(kind, payload)

    def _record(self, session: PaymentSession, actor: str, phase: int, detail: dict) -> None:
        event = session.add_event(self.clock.now(), actor, phase, detail)
        self._emit("session_event", session_id=session.session_id, **event.as_dict())

    def _terminate(self, session: PaymentSession, actor: str, phase: int, outcome: str, **detail) -> PaymentSession:
        self._record(session, actor, phase, {**detail, "outcome": outcome})
        session.set_outcome(outcome)
        self._emit("session_outcome", session_id=session.session_id, outcome=outcome)
        return session

    # ------------------------------------------------------------------
    # accounts

    def register_account(
        self,
        username: str,
        password: str,
        pin: str,
        balance_minor_units: int,
        account_id: str | None = None,
    ) -> Account:
        if balance_minor_units < 0:
            raise ValueError("opening balance cannot be negative")
        with self._lock:
            if username in self._by_username:
                raise ValueError(f"username {username!r} already registered")
            account_id = account_id or f"acct-{self.rng.token_bytes(6).hex()}"
            creds = make_credentials(username, password, pin, rng=self.rng)
            account = Account(
                account_id=account_id,
                username=username,
                credentials=creds,
                balance_minor_units=balance_minor_units,
            )
            self.accounts[account_id] = account
            self._by_username[username] = account_id
        self._emit(
            "account_registered",
            account_id=account_id,
            username=username,
            salt=creds.salt.hex(),
            password_digest=creds.password_digest.hex(),
            pin_digest=creds.pin_digest.hex(),
            iterations=creds.iterations,
            balance_minor_units=balance_minor_units,
        )
        return account

    def account_by_username(self, username: str) -> Account | None:
        account_id = self._by_username.get(username)
        return self.accounts.get(account_id) if account_id else None

    def authenticate(self, username: str, password: str) -> Account:
        """Verify credentials; unknown user and wrong password are identical."""
        account = self.account_by_username(username)
        if account is None:
            # Burn comparable work so the two failures are timing-similar.
            dummy = make_credentials("anonymous", "x", "000000", rng=Rng(0))
            verify_user((username, password), dummy)
            raise AuthenticationError("invalid credentials")
        if not verify_user((username, password), account.credentials):
            raise AuthenticationError("invalid credentials")
        return account

    # ------------------------------------------------------------------
    # issuance (phases 1-5)

    def request_card(self, username: str, password: str, policy: CardPolicy | None) -> IssuedCard:
        """Full issuance flow behind credential verification."""
        account = self.authenticate(username, password)
        return self.issue_card(account, policy)

    def issue_card(self, account: Account, policy: CardPolicy | None) -> IssuedCard:
        """Issuance for an already-authenticated account (gateway sessions)."""
        now = self.clock.now()
        events: list[SessionEvent] = []

        def phase(seq: int, actor: str, number: int, **detail) -> None:
            events.append(
                SessionEvent(seq=seq, timestamp=self.clock.now(), actor=actor, phase=number, detail=detail)
            )

        if policy is None or policy.problems():
            reason = "empty policy" if policy is None else "; ".join(policy.problems())
            self._emit(
                "issuance_failed", account_id=account.account_id, reason=reason, outcome=CARD_GENERATE_FAILED
            )
            raise CardGenerateFailed(reason)

        phase(0, "user", PHASE_CARD_REQUEST, usage=policy.usage.value, limit_minor_units=policy.limit_minor_units)
        phase(1, "bank", PHASE_NETWORK_REQUEST, iin=self.iin)
        try:
            parts = issue_unique_pan(self.iin, self.registry, self.rng)
        except RegistryExhaustedError as exc:
            self._emit(
                "issuance_failed", account_id=account.account_id, reason=str(exc), outcome=CARD_GENERATE_FAILED
            )
            raise CardGenerateFailed(str(exc)) from exc

        card = VirtualCard(
            pan_parts=parts,
            policy=policy,
            issued_at=now,
            expires_at=now + policy.valid_for_seconds,
            state=CardState.ISSUED,
            spent_accumulator=he_zero(self.he_keys.public_key),
            owner=account.account_id,
        )
        phase(2, "network", PHASE_CARD_CREATED, masked_pan=card.masked_pan())

        # Cardholder envelope: the full card detail, readable only by the owner.
        card_payload = json.dumps(
            {
                "pan": card.pan,
                "expires_at": card.expires_at,
                "usage": policy.usage.value,
                "limit_minor_units": policy.limit_minor_units,
            },
            sort_keys=True,
        ).encode("utf-8")
        sealed_for_user = seal_card(card_payload, self.keyring.account_card_key(account.account_id), self.rng)

        # Network token: the sealed card reference a merchant hands back to us.
        card_ref = seal_card(card.pan.encode("ascii"), self.keyring.network_seal_key, self.rng).serialize()
        token = token_codec.encode_token(
            card_ref,
            self.keyring.network_mac_key,
            expiry=int(card.expires_at),
            rng=self.rng,
            network_id=self.network_id,
            now=now,
        )
        card.token_id = token_codec.peek_token_id(token) or b""
        card.qr_payload = token_codec.qr_payload(token)
        phase(3, "bank", PHASE_CARD_SEALED, sealed_bytes=len(sealed_for_user.serialize()))
        card.state = CardState.ACTIVE
        phase(4, "user", PHASE_CARD_DELIVERED, token_id=card.token_id.hex(), masked_pan=card.masked_pan())

        with self._lock:
            self._cards_by_pan[card.pan] = card
            self._pan_by_token[card.token_id.hex()] = card.pan

        self._emit(
            "card_issued",
            account_id=account.account_id,
            token_id=card.token_id.hex(),
            masked_pan=card.masked_pan(),
            sealed_pan=seal_card(card.pan.encode("ascii"), self.keyring.storage_key, self.rng).serialize().hex(),
            usage=policy.usage.value,
            limit_minor_units=policy.limit_minor_units,
            valid_for_seconds=policy.valid_for_seconds,
            networks_allowed=sorted(policy.networks_allowed),
            issued_at=card.issued_at,
            expires_at=card.expires_at,
            qr_payload=card.qr_payload,
        )
        for event in events:
            self._emit("issuance_event", token_id=card.token_id.hex(), **event.as_dict())
        return IssuedCard(
            card=card,
            sealed_card=sealed_for_user.serialize(),
            token=token,
            qr=card.qr_payload,
            events=events,
        )

    # ------------------------------------------------------------------
    # payment (phases 6-11)

    def card_by_token_id(self, token_id_hex: str) -> VirtualCard | None:
        pan = self._pan_by_token.get(token_id_hex)
        return self._cards_by_pan.get(pan) if pan else None

    def present_card(
        self, token_bytes: bytes, counterparty: Counterparty, amount_minor_units: int
    ) -> PaymentSession:
        """Phases 6-7: merchant presentation, network decode and validation.

        Token failures and inactive cards terminate the session declined;
        otherwise it is left pending adjudication in phase 7.
        """
        if amount_minor_units <= 0:
            raise ValueError("amount must be positive")
        now = self.clock.now()
        token_id = token_codec.peek_token_id(token_bytes)
        session = PaymentSession(
            session_id=f"pay-{self.rng.token_bytes(8).hex()}",
            token_id_hex=token_id.hex() if token_id else "",
            counterparty=counterparty,
            amount_minor_units=amount_minor_units,
            opened_at=now,
        )
        with self._lock:
            self.sessions[session.session_id] = session
        self._emit(
            "session_opened",
            session_id=session.session_id,
            token_id=session.token_id_hex,
            counterparty_kind=counterparty.kind,
            counterparty_id=counterparty.id,
            category=counterparty.category,
            amount_minor_units=amount_minor_units,
            opened_at=now,
        )
        # The counterparty's own view: token bytes in, nothing else.
        self._record(
            session,
            counterparty.kind,
            PHASE_PRESENTED,
            {"token_id": session.token_id_hex or "unparseable", "amount_minor_units": amount_minor_units},
        )

        try:
            token = token_codec.decode_token(token_bytes, self.keyring.network_mac_key, now=now)
        except token_codec.TokenFormatError:
            return self._terminate(session, "network", PHASE_VALIDATED, DECLINED_TOKEN_FORMAT, error="format")
        except token_codec.TokenAuthError:
            return self._terminate(session, "network", PHASE_VALIDATED, DECLINED_TOKEN_AUTH, error="authenticity")
        except token_codec.TokenExpiredError:
            return self._terminate(session, "network", PHASE_VALIDATED, DECLINED_TOKEN_EXPIRED, error="expired")

        try:
            pan = open_card(deserialize_sealed(token.ciphertext), self.keyring.network_seal_key).decode("ascii")
        except SealAuthError:
            return self._terminate(session, "network", PHASE_VALIDATED, DECLINED_TOKEN_AUTH, error="authenticity")
        except (FormatError, UnicodeDecodeError):
            return self._terminate(session, "network", PHASE_VALIDATED, DECLINED_TOKEN_FORMAT, error="format")

        card = self._cards_by_pan.get(pan)
        if card is None:
            return self._terminate(
                session, "network", PHASE_VALIDATED, DECLINED_CARD_NOT_ACTIVE, error="unknown card"
            )
        session.card_pan = card.pan
        session.account_id = card.owner
        if card.state is not CardState.ACTIVE:
            self._append_history(session, approved=False)
            return self._terminate(
                session, "network", PHASE_VALIDATED, DECLINED_CARD_NOT_ACTIVE, error="card not active"
            )
        if token.network_id not in card.policy.networks_allowed:
            self._append_history(session, approved=False)
            return self._terminate(
                session, "network", PHASE_VALIDATED, DECLINED_CARD_NOT_ACTIVE, error="network not allowed"
            )
        session.phase = PHASE_VALIDATED  # decoded and validated; pending adjudication
        return session

    def adjudicate(
        self,
        session: PaymentSession,
        fraud_model=None,
        approval_source: ApprovalSource | None = None,
        approval_timeout: float | None = None,
    ) -> PaymentSession:
        """Phase 7-8 decision pipeline: fraud score, funds, user approval.

        Checks run in that fixed order; the first failure terminates the
        session.  Approval granted leads straight into settlement.
        """
        if not session.pending:
            return session
        if session.phase != PHASE_VALIDATED or session.card_pan is None:
            raise NotActiveError(f"session in phase {session.phase} is not awaiting adjudication")

        card = self._cards_by_pan[session.card_pan]
        account = self.accounts[card.owner]
        model = fraud_model if fraud_model is not None else self.fraud_model

        if model is None:
            self._append_history(session, approved=False)
            return self._terminate(
                session, "network", PHASE_VALIDATED, FRAUD_DETECTION_FAILED, error="fraud model unavailable"
            )

        txn = TransactionRecord(
            timestamp=self.clock.now(),
            amount_minor_units=session.amount_minor_units,
            category=session.counterparty.category,
            channel=session.counterparty.channel,
            approved=False,
        )
        try:
            features = extract_features(account.history, txn)
            score = float(model.predict_proba(features))
        except Exception as exc:  # scoring subsystem failure, not a verdict
            self._append_history(session, approved=False)
            return self._terminate(
                session, "network", PHASE_VALIDATED, FRAUD_DETECTION_FAILED, error=type(exc).__name__
            )
        session.fraud_score = score
        threshold = getattr(model, "threshold", 0.5)

        if score >= threshold:
            self._append_history(session, approved=False)
            return self._terminate(
                session, "network", PHASE_VALIDATED, FRAUDULENT_TRANSACTION, fraud_score=score
            )

        with self._lock:
            spent = he_decrypt(self.he_keys, card.spent_accumulator)
            funds_ok = (
                session.amount_minor_units + spent <= card.policy.limit_minor_units
                and session.amount_minor_units <= account.balance_minor_units
            )
        if not funds_ok:
            self._append_history(session, approved=False)
            return self._terminate(
                session, "bank", PHASE_VALIDATED, DECLINED_INSUFFICIENT_FUNDS, fraud_score=score
            )
        self._record(
            session,
            "network",
            PHASE_VALIDATED,
            {"token_id": session.token_id_hex, "fraud_score": score, "funds_ok": True},
        )

        decision = Decision.TIMEOUT
        if approval_source is not None:
            query = ApprovalQuery(
                session_id=session.session_id,
                account_id=account.account_id,
                counterparty=session.counterparty,
                amount_minor_units=session.amount_minor_units,
                requested_at=self.clock.now(),
            )
            timeout = self.approval_timeout if approval_timeout is None else approval_timeout
            decision = approval_source.request_approval(query, timeout)

        if decision is not Decision.APPROVE:
            self._append_history(session, approved=False)
            return self._terminate(
                session, "user", PHASE_USER_CONFIRMATION, USER_APPROVAL_FAILED, decision=decision.value
            )
        self._record(session, "user", PHASE_USER_CONFIRMATION, {"decision": decision.value})
        return self._settle(session, card, account)

    def _settle(self, session: PaymentSession, card: VirtualCard, account: Account) -> PaymentSession:
        """Phases 9-11 under the engine lock, re-verifying card and funds.

        The approval wait ran unlocked, so another session may have settled
        this card meanwhile; re-checks make over-limit and double-spend
        impossible rather than merely unlikely.
        """
        amount = session.amount_minor_units
        with self._lock:
            if card.state is not CardState.ACTIVE:
                self._append_history(session, approved=False)
                return self._terminate(
                    session, "network", PHASE_ORDER_ACCEPTED, DECLINED_CARD_NOT_ACTIVE, error="card not active"
                )
            spent = he_decrypt(self.he_keys, card.spent_accumulator)
            if amount + spent > card.policy.limit_minor_units or amount > account.balance_minor_units:
                self._append_history(session, approved=False)
                return self._terminate(
                    session, "network", PHASE_ORDER_ACCEPTED, DECLINED_INSUFFICIENT_FUNDS, error="re-check failed"
                )

            amount_ct = he_encrypt(self.he_keys.public_key, amount, self.rng)
            card.spent_accumulator = he_add(self.he_keys.public_key, card.spent_accumulator, amount_ct)
            account.balance_minor_units -= amount
            self.merchant_credits[session.counterparty.id] = (
                self.merchant_credits.get(session.counterparty.id, 0) + amount
            )
            retired = False
            if card.policy.usage is Usage.ONE_TIME:
                self.registry.retire(card.pan)
                card.state = CardState.RETIRED
                retired = True
            self._append_history(session, approved=True)

        self._record(session, "network", PHASE_ORDER_ACCEPTED, {"amount_minor_units": amount})
        self._emit(
            "settled",
            session_id=session.session_id,
            token_id=session.token_id_hex,
            amount_minor_units=amount,
            amount_ciphertext=amount_ct.serialize().hex(),
            new_balance_minor_units=account.balance_minor_units,
            counterparty_id=session.counterparty.id,
            card_retired=retired,
            timestamp=self.clock.now(),
        )
        if retired:
            self._emit("card_retired", token_id=session.token_id_hex, timestamp=self.clock.now())
        self._record(
            session,
            session.counterparty.kind,
            PHASE_MERCHANT_NOTIFIED,
            {"token_id": session.token_id_hex, "amount_minor_units": amount, "result": "paid"},
        )
        self._record(
            session,
            "user",
            PHASE_USER_NOTIFIED,
            {"outcome": PAYMENT_COMPLETED, "amount_minor_units": amount},
        )
        session.set_outcome(PAYMENT_COMPLETED)
        self._emit("session_outcome", session_id=session.session_id, outcome=PAYMENT_COMPLETED)
        return session

    def run_payment(
        self,
        token_bytes: bytes,
        counterparty: Counterparty,
        amount_minor_units: int,
        approval_source: ApprovalSource | None = None,
        fraud_model=None,
        approval_timeout: float | None = None,
    ) -> PaymentSession:
        session = self.present_card(token_bytes, counterparty, amount_minor_units)
        if session.pending:
            session = self.adjudicate(
                session,
                fraud_model=fraud_model,
                approval_source=approval_source,
                approval_timeout=approval_timeout,
            )
        return session

    # ------------------------------------------------------------------
    # internals

    def _append_history(self, session: PaymentSession, approved: bool) -> None:
        if session.account_id is None:
            return
        account = self.accounts.get(session.account_id)
        if account is None:
            return
        row = TransactionRecord(
            timestamp=self.clock.now(),
            amount_minor_units=session.amount_minor_units,
            category=session.counterparty.category,
            channel=session.counterparty.channel,
            approved=approved,
        )
        account.history.append(row)
        self._emit(
            "history_appended",
            account_id=account.account_id,
            timestamp=row.timestamp,
            amount_minor_units=row.amount_minor_units,
            category=row.category,
            channel=row.channel,
            approved=approved,
        )

    # ------------------------------------------------------------------
    # state digest

    def state_snapshot(self) -> dict:
        """Canonical state for digesting.

        Contains full PANs and credential digests; it exists to be hashed
        or diffed in tests, never to be logged.
        """
        with self._lock:
            active, retired = self.registry.snapshot()
            return {
                "accounts": {
                    a.account_id: {
                        "username": a.username,
                        "balance_minor_units": a.balance_minor_units,
                        "salt": a.credentials.salt.hex(),
                        "password_digest": a.credentials.password_digest.hex(),
                        "pin_digest": a.credentials.pin_digest.hex(),
                        "history": [
                            [r.timestamp, r.amount_minor_units, r.category, r.channel, r.approved]
                            for r in a.history
                        ],
                    }
                    for a in sorted(self.accounts.values(), key=lambda a: a.account_id)
                },
                "registry": {"active": sorted(active), "retired": sorted(retired)},
                "cards": {
                    card.token_id.hex(): {
                        "pan": card.pan,
                        "state": card.state.value,
                        "owner": card.owner,
                        "usage": card.policy.usage.value,
                        "limit_minor_units": card.policy.limit_minor_units,
                        "expires_at": card.expires_at,
                        "spent_ciphertext": card.spent_accumulator.serialize().hex(),
                    }
                    for card in sorted(self._cards_by_pan.values(), key=lambda c: c.token_id.hex())
                },
                "sessions": {s.session_id: s.outcome for s in self.sessions.values()},
                "merchant_credits": dict(sorted(self.merchant_credits.items())),
            }
