"""HTTP face of the bank: login, card issuance, approvals, traces.

All bodies are JSON.  Authentication is a bearer token from /api/login;
the login failure body is byte-identical for unknown users and wrong
passwords so the endpoint cannot be used to enumerate accounts.

The approval inbox is a long-poll: GET /api/approvals holds the request
(default up to 25 s) until a pending approval exists for the account, so a
polling wallet sees new queries within a second of their creation.

POST /sim/present is the merchant/ATM-side hook: it opens a payment session
from a QR payload and runs adjudication on a worker thread, which then
blocks in the approval broker until the cardholder resolves the query or
the timeout passes.
"""

from __future__ import annotations

import base64
import threading

from fastapi import FastAPI, Header, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from ..credentials import verify_pin
from ..errors import AuthenticationError, FormatError
from ..protocol.approval import ApprovalBroker, Decision
from ..protocol.engine import CardGenerateFailed, ProtocolEngine
from ..protocol.types import CardPolicy, Counterparty, Usage, session_trace
from ..token_codec import qr_parse
from .eventlog import EventLog
from .sessions import SessionStore

LONG_POLL_HOLD_SECONDS = 25.0
_LOGIN_REJECTION = {"error": "invalid credentials"}


class GatewayService:
    """Wires the protocol engine to HTTP: sessions, approvals, persistence."""

    def __init__(
        self,
        engine: ProtocolEngine,
        *,
        event_log: EventLog | None = None,
        approval_timeout: float | None = None,
        long_poll_hold: float = LONG_POLL_HOLD_SECONDS,
    ):
        self.engine = engine
        self.broker = ApprovalBroker()
        self.sessions = SessionStore(clock=engine.clock, rng=engine.rng)
        self.event_log = event_log
        self.long_poll_hold = long_poll_hold
        if approval_timeout is not None:
            engine.approval_timeout = approval_timeout
        if event_log is not None:
            engine.event_sink = event_log.sink()

    # -- helpers --------------------------------------------------------

    def account_for(self, token: str | None):
        account_id = self.sessions.resolve(token)
        if account_id is None:
            return None
        return self.engine.accounts.get(account_id)

    def adjudicate_async(self, session) -> threading.Thread:
        worker = threading.Thread(
            target=self.engine.adjudicate,
            args=(session,),
            kwargs={"approval_source": self.broker},
            daemon=True,
        )
        worker.start()
        return worker


class LoginBody(BaseModel):
    username: str
    password: str


class CardRequestBody(BaseModel):
    usage: str
    limit: int  # minor currency units
    valid_for_seconds: int
    network: int = 1


class ApprovalBody(BaseModel):
    decision: str
    pin: str


class PresentBody(BaseModel):
    qr_payload: str
    counterparty: dict = Field(default_factory=dict)
    amount: int  # minor currency units


def _bearer(authorization: str | None) -> str | None:
    if authorization and authorization.startswith("Bearer "):
        return authorization[len("Bearer "):]
    return authorization


def create_app(service: GatewayService) -> FastAPI:
    app = FastAPI(title="cardless gateway", docs_url=None, redoc_url=None)
    # The wildcard does not cover Authorization under the Fetch spec; real
    # browsers (and browser-faithful test DOMs) drop it unless named.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["Authorization", "Content-Type"],
    )
    engine = service.engine

    def require_account(authorization: str | None):
        account = service.account_for(_bearer(authorization))
        if account is None:
            raise HTTPException(status_code=401, detail="unauthorized")
        return account

    @app.post("/api/login")
    def login(body: LoginBody):
        try:
            account = engine.authenticate(body.username, body.password)
        except AuthenticationError:
            return JSONResponse(status_code=401, content=_LOGIN_REJECTION)
        token = service.sessions.open(account.account_id)
        return {"token": token}

    @app.post("/api/cards")
    def create_card(body: CardRequestBody, authorization: str | None = Header(default=None)):
        account = require_account(authorization)
        try:
            usage = Usage(body.usage)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"usage must be one of {[u.value for u in Usage]}")
        policy = CardPolicy(
            usage=usage,
            limit_minor_units=body.limit,
            valid_for_seconds=body.valid_for_seconds,
            networks_allowed=frozenset({body.network}),
        )
        try:
            issued = engine.issue_card(account, policy)
        except CardGenerateFailed as exc:
            return JSONResponse(status_code=400, content={"error": exc.outcome, "reason": exc.reason})
        return {
            "sealed_card": base64.b64encode(issued.sealed_card).decode("ascii"),
            "qr_payload": issued.qr,
            "token_id": issued.card.token_id.hex(),
            "masked_pan": issued.card.masked_pan(),
            "usage": issued.card.policy.usage.value,
            "limit_minor_units": issued.card.policy.limit_minor_units,
            "expires_at": issued.card.expires_at,
        }

    @app.get("/api/cards")
    def list_cards(authorization: str | None = Header(default=None)):
        account = require_account(authorization)
        cards = [
            {
                "token_id": card.token_id.hex(),
                "masked_pan": card.masked_pan(),
                "usage": card.policy.usage.value,
                "limit_minor_units": card.policy.limit_minor_units,
                "expires_at": card.expires_at,
                "state": card.state.value,
                "qr_payload": card.qr_payload,
            }
            for card in engine._cards_by_pan.values()
            if card.owner == account.account_id
        ]
        cards.sort(key=lambda c: c["token_id"])
        return {"cards": cards}

    @app.get("/api/approvals")
    def approvals(wait: float | None = None, authorization: str | None = Header(default=None)):
        account = require_account(authorization)
        hold = service.long_poll_hold if wait is None else max(0.0, min(wait, service.long_poll_hold))
        pending = service.broker.wait_for_pending(account.account_id, hold)
        return {
            "pending": [
                {
                    "session_id": q.session_id,
                    "counterparty": {
                        "kind": q.counterparty.kind,
                        "id": q.counterparty.id,
                        "category": q.counterparty.category,
                    },
                    "amount_minor_units": q.amount_minor_units,
                    "requested_at": q.requested_at,
                }
                for q in sorted(pending, key=lambda q: q.requested_at)
            ]
        }

    @app.post("/api/approvals/{session_id}")
    def resolve_approval(session_id: str, body: ApprovalBody, authorization: str | None = Header(default=None)):
        account = require_account(authorization)
        if body.decision not in ("approve", "decline"):
            raise HTTPException(status_code=400, detail="decision must be approve or decline")
        mine = {q.session_id for q in service.broker.pending_for(account.account_id)}
        if session_id not in mine:
            raise HTTPException(status_code=404, detail="no pending approval for that session")
        if not verify_pin(body.pin, account.credentials):
            # The adjudication keeps waiting; the cardholder may retry.
            raise HTTPException(status_code=403, detail="pin rejected")
        delivered = service.broker.resolve(session_id, Decision(body.decision))
        if not delivered:
            raise HTTPException(status_code=409, detail="approval already resolved")
        return {"status": "ok"}

    @app.get("/api/sessions/{session_id}/trace")
    def trace(session_id: str, authorization: str | None = Header(default=None)):
        account = require_account(authorization)
        session = engine.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        if session.account_id is not None and session.account_id != account.account_id:
            raise HTTPException(status_code=403, detail="not your session")
        return {
            "session_id": session.session_id,
            "outcome": session.outcome,
            "fraud_score": session.fraud_score,
            "amount_minor_units": session.amount_minor_units,
            "events": [event.as_dict() for event in session_trace(session)],
        }

    @app.post("/sim/present")
    def sim_present(body: PresentBody):
        kind = body.counterparty.get("kind", "merchant")
        cp_id = body.counterparty.get("id", "demo-counterparty")
        category = body.counterparty.get("category", "general")
        try:
            counterparty = Counterparty(kind=kind, id=cp_id, category=category)
            token_bytes = qr_parse(body.qr_payload)
        except (FormatError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if body.amount <= 0:
            raise HTTPException(status_code=400, detail="amount must be positive")
        session = engine.present_card(token_bytes, counterparty, body.amount)
        if session.pending:
            service.adjudicate_async(session)
        return {"session_id": session.session_id, "outcome": session.outcome}

    return app
