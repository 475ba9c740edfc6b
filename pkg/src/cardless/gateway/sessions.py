"""Bearer sessions for the HTTP API.

Tokens are opaque 32-byte random values.  A session dies after 30 minutes
of inactivity, and each token gets a fixed request budget as a blunt
rate-limit backstop.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from ..clock import Clock, SystemClock
from ..keyring import Rng

IDLE_EXPIRY_SECONDS = 30 * 60
REQUEST_CAP = 100_000


@dataclass
class _Session:
    account_id: str
    last_used: float
    requests: int = 0


class SessionStore:
    def __init__(self, clock: Clock | None = None, rng: Rng | None = None,
                 idle_expiry: float = IDLE_EXPIRY_SECONDS, request_cap: int = REQUEST_CAP):
        self._clock = clock or SystemClock()
        self._rng = rng or Rng()
        self._idle_expiry = idle_expiry
        self._request_cap = request_cap
        self._sessions: dict[str, _Session] = {}
        self._lock = threading.Lock()

    def open(self, account_id: str) -> str:
        token = self._rng.token_bytes(32).hex()
        with self._lock:
            self._sessions[token] = _Session(account_id=account_id, last_used=self._clock.now())
        return token

    def resolve(self, token: str | None) -> str | None:
        """Account id for a live token, refreshing its idle timer.

        None for missing, forged, expired, or over-budget tokens.
        """
        if not token:
            return None
        now = self._clock.now()
        with self._lock:
            session = self._sessions.get(token)
            if session is None:
                return None
            if now - session.last_used > self._idle_expiry:
                del self._sessions[token]
                return None
            session.requests += 1
            if session.requests > self._request_cap:
                return None
            session.last_used = now
            return session.account_id

    def revoke(self, token: str) -> None:
        with self._lock:
            self._sessions.pop(token, None)
