"""Credential records and verification.

Passwords and approval PINs are stored only as salted, iterated digests
(PBKDF2-HMAC-SHA256) with per-record salts and domain separation between
the two factors.  Verification is a constant-time comparison, and the
verdict for "unknown user" is indistinguishable from "wrong password" at
the call sites that face the network.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

from .errors import FormatError
from .keyring import Rng

SALT_LEN = 16
DEFAULT_ITERATIONS = 60_000


@dataclass(frozen=True)
class CredentialRecord:
    username: str
    salt: bytes
    password_digest: bytes
    pin_digest: bytes
    iterations: int = DEFAULT_ITERATIONS


def _digest(secret: str, salt: bytes, domain: bytes, iterations: int) -> bytes:
    return hashlib.pbkdf2_hmac("sha256", secret.encode("utf-8"), salt + domain, iterations)


def make_credentials(
    username: str,
    password: str,
    pin: str,
    *,
    iterations: int = DEFAULT_ITERATIONS,
    rng: Rng | None = None,
) -> CredentialRecord:
    if not username:
        raise FormatError("username must be non-empty")
    if not password:
        raise FormatError("password must be non-empty")
    if len(pin) != 6 or not pin.isdigit():
        raise FormatError("PIN must be exactly 6 digits")
    rng = rng or Rng()
    salt = rng.token_bytes(SALT_LEN)
    return CredentialRecord(
        username=username,
        salt=salt,
        password_digest=_digest(password, salt, b"pw", iterations),
        pin_digest=_digest(pin, salt, b"pin", iterations),
        iterations=iterations,
    )


def verify_user(user_input: tuple[str, str], stored: CredentialRecord) -> bool:
    """Compare supplied (username, password) against a stored record."""
    username, password = user_input
    candidate = _digest(password, stored.salt, b"pw", stored.iterations)
    return hmac.compare_digest(candidate, stored.password_digest) and username == stored.username


def verify_pin(pin: str, stored: CredentialRecord) -> bool:
    candidate = _digest(pin, stored.salt, b"pin", stored.iterations)
    return hmac.compare_digest(candidate, stored.pin_digest)
