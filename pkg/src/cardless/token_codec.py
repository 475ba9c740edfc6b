"""Presentation-token codec.

The merchant or ATM never sees a card number; it sees this token.  The
binary layout is normative and bit-exact:

    magic      4 bytes  b"VC01"
    network_id 1 byte
    token_id   16 bytes  random
    expiry     8 bytes  big-endian Unix seconds
    ct_len     2 bytes  big-endian
    ciphertext ct_len bytes  (sealed card reference, opaque to the merchant)
    mac        32 bytes  HMAC-SHA256 over all preceding bytes

The same bytes travel as a QR text payload (unpadded URL-safe base64 behind
a fixed scheme prefix) or as a simulated NFC frame.  Tokens stay under 400
bytes pre-encoding so a version-13 QR code could physically carry them.

Decoding checks in a fixed order: framing first, then authenticity, then
expiry.  Each failure mode raises its own exception type.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import re
import struct
import time
from dataclasses import dataclass

from .errors import CardlessError, FormatError
from .keyring import Rng

MAGIC = b"VC01"
TOKEN_ID_LEN = 16
MAC_LEN = 32
_HEADER = struct.Struct(">4sB16sQH")  # magic, network_id, token_id, expiry, ct_len
MAX_TOKEN_LEN = 400
MAX_CIPHERTEXT_LEN = MAX_TOKEN_LEN - _HEADER.size - MAC_LEN

QR_PREFIX = "cardless://v1/"
_QR_RE = re.compile(r"^cardless://v1/([A-Za-z0-9_-]+)$")


class TokenFormatError(FormatError):
    """Token bytes do not parse: bad magic, truncation, oversize ciphertext."""


class TokenAuthError(CardlessError):
    """Token MAC does not verify under the network key."""


class TokenExpiredError(CardlessError):
    """Token parsed and authenticated but its expiry has passed."""


@dataclass(frozen=True)
class CardToken:
    network_id: int
    token_id: bytes
    expiry: int
    ciphertext: bytes

    def encode_unsigned(self) -> bytes:
        return _HEADER.pack(MAGIC, self.network_id, self.token_id, self.expiry, len(self.ciphertext)) + self.ciphertext


def _mac(unsigned: bytes, network_key: bytes) -> bytes:
    return hmac.new(network_key, unsigned, hashlib.sha256).digest()


def encode_token(
    card_ref: bytes,
    network_key: bytes,
    expiry: int,
    rng: Rng | None = None,
    *,
    network_id: int = 1,
    now: float | None = None,
) -> bytes:
    """Issue token bytes wrapping an opaque sealed card reference.

    Deterministic given a seeded rng (the only random field is token_id).
    """
    if len(network_key) != 32:
        raise ValueError("network key must be 32 bytes")
    if not 0 <= network_id <= 255:
        raise ValueError("network id must fit one byte")
    if len(card_ref) > MAX_CIPHERTEXT_LEN:
        raise TokenFormatError(f"card reference exceeds {MAX_CIPHERTEXT_LEN} bytes")
    now = time.time() if now is None else now
    if expiry <= now:
        raise ValueError("token expiry must be in the future")
    rng = rng or Rng()
    token = CardToken(
        network_id=network_id,
        token_id=rng.token_bytes(TOKEN_ID_LEN),
        expiry=int(expiry),
        ciphertext=bytes(card_ref),
    )
    unsigned = token.encode_unsigned()
    return unsigned + _mac(unsigned, network_key)


def peek_token_id(data: bytes) -> bytes | None:
    """token_id of a structurally plausible token, without authentication."""
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        return None
    return data[5 : 5 + TOKEN_ID_LEN]


def decode_token(data: bytes, network_key: bytes, now: float | None = None) -> CardToken:
    """Parse, authenticate, and expiry-check token bytes, in that order."""
    if len(data) < _HEADER.size + MAC_LEN:
        raise TokenFormatError("token too short")
    magic, network_id, token_id, expiry, ct_len = _HEADER.unpack(data[: _HEADER.size])
    if magic != MAGIC:
        raise TokenFormatError(f"bad magic {magic!r}")
    if ct_len > MAX_CIPHERTEXT_LEN:
        raise TokenFormatError(f"ciphertext length {ct_len} exceeds bound")
    if len(data) != _HEADER.size + ct_len + MAC_LEN:
        raise TokenFormatError("token length does not match declared ciphertext length")
    unsigned, mac = data[: -MAC_LEN], data[-MAC_LEN:]
    if not hmac.compare_digest(mac, _mac(unsigned, network_key)):
        raise TokenAuthError("token MAC verification failed")
    now = time.time() if now is None else now
    if expiry <= now:
        raise TokenExpiredError("token has expired")
    return CardToken(
        network_id=network_id,
        token_id=token_id,
        expiry=expiry,
        ciphertext=data[_HEADER.size : _HEADER.size + ct_len],
    )


def qr_payload(token_bytes: bytes) -> str:
    """Text form carried in a QR code: scheme prefix + unpadded URL-safe base64."""
    encoded = base64.urlsafe_b64encode(token_bytes).rstrip(b"=").decode("ascii")
    return QR_PREFIX + encoded


def qr_parse(payload: str) -> bytes:
    match = _QR_RE.match(payload)
    if not match:
        raise FormatError("QR payload does not match the cardless://v1/ format")
    body = match.group(1)
    padded = body + "=" * (-len(body) % 4)
    try:
        return base64.urlsafe_b64decode(padded)
    except ValueError as exc:
        raise FormatError("QR payload is not valid base64") from exc
