"""Cryptographic primitives for the payment protocol.

Two unrelated jobs live here, matched to what each actually protects:

* An additively homomorphic public-key scheme (Paillier construction over a
  composite modulus, built directly on Python big integers).  Combining two
  ciphertexts multiplies them in the ciphertext group and decrypts to the
  sum of the plaintexts, which is exactly what an encrypted cumulative-spend
  accumulator needs.  Amounts are integers in minor currency units; no
  floating point ever touches a money path.

* An authenticated symmetric envelope (AES-256-GCM) used to seal serialized
  card payloads in transit and at rest.  Any bit flip in nonce, body, or tag
  fails authentication.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import CardlessError, FormatError
from .keyring import Rng

SUPPORTED_MODULUS_BITS = (256, 512, 1024, 2048)
DEFAULT_MODULUS_BITS = 2048

_MR_ROUNDS = 40
_SMALL_PRIMES = (3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67)


class KeyMismatchError(CardlessError):
    """Ciphertexts under different public keys were combined."""


class PlaintextRangeError(CardlessError, ValueError):
    """Plaintext or scalar outside the scheme's plaintext space."""


class SealAuthError(CardlessError):
    """Sealed payload failed authentication (tampered or wrong key)."""


def _is_probable_prime(n: int, rng: Rng) -> bool:
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for _ in range(_MR_ROUNDS):
        a = 2 + rng.randbelow(n - 3)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def _random_prime(bits: int, rng: Rng) -> int:
    while True:
        candidate = rng.randbits(bits) | (1 << (bits - 1)) | 1
        if _is_probable_prime(candidate, rng):
            return candidate


@dataclass(frozen=True)
class HePublicKey:
    n: int
    modulus_bits: int

    @property
    def n_squared(self) -> int:
        return self.n * self.n

    @property
    def fingerprint(self) -> bytes:
        """First 8 bytes of SHA-256 over the big-endian modulus."""
        n_bytes = self.n.to_bytes((self.n.bit_length() + 7) // 8, "big")
        return hashlib.sha256(n_bytes).digest()[:8]


@dataclass(frozen=True)
class HeSecretKey:
    n: int
    lam: int   # Carmichael-style exponent; phi(n) works with g = n + 1
    mu: int    # modular inverse of lam mod n


@dataclass(frozen=True)
class HeKeyPair:
    public_key: HePublicKey
    secret_key: HeSecretKey
    modulus_bits: int


@dataclass(frozen=True)
class Ciphertext:
    value: int
    key_fingerprint: bytes

    def serialize(self) -> bytes:
        """8-byte key fingerprint, 4-byte big-endian length, magnitude bytes."""
        mag = self.value.to_bytes((self.value.bit_length() + 7) // 8 or 1, "big")
        return self.key_fingerprint + struct.pack(">I", len(mag)) + mag


def deserialize_ciphertext(data: bytes) -> Ciphertext:
    if len(data) < 12:
        raise FormatError("ciphertext blob too short")
    fingerprint = data[:8]
    (length,) = struct.unpack(">I", data[8:12])
    if len(data) != 12 + length:
        raise FormatError("ciphertext length prefix does not match payload")
    return Ciphertext(value=int.from_bytes(data[12:], "big"), key_fingerprint=fingerprint)


def he_keygen(modulus_bits: int = DEFAULT_MODULUS_BITS, rng: Rng | None = None) -> HeKeyPair:
    """Generate a key pair over a composite modulus of the given size.

    256-bit keys exist for fast tests; production defaults to 2048.  The
    plaintext space is [0, n), at least 2^255 for every supported size.
    """
    if modulus_bits not in SUPPORTED_MODULUS_BITS:
        raise ValueError(f"unsupported modulus size {modulus_bits}; pick from {SUPPORTED_MODULUS_BITS}")
    rng = rng or Rng()
    while True:
        p = _random_prime(modulus_bits // 2, rng)
        q = _random_prime(modulus_bits // 2, rng)
        if p == q:
            continue
        n = p * q
        if n.bit_length() == modulus_bits and math.gcd(n, (p - 1) * (q - 1)) == 1:
            break
    phi = (p - 1) * (q - 1)
    mu = pow(phi, -1, n)
    public = HePublicKey(n=n, modulus_bits=modulus_bits)
    secret = HeSecretKey(n=n, lam=phi, mu=mu)
    return HeKeyPair(public_key=public, secret_key=secret, modulus_bits=modulus_bits)


def he_encrypt(pk: HePublicKey, m: int, rng: Rng | None = None) -> Ciphertext:
    """Probabilistic encryption: c = (1 + m*n) * r^n mod n^2.

    The generator is fixed at n + 1, which makes the message part a single
    multiplication instead of a modular exponentiation.
    """
    if not 0 <= m < pk.n:
        raise PlaintextRangeError(f"plaintext must be in [0, n); got {m}")
    rng = rng or Rng()
    n, n2 = pk.n, pk.n_squared
    while True:
        r = 1 + rng.randbelow(n - 1)
        if math.gcd(r, n) == 1:
            break
    value = ((1 + m * n) % n2) * pow(r, n, n2) % n2
    return Ciphertext(value=value, key_fingerprint=pk.fingerprint)


def he_decrypt(keys: HeKeyPair, c: Ciphertext) -> int:
    sk, pk = keys.secret_key, keys.public_key
    if c.key_fingerprint != pk.fingerprint:
        raise KeyMismatchError("ciphertext was produced under a different key")
    x = pow(c.value, sk.lam, pk.n_squared)
    return ((x - 1) // pk.n) * sk.mu % pk.n


def he_zero(pk: HePublicKey) -> Ciphertext:
    """Deterministic identity element of the additive homomorphism.

    c = 1 is the unit ciphertext (m = 0, r = 1); accumulators start here so
    that replaying a log reproduces bit-identical accumulator values.
    """
    return Ciphertext(value=1, key_fingerprint=pk.fingerprint)


def _check_same_key(pk: HePublicKey, *cts: Ciphertext) -> None:
    for ct in cts:
        if ct.key_fingerprint != pk.fingerprint:
            raise KeyMismatchError("ciphertext key fingerprint does not match public key")


def he_add(pk: HePublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    """Homomorphic addition: the product of ciphertexts decrypts to the sum."""
    _check_same_key(pk, c1, c2)
    return Ciphertext(value=c1.value * c2.value % pk.n_squared, key_fingerprint=pk.fingerprint)


def he_scale(pk: HePublicKey, c: Ciphertext, k: int) -> Ciphertext:
    """Plaintext-by-scalar multiplication: c^k decrypts to k*m.

    k is capped to the plaintext space; products beyond n would wrap
    silently, and no caller has a legitimate k that large.
    """
    if k < 0:
        raise PlaintextRangeError("scalar must be non-negative")
    if k >= pk.n:
        raise PlaintextRangeError("scalar exceeds plaintext space")
    _check_same_key(pk, c)
    return Ciphertext(value=pow(c.value, k, pk.n_squared), key_fingerprint=pk.fingerprint)


# ---------------------------------------------------------------------------
# Authenticated card envelope


NONCE_LEN = 12
TAG_LEN = 16
SEAL_KEY_LEN = 32


@dataclass(frozen=True)
class SealedCard:
    nonce: bytes
    body: bytes
    tag: bytes

    def serialize(self) -> bytes:
        return self.nonce + self.body + self.tag


def deserialize_sealed(data: bytes) -> SealedCard:
    if len(data) < NONCE_LEN + TAG_LEN:
        raise FormatError("sealed blob too short")
    return SealedCard(nonce=data[:NONCE_LEN], body=data[NONCE_LEN:-TAG_LEN], tag=data[-TAG_LEN:])


def seal_card(card_bytes: bytes, key: bytes, rng: Rng | None = None) -> SealedCard:
    """Seal a card payload under a 32-byte key with a fresh 12-byte nonce."""
    if len(key) != SEAL_KEY_LEN:
        raise FormatError(f"sealing key must be {SEAL_KEY_LEN} bytes")
    rng = rng or Rng()
    nonce = rng.token_bytes(NONCE_LEN)
    ct = AESGCM(key).encrypt(nonce, card_bytes, None)
    return SealedCard(nonce=nonce, body=ct[:-TAG_LEN], tag=ct[-TAG_LEN:])


def open_card(sealed: SealedCard, key: bytes) -> bytes:
    """Open a sealed payload; raises SealAuthError on any tamper or wrong key."""
    if len(key) != SEAL_KEY_LEN:
        raise FormatError(f"sealing key must be {SEAL_KEY_LEN} bytes")
    try:
        return AESGCM(key).decrypt(sealed.nonce, sealed.body + sealed.tag, None)
    except InvalidTag as exc:
        raise SealAuthError("sealed card failed authentication") from exc
