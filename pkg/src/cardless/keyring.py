"""Key material for one bank deployment.

A KeyRing owns every symmetric key the protocol needs and derives them all
from a single 32-byte master secret via HMAC-SHA256 with distinct labels.
In production the master secret is drawn from the OS CSPRNG; in seeded
(simulation) mode it is derived from the run seed so that an identical seed
reproduces identical key material, tokens, and ciphertexts.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import secrets


class Rng:
    """Uniform interface over the deterministic PRNG and the OS CSPRNG.

    Card-number generation must be cryptographically unpredictable in
    production but reproducible in simulation; both modes flow through
    this one class so call sites never branch.
    """

    def __init__(self, seed: int | None = None):
        self.seed = seed
        self._random = random.Random(seed) if seed is not None else None

    @property
    def deterministic(self) -> bool:
        return self._random is not None

    def randbits(self, k: int) -> int:
        if self._random is not None:
            return self._random.getrandbits(k)
        return secrets.randbits(k)

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow needs a positive bound")
        if self._random is not None:
            return self._random.randrange(n)
        return secrets.randbelow(n)

    def token_bytes(self, n: int) -> bytes:
        if self._random is not None:
            return self._random.getrandbits(8 * n).to_bytes(n, "big")
        return secrets.token_bytes(n)


def _derive(master: bytes, label: str) -> bytes:
    return hmac.new(master, label.encode("utf-8"), hashlib.sha256).digest()


class KeyRing:
    """Derived keys: card sealing, token MAC, token payload sealing, log storage."""

    def __init__(self, master: bytes | None = None, *, seed: int | None = None):
        if master is None:
            if seed is not None:
                master = hashlib.sha256(b"cardless-master:" + str(seed).encode()).digest()
            else:
                master = secrets.token_bytes(32)
        if len(master) != 32:
            raise ValueError("master secret must be 32 bytes")
        self._master = master
        self.network_mac_key = _derive(master, "network-token-mac")
        self.network_seal_key = _derive(master, "network-token-seal")
        self.storage_key = _derive(master, "event-log-storage")

    def account_card_key(self, account_id: str) -> bytes:
        """Per-account key under which issued cards are sealed for the user."""
        return _derive(self._master, f"account-card-seal:{account_id}")
