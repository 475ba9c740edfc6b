"""Virtual card number generation and validation.

Card numbers follow the ISO/IEC 7812 layout: a 6-digit issuer
identification number, a 9-digit account identifier, and a final Luhn check
digit, giving a 16-digit PAN.  Generation always emits this fixed layout;
validation accepts any 8-19 digit number so foreign PANs can be checked too.

A PanRegistry guarantees global uniqueness: a number is never active twice,
and once retired it is never reissued.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .errors import FormatError, NotActiveError, RegistryExhaustedError
from .keyring import Rng

IIN_LENGTH = 6
ACCOUNT_ID_LENGTH = 9
PAN_LENGTH = 16

# ISO/IEC 7812 bounds: full numbers are 8-19 digits, so a check-digit body
# is at most 18.  Short bodies are legal inputs; they appear in verification
# harnesses even though card generation only ever uses 15-digit bodies.
_BODY_MAX = 18
_PAN_MIN, _PAN_MAX = 8, 19


def _digits_or_raise(s: str, what: str) -> None:
    if not s or not s.isascii() or not s.isdigit():
        raise FormatError(f"{what} must be decimal digits, got {s!r}")


def luhn_sum(body: str) -> int:
    """Doubling sum over a digit string: double every second digit from the
    right, reduce digits above 9 by 9, and add everything up."""
    total = 0
    for i, ch in enumerate(reversed(body)):
        d = ord(ch) - 48
        if i % 2 == 0:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total


def luhn_check_digit(body: str) -> int:
    """Check digit that makes body‖digit pass Luhn validation.

    The raw formula 10 - (S mod 10) yields 10 when S is a multiple of 10;
    a final mod 10 folds that case back to the digit 0.
    """
    _digits_or_raise(body, "check-digit body")
    if not 1 <= len(body) <= _BODY_MAX:
        raise FormatError(f"check-digit body must be 1-{_BODY_MAX} digits, got {len(body)}")
    return (10 - luhn_sum(body) % 10) % 10


def luhn_validate(pan: str) -> bool:
    """True iff the last digit is the Luhn check digit of the rest."""
    _digits_or_raise(pan, "PAN")
    if not _PAN_MIN <= len(pan) <= _PAN_MAX:
        raise FormatError(f"PAN must be {_PAN_MIN}-{_PAN_MAX} digits, got {len(pan)}")
    return luhn_check_digit(pan[:-1]) == int(pan[-1])


def generate_account_id(rng: Rng) -> str:
    """Uniform 9-digit account identifier, zero-padded."""
    return f"{rng.randbelow(10 ** ACCOUNT_ID_LENGTH):0{ACCOUNT_ID_LENGTH}d}"


@dataclass(frozen=True)
class PanParts:
    """A 16-digit PAN split into its issuer / account / check-digit fields."""

    iin: str
    account_id: str
    check_digit: int

    @property
    def pan(self) -> str:
        return f"{self.iin}{self.account_id}{self.check_digit}"

    def masked(self) -> str:
        """First six and last four digits; the middle is blanked."""
        pan = self.pan
        return f"{pan[:6]}{'*' * 6}{pan[-4:]}"


def assemble_pan(iin: str, account_id: str) -> PanParts:
    """Concatenate issuer and account fields and append the check digit."""
    _digits_or_raise(iin, "IIN")
    _digits_or_raise(account_id, "account id")
    if len(iin) != IIN_LENGTH:
        raise FormatError(f"IIN must be {IIN_LENGTH} digits, got {len(iin)}")
    if len(account_id) != ACCOUNT_ID_LENGTH:
        raise FormatError(f"account id must be {ACCOUNT_ID_LENGTH} digits, got {len(account_id)}")
    return PanParts(iin=iin, account_id=account_id, check_digit=luhn_check_digit(iin + account_id))


class PanRegistry:
    """Uniqueness authority for issued PANs.

    check-and-insert is linearizable (single lock), so concurrent card
    generation can never admit the same number twice.  Retired numbers stay
    in the registry forever and are never reissued.
    """

    def __init__(self):
        self._active: set[str] = set()
        self._retired: set[str] = set()
        self._lock = threading.Lock()

    def register_unique(self, pan: str) -> bool:
        """Atomically admit a PAN.  Returns False if it was ever seen before."""
        if not luhn_validate(pan):
            raise FormatError(f"refusing to register Luhn-invalid PAN")
        with self._lock:
            if pan in self._active or pan in self._retired:
                return False
            self._active.add(pan)
            return True

    def retire(self, pan: str) -> None:
        """Move an active PAN to the retired set."""
        with self._lock:
            if pan not in self._active:
                raise NotActiveError("PAN is not active")
            self._active.remove(pan)
            self._retired.add(pan)

    def is_active(self, pan: str) -> bool:
        with self._lock:
            return pan in self._active

    def is_retired(self, pan: str) -> bool:
        with self._lock:
            return pan in self._retired

    def __len__(self) -> int:
        with self._lock:
            return len(self._active) + len(self._retired)

    def snapshot(self) -> tuple[frozenset[str], frozenset[str]]:
        with self._lock:
            return frozenset(self._active), frozenset(self._retired)


def issue_unique_pan(iin: str, registry: PanRegistry, rng: Rng, max_attempts: int = 32) -> PanParts:
    """Generate account ids until one registers as unique.

    The 9-digit space holds a billion numbers, so collisions at desk scale
    are vanishingly rare; the retry bound exists so a truly exhausted
    registry fails loudly instead of spinning.
    """
    for _ in range(max_attempts):
        parts = assemble_pan(iin, generate_account_id(rng))
        if registry.register_unique(parts.pan):
            return parts
    raise RegistryExhaustedError(f"no unique PAN found in {max_attempts} attempts")
