"""Scenario files: declarative end-to-end protocol runs.

A scenario is a JSON document naming accounts, a card issuance plan,
scripted traffic with fraud labels and cardholder answers, and the fraud
model to arm (a real model file, training parameters, a constant stub, or
none at all to exercise the detector-unavailable path).  Timing is a
logical clock: `at` offsets are virtual seconds, so runs are deterministic
and instant.

Schema (see also the bundled files under sim/scenarios/):

    {
      "name": "happy_path",
      "seed": 42,
      "model": null | {"stub_score": 0.9} | {"path": "model.txt"}
              | {"train": {"seed": 7, "n": 2000, "fraud_rate": 0.1, "separation": 2.0}},
      "accounts": [{"username", "password", "pin", "balance_minor_units"}],
      "cards":    [{"ref", "username", "usage", "limit_minor_units",
                    "valid_for_seconds", "networks"?}],
      "traffic":  [{"at", "card", "amount_minor_units", "label",
                    "approval"?, "counterparty"?: {"kind", "id", "category"}}]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class ScenarioError(ValueError):
    def __init__(self, path, message: str, line: int | None = None):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class AccountSpec:
    username: str
    password: str
    pin: str
    balance_minor_units: int


@dataclass(frozen=True)
class CardSpec:
    ref: str
    username: str
    usage: str
    limit_minor_units: int
    valid_for_seconds: int
    networks: tuple[int, ...] = (1,)


@dataclass(frozen=True)
class CounterpartySpec:
    kind: str = "merchant"
    id: str = "merchant-1"
    category: str = "general"


@dataclass(frozen=True)
class TrafficItem:
    at: float
    card: str
    amount_minor_units: int
    label: str = "legit"
    approval: str = "approve"
    counterparty: CounterpartySpec = CounterpartySpec()


@dataclass
class Scenario:
    name: str
    seed: int
    accounts: list[AccountSpec]
    cards: list[CardSpec]
    traffic: list[TrafficItem]
    model: dict | None = None
    he_bits: int = 256  # small keys keep desk-scale simulations quick

    def validate(self, path="<scenario>") -> None:
        usernames = {a.username for a in self.accounts}
        if len(usernames) != len(self.accounts):
            raise ScenarioError(path, "duplicate account usernames")
        refs = [c.ref for c in self.cards]
        if len(set(refs)) != len(refs):
            raise ScenarioError(path, "duplicate card refs")
        for card in self.cards:
            if card.username not in usernames:
                raise ScenarioError(path, f"card {card.ref!r} references unknown account {card.username!r}")
            if card.usage not in ("one_time", "multi_use"):
                raise ScenarioError(path, f"card {card.ref!r}: usage must be one_time or multi_use")
        # Traffic may only reference cards whose issuance can succeed.
        issuable = {c.ref for c in self.cards if c.limit_minor_units > 0 and c.valid_for_seconds > 0}
        for i, item in enumerate(self.traffic):
            if item.card not in set(refs):
                raise ScenarioError(path, f"traffic[{i}] references unknown card {item.card!r}")
            if item.card not in issuable:
                raise ScenarioError(path, f"traffic[{i}] references card {item.card!r} whose issuance fails")
            if item.label not in ("legit", "fraud"):
                raise ScenarioError(path, f"traffic[{i}]: label must be legit or fraud")
            if item.approval not in ("approve", "decline", "timeout"):
                raise ScenarioError(path, f"traffic[{i}]: approval must be approve, decline, or timeout")
            if item.amount_minor_units <= 0:
                raise ScenarioError(path, f"traffic[{i}]: amount must be positive")
            if item.counterparty.kind not in ("merchant", "atm"):
                raise ScenarioError(path, f"traffic[{i}]: counterparty kind must be merchant or atm")


def _require(obj: dict, key: str, path, context: str):
    if key not in obj:
        raise ScenarioError(path, f"{context}: missing required field {key!r}")
    return obj[key]


def parse_scenario(raw: dict, path="<scenario>") -> Scenario:
    try:
        accounts = [
            AccountSpec(
                username=_require(a, "username", path, "account"),
                password=_require(a, "password", path, "account"),
                pin=_require(a, "pin", path, "account"),
                balance_minor_units=int(_require(a, "balance_minor_units", path, "account")),
            )
            for a in raw.get("accounts", [])
        ]
        cards = [
            CardSpec(
                ref=_require(c, "ref", path, "card"),
                username=_require(c, "username", path, "card"),
                usage=_require(c, "usage", path, "card"),
                limit_minor_units=int(_require(c, "limit_minor_units", path, "card")),
                valid_for_seconds=int(_require(c, "valid_for_seconds", path, "card")),
                networks=tuple(int(n) for n in c.get("networks", [1])),
            )
            for c in raw.get("cards", [])
        ]
        traffic = []
        for t in raw.get("traffic", []):
            cp = t.get("counterparty", {})
            traffic.append(
                TrafficItem(
                    at=float(_require(t, "at", path, "traffic item")),
                    card=_require(t, "card", path, "traffic item"),
                    amount_minor_units=int(_require(t, "amount_minor_units", path, "traffic item")),
                    label=t.get("label", "legit"),
                    approval=t.get("approval", "approve"),
                    counterparty=CounterpartySpec(
                        kind=cp.get("kind", "merchant"),
                        id=cp.get("id", "merchant-1"),
                        category=cp.get("category", "general"),
                    ),
                )
            )
        scenario = Scenario(
            name=raw.get("name", "unnamed"),
            seed=int(raw.get("seed", 0)),
            accounts=accounts,
            cards=cards,
            traffic=traffic,
            model=raw.get("model"),
            he_bits=int(raw.get("he_bits", 256)),
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(path, f"malformed field: {exc}") from exc
    scenario.validate(path)
    return scenario


def load_scenario(path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(path, f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ScenarioError(path, "scenario document must be a JSON object")
    return parse_scenario(raw, path)
