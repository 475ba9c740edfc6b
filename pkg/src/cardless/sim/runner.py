"""Deterministic scenario execution over the real protocol engine.

One run builds an engine seeded from the scenario, issues every planned
card, then replays the scripted traffic in virtual-time order with the
scripted cardholder answers.  Metrics come out of the terminal outcomes;
the event log digest is canonical (order-independent), so two runs of the
same (scenario, seed) are byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..clock import LogicalClock
from ..fraud.model import train
from ..keyring import KeyRing, Rng
from ..gateway.eventlog import EventLog, canonical_digest, state_digest
from ..protocol.approval import ScriptedApprovals
from ..protocol.engine import CardGenerateFailed, ProtocolEngine
from ..protocol.types import (
    CARD_GENERATE_FAILED,
    FRAUDULENT_TRANSACTION,
    PAYMENT_COMPLETED,
    CardPolicy,
    Counterparty,
    Usage,
)
from .datagen import gen_dataset
from .scenario import Scenario, load_scenario


class StubScorer:
    """Constant-probability stand-in for a trained model."""

    threshold = 0.5

    def __init__(self, score: float):
        self.score = float(score)

    def predict_proba(self, _features) -> float:
        return self.score


@dataclass
class RunMetrics:
    """Outcome accounting for one scenario run.

    `terminal_count` counts every terminal outcome observed: payment
    sessions plus failed issuances (which terminate before any session
    exists).  The confusion matrix compares scripted fraud labels against
    the fraud-blocked outcome.
    """

    scenario: str
    seed: int
    terminal_count: int
    outcome_counts: dict[str, int]
    true_positives: int
    false_positives: int
    true_negatives: int
    false_negatives: int
    conservation_residual: int
    log_digest: str
    state_digest: str
    session_phases: dict[str, list[int]] = field(default_factory=dict)

    @property
    def recall(self) -> float:
        denom = self.true_positives + self.false_negatives
        return self.true_positives / denom if denom else 0.0

    @property
    def precision(self) -> float:
        denom = self.true_positives + self.false_positives
        return self.true_positives / denom if denom else 0.0

    def as_row(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "terminal_count": self.terminal_count,
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "true_negatives": self.true_negatives,
            "false_negatives": self.false_negatives,
            "conservation_residual": self.conservation_residual,
            "completed": self.outcome_counts.get(PAYMENT_COMPLETED, 0),
            "approval_failed": self.outcome_counts.get("User approval failed!", 0),
            "fraudulent": self.outcome_counts.get(FRAUDULENT_TRANSACTION, 0),
            "detection_failed": self.outcome_counts.get("Fraud detection failed!", 0),
            "generate_failed": self.outcome_counts.get(CARD_GENERATE_FAILED, 0),
            "declined": sum(v for k, v in self.outcome_counts.items() if k.startswith("Declined:")),
            "log_digest": self.log_digest,
        }


def _build_model(spec: dict | None, model_override=None):
    if model_override is not None:
        return model_override
    if spec is None:
        return None
    if "stub_score" in spec:
        return StubScorer(spec["stub_score"])
    if "path" in spec:
        from ..fraud.model import load_model

        return load_model(spec["path"])
    if "train" in spec:
        params = dict(spec["train"])
        data = gen_dataset(
            seed=int(params.get("seed", 0)),
            n=int(params.get("n", 2000)),
            fraud_rate=float(params.get("fraud_rate", 0.1)),
            separation=float(params.get("separation", 2.0)),
        )
        return train(
            data,
            lr=float(params.get("lr", 0.1)),
            epochs=int(params.get("epochs", 500)),
            l2=float(params.get("l2", 1e-4)),
        )
    raise ValueError(f"unrecognized model spec: {spec}")


@dataclass
class RunArtifacts:
    """Everything a run produced: metrics plus the engine and raw events."""

    metrics: RunMetrics
    engine: ProtocolEngine
    records: list
    scenario: Scenario
    seed: int


def run_scenario(scenario: Scenario | str | Path, seed: int | None = None, model=None) -> RunMetrics:
    """Execute a scenario (object or file path) and report metrics.

    An explicit seed overrides the scenario's own; `model` overrides the
    scenario's model spec entirely.
    """
    return execute_scenario(scenario, seed=seed, model=model).metrics


def execute_scenario(scenario: Scenario | str | Path, seed: int | None = None, model=None) -> RunArtifacts:
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    run_seed = scenario.seed if seed is None else seed

    clock = LogicalClock()
    rng = Rng(run_seed)
    log = EventLog(clock=clock)
    engine = ProtocolEngine(
        keyring=KeyRing(seed=run_seed),
        clock=clock,
        rng=rng,
        fraud_model=_build_model(scenario.model, model),
        he_bits=scenario.he_bits,
        event_sink=log.sink(),
    )

    outcome_counts: dict[str, int] = {}
    labels_and_outcomes: list[tuple[str, str]] = []
    initial_balances: dict[str, int] = {}
    approved_total = 0

    for spec in scenario.accounts:
        account = engine.register_account(
            username=spec.username,
            password=spec.password,
            pin=spec.pin,
            balance_minor_units=spec.balance_minor_units,
        )
        initial_balances[account.account_id] = spec.balance_minor_units

    tokens: dict[str, bytes] = {}
    for card_spec in scenario.cards:
        policy = CardPolicy(
            usage=Usage(card_spec.usage),
            limit_minor_units=card_spec.limit_minor_units,
            valid_for_seconds=card_spec.valid_for_seconds,
            networks_allowed=frozenset(card_spec.networks),
        )
        account = engine.account_by_username(card_spec.username)
        try:
            issued = engine.issue_card(account, policy)
        except CardGenerateFailed as exc:
            outcome_counts[exc.outcome] = outcome_counts.get(exc.outcome, 0) + 1
            continue
        tokens[card_spec.ref] = issued.token

    session_phases: dict[str, list[int]] = {}
    for item in sorted(scenario.traffic, key=lambda t: t.at):
        if item.at > clock.now():
            clock.advance_to(item.at)
        counterparty = Counterparty(
            kind=item.counterparty.kind, id=item.counterparty.id, category=item.counterparty.category
        )
        session = engine.run_payment(
            tokens[item.card],
            counterparty,
            item.amount_minor_units,
            approval_source=ScriptedApprovals([item.approval]),
        )
        outcome_counts[session.outcome] = outcome_counts.get(session.outcome, 0) + 1
        labels_and_outcomes.append((item.label, session.outcome))
        session_phases[session.session_id] = [event.phase for event in session.events]
        if session.outcome == PAYMENT_COMPLETED:
            approved_total += item.amount_minor_units

    tp = sum(1 for label, out in labels_and_outcomes if label == "fraud" and out == FRAUDULENT_TRANSACTION)
    fp = sum(1 for label, out in labels_and_outcomes if label == "legit" and out == FRAUDULENT_TRANSACTION)
    fn = sum(1 for label, out in labels_and_outcomes if label == "fraud" and out != FRAUDULENT_TRANSACTION)
    tn = sum(1 for label, out in labels_and_outcomes if label == "legit" and out != FRAUDULENT_TRANSACTION)

    decrements = sum(
        initial_balances[account_id] - engine.accounts[account_id].balance_minor_units
        for account_id in initial_balances
    )
    credits = sum(engine.merchant_credits.values())
    residual = abs(decrements - credits) + abs(credits - approved_total)

    metrics = RunMetrics(
        scenario=scenario.name,
        seed=run_seed,
        terminal_count=sum(outcome_counts.values()),
        outcome_counts=outcome_counts,
        true_positives=tp,
        false_positives=fp,
        true_negatives=tn,
        false_negatives=fn,
        conservation_residual=residual,
        log_digest=canonical_digest(log.records()),
        state_digest=state_digest(engine),
        session_phases=session_phases,
    )
    return RunArtifacts(metrics=metrics, engine=engine, records=log.records(), scenario=scenario, seed=run_seed)
