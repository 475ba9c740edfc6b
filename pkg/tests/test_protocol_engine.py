"""Protocol engine: issuance, adjudication order, settlement invariants."""

import threading

import pytest

from cardless.clock import LogicalClock
from cardless.crypto_vault import deserialize_sealed, he_decrypt, open_card
from cardless.errors import AuthenticationError
from cardless.keyring import Rng
from cardless.card_numbering import luhn_validate
from cardless.protocol import (
    CARD_GENERATE_FAILED,
    DECLINED_CARD_NOT_ACTIVE,
    DECLINED_INSUFFICIENT_FUNDS,
    DECLINED_TOKEN_AUTH,
    DECLINED_TOKEN_EXPIRED,
    FRAUD_DETECTION_FAILED,
    FRAUDULENT_TRANSACTION,
    PAYMENT_COMPLETED,
    USER_APPROVAL_FAILED,
    CardGenerateFailed,
    CardPolicy,
    CardState,
    Counterparty,
    ProtocolEngine,
    ScriptedApprovals,
    Usage,
    session_trace,
)
from cardless.sim.runner import StubScorer

import json


def make_engine(seed=11, **kwargs):
    kwargs.setdefault("he_bits", 256)
    kwargs.setdefault("clock", LogicalClock())
    return ProtocolEngine(rng=Rng(seed), **kwargs)


def policy(usage=Usage.ONE_TIME, limit=10_000, valid_for=86_400):
    return CardPolicy(usage=usage, limit_minor_units=limit, valid_for_seconds=valid_for)


MERCHANT = Counterparty(kind="merchant", id="shop-1", category="books")
APPROVE = lambda: ScriptedApprovals(["approve"])  # noqa: E731
LOW_RISK = StubScorer(0.1)


class TestIssuance:
    def test_sealed_card_opens_to_luhn_valid_pan(self):
        engine = make_engine()
        engine.register_account("alice", "pw", "123456", 50_000)
        issued = engine.request_card("alice", "pw", policy())
        account = engine.account_by_username("alice")
        opened = open_card(
            deserialize_sealed(issued.sealed_card), engine.keyring.account_card_key(account.account_id)
        )
        payload = json.loads(opened)
        assert len(payload["pan"]) == 16 and luhn_validate(payload["pan"])
        assert issued.card.state is CardState.ACTIVE

    def test_issuance_phases_in_order(self):
        engine = make_engine()
        engine.register_account("alice", "pw", "123456", 50_000)
        issued = engine.request_card("alice", "pw", policy())
        assert [e.phase for e in issued.events] == [1, 2, 3, 4, 5]

    def test_invalid_policy_fails_with_terminal_string(self):
        engine = make_engine()
        engine.register_account("alice", "pw", "123456", 50_000)
        with pytest.raises(CardGenerateFailed) as info:
            engine.request_card("alice", "pw", policy(limit=0))
        assert str(info.value) == CARD_GENERATE_FAILED

    def test_empty_policy_fails(self):
        engine = make_engine()
        engine.register_account("alice", "pw", "123456", 50_000)
        with pytest.raises(CardGenerateFailed):
            engine.request_card("alice", "pw", None)

    def test_wrong_password_no_side_effects(self):
        engine = make_engine()
        engine.register_account("alice", "pw", "123456", 50_000)
        with pytest.raises(AuthenticationError):
            engine.request_card("alice", "wrong", policy())
        assert len(engine.registry) == 0

    def test_unknown_user_same_error(self):
        engine = make_engine()
        with pytest.raises(AuthenticationError):
            engine.request_card("ghost", "pw", policy())

    def test_registered_pan_unique_across_cards(self):
        engine = make_engine()
        engine.register_account("alice", "pw", "123456", 50_000)
        pans = {engine.request_card("alice", "pw", policy()).card.pan for _ in range(100)}
        assert len(pans) == 100


def issue(engine, username="alice", **kw):
    engine.register_account(username, "pw", "123456", kw.pop("balance", 100_000))
    return engine.request_card(username, "pw", policy(**kw))


class TestPresentCard:
    def test_valid_token_leaves_session_pending_in_phase_7(self):
        engine = make_engine()
        issued = issue(engine)
        session = engine.present_card(issued.token, MERCHANT, 2500)
        assert session.pending and session.phase == 7

    def test_amount_must_be_positive(self):
        engine = make_engine()
        issued = issue(engine)
        with pytest.raises(ValueError):
            engine.present_card(issued.token, MERCHANT, 0)

    def test_garbage_token_declined_with_reason(self):
        engine = make_engine()
        issue(engine)
        session = engine.present_card(b"not-a-token", MERCHANT, 100)
        assert session.outcome == "Declined: token format invalid"

    def test_tampered_token_declined_authenticity(self):
        engine = make_engine()
        issued = issue(engine)
        tampered = bytearray(issued.token)
        tampered[40] ^= 0x01
        session = engine.present_card(bytes(tampered), MERCHANT, 100)
        assert session.outcome == DECLINED_TOKEN_AUTH

    def test_expired_token_declined(self):
        clock = LogicalClock()
        engine = make_engine(clock=clock)
        issued = issue(engine, valid_for=100)
        clock.advance(101)
        session = engine.present_card(issued.token, MERCHANT, 100)
        assert session.outcome == DECLINED_TOKEN_EXPIRED

    def test_merchant_view_contains_token_id_only(self):
        engine = make_engine()
        issued = issue(engine)
        session = engine.run_payment(issued.token, MERCHANT, 2500, approval_source=APPROVE(), fraud_model=LOW_RISK)
        pan = issued.card.pan
        account_id = issued.card.owner
        for event in session.events:
            if event.actor in ("merchant", "atm"):
                blob = json.dumps(event.detail)
                assert pan not in blob and account_id not in blob
                assert event.detail.get("token_id") == issued.card.token_id.hex()

    def test_no_event_detail_ever_contains_pan(self):
        engine = make_engine()
        issued = issue(engine)
        session = engine.run_payment(issued.token, MERCHANT, 2500, approval_source=APPROVE(), fraud_model=LOW_RISK)
        for event in session.events:
            assert issued.card.pan not in json.dumps(event.detail)


class TestAdjudication:
    def test_low_risk_approved_settles(self):
        engine = make_engine()
        issued = issue(engine)
        session = engine.run_payment(issued.token, MERCHANT, 2500, approval_source=APPROVE(), fraud_model=LOW_RISK)
        assert session.outcome == PAYMENT_COMPLETED

    def test_high_score_is_fraudulent_transaction(self):
        engine = make_engine()
        issued = issue(engine)
        session = engine.run_payment(
            issued.token, MERCHANT, 2500, approval_source=APPROVE(), fraud_model=StubScorer(0.7)
        )
        assert session.outcome == FRAUDULENT_TRANSACTION
        assert session.fraud_score == pytest.approx(0.7)

    def test_score_at_exactly_threshold_is_fraud(self):
        engine = make_engine()
        issued = issue(engine)
        session = engine.run_payment(
            issued.token, MERCHANT, 2500, approval_source=APPROVE(), fraud_model=StubScorer(0.5)
        )
        assert session.outcome == FRAUDULENT_TRANSACTION

    def test_missing_model_is_fraud_detection_failed(self):
        engine = make_engine()
        issued = issue(engine)
        session = engine.run_payment(issued.token, MERCHANT, 2500, approval_source=APPROVE(), fraud_model=None)
        assert session.outcome == FRAUD_DETECTION_FAILED

    def test_user_decline_is_user_approval_failed(self):
        engine = make_engine()
        issued = issue(engine)
        session = engine.run_payment(
            issued.token, MERCHANT, 2500, approval_source=ScriptedApprovals(["decline"]), fraud_model=LOW_RISK
        )
        assert session.outcome == USER_APPROVAL_FAILED

    def test_scripted_timeout_is_user_approval_failed(self):
        engine = make_engine()
        issued = issue(engine)
        session = engine.run_payment(
            issued.token, MERCHANT, 2500, approval_source=ScriptedApprovals(["timeout"]), fraud_model=LOW_RISK
        )
        assert session.outcome == USER_APPROVAL_FAILED

    def test_over_limit_declines_on_funds(self):
        engine = make_engine()
        issued = issue(engine, limit=1000)
        session = engine.run_payment(issued.token, MERCHANT, 1001, approval_source=APPROVE(), fraud_model=LOW_RISK)
        assert session.outcome == DECLINED_INSUFFICIENT_FUNDS

    def test_over_balance_declines_on_funds(self):
        engine = make_engine()
        issued = issue(engine, balance=500, limit=10_000)
        session = engine.run_payment(issued.token, MERCHANT, 600, approval_source=APPROVE(), fraud_model=LOW_RISK)
        assert session.outcome == DECLINED_INSUFFICIENT_FUNDS

    def test_check_order_fraud_before_funds_before_approval(self):
        # a transaction that would fail every check fails on fraud first
        engine = make_engine()
        issued = issue(engine, balance=1, limit=1)
        session = engine.run_payment(
            issued.token, MERCHANT, 999_999, approval_source=ScriptedApprovals(["decline"]), fraud_model=StubScorer(0.9)
        )
        assert session.outcome == FRAUDULENT_TRANSACTION
        # funds fail before the approval script is ever consulted
        issued2 = engine.request_card("alice", "pw", policy(limit=1))
        source = ScriptedApprovals(["decline"])
        session2 = engine.run_payment(issued2.token, MERCHANT, 999, approval_source=source, fraud_model=LOW_RISK)
        assert session2.outcome == DECLINED_INSUFFICIENT_FUNDS
        assert len(source._queue) == 1  # untouched

    def test_check_order_authenticity_before_fraud(self):
        # a tampered token from a broke account fails on authenticity, not
        # on the fraud score or the funds check
        engine = make_engine()
        issued = issue(engine, balance=1, limit=1)
        tampered = bytearray(issued.token)
        tampered[-1] ^= 0x01
        session = engine.run_payment(
            bytes(tampered), MERCHANT, 999_999, approval_source=ScriptedApprovals(["decline"]), fraud_model=StubScorer(0.9)
        )
        assert session.outcome == DECLINED_TOKEN_AUTH
        assert session.fraud_score is None  # scoring never ran


class TestSettlement:
    def test_balances_and_accumulator(self):
        engine = make_engine()
        issued = issue(engine, balance=10_000)
        session = engine.run_payment(issued.token, MERCHANT, 2500, approval_source=APPROVE(), fraud_model=LOW_RISK)
        assert session.outcome == PAYMENT_COMPLETED
        account = engine.account_by_username("alice")
        assert account.balance_minor_units == 7500
        assert he_decrypt(engine.he_keys, issued.card.spent_accumulator) == 2500
        assert engine.merchant_credits["shop-1"] == 2500

    def test_one_time_card_retired_and_replay_declined(self):
        engine = make_engine()
        issued = issue(engine)
        first = engine.run_payment(issued.token, MERCHANT, 100, approval_source=APPROVE(), fraud_model=LOW_RISK)
        assert first.outcome == PAYMENT_COMPLETED
        assert issued.card.state is CardState.RETIRED
        assert engine.registry.is_retired(issued.card.pan)
        replay = engine.run_payment(issued.token, MERCHANT, 100, approval_source=APPROVE(), fraud_model=LOW_RISK)
        assert replay.outcome == DECLINED_CARD_NOT_ACTIVE

    def test_multi_use_limit_enforced_across_settlements(self):
        engine = make_engine()
        issued = issue(engine, usage=Usage.MULTI_USE, limit=5000, balance=100_000)
        first = engine.run_payment(issued.token, MERCHANT, 3000, approval_source=APPROVE(), fraud_model=LOW_RISK)
        assert first.outcome == PAYMENT_COMPLETED
        second = engine.run_payment(issued.token, MERCHANT, 3000, approval_source=APPROVE(), fraud_model=LOW_RISK)
        assert second.outcome == DECLINED_INSUFFICIENT_FUNDS
        assert he_decrypt(engine.he_keys, issued.card.spent_accumulator) == 3000

    def test_multi_use_card_stays_active(self):
        engine = make_engine()
        issued = issue(engine, usage=Usage.MULTI_USE, limit=50_000)
        engine.run_payment(issued.token, MERCHANT, 100, approval_source=APPROVE(), fraud_model=LOW_RISK)
        assert issued.card.state is CardState.ACTIVE

    def test_concurrent_sessions_cannot_double_spend_one_time_card(self):
        engine = make_engine()
        issued = issue(engine, balance=1_000_000, limit=100_000)

        class Gate:
            """Approval source that parks every caller until released."""

            def __init__(self):
                self.release = threading.Event()

            def request_approval(self, query, timeout):
                self.release.wait(5)
                from cardless.protocol import Decision

                return Decision.APPROVE

        gate = Gate()
        sessions = []

        def run():
            sessions.append(
                engine.run_payment(issued.token, MERCHANT, 100, approval_source=gate, fraud_model=LOW_RISK)
            )

        threads = [threading.Thread(target=run) for _ in range(8)]
        for t in threads:
            t.start()
        gate.release.set()
        for t in threads:
            t.join()
        outcomes = sorted(s.outcome for s in sessions)
        assert outcomes.count(PAYMENT_COMPLETED) == 1
        assert he_decrypt(engine.he_keys, issued.card.spent_accumulator) == 100

    def test_concurrent_sessions_never_exceed_multi_use_limit(self):
        engine = make_engine()
        issued = issue(engine, usage=Usage.MULTI_USE, limit=250, balance=1_000_000)

        barrier = threading.Barrier(8)

        class Sync:
            def request_approval(self, query, timeout):
                barrier.wait(5)
                from cardless.protocol import Decision

                return Decision.APPROVE

        source = Sync()
        results = []

        def run():
            results.append(
                engine.run_payment(issued.token, MERCHANT, 100, approval_source=source, fraud_model=LOW_RISK)
            )

        threads = [threading.Thread(target=run) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        spent = he_decrypt(engine.he_keys, issued.card.spent_accumulator)
        assert spent <= 250
        assert spent == 100 * sum(1 for s in results if s.outcome == PAYMENT_COMPLETED)


class TestTrace:
    def test_happy_path_phases_each_exactly_once(self):
        engine = make_engine()
        issued = issue(engine)
        session = engine.run_payment(issued.token, MERCHANT, 2500, approval_source=APPROVE(), fraud_model=LOW_RISK)
        phases = [e.phase for e in session_trace(session)]
        assert phases == [6, 7, 8, 9, 10, 11]

    def test_fraud_decline_ends_at_phase_7_with_outcome_event(self):
        engine = make_engine()
        issued = issue(engine)
        session = engine.run_payment(
            issued.token, MERCHANT, 2500, approval_source=APPROVE(), fraud_model=StubScorer(0.9)
        )
        trace = session_trace(session)
        assert [e.phase for e in trace] == [6, 7]
        assert trace[-1].detail["outcome"] == FRAUDULENT_TRANSACTION

    def test_trace_is_snapshot(self):
        engine = make_engine()
        issued = issue(engine)
        session = engine.present_card(issued.token, MERCHANT, 100)
        snapshot = session_trace(session)
        engine.adjudicate(session, fraud_model=LOW_RISK, approval_source=APPROVE())
        assert len(snapshot) == 1  # unaffected by later events

    def test_events_strictly_ordered_and_outcome_once(self):
        engine = make_engine()
        issued = issue(engine)
        session = engine.run_payment(issued.token, MERCHANT, 2500, approval_source=APPROVE(), fraud_model=LOW_RISK)
        seqs = [e.seq for e in session.events]
        assert seqs == sorted(set(seqs))
        with pytest.raises(Exception):
            session.set_outcome("anything else")

    def test_trace_digest_stable_across_identical_runs(self):
        def run_once():
            engine = make_engine(seed=99)
            issued = issue(engine)
            session = engine.run_payment(
                issued.token, MERCHANT, 2500, approval_source=APPROVE(), fraud_model=LOW_RISK
            )
            return json.dumps([e.as_dict() for e in session.events], sort_keys=True)

        assert run_once() == run_once()


class TestOutcomeStrings:
    def test_exactly_five_terminal_strings(self):
        from cardless.protocol import TERMINAL_OUTCOMES

        assert TERMINAL_OUTCOMES == (
            "Payment completed successfully!",
            "User approval failed!",
            "Fraudulent transaction!",
            "Fraud detection failed!",
            "Virtual card generate failed!",
        )
