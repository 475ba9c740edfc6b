"""Event sourcing: append-only log, replay equivalence, corruption handling."""

import json

import pytest

from cardless.clock import LogicalClock
from cardless.gateway.eventlog import (
    EventLog,
    ReplayError,
    canonical_digest,
    read_records,
    replay_into,
    state_digest,
)
from cardless.keyring import KeyRing, Rng
from cardless.protocol import CardPolicy, Counterparty, ProtocolEngine, ScriptedApprovals, Usage
from cardless.sim.runner import StubScorer

MERCHANT = Counterparty(kind="merchant", id="shop-1", category="books")


def engine_pair(tmp_path, seed=3):
    """Live engine writing to a log file, plus a same-keys blank engine."""
    clock = LogicalClock()
    log = EventLog(path=tmp_path / "events.log", clock=clock)
    live = ProtocolEngine(
        keyring=KeyRing(seed=seed), clock=clock, rng=Rng(seed), he_bits=256, event_sink=log.sink()
    )
    blank = ProtocolEngine(keyring=KeyRing(seed=seed), clock=LogicalClock(), rng=Rng(seed), he_bits=256)
    return live, blank, log


def drive_workload(engine):
    engine.register_account("alice", "alice-password-xyz", "123456", 100_000)
    policy = CardPolicy(usage=Usage.ONE_TIME, limit_minor_units=10_000, valid_for_seconds=86_400)
    issued = engine.request_card("alice", "alice-password-xyz", policy)
    engine.run_payment(
        issued.token, MERCHANT, 2500, approval_source=ScriptedApprovals(["approve"]), fraud_model=StubScorer(0.1)
    )
    multi = engine.request_card(
        "alice", "alice-password-xyz",
        CardPolicy(usage=Usage.MULTI_USE, limit_minor_units=5_000, valid_for_seconds=86_400),
    )
    engine.run_payment(
        multi.token, MERCHANT, 1500, approval_source=ScriptedApprovals(["decline"]), fraud_model=StubScorer(0.1)
    )
    engine.run_payment(
        multi.token, MERCHANT, 1500, approval_source=ScriptedApprovals(["approve"]), fraud_model=StubScorer(0.1)
    )
    return issued


class TestAppend:
    def test_seq_strictly_increasing(self, tmp_path):
        log = EventLog(path=tmp_path / "log")
        seqs = [log.append("k", {"i": i}) for i in range(10)]
        assert seqs == list(range(10))

    def test_empty_log_replays_to_empty_state(self, tmp_path):
        path = tmp_path / "events.log"
        path.write_text("")
        records = read_records(path)
        assert records == []
        engine = ProtocolEngine(keyring=KeyRing(seed=1), rng=Rng(1), he_bits=256)
        replay_into(engine, records)
        assert engine.accounts == {} and len(engine.registry) == 0


class TestReplay:
    def test_round_trip_reproduces_state_digest(self, tmp_path):
        live, blank, log = engine_pair(tmp_path)
        drive_workload(live)
        records = read_records(tmp_path / "events.log")
        replay_into(blank, records)
        assert state_digest(blank) == state_digest(live)

    def test_replayed_registry_and_balances_match(self, tmp_path):
        live, blank, _ = engine_pair(tmp_path)
        issued = drive_workload(live)
        replay_into(blank, read_records(tmp_path / "events.log"))
        assert blank.registry.is_retired(issued.card.pan)
        assert (
            blank.account_by_username("alice").balance_minor_units
            == live.account_by_username("alice").balance_minor_units
        )
        replayed_card = blank.card_by_token_id(issued.card.token_id.hex())
        assert replayed_card.state.value == "retired"

    def test_replayed_engine_can_continue_serving(self, tmp_path):
        live, blank, _ = engine_pair(tmp_path)
        drive_workload(live)
        replay_into(blank, read_records(tmp_path / "events.log"))
        # the multi-use card still has 3500 of limit headroom after replay
        card = next(c for c in blank._cards_by_pan.values() if c.policy.usage is Usage.MULTI_USE)
        session = blank.run_payment(
            _token_for(blank, card), MERCHANT, 3500,
            approval_source=ScriptedApprovals(["approve"]), fraud_model=StubScorer(0.1),
        )
        assert session.outcome == "Payment completed successfully!"

    def test_corrupt_line_reports_line_number(self, tmp_path):
        live, _, _ = engine_pair(tmp_path)
        drive_workload(live)
        path = tmp_path / "events.log"
        lines = path.read_text().splitlines()
        lines[3] = lines[3][: len(lines[3]) // 2]  # truncate mid-record
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ReplayError) as info:
            read_records(path)
        assert info.value.line_number == 4
        assert info.value.last_good_seq == 2

    def test_truncated_final_line(self, tmp_path):
        live, _, _ = engine_pair(tmp_path)
        drive_workload(live)
        path = tmp_path / "events.log"
        text = path.read_text()
        path.write_text(text[:-10])
        with pytest.raises(ReplayError) as info:
            read_records(path)
        records_ok = text.strip().splitlines()
        assert info.value.line_number == len(records_ok)
        assert info.value.last_good_seq == len(records_ok) - 2

    def test_backwards_seq_rejected(self, tmp_path):
        path = tmp_path / "events.log"
        rec = {"seq": 5, "timestamp": 1.0, "kind": "k", "payload": {}}
        path.write_text(json.dumps(rec) + "\n" + json.dumps({**rec, "seq": 4}) + "\n")
        with pytest.raises(ReplayError):
            read_records(path)


class TestDigests:
    def test_canonical_digest_order_independent(self, tmp_path):
        live, _, log = engine_pair(tmp_path)
        drive_workload(live)
        records = log.records()
        shuffled = list(reversed(records))
        assert canonical_digest(records) == canonical_digest(shuffled)

    def test_digest_differs_for_different_runs(self, tmp_path):
        live, _, log = engine_pair(tmp_path, seed=3)
        drive_workload(live)
        (tmp_path / "b").mkdir(exist_ok=True)
        live2, _, log2 = engine_pair(tmp_path / "b", seed=4)
        drive_workload(live2)
        assert canonical_digest(log.records()) != canonical_digest(log2.records())


class TestLogSecrecy:
    def test_no_cleartext_secrets_in_log(self, tmp_path):
        live, _, _ = engine_pair(tmp_path)
        issued = drive_workload(live)
        text = (tmp_path / "events.log").read_text()
        assert "alice-password-xyz" not in text
        assert "123456" not in text  # the PIN
        for card in live._cards_by_pan.values():
            assert card.pan not in text


def _token_for(engine, card):
    """Rebuild presentable token bytes from a replayed card's QR payload."""
    from cardless.token_codec import qr_parse

    return qr_parse(card.qr_payload)
