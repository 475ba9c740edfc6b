"""Gateway service entry point.

Boot order: load or create key material, rebuild state by replaying the
event log if one exists, seed any missing accounts, arm the fraud model,
then serve.  The master secret lives in a separate `<log>.keys` file so the
event log itself never contains key material.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import uvicorn

from ..fraud.model import load_model
from ..keyring import KeyRing, Rng
from ..protocol.engine import ProtocolEngine
from .eventlog import EventLog, read_records, replay_into
from .http import GatewayService, create_app

DEMO_ACCOUNT = {
    "username": "demo",
    "password": "demo-pass",
    "pin": "123456",
    "balance_minor_units": 1_000_000,
}


def _load_master(keys_path: Path, seed: int | None) -> bytes:
    if keys_path.exists():
        return bytes.fromhex(keys_path.read_text().strip())
    if seed is not None:
        master = KeyRing(seed=seed)._master
    else:
        master = KeyRing()._master
    keys_path.parent.mkdir(parents=True, exist_ok=True)
    keys_path.write_text(master.hex() + "\n")
    os.chmod(keys_path, 0o600)
    return master


def build_service(args) -> GatewayService:
    seed = args.seed
    rng = Rng(seed)

    if args.log:
        log_path = Path(args.log)
        master = _load_master(log_path.with_suffix(log_path.suffix + ".keys"), seed)
        keyring = KeyRing(master)
    else:
        log_path = None
        keyring = KeyRing(seed=seed)

    engine = ProtocolEngine(
        keyring=keyring,
        rng=rng,
        approval_timeout=args.approval_timeout,
        he_bits=args.he_bits,
    )

    start_seq = 0
    if log_path and log_path.exists():
        records = read_records(log_path)
        replay_into(engine, records)
        start_seq = records[-1].seq + 1 if records else 0
        print(f"replayed {len(records)} events from {log_path}", file=sys.stderr)

    event_log = EventLog(path=log_path, clock=engine.clock, start_seq=start_seq) if log_path else EventLog(clock=engine.clock)
    service = GatewayService(engine, event_log=event_log)

    accounts = [DEMO_ACCOUNT]
    if args.accounts:
        accounts = json.loads(Path(args.accounts).read_text())
    for spec in accounts:
        if engine.account_by_username(spec["username"]) is None:
            engine.register_account(
                username=spec["username"],
                password=spec["password"],
                pin=spec["pin"],
                balance_minor_units=int(spec["balance_minor_units"]),
                account_id=spec.get("account_id"),
            )

    if args.model:
        engine.fraud_model = load_model(args.model)
    else:
        # No model supplied: train a small one on synthetic data so the demo
        # flow scores transactions instead of failing fraud detection.
        from ..sim.datagen import gen_dataset
        from ..fraud.model import train

        engine.fraud_model = train(gen_dataset(seed=7, n=4000, fraud_rate=0.1, separation=2.0))
        print("trained built-in demo fraud model (pass --model to override)", file=sys.stderr)

    return service


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cardless-gateway", description="Bank gateway for the cardless payment protocol")
    parser.add_argument("--listen", default="127.0.0.1:8000", help="addr:port to bind")
    parser.add_argument("--log", default=None, help="append-only event log path (state is replayed from it on boot)")
    parser.add_argument("--model", default=None, help="fraud model file")
    parser.add_argument("--seed", type=int, default=None, help="deterministic mode seed")
    parser.add_argument("--approval-timeout", type=float, default=120.0, help="seconds to wait for cardholder approval")
    parser.add_argument("--accounts", default=None, help="JSON file of accounts to seed")
    parser.add_argument("--he-bits", type=int, default=2048, choices=(256, 512, 1024, 2048), help="homomorphic key size")
    parser.add_argument("--ui", default=None, help="directory of wallet static files to serve at /")
    args = parser.parse_args(argv)

    service = build_service(args)
    app = create_app(service)
    if args.ui:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=args.ui, html=True), name="wallet")

    host, _, port = args.listen.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
