"""`simulate` command line: run scenarios, generate data, train models."""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from ..fraud.model import load_model, save_model, train
from .datagen import gen_dataset, load_dataset, save_dataset
from .report import render_report
from .runner import run_scenario
from .scenario import ScenarioError, load_scenario


def _resolve_scenario(name_or_path: str) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    bundled = resources.files("cardless.sim") / "scenarios" / f"{name_or_path}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"no scenario file at {name_or_path!r} and no bundled scenario of that name")


def _cmd_run(args) -> int:
    scenario_path = _resolve_scenario(args.scenario)
    scenario = load_scenario(scenario_path)
    model = load_model(args.model) if args.model else None
    metrics = run_scenario(scenario, seed=args.seed, model=model)
    rendered = render_report([metrics], fmt=args.report)
    sys.stdout.write(rendered)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"metrics.{ 'csv' if args.report == 'csv' else 'txt' }").write_text(rendered)
        (out_dir / "digest.txt").write_text(metrics.log_digest + "\n")
    return 0


def _cmd_gen_data(args) -> int:
    data = gen_dataset(seed=args.seed, n=args.n, fraud_rate=args.fraud_rate, separation=args.separation)
    save_dataset(data, args.out)
    fraud = sum(label for _, label in data.rows)
    print(f"wrote {len(data.rows)} rows ({fraud} fraud) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    data = load_dataset(args.data)
    model = train(data, lr=args.lr, epochs=args.epochs, l2=args.l2)
    save_model(model, args.out)
    print(f"trained on {len(data.rows)} rows; model written to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="simulate", description="Deterministic payment-protocol simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file (or bundled scenario name)")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--model", default=None, help="fraud model file overriding the scenario's model spec")
    p_run.add_argument("--report", choices=("text", "csv"), default="text")
    p_run.add_argument("--out", default=None, help="directory for metrics and digest artifacts")
    p_run.set_defaults(func=_cmd_run)

    p_gen = sub.add_parser("gen-data", help="generate a labeled feature dataset")
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--fraud-rate", type=float, required=True)
    p_gen.add_argument("--separation", type=float, required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=_cmd_gen_data)

    p_train = sub.add_parser("train", help="train a fraud model on a dataset file")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--lr", type=float, default=0.1)
    p_train.add_argument("--epochs", type=int, default=500)
    p_train.add_argument("--l2", type=float, default=1e-4)
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(func=_cmd_train)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
