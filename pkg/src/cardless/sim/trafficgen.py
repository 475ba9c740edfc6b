"""Generated end-to-end scenarios: a baseline spender plus injected fraud.

The legitimate stream establishes an account profile (steady amounts, one
merchant category, two-hour spacing); injected fraud breaks it on every
axis the scorer sees: an order of magnitude more money, a never-seen
category, an ATM channel, and burst timing.  Labels ride along so a run's
confusion matrix can be computed against ground truth.
"""

from __future__ import annotations

import numpy as np

from .scenario import AccountSpec, CardSpec, CounterpartySpec, Scenario, TrafficItem

_LEGIT_MEAN = 3000
_LEGIT_STD = 300
_LEGIT_SPACING = 7200.0


def gen_scenario(seed: int, n_legit: int, n_fraud: int, name: str = "generated") -> Scenario:
    if n_legit < 1:
        raise ValueError("need at least one legitimate transaction")
    rng = np.random.default_rng(seed)

    legit_times = [100.0 + i * _LEGIT_SPACING for i in range(n_legit)]
    items: list[TrafficItem] = [
        TrafficItem(
            at=t,
            card="card-1",
            amount_minor_units=max(100, int(round(rng.normal(_LEGIT_MEAN, _LEGIT_STD)))),
            label="legit",
            approval="approve",
            counterparty=CounterpartySpec(kind="merchant", id="grocer-1", category="grocery"),
        )
        for t in legit_times
    ]

    # Fraud bursts land between legitimate transactions; the per-item offset
    # keeps virtual timestamps unique.
    for k in range(n_fraud):
        anchor = int(rng.integers(low=min(20, n_legit - 1), high=n_legit))
        at = legit_times[anchor] + 60.0 + k  # distinct offsets keep times unique
        amount = int(round(rng.normal(_LEGIT_MEAN * 10, _LEGIT_STD * 4)))
        items.append(
            TrafficItem(
                at=at,
                card="card-1",
                amount_minor_units=max(10_000, amount),
                label="fraud",
                approval="approve",
                counterparty=CounterpartySpec(kind="atm", id="atm-66", category="casino"),
            )
        )

    total_legit = sum(i.amount_minor_units for i in items if i.label == "legit")
    total_all = sum(i.amount_minor_units for i in items)
    return Scenario(
        name=name,
        seed=seed,
        accounts=[
            AccountSpec(
                username="spender",
                password="spender-pass",
                pin="123456",
                balance_minor_units=total_all * 2,
            )
        ],
        cards=[
            CardSpec(
                ref="card-1",
                username="spender",
                usage="multi_use",
                limit_minor_units=total_all * 2,
                valid_for_seconds=int(legit_times[-1] + 10 * _LEGIT_SPACING),
            )
        ],
        traffic=items,
        model={"train": {"seed": 7, "n": 4000, "fraud_rate": 0.1, "separation": 2.0}},
    )
