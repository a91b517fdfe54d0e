"""gTPC-C: TPC-C's transaction mix mapped onto warehouse-addressed multicasts.

Warehouses are groups. A transaction touches its client's home warehouse and,
occasionally, remote ones picked by a locality cascade over the latency matrix.
No application logic runs; only destination sets matter.
"""

from __future__ import annotations

import random
from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Callable, NamedTuple, Sequence

NEW_ORDER = "new_order"
PAYMENT = "payment"
ORDER_STATUS = "order_status"
DELIVERY = "delivery"
STOCK_LEVEL = "stock_level"

KINDS = (NEW_ORDER, PAYMENT, ORDER_STATUS, DELIVERY, STOCK_LEVEL)
DEFAULT_MIX = {NEW_ORDER: 0.45, PAYMENT: 0.43, ORDER_STATUS: 0.04, DELIVERY: 0.04, STOCK_LEVEL: 0.04}


class Transaction(NamedTuple):
    kind: str
    home: int
    dst: frozenset
    items: int | None = None


@dataclass
class WorkloadConfig:
    n: int
    locality: float = 0.99
    mix: dict = field(default_factory=lambda: dict(DEFAULT_MIX))
    item_remote: float = 0.02
    payment_remote: float = 0.15
    items: tuple[int, int] = (5, 15)
    max_dst: int = 3
    mode: str = "full"          # or "global": new order and payment only
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.locality <= 1.0:
            raise ValueError(f"locality must be in [0, 1], got {self.locality}")
        if self.mode not in ("full", "global"):
            raise ValueError(f"unknown workload mode {self.mode!r}")
        unknown = set(self.mix) - set(KINDS)
        if unknown:
            raise ValueError(f"unknown transaction kinds: {sorted(unknown)}")
        if abs(sum(self.mix.values()) - 1.0) > 1e-9:
            raise ValueError(f"transaction mix sums to {sum(self.mix.values())}, not 1")
        if self.n < 1:
            raise ValueError("need at least one warehouse")

    def effective_mix(self) -> dict:
        if self.mode == "full":
            return dict(self.mix)
        total = self.mix[NEW_ORDER] + self.mix[PAYMENT]
        return {NEW_ORDER: self.mix[NEW_ORDER] / total, PAYMENT: self.mix[PAYMENT] / total}


def cascade_probabilities(k: int, locality: float) -> list[float]:
    """Chance of picking the i-th nearest of ``k`` candidates; the farthest takes the rest."""
    if k < 1:
        raise ValueError("no remote candidates")
    probs = [locality * (1.0 - locality) ** i for i in range(k - 1)]
    probs.append((1.0 - locality) ** (k - 1))
    return probs


def nearest_order(latency, home: int, n: int) -> list[int]:
    """Other warehouses by increasing latency from ``home`` (index breaks ties)."""
    row = latency[home]
    return sorted((w for w in range(n) if w != home), key=lambda w: (row[w], w))


class Workload:
    def __init__(self, cfg: WorkloadConfig, latency) -> None:
        cfg.validate()
        self.cfg = cfg
        mix = cfg.effective_mix()
        self._kinds = [k for k in KINDS if mix.get(k, 0.0) > 0.0]
        self._kind_cum = list(accumulate(mix[k] for k in self._kinds))
        self._near: list[list[int]] = []
        self._near_cum: list[list[float]] = []
        for home in range(cfg.n):
            order = nearest_order(latency, home, cfg.n)
            self._near.append(order)
            self._near_cum.append(list(accumulate(cascade_probabilities(len(order), cfg.locality))) if order else [])

    def _pick(self, cum: Sequence[float], rng: random.Random) -> int:
        # guard against rounding leaving the last bucket unreachable
        return min(bisect_right(cum, rng.random() * cum[-1]), len(cum) - 1)

    def choose_remote(self, home: int, rng: random.Random) -> int:
        near = self._near[home]
        if not near:
            raise ValueError("remote warehouse needs at least two warehouses")
        return near[self._pick(self._near_cum[home], rng)]

    def next_transaction(self, home: int, rng: random.Random) -> Transaction:
        cfg = self.cfg
        remote_ok = cfg.n > 1
        while True:
            kind = self._kinds[self._pick(self._kind_cum, rng)]
            dst = {home}
            items = None
            if kind == NEW_ORDER:
                items = rng.randint(*cfg.items)
                for _ in range(items):
                    if remote_ok and rng.random() < cfg.item_remote:
                        dst.add(self.choose_remote(home, rng))
            elif kind == PAYMENT:
                if remote_ok and rng.random() < cfg.payment_remote:
                    dst.add(self.choose_remote(home, rng))
            if len(dst) <= cfg.max_dst:
                return Transaction(kind, home, frozenset(dst), items)

    def client_rng(self, client: int) -> random.Random:
        return random.Random(f"{self.cfg.seed}/{client}")

    def source(self, client: int, home: int) -> Callable[[], frozenset]:
        """Closed-loop feed for one client: each call yields the next destination set."""
        rng = self.client_rng(client)

        def next_dst() -> frozenset:
            return to_multicast(self.next_transaction(home, rng))

        return next_dst


def to_multicast(tx: Transaction) -> frozenset:
    """Destination set of the message carrying ``tx`` (payloads are empty)."""
    return frozenset(tx.dst)
