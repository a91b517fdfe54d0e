"""Hand-built FlexCast executions with known delivery orders.

Each scenario is a tiny open-loop simulation: fixed latencies, scripted
multicasts, zero client link. ``run_scenario`` returns the observed
per-group delivery orders as message labels.
"""

from __future__ import annotations

from dataclasses import dataclass

from .overlay import CDagOverlay
from .simnet import Injection, LatencyMatrix, SimConfig, simulate
from .verify import check_all, delivery_orders


@dataclass(frozen=True)
class Scenario:
    name: str
    groups: tuple[str, ...]
    links: dict                   # (a, b) -> one-way ms, applied both ways
    sends: tuple                  # (label, at, destination names)
    expected: dict                # group name -> delivery order (labels)
    note: str = ""

    def matrix(self, default: float = 1000.0) -> LatencyMatrix:
        idx = {g: i for i, g in enumerate(self.groups)}
        n = len(self.groups)
        rows = [[0.0 if i == j else default for j in range(n)] for i in range(n)]
        for (a, b), ms in self.links.items():
            rows[idx[a]][idx[b]] = rows[idx[b]][idx[a]] = float(ms)
        return LatencyMatrix.from_rows(rows, self.groups)


def _fig3(name, links, sends, expected, note):
    return Scenario(name, ("A", "B", "C"), links, sends, expected, note)


SCENARIOS = (
    _fig3("histories",
          {("A", "C"): 100, ("A", "B"): 10, ("B", "C"): 10},
          (("m1", 0, "AC"), ("m2", 1, "AB"), ("m3", 20, "BC")),
          {"A": ["m1", "m2"], "B": ["m2", "m3"], "C": ["m1", "m3"]},
          "m3 reaches C first but its history shows m1 before it"),
    _fig3("acks",
          {("B", "C"): 100, ("A", "C"): 10, ("A", "B"): 50},
          (("m1", 0, "BC"), ("m2", 0, "ABC")),
          {"A": ["m2"], "B": ["m1", "m2"], "C": ["m1", "m2"]},
          "C holds m2 until B's ack, which carries m1"),
    _fig3("notifs",
          {("B", "C"): 100, ("A", "B"): 10, ("A", "C"): 20},
          (("m1", 0, "BC"), ("m2", 1, "AB"), ("m3", 2, "AC")),
          {"A": ["m2", "m3"], "B": ["m1", "m2"], "C": ["m1", "m3"]},
          "A notifies B about m3; B's ack brings m1 to C"),
    # G2 is notified about y twice, by G0 and then by G1. The ack answering
    # G1's notification is the one that must gate y at G3.
    Scenario("notif-twice", ("G0", "G1", "G2", "G3"),
             {("G0", "G1"): 50, ("G0", "G2"): 10, ("G0", "G3"): 100,
              ("G1", "G2"): 100, ("G1", "G3"): 10, ("G2", "G3"): 100},
             (("p", 0, ("G0", "G2")), ("x", 1, ("G0", "G1")), ("y", 2, ("G0", "G3")),
              ("w", 5, ("G1", "G2")), ("z", 20, ("G2", "G3"))),
             {"G0": ["p", "x", "y"], "G1": ["w", "x"], "G2": ["p", "z", "w"], "G3": ["z", "y"]},
             "G2 acks y for G0 before it knows w; only its later ack for G1 orders z before y"),
    # Two-message cycle attempt: B (the lowest common destination) fixes
    # m2 before m1, and C learns it from B's ack even though m1 reaches C first.
    _fig3("pair",
          {("A", "B"): 50, ("A", "C"): 10, ("B", "C"): 100},
          (("m1", 0, "ABC"), ("m2", 0, "BC")),
          {"A": ["m1"], "B": ["m2", "m1"], "C": ["m2", "m1"]},
          "C holds m1 for B's ack, which carries m2 before m1"),
    # Longer chain m1 < m2 < m3 < m4 built hop by hop; G3 sees m4 first but
    # the accumulated history forces m1 ahead of it.
    Scenario("chain", ("G0", "G1", "G2", "G3"),
             {("G0", "G1"): 10, ("G1", "G2"): 10, ("G2", "G3"): 10, ("G0", "G3"): 200},
             (("m1", 0, ("G0", "G3")), ("m2", 1, ("G0", "G1")), ("m3", 20, ("G1", "G2")),
              ("m4", 40, ("G2", "G3"))),
             {"G0": ["m1", "m2"], "G1": ["m2", "m3"], "G2": ["m3", "m4"], "G3": ["m1", "m4"]},
             "m4 arrives at G3 long before m1 but carries m1 < m2 < m3 < m4"),
    # C acks y for A before it orders w < x, and D acks y before it orders
    # z < w. When B's later NOTIF reaches C, C must notify D again; D's second
    # ack waits for w and so tells E that z precedes y.
    Scenario("renotify", ("A", "B", "C", "D", "E", "F"),
             {("A", "B"): 50, ("A", "C"): 5, ("A", "E"): 50, ("B", "C"): 10, ("B", "E"): 20,
              ("C", "E"): 20, ("C", "D"): 20, ("D", "E"): 100, ("C", "F"): 30, ("D", "F"): 30,
              ("B", "F"): 30},
             (("v", 0, "AC"), ("y", 1, "ABE"), ("u", 2, "CD"), ("w", 10, "CDF"), ("x", 20, "BCF"),
              ("z", 28, "DE")),
             {"A": ["v", "y"], "B": ["x", "y"], "C": ["u", "v", "w", "x"], "D": ["u", "z", "w"],
              "E": ["z", "y"], "F": ["w", "x"]},
             "E would close z < w < x < y < z without D's second ack"),
)

BY_NAME = {s.name: s for s in SCENARIOS}


def run_scenario(sc: Scenario, protocol: str = "flexcast"):
    """Returns (observed orders by group name, checker reports)."""
    idx = {g: i for i, g in enumerate(sc.groups)}
    labels = {}
    injections = []
    for client, (label, at, dst) in enumerate(sc.sends):
        d = frozenset(idx[g] for g in (dst if isinstance(dst, tuple) else tuple(dst)))
        injections.append(Injection(float(at), client, d))
        labels[client] = label
    cfg = SimConfig(protocol, CDagOverlay(len(sc.groups), sc.groups), sc.matrix(), client_link=0.0)
    result = simulate(cfg, injections)
    orders = {sc.groups[g]: [labels[m.client] for m in order]
              for g, order in sorted(delivery_orders(result.trace).items())}
    return orders, check_all(result.trace), result


def diff_orders(expected: dict, observed: dict) -> list[str]:
    lines = []
    for g in sorted(set(expected) | set(observed)):
        e, o = expected.get(g, []), observed.get(g, [])
        if e != o:
            lines.append(f"  {g}: expected {' '.join(e) or '-'}, observed {' '.join(o) or '-'}")
    return lines
