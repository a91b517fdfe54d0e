"""Post-hoc checkers over simulation traces.

A trace is a list of :class:`TraceEvent`. Checkers are pure and return a
:class:`Report`; they never raise on a property violation.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .history import MessageId, find_cycle
from .protocol import ACK, NOTIF, PAYLOAD_KINDS

# event kinds
SEND = "send"
RECEIVE = "receive"
DELIVER = "deliver"
CLIENT_SEND = "client_send"
CLIENT_REPLY = "client_reply"


class TraceEvent(NamedTuple):
    at: float
    kind: str
    node: int                  # group id; client id for client_* events
    msg: MessageId
    dst: tuple[int, ...]
    pkind: str | None = None   # protocol-message kind for send/receive
    peer: int | None = None    # other endpoint for send/receive/client_*
    nbytes: int = 0
    witness: MessageId | None = None

    def to_json(self) -> str:
        return json.dumps({
            "at": self.at,
            "kind": self.kind,
            "node": self.node,
            "msg": str(self.msg),
            "dst": list(self.dst),
            "pkind": self.pkind,
            "peer": self.peer,
            "nbytes": self.nbytes,
            "witness": None if self.witness is None else str(self.witness),
        }, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "TraceEvent":
        d = json.loads(line)
        w = d.get("witness")
        return cls(d["at"], d["kind"], d["node"], MessageId.parse(d["msg"]), tuple(d["dst"]),
                   d.get("pkind"), d.get("peer"), d.get("nbytes", 0),
                   None if w is None else MessageId.parse(w))


def write_trace(trace: Iterable[TraceEvent], path: str | Path) -> None:
    with open(path, "w") as fh:
        for ev in trace:
            fh.write(ev.to_json())
            fh.write("\n")


def read_trace(path: str | Path) -> list[TraceEvent]:
    with open(path) as fh:
        return [TraceEvent.from_json(line) for line in fh if line.strip()]


@dataclass
class Report:
    name: str
    violations: list[str] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def fail(self, text: str) -> None:
        self.violations.append(text)

    def __str__(self) -> str:
        if self.ok:
            return f"{self.name}: pass"
        head = f"{self.name}: {len(self.violations)} violation(s)"
        return "\n  ".join([head, *self.violations[:10]])


# -- trace views ----------------------------------------------------------------

def multicasts(trace: Sequence[TraceEvent]) -> dict[MessageId, frozenset[int]]:
    """Every multicast issued in the trace (first client_send wins), by id."""
    out: dict[MessageId, frozenset[int]] = {}
    for ev in trace:
        if ev.kind == CLIENT_SEND and ev.msg not in out:
            out[ev.msg] = frozenset(ev.dst)
    return out


def delivery_orders(trace: Sequence[TraceEvent]) -> dict[int, list[MessageId]]:
    orders: dict[int, list[MessageId]] = defaultdict(list)
    for ev in trace:
        if ev.kind == DELIVER:
            orders[ev.node].append(ev.msg)
    return dict(orders)


# -- validity / agreement / integrity ------------------------------------------

def check_validity_agreement_integrity(trace: Sequence[TraceEvent]) -> Report:
    rep = Report("validity/agreement/integrity")
    sent = multicasts(trace)
    seen: dict[tuple[int, MessageId], int] = defaultdict(int)
    for ev in trace:
        if ev.kind == DELIVER:
            seen[(ev.node, ev.msg)] += 1
    for (g, m), count in sorted(seen.items()):
        if m not in sent:
            rep.fail(f"integrity: group {g} delivered {m}, which was never multicast")
        elif g not in sent[m]:
            rep.fail(f"integrity: group {g} delivered {m} but is not a destination")
        if count > 1:
            rep.fail(f"integrity: group {g} delivered {m} {count} times")
    for m, dst in sent.items():
        for g in sorted(dst):
            if (g, m) not in seen:
                rep.fail(f"agreement: group {g} never delivered {m}")
    rep.info["messages"] = len(sent)
    return rep


# -- prefix order ----------------------------------------------------------------

def check_prefix_order(trace: Sequence[TraceEvent]) -> Report:
    """Messages sharing two or more destinations are delivered in one relative
    order everywhere, and that order is the one fixed at their lowest common
    destination.

    Compared per pair of groups: the subsequences of jointly addressed messages
    must be equal, and an adjacent inversion pinpoints a contradicting pair.
    """
    rep = Report("prefix order")
    sent = multicasts(trace)
    orders = delivery_orders(trace)
    pos = {g: {m: i for i, m in enumerate(order)} for g, order in orders.items()}
    groups = sorted(orders)
    lcd_bad = 0
    for i, h1 in enumerate(groups):
        for h2 in groups[i + 1:]:
            p2 = pos[h2]
            seq1 = [m for m in orders[h1] if m in p2 and h2 in sent.get(m, ())]
            seq2 = sorted(seq1, key=p2.__getitem__)
            if seq1 == seq2:
                continue
            for a, b in zip(seq1, seq1[1:]):
                if p2[a] < p2[b]:
                    continue
                lcd = min(sent[a] & sent[b])
                ref = _before(pos, lcd, a, b)
                for h, here in ((h1, True), (h2, False)):
                    if ref is not None and here != ref:
                        lcd_bad += 1
                        first, second = (a, b) if ref else (b, a)
                        rep.fail(f"group {h} delivers {second} before {first}, "
                                 f"contradicting lcd {lcd}")
                if ref is None:
                    rep.fail(f"groups {h1} and {h2} disagree on {a} and {b} (lcd {lcd})")
    rep.info["lcd_violations"] = lcd_bad
    return rep


def _before(pos, g, a, b) -> bool | None:
    p = pos.get(g, {})
    if a in p and b in p:
        return p[a] < p[b]
    return None


# -- acyclic order ---------------------------------------------------------------

def precedence_graph(trace: Sequence[TraceEvent]) -> dict[MessageId, set[MessageId]]:
    """Union over groups of consecutive-delivery edges; its transitive closure is the
    delivery relation."""
    succs: dict[MessageId, set[MessageId]] = defaultdict(set)
    for order in delivery_orders(trace).values():
        for a, b in zip(order, order[1:]):
            if a != b:
                succs[a].add(b)
        for m in order:
            succs.setdefault(m, set())
    return dict(succs)


def check_acyclic_order(trace: Sequence[TraceEvent]) -> Report:
    rep = Report("acyclic order")
    succs = precedence_graph(trace)
    preds = {m: set() for m in succs}
    for a, bs in succs.items():
        for b in bs:
            preds[b].add(a)
    try:
        tuple(TopologicalSorter(preds).static_order())
    except CycleError:
        cycle = find_cycle(sorted(succs), succs)
        rep.info["cycle"] = cycle
        rep.fail("cycle: " + " < ".join(str(m) for m in cycle))
    return rep


# -- minimality ------------------------------------------------------------------

def check_minimality(trace: Sequence[TraceEvent]) -> Report:
    """Who may talk about message m.

    Payload traffic flows between destinations of m. ACK and NOTIF traffic may
    also come from a non-destination, but only after it was itself NOTIF-ed
    about m. A NOTIF to h must name a witness: an earlier multicast addressed
    to h. Finally every group that sends or receives anything must have been a
    destination of some multicast issued before that point.
    """
    rep = Report("minimality")
    dsts: dict[MessageId, frozenset[int]] = {}
    issued_at: dict[MessageId, float] = {}
    first_dest_at: dict[int, float] = {}
    for ev in trace:
        if ev.kind == CLIENT_SEND and ev.msg not in dsts:
            dsts[ev.msg] = frozenset(ev.dst)
            issued_at[ev.msg] = ev.at
            for g in ev.dst:
                first_dest_at.setdefault(g, ev.at)
    notified: set[tuple[int, MessageId]] = set()
    relays: dict[int, int] = defaultdict(int)
    notifs = 0
    never = float("inf")
    for ev in trace:
        if ev.kind == RECEIVE:
            if ev.pkind == NOTIF:
                notified.add((ev.node, ev.msg))
            continue
        if ev.kind != SEND:
            continue
        m = ev.msg
        dst = dsts.get(m, frozenset(ev.dst))
        g, h = ev.node, ev.peer
        for x in (g, h):
            if first_dest_at.get(x, never) > ev.at:
                rep.fail(f"{ev.pkind} for {m} ({g}->{h}): {x} was not yet a destination of any multicast")
        if ev.pkind == NOTIF:
            notifs += 1
            if g not in dst and (g, m) not in notified:
                rep.fail(f"NOTIF for {m} sent by {g}, neither a destination nor notified")
            if h in dst:
                rep.fail(f"NOTIF for {m} sent to destination {h}")
            w = ev.witness
            if w is None or w not in dsts or h not in dsts[w] or issued_at[w] > ev.at:
                rep.fail(f"NOTIF {g}->{h} for {m}: witness {w} is not an earlier multicast to {h}")
            continue
        if ev.pkind == ACK and g not in dst and (g, m) in notified and h in dst:
            continue
        for x in (g, h):
            if x not in dst:
                relays[x] += 1
                rep.fail(f"{ev.pkind} for {m} ({g}->{h}) touches non-destination {x}")
    rep.info["notifs"] = notifs
    rep.info["non_destination_touches"] = dict(relays)
    return rep


# -- overhead --------------------------------------------------------------------

def payload_counts(trace: Sequence[TraceEvent]) -> tuple[dict[int, int], dict[int, int]]:
    received: dict[int, int] = defaultdict(int)
    delivered: dict[int, int] = defaultdict(int)
    for ev in trace:
        if ev.kind == RECEIVE and ev.pkind in PAYLOAD_KINDS:
            received[ev.node] += 1
        elif ev.kind == DELIVER:
            delivered[ev.node] += 1
    return received, delivered


def overhead(trace: Sequence[TraceEvent], group: int) -> float:
    received, delivered = payload_counts(trace)
    return overhead_from(received, delivered, group)


def overhead_from(received, delivered, group: int) -> float:
    r = received.get(group, 0)
    if r == 0:
        return 0.0
    return 1.0 - delivered.get(group, 0) / r


def overheads(trace: Sequence[TraceEvent], n: int) -> list[float]:
    received, delivered = payload_counts(trace)
    return [overhead_from(received, delivered, g) for g in range(n)]


# -- channels --------------------------------------------------------------------

def check_fifo(trace: Sequence[TraceEvent]) -> Report:
    """Receive order on every group-to-group channel equals send order."""
    rep = Report("fifo channels")
    sends: dict[tuple, list] = defaultdict(list)
    recvs: dict[tuple, list] = defaultdict(list)
    for ev in trace:
        if ev.kind == SEND:
            sends[(ev.node, ev.peer)].append((ev.msg, ev.pkind))
        elif ev.kind == RECEIVE and ev.pkind != "REQ":
            recvs[(ev.peer, ev.node)].append((ev.msg, ev.pkind))
    for ch in sorted(set(sends) | set(recvs)):
        if sends[ch] != recvs[ch]:
            rep.fail(f"channel {ch[0]}->{ch[1]}: receive order differs from send order")
    return rep


# -- bundles ---------------------------------------------------------------------

CORRECTNESS = (check_validity_agreement_integrity, check_prefix_order, check_acyclic_order)


def check_all(trace: Sequence[TraceEvent], *, minimality: bool = True) -> list[Report]:
    reports = [c(trace) for c in CORRECTNESS]
    if minimality:
        reports.append(check_minimality(trace))
    return reports


def brute_force_cycle(trace: Sequence[TraceEvent]) -> bool:
    """All-pairs reachability over the precedence graph (small traces only)."""
    succs = precedence_graph(trace)
    nodes = list(succs)
    reach = {m: set(succs[m]) for m in nodes}
    for k in nodes:
        for i in nodes:
            if k in reach[i]:
                reach[i] |= reach[k]
    return any(m in reach[m] for m in nodes)
