"""Baseline protocols: Skeen's timestamp ordering and hierarchical (tree) ordering.

Both use single-process groups and the same handler contract as
:class:`~amcast_lab.flexcast.FlexCastGroup`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .history import MessageId, MessageRecord
from .overlay import GroupId, TreeOverlay, tree_lca
from .protocol import FWD, TS, ProtocolError, ProtocolMessage, Transition


@dataclass
class SkeenPending:
    msg: MessageRecord
    lts: dict = field(default_factory=dict)
    local_ts: int = 0
    ft: int | None = None


class SkeenGroup:
    """Skeen's protocol with Lamport clocks and (ts, id) tie-breaking.

    The entry group piggybacks its local timestamp on the forwarded message;
    every other destination answers with its own timestamp to all the others.
    """

    def __init__(self, g: GroupId) -> None:
        self.g = g
        self.clock = 0
        self.pending: dict[MessageId, SkeenPending] = {}
        # timestamps that arrived before the message itself
        self.stash: dict[MessageId, dict[GroupId, int]] = {}
        self.delivered: set[MessageId] = set()
        self.delivery_order: list[MessageId] = []
        self.final_ts: dict[MessageId, int] = {}

    def on_client(self, rec: MessageRecord) -> Transition:
        g = self.g
        if g not in rec.dst:
            raise ProtocolError(f"client sent {rec.id} to non-destination {g}")
        out = Transition()
        self.clock += 1
        lt = self.clock
        if len(rec.dst) == 1:
            self.final_ts[rec.id] = lt
            self._deliver(rec.id, out)
            return out
        self._admit(rec, lt)
        for d in sorted(rec.dst):
            if d != g:
                out.send(d, ProtocolMessage(FWD, rec, g, ts=lt))
        self.try_deliver(out)
        return out

    def on_message(self, pm: ProtocolMessage) -> Transition:
        if pm.kind == FWD:
            return self._on_forward(pm)
        if pm.kind == TS:
            return self.on_ts(pm.msg, pm.sender, pm.ts)
        raise ProtocolError(f"unexpected message kind {pm.kind}")

    def _on_forward(self, pm: ProtocolMessage) -> Transition:
        rec, g = pm.msg, self.g
        if g not in rec.dst:
            raise ProtocolError(f"forward of {rec.id} reached non-destination {g}")
        if rec.id in self.pending or rec.id in self.delivered:
            raise ProtocolError(f"protocol bug: {rec.id} forwarded twice to {g}")
        self.clock = max(self.clock, pm.ts) + 1
        lt = self.clock
        p = self._admit(rec, lt)
        self._record(p, pm.sender, pm.ts)
        out = Transition()
        for d in sorted(rec.dst):
            if d != g:
                out.send(d, ProtocolMessage(TS, rec, g, ts=lt))
        self.try_deliver(out)
        return out

    def _admit(self, rec: MessageRecord, lt: int) -> SkeenPending:
        p = SkeenPending(rec, {self.g: lt}, lt)
        self.pending[rec.id] = p
        for src, ts in self.stash.pop(rec.id, {}).items():
            self._record(p, src, ts)
        return p

    def _record(self, p: SkeenPending, src: GroupId, ts: int) -> None:
        if src in p.lts:
            raise ProtocolError(f"protocol bug: duplicate timestamp for {p.msg.id} from {src}")
        p.lts[src] = ts
        if len(p.lts) == len(p.msg.dst):
            p.ft = max(p.lts.values())

    def on_ts(self, rec: MessageRecord, src: GroupId, ts: int) -> Transition:
        self.clock = max(self.clock, ts)
        out = Transition()
        p = self.pending.get(rec.id)
        if p is None:
            stash = self.stash.setdefault(rec.id, {})
            if src in stash:
                raise ProtocolError(f"protocol bug: duplicate timestamp for {rec.id} from {src}")
            stash[src] = ts
            return out
        self._record(p, src, ts)
        self.try_deliver(out)
        return out

    def try_deliver(self, out: Transition) -> None:
        while True:
            best = None
            floor = None  # smallest (local ts, id) among unfinalized messages
            for mid, p in self.pending.items():
                if p.ft is None:
                    key = (p.local_ts, mid)
                    if floor is None or key < floor:
                        floor = key
                else:
                    key = (p.ft, mid)
                    if best is None or key < best:
                        best = key
            if best is None or (floor is not None and not best < floor):
                return
            mid = best[1]
            self.final_ts[mid] = best[0]
            del self.pending[mid]
            self._deliver(mid, out)

    def _deliver(self, mid: MessageId, out: Transition) -> None:
        if mid in self.delivered:
            raise ProtocolError(f"integrity violation: {mid} delivered twice at group {self.g}")
        self.delivered.add(mid)
        self.delivery_order.append(mid)
        out.delivered.append(mid)

    def quiescent(self) -> bool:
        return not self.pending and not self.stash


class HierGroup:
    """Tree-ordered multicast: order at the lca, then forward down in arrival order."""

    def __init__(self, g: GroupId, tree: TreeOverlay) -> None:
        self.g = g
        self.tree = tree
        self.seq = 0
        self.sequenced: list[MessageId] = []
        self.delivered: set[MessageId] = set()
        self.delivery_order: list[MessageId] = []
        self._routes = [(c, tree.subtree(c)) for c in tree.children(g)]

    def on_client(self, rec: MessageRecord) -> Transition:
        lca = tree_lca(self.tree, rec.dst)
        if lca != self.g:
            raise ProtocolError(f"misrouted client message {rec.id}: tree lca is {lca}, not {self.g}")
        return self._handle(rec)

    def on_message(self, pm: ProtocolMessage) -> Transition:
        if pm.kind != FWD:
            raise ProtocolError(f"unexpected message kind {pm.kind}")
        return self._handle(pm.msg)

    def _handle(self, rec: MessageRecord) -> Transition:
        out = Transition()
        self.seq += 1
        self.sequenced.append(rec.id)
        g = self.g
        if g in rec.dst:
            if rec.id in self.delivered:
                raise ProtocolError(f"integrity violation: {rec.id} delivered twice at group {g}")
            self.delivered.add(rec.id)
            self.delivery_order.append(rec.id)
            out.delivered.append(rec.id)
        for child, below in self._routes:
            if not below.isdisjoint(rec.dst):
                out.send(child, ProtocolMessage(FWD, rec, g))
        if g not in rec.dst and not out.sends:
            raise ProtocolError(f"routing bug: {rec.id} reached {g} with no destination below")
        return out

    def quiescent(self) -> bool:
        return True
