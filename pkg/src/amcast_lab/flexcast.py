"""FlexCast group state machine over a complete-DAG overlay.

One :class:`FlexCastGroup` per group. Each handler consumes one input event and
returns a :class:`Transition` (messages to send, messages delivered); the
simulator owns the channels. The state object is mutated in place and must be
driven by a single caller, in channel order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .history import History, MessageId, MessageRecord, Watermark
from .overlay import GroupId
from .protocol import ACK, MSG, NOTIF, ProtocolError, ProtocolMessage, Transition, is_flush


# Every round of NOTIFs a group sends for a message gets a tag (group, round).
# An ACK is keyed by (sender, tag): tag is None when the sender is a
# destination, else the tag of the NOTIF it answers. A notif list holds
# (tag, notified) pairs. A group notified twice answers both NOTIFs and
# notifies its own descendants again, since its history may have grown in
# between; the per-round tag keeps the later answers distinguishable.


@dataclass
class PendingEntry:
    msg: MessageRecord
    acks: set = field(default_factory=set)
    notif_list: set = field(default_factory=set)


@dataclass
class PendingNotif:
    msg: MessageRecord
    deps: set
    notifier: tuple


class FlexCastGroup:
    def __init__(self, g: GroupId, n: int, *, gc: bool = True, local_in_history: bool = False) -> None:
        if not 0 <= g < n:
            raise ValueError(f"group {g} outside 0..{n - 1}")
        self.g = g
        self.n = n
        self.gc = gc
        # Single-group messages only matter to other groups as links in the
        # delivery chain; chaining around them keeps every path between the
        # remaining messages, so by default they stay out of the history.
        self.local_in_history = local_in_history
        self.queues: dict[GroupId, deque[PendingEntry]] = {a: deque() for a in range(g)}
        self.hst = History()
        self.delivered: set[MessageId] = set()
        self.delivery_order: list[MessageId] = []
        self.pend_notif: list[PendingNotif] = []
        self.watermarks: dict[GroupId, Watermark] = {d: Watermark() for d in range(g + 1, n)}
        # ACKs that overtook their MSG: id -> (acks, notif_list)
        self.early: dict[MessageId, tuple[set, set]] = {}
        # (message, tag) NOTIFs already handled here (answered or parked)
        self.notified: set[tuple[MessageId, tuple]] = set()
        # NOTIF rounds sent so far, per message
        self.notif_rounds: dict[MessageId, int] = {}
        # undelivered records addressed to g, and what they block
        self.open: set[MessageId] = set()
        self._blocked: set[MessageId] | None = None
        self.peak_history = 0

    # -- derived sets -----------------------------------------------------------

    def ancestors_to_ack(self, entry: PendingEntry) -> set[tuple[GroupId, tuple | None]]:
        g = self.g
        lca = min(entry.msg.dst)
        need = {(a, None) for a in entry.msg.dst if a < g and a != lca}
        # groups notified below g are not our business
        need.update((d, tag) for tag, d in entry.notif_list if d < g)
        return need

    def open_dependencies(self) -> set[MessageId]:
        return set(self.open)

    def _blocked_ids(self) -> set[MessageId]:
        if self._blocked is None:
            self._blocked = self.hst.reachable_from(self.open, strict=True)
        return self._blocked

    def can_deliver(self, entry: PendingEntry) -> bool:
        g, acks, dst = self.g, entry.acks, entry.msg.dst
        if len(dst) > 2 or entry.notif_list:
            # same test as ancestors_to_ack() <= acks, without building the set
            lca = min(dst)
            for a in dst:
                if lca < a < g and (a, None) not in acks:
                    return False
            for tag, d in entry.notif_list:
                if d < g and (d, tag) not in acks:
                    return False
        if not self.open:
            return True
        return entry.msg.id not in self._blocked_ids()

    # -- history plumbing -------------------------------------------------------

    def _update_hst(self, pm: ProtocolMessage) -> None:
        if pm.history is None:
            return
        new = self.hst.merge(pm.history)
        g = self.g
        for rec in new:
            if g in rec.dst and rec.id not in self.delivered:
                self.open.add(rec.id)
        if new or pm.history.edges:
            self._blocked = None
        size = self.hst.size()
        if size > self.peak_history:
            self.peak_history = size

    def _diff_for(self, d: GroupId):
        delta, self.watermarks[d] = self.hst.diff_since(self.watermarks[d])
        return delta

    # -- event handlers ---------------------------------------------------------

    def on_client(self, rec: MessageRecord) -> Transition:
        if min(rec.dst) != self.g:
            raise ProtocolError(f"misrouted client message {rec.id}: lca is {min(rec.dst)}, not {self.g}")
        out = Transition()
        self.a_deliver(rec, out)
        return out

    def on_message(self, pm: ProtocolMessage) -> Transition:
        if pm.kind == MSG:
            return self.on_msg(pm)
        if pm.kind == ACK:
            return self.on_ack(pm)
        if pm.kind == NOTIF:
            return self.on_notif(pm)
        raise ProtocolError(f"unexpected message kind {pm.kind}")

    def on_msg(self, pm: ProtocolMessage) -> Transition:
        rec = pm.msg
        if self.g not in rec.dst:
            raise ProtocolError(f"misdelivered {rec.id} at group {self.g}")
        lca = min(rec.dst)
        if lca == self.g:
            return self.on_client(rec)
        self._update_hst(pm)
        entry = PendingEntry(rec, set(), set(pm.notif_list))
        stash = self.early.pop(rec.id, None)
        if stash is not None:
            entry.acks |= stash[0]
            entry.notif_list |= stash[1]
        self.queues[lca].append(entry)
        out = Transition()
        self.reprocess_queues(out)
        return out

    def on_ack(self, pm: ProtocolMessage) -> Transition:
        rec = pm.msg
        self._update_hst(pm)
        out = Transition()
        if rec.id in self.delivered:
            return out
        entry = self._find_entry(rec)
        if entry is None:
            acks, notif = self.early.setdefault(rec.id, (set(), set()))
            acks.add((pm.sender, pm.notifier))
            notif |= pm.notif_list
            return out
        entry.acks.add((pm.sender, pm.notifier))
        entry.notif_list |= pm.notif_list
        self.reprocess_queues(out)
        return out

    def on_notif(self, pm: ProtocolMessage) -> Transition:
        rec = pm.msg
        if self.g in rec.dst:
            raise ProtocolError(f"NOTIF for {rec.id} sent to destination {self.g}")
        self._update_hst(pm)
        out = Transition()
        key = (rec.id, pm.notifier)
        if key in self.notified:
            return out
        self.notified.add(key)
        deps = set(self.open)
        if deps:
            self.pend_notif.append(PendingNotif(rec, deps, pm.notifier))
        else:
            self.send_descendants(rec, ACK, set(), out, notifier=pm.notifier)
        return out

    def _find_entry(self, rec: MessageRecord) -> PendingEntry | None:
        for e in self.queues[min(rec.dst)]:
            if e.msg.id == rec.id:
                return e
        return None

    # -- main logic ---------------------------------------------------------------

    def a_deliver(self, rec: MessageRecord, out: Transition) -> None:
        mid = rec.id
        if mid in self.delivered:
            raise ProtocolError(f"integrity violation: {mid} delivered twice at group {self.g}")
        if self.local_in_history or len(rec.dst) > 1:
            self.hst.add_delivered(rec)
        self.delivered.add(mid)
        self.delivery_order.append(mid)
        if mid in self.open:
            self.open.discard(mid)
            self._blocked = None
        out.delivered.append(mid)
        if min(rec.dst) == self.g:
            self.send_descendants(rec, MSG, set(), out)
        else:
            entry = self.queues[min(rec.dst)].popleft()
            if entry.msg.id != mid:
                raise ProtocolError("delivered message is not at the head of its queue")
            self.send_descendants(rec, ACK, entry.notif_list, out)
        fired = []
        for pn in self.pend_notif:
            pn.deps.discard(mid)
            if not pn.deps:
                fired.append(pn)
        for pn in fired:
            self.pend_notif.remove(pn)
            self.send_descendants(pn.msg, ACK, set(), out, notifier=pn.notifier)
        if self.gc and is_flush(mid):
            self.hst.prune_before_flush(mid, self.g, self.delivered)
            self._blocked = None
        size = self.hst.size()
        if size > self.peak_history:
            self.peak_history = size

    def send_descendants(self, rec: MessageRecord, kind: str, notif_list: set, out: Transition,
                         notifier: tuple | None = None) -> None:
        self.send_notifs(rec, notif_list, out)
        nl = frozenset(notif_list)
        g = self.g
        for d in sorted(rec.dst):
            if d > g:
                out.send(d, ProtocolMessage(kind, rec, g, self._diff_for(d), nl, notifier=notifier))

    def send_notifs(self, rec: MessageRecord, notif_list: set, out: Transition) -> None:
        """NOTIF each non-destination below the highest destination that our history
        says has been addressed before. Adds (tag, d) to ``notif_list``."""
        dst = rec.dst
        top = max(dst)
        g = self.g
        tag = None
        for d in range(g + 1, top):
            if d in dst:
                continue
            witness = self.hst.last_msg_to(d)
            if witness is None:
                continue
            if tag is None:
                rnd = self.notif_rounds[rec.id] = self.notif_rounds.get(rec.id, 0) + 1
                tag = (g, rnd)
            out.send(d, ProtocolMessage(NOTIF, rec, g, self._diff_for(d), witness=witness, notifier=tag))
            notif_list.add((tag, d))

    def reprocess_queues(self, out: Transition) -> None:
        queues = [q for _, q in sorted(self.queues.items())]
        while True:
            progressed = False
            for q in queues:
                if q and self.can_deliver(q[0]):
                    self.a_deliver(q[0].msg, out)
                    progressed = True
            if not progressed:
                return

    # -- introspection ------------------------------------------------------------

    def queued(self) -> int:
        return sum(len(q) for q in self.queues.values())

    def quiescent(self) -> bool:
        return not self.queued() and not self.pend_notif and not self.early
