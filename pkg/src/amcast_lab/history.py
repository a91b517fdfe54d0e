"""Delivery histories: a DAG of message records exchanged between groups.

A vertex is a message (id + destinations); an edge ``(a, b)`` means some group
delivered ``a`` before ``b``. Every edge is created by :meth:`History.add_delivered`
extending the owning group's delivery chain; everything else arrives by merge.

:class:`History` is mutable and owned by exactly one group at a time. The
module-level functions (:func:`update_hst`, :func:`hst_add`, ...) are pure
wrappers that copy first, for tests and for callers that want value semantics.

Each vertex and edge is stamped with a local insertion tick, so "what did I
already send to descendant ``d``" is a single int (:class:`Watermark`) and a
diff is the tail of the insertion order.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .overlay import GroupId


class MessageId(NamedTuple):
    client: int
    seq: int

    def __str__(self) -> str:
        return f"{self.client}.{self.seq}"

    @classmethod
    def parse(cls, text: str) -> "MessageId":
        c, s = text.split(".")
        return cls(int(c), int(s))


class MessageRecord(NamedTuple):
    id: MessageId
    dst: frozenset

    @classmethod
    def of(cls, mid: MessageId, dst: Iterable[GroupId]) -> "MessageRecord":
        dst = frozenset(dst)
        if not dst:
            raise ValueError("message record needs a non-empty dst")
        return cls(mid, dst)


Edge = tuple  # (MessageId, MessageId)


class HistoryError(RuntimeError):
    pass


@dataclass(frozen=True)
class HistoryDelta:
    """Wire form of a history (or part of one)."""

    records: tuple = ()
    edges: tuple = ()
    last_dlvd: MessageId | None = None

    def __len__(self) -> int:
        return len(self.records) + len(self.edges)

    @property
    def empty(self) -> bool:
        return not self.records and not self.edges


@dataclass(frozen=True)
class Watermark:
    """Insertion tick up to which a descendant has been sent our history."""

    tick: int = 0


# Byte model for history-bearing messages.
ENVELOPE_BYTES = 24
VERTEX_BYTES = 16
EDGE_BYTES = 16


def history_bytes(delta: HistoryDelta | "History") -> int:
    """Serialized size: fixed envelope plus a flat cost per vertex and per edge."""
    return ENVELOPE_BYTES + VERTEX_BYTES * len(delta.records) + EDGE_BYTES * len(delta.edges)


class History:
    __slots__ = ("records", "edges", "preds", "succs", "last_dlvd", "_tick", "_rec_tick", "_by_dst", "forgotten")

    def __init__(self) -> None:
        self.records: dict[MessageId, MessageRecord] = {}
        self._rec_tick: dict[MessageId, int] = {}
        self.edges: dict[Edge, int] = {}
        self.preds: dict[MessageId, set[MessageId]] = {}
        self.succs: dict[MessageId, set[MessageId]] = {}
        self.last_dlvd: MessageId | None = None
        self._tick = 0
        # per destination group, ids addressed to it in insertion order
        self._by_dst: defaultdict[GroupId, dict[MessageId, None]] = defaultdict(dict)
        # ids pruned by garbage collection; never re-admitted
        self.forgotten: set[MessageId] = set()

    # -- construction ---------------------------------------------------------

    @classmethod
    def build(cls, records: Iterable[MessageRecord] = (), edges: Iterable[Edge] = (),
              last_dlvd: MessageId | None = None) -> "History":
        h = cls()
        h.merge(HistoryDelta(tuple(records), tuple(edges), last_dlvd))
        h.last_dlvd = last_dlvd
        return h

    def copy(self) -> "History":
        h = History()
        h.records = dict(self.records)
        h._rec_tick = dict(self._rec_tick)
        h.edges = dict(self.edges)
        h.preds = {k: set(v) for k, v in self.preds.items()}
        h.succs = {k: set(v) for k, v in self.succs.items()}
        h.last_dlvd = self.last_dlvd
        h._tick = self._tick
        h._by_dst = defaultdict(dict, {k: dict(v) for k, v in self._by_dst.items()})
        h.forgotten = set(self.forgotten)
        return h

    # -- queries -----------------------------------------------------------------

    def __contains__(self, mid: MessageId) -> bool:
        return mid in self.records

    def __len__(self) -> int:
        return len(self.records)

    def size(self) -> int:
        """Retained vertices plus edges."""
        return len(self.records) + len(self.edges)

    @property
    def M(self) -> frozenset[MessageRecord]:
        return frozenset(self.records.values())

    @property
    def D(self) -> frozenset[Edge]:
        return frozenset(self.edges)

    def snapshot(self) -> tuple[frozenset, frozenset]:
        return self.M, self.D

    def contains_msg_to(self, d: GroupId) -> bool:
        return bool(self._by_dst.get(d))

    def last_msg_to(self, d: GroupId) -> MessageId | None:
        """Most recently learned record addressed to ``d``, if any."""
        ids = self._by_dst.get(d)
        return next(reversed(ids)) if ids else None

    def depends(self, m: MessageId, m_prime: MessageId) -> bool:
        """True iff ``m`` transitively depends on ``m_prime`` (path m_prime ->* m)."""
        if m not in self.records or m_prime not in self.records or m == m_prime:
            return False
        preds = self.preds
        seen = {m}
        todo = [m]
        while todo:
            x = todo.pop()
            for p in preds.get(x, ()):
                if p == m_prime:
                    return True
                if p not in seen:
                    seen.add(p)
                    todo.append(p)
        return False

    def ancestors_of(self, m: MessageId) -> set[MessageId]:
        seen: set[MessageId] = set()
        todo = [m]
        while todo:
            for p in self.preds.get(todo.pop(), ()):
                if p not in seen:
                    seen.add(p)
                    todo.append(p)
        return seen

    def reachable_from(self, sources: Iterable[MessageId], *, strict: bool = True) -> set[MessageId]:
        """Vertices reachable from ``sources``; with ``strict`` only via paths of length >= 1."""
        seen: set[MessageId] = set()
        todo = list(sources)
        if not strict:
            seen.update(todo)
        succs = self.succs
        while todo:
            for s in succs.get(todo.pop(), ()):
                if s not in seen:
                    seen.add(s)
                    todo.append(s)
        return seen

    def open_dependencies(self, g: GroupId, delivered) -> set[MessageId]:
        return {mid for mid, rec in self.records.items() if g in rec.dst and mid not in delivered}

    def is_acyclic(self) -> bool:
        return find_cycle(self.records, self.succs) is None

    # -- mutation --------------------------------------------------------------

    def _add_record(self, rec: MessageRecord) -> bool:
        mid = rec.id
        if mid in self.records or mid in self.forgotten:
            return False
        self._tick += 1
        self.records[mid] = rec
        self._rec_tick[mid] = self._tick
        for d in rec.dst:
            self._by_dst[d][mid] = None
        return True

    def _add_edge(self, a: MessageId, b: MessageId) -> bool:
        e = (a, b)
        if e in self.edges:
            return False
        self._tick += 1
        self.edges[e] = self._tick
        self.succs.setdefault(a, set()).add(b)
        self.preds.setdefault(b, set()).add(a)
        return True

    def merge(self, incoming: "HistoryDelta | History", *, check_cycles: bool = False) -> list[MessageRecord]:
        """Union ``incoming`` into this history; returns the records that were new.

        ``last_dlvd`` is left alone. Edges touching forgotten (pruned) ids are
        dropped; edges touching ids known nowhere are an error.
        """
        if isinstance(incoming, History):
            recs: Iterable[MessageRecord] = incoming.records.values()
            edges: Iterable[Edge] = incoming.edges
        else:
            recs, edges = incoming.records, incoming.edges
        new = [r for r in recs if self._add_record(r)]
        added_edges = []
        forgotten = self.forgotten
        records = self.records
        for a, b in edges:
            if a in forgotten or b in forgotten:
                continue
            if a not in records or b not in records:
                raise HistoryError(f"edge {a}->{b} references a message missing from both histories")
            if self._add_edge(a, b):
                added_edges.append((a, b))
        if check_cycles and added_edges:
            for a, b in added_edges:
                if a == b or b in self.ancestors_of(a):
                    raise HistoryError("inconsistent histories: merge creates a cycle")
        return new

    def add_delivered(self, rec: MessageRecord) -> None:
        """Record a local delivery: chain it after the previous one."""
        if rec.id in self.forgotten:
            raise HistoryError(f"delivering pruned message {rec.id}")
        self._add_record(rec)
        if self.last_dlvd is not None and self.last_dlvd != rec.id:
            self._add_edge(self.last_dlvd, rec.id)
        self.last_dlvd = rec.id

    def diff_since(self, mark: Watermark) -> tuple[HistoryDelta, Watermark]:
        """Everything inserted after ``mark``; the new mark covers the whole history."""
        t = mark.tick
        recs = []
        for mid in reversed(self._rec_tick):
            if self._rec_tick[mid] <= t:
                break
            recs.append(self.records[mid])
        edges = []
        for e in reversed(self.edges):
            if self.edges[e] <= t:
                break
            edges.append(e)
        recs.reverse()
        edges.reverse()
        return HistoryDelta(tuple(recs), tuple(edges), self.last_dlvd), Watermark(self._tick)

    def full(self) -> HistoryDelta:
        return HistoryDelta(tuple(self.records.values()), tuple(self.edges), self.last_dlvd)

    def remove(self, ids: Iterable[MessageId]) -> None:
        for mid in ids:
            rec = self.records.pop(mid, None)
            if rec is None:
                continue
            del self._rec_tick[mid]
            for d in rec.dst:
                del self._by_dst[d][mid]
            for s in self.succs.pop(mid, ()):
                del self.edges[(mid, s)]
                self.preds[s].discard(mid)
            for p in self.preds.pop(mid, ()):
                del self.edges[(p, mid)]
                self.succs[p].discard(mid)
            self.forgotten.add(mid)

    def prune_before_flush(self, flush: MessageId, g: GroupId, delivered) -> set[MessageId]:
        """Garbage-collect records ordered before ``flush``; returns the pruned ids.

        Kept: the flush record itself, records addressed to ``g`` and not yet
        delivered here, and anything reachable from those (so dependency paths
        between survivors stay intact).
        """
        if flush not in self.records:
            raise HistoryError("unknown flush")
        before = self.ancestors_of(flush)
        open_ = {x for x in before if g in self.records[x].dst and x not in delivered}
        keep = open_ | self.reachable_from(open_)
        doomed = before - keep
        doomed.discard(self.last_dlvd)
        self.remove(doomed)
        return doomed

    def __repr__(self) -> str:
        return f"History(|M|={len(self.records)}, |D|={len(self.edges)}, last={self.last_dlvd})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, History):
            return NotImplemented
        return (self.records == other.records and self.edges.keys() == other.edges.keys()
                and self.last_dlvd == other.last_dlvd)

    __hash__ = None  # type: ignore[assignment]


def find_cycle(nodes: Iterable, succs: dict) -> list | None:
    """One witness cycle in a directed graph, or None. Iterative DFS."""
    WHITE, GREY, BLACK = 0, 1, 2
    colour = dict.fromkeys(nodes, WHITE)
    for root in list(colour):
        if colour[root] != WHITE:
            continue
        stack = [(root, iter(succs.get(root, ())))]
        path = [root]
        colour[root] = GREY
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                colour[node] = BLACK
                continue
            c = colour.get(nxt, WHITE)
            if c == GREY:
                return path[path.index(nxt):] + [nxt]
            if c == WHITE:
                colour[nxt] = GREY
                path.append(nxt)
                stack.append((nxt, iter(succs.get(nxt, ()))))
    return None


# -- pure API ------------------------------------------------------------------

def update_hst(local: History, incoming: History | HistoryDelta) -> History:
    out = local.copy()
    out.merge(incoming, check_cycles=True)
    return out


def hst_add(h: History, m: MessageRecord) -> History:
    out = h.copy()
    out.add_delivered(m)
    return out


def depend(h: History, m: MessageId, m_prime: MessageId) -> bool:
    return h.depends(m, m_prime)


def open_dependencies(h: History, g: GroupId, delivered) -> set[MessageId]:
    return h.open_dependencies(g, delivered)


def contains_msg_to(h: History, d: GroupId) -> bool:
    return h.contains_msg_to(d)


def diff_hst(h: History, watermark: Watermark) -> tuple[HistoryDelta, Watermark]:
    return h.diff_since(watermark)


def prune_before_flush(h: History, flush: MessageId, g: GroupId, delivered) -> History:
    out = h.copy()
    out.prune_before_flush(flush, g, delivered)
    return out
