"""Deterministic discrete-event simulation of groups, FIFO links and clients.

Groups are indexed 0..n-1 and the latency matrix uses the same indices. Every
client lives in a home region (a group index) and reaches any group through
its client link plus the matrix latency from home to that group.
"""

from __future__ import annotations

import csv
import heapq
import io
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .baselines import HierGroup, SkeenGroup
from .flexcast import FlexCastGroup
from .history import MessageId, MessageRecord
from .overlay import CDagOverlay, GroupId, TreeOverlay, tree_lca
from .protocol import FLUSH_CLIENT, REQ, ProtocolMessage
from .verify import CLIENT_REPLY, CLIENT_SEND, DELIVER, RECEIVE, SEND, TraceEvent

PROTOCOLS = ("flexcast", "skeen", "hierarchical")


class SimError(RuntimeError):
    pass


# -- latency matrix ----------------------------------------------------------------

@dataclass(frozen=True)
class LatencyMatrix:
    """One-way latencies in ms between regions (rows send, columns receive)."""

    regions: tuple[str, ...]
    ms: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        n = len(self.regions)
        if len(self.ms) != n or any(len(row) != n for row in self.ms):
            raise ValueError(f"latency matrix must be {n}x{n}")
        for i, row in enumerate(self.ms):
            for j, v in enumerate(row):
                if v < 0:
                    raise ValueError(f"negative latency {v} from {self.regions[i]} to {self.regions[j]}")
        if len(set(self.regions)) != n:
            raise ValueError("duplicate region names in latency matrix")

    @property
    def n(self) -> int:
        return len(self.regions)

    def __getitem__(self, i: int) -> tuple[float, ...]:
        return self.ms[i]

    def index(self, region: str) -> int:
        return self.regions.index(region)

    def reorder(self, names: Sequence[str]) -> "LatencyMatrix":
        """Same matrix with rows/columns permuted into ``names`` order."""
        idx = [self.index(r) for r in names]
        return LatencyMatrix(tuple(names), tuple(tuple(self.ms[i][j] for j in idx) for i in idx))

    @classmethod
    def uniform(cls, n: int, ms: float, diagonal: float = 0.0) -> "LatencyMatrix":
        return cls(tuple(f"g{i}" for i in range(n)),
                   tuple(tuple(diagonal if i == j else float(ms) for j in range(n)) for i in range(n)))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], regions: Sequence[str] | None = None) -> "LatencyMatrix":
        regions = tuple(regions) if regions is not None else tuple(f"g{i}" for i in range(len(rows)))
        return cls(regions, tuple(tuple(float(v) for v in row) for row in rows))

    @classmethod
    def random(cls, n: int, rng: random.Random, lo: float = 1.0, hi: float = 300.0) -> "LatencyMatrix":
        rows = [[0.0 if i == j else rng.uniform(lo, hi) for j in range(n)] for i in range(n)]
        return cls.from_rows(rows)

    @classmethod
    def parse(cls, text: str) -> "LatencyMatrix":
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        if not rows:
            raise ValueError("empty latency matrix")
        names = [c.strip() for c in rows[0]]
        try:
            body = [[float(c) for c in r] for r in rows[1:]]
        except ValueError as exc:
            raise ValueError(f"bad latency value: {exc}") from None
        return cls.from_rows(body, names)

    @classmethod
    def load(cls, path: str | Path) -> "LatencyMatrix":
        return cls.parse(Path(path).read_text())

    def format(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(self.regions)
        for row in self.ms:
            w.writerow([f"{v:g}" for v in row])
        return out.getvalue()


def default_matrix_path() -> Path:
    return Path(__file__).with_name("data") / "aws12.csv"


# -- protocol wiring -------------------------------------------------------------

def make_groups(protocol: str, overlay: CDagOverlay | TreeOverlay, *, gc: bool = True) -> list:
    n = overlay.n
    if protocol == "flexcast":
        if not isinstance(overlay, CDagOverlay):
            raise SimError("flexcast needs a C-DAG overlay")
        return [FlexCastGroup(g, n, gc=gc) for g in range(n)]
    if protocol == "skeen":
        return [SkeenGroup(g) for g in range(n)]
    if protocol == "hierarchical":
        if not isinstance(overlay, TreeOverlay):
            raise SimError("hierarchical needs a tree overlay")
        return [HierGroup(g, overlay) for g in range(n)]
    raise SimError(f"unknown protocol {protocol!r}")


def entry_group(protocol: str, overlay, latency: LatencyMatrix, home: GroupId, dst: frozenset) -> GroupId:
    """Group a client contacts to multicast to ``dst``."""
    if protocol == "flexcast":
        return min(dst)
    if protocol == "skeen":
        row = latency[home]
        return min(dst, key=lambda d: (row[d], d))
    return tree_lca(overlay, dst)


# -- clients ----------------------------------------------------------------------

@dataclass
class LatencySample:
    msg: MessageId
    issued: float
    latencies: tuple[float, ...]   # k-th earliest reply minus issue time


@dataclass
class ClientState:
    id: int
    home: GroupId
    next_dst: Callable[[], frozenset] | None = None
    seq: int = 0
    outstanding: MessageRecord | None = None
    issued: float = 0.0
    replies: list[float] = field(default_factory=list)
    awaiting: set = field(default_factory=set)


@dataclass(frozen=True)
class Injection:
    """A one-off multicast at a fixed time (scenarios and open-loop sweeps)."""

    at: float
    client: int
    dst: frozenset
    home: GroupId | None = None   # defaults to the entry group itself


# -- the simulator ----------------------------------------------------------------

@dataclass
class SimConfig:
    protocol: str
    overlay: CDagOverlay | TreeOverlay
    latency: LatencyMatrix
    client_link: float = 1.0
    jitter: float = 0.0            # uniform +-fraction of each link latency
    seed: int = 0
    reply_mode: str = "instant"    # or "matrix": replies travel back over the links
    flush_every: int = 0           # flexcast only; 0 disables flushes
    gc: bool = True
    think_time: float = 0.0
    record_trace: bool = True


@dataclass
class SimResult:
    trace: list[TraceEvent]
    samples: list[LatencySample]
    groups: list
    end_time: float
    issued: int
    completed: int
    events: int

    def peak_history(self) -> int:
        return max((getattr(g, "peak_history", 0) for g in self.groups), default=0)


_ARRIVE, _REQUEST, _REPLY, _INJECT = range(4)


class Simulation:
    def __init__(self, cfg: SimConfig) -> None:
        if cfg.protocol not in PROTOCOLS:
            raise SimError(f"unknown protocol {cfg.protocol!r}")
        if cfg.overlay.n != cfg.latency.n:
            raise SimError(f"overlay has {cfg.overlay.n} groups but the matrix has {cfg.latency.n}")
        if cfg.reply_mode not in ("instant", "matrix"):
            raise SimError(f"unknown reply mode {cfg.reply_mode!r}")
        self.cfg = cfg
        self.n = cfg.overlay.n
        self.groups = make_groups(cfg.protocol, cfg.overlay, gc=cfg.gc)
        self.now = 0.0
        self._queue: list = []
        self._seq = 0
        self._last_arrival: dict[tuple, float] = {}
        self._jitter_rng = random.Random(f"{cfg.seed}/jitter")
        self.trace: list[TraceEvent] = []
        self.clients: dict[int, ClientState] = {}
        self.samples: list[LatencySample] = []
        self.horizon = float("inf")
        self.issued = 0
        self.completed = 0
        self._flushes = 0
        self._dst_of: dict[MessageId, tuple] = {}
        self.events = 0

    # -- plumbing ---------------------------------------------------------------

    def _push(self, at: float, kind: int, target, payload) -> None:
        heapq.heappush(self._queue, (at, self._seq, kind, target, payload))
        self._seq += 1

    def _emit(self, *args) -> None:
        if self.cfg.record_trace:
            self.trace.append(TraceEvent(*args))

    def link_latency(self, src: GroupId, dst: GroupId) -> float:
        try:
            base = self.cfg.latency.ms[src][dst]
        except IndexError:
            raise SimError(f"no route from {src} to {dst}") from None
        if self.cfg.jitter:
            base *= 1.0 + self._jitter_rng.uniform(-self.cfg.jitter, self.cfg.jitter)
        return base

    def send(self, src: GroupId, dst: GroupId, pm: ProtocolMessage) -> float:
        """Schedule ``pm`` on channel src->dst; arrival is clamped to keep FIFO."""
        if not 0 <= dst < self.n:
            raise SimError(f"no route from {src} to {dst}")
        at = self.now + self.link_latency(src, dst)
        ch = (src, dst)
        last = self._last_arrival.get(ch)
        if last is not None and at < last:
            at = last
        self._last_arrival[ch] = at
        self._emit(self.now, SEND, src, pm.msg.id, self._dst_of[pm.msg.id], pm.kind, dst, pm.nbytes, pm.witness)
        self._push(at, _ARRIVE, dst, pm)
        return at

    # -- clients ----------------------------------------------------------------

    def add_client(self, cid: int, home: GroupId, next_dst: Callable[[], frozenset], start: float = 0.0) -> None:
        if cid in self.clients:
            raise SimError(f"duplicate client {cid}")
        self.clients[cid] = ClientState(cid, home, next_dst)
        self._push(start, _INJECT, cid, None)

    def inject(self, inj: Injection) -> None:
        self._push(inj.at, _INJECT, inj.client, inj)

    def _issue(self, c: ClientState, dst: frozenset, *, scripted_home: GroupId | None = None) -> None:
        c.seq += 1
        rec = MessageRecord(MessageId(c.id, c.seq), frozenset(dst))
        self._multicast(rec, c.home if scripted_home is None else scripted_home, c)
        if self.cfg.flush_every and self.cfg.protocol == "flexcast" and c.id != FLUSH_CLIENT:
            if self.issued % self.cfg.flush_every == 0:
                self._flush()

    def _multicast(self, rec: MessageRecord, home: GroupId, c: ClientState | None) -> None:
        cfg = self.cfg
        dst_t = tuple(sorted(rec.dst))
        self._dst_of[rec.id] = dst_t
        entry = entry_group(cfg.protocol, cfg.overlay, cfg.latency, home, rec.dst)
        at = self.now + cfg.client_link + cfg.latency.ms[home][entry]
        self._emit(self.now, CLIENT_SEND, rec.id.client, rec.id, dst_t, REQ, entry)
        self._push(at, _REQUEST, entry, rec)
        if c is not None:
            c.outstanding = rec
            c.issued = self.now
            c.replies = []
            c.awaiting = set(rec.dst)
        if rec.id.client != FLUSH_CLIENT:
            self.issued += 1

    def _flush(self) -> None:
        self._flushes += 1
        rec = MessageRecord(MessageId(FLUSH_CLIENT, self._flushes), frozenset(range(self.n)))
        self._multicast(rec, 0, None)

    def _on_inject(self, cid: int, inj: Injection | None) -> None:
        if inj is not None:
            c = self.clients.get(cid)
            if c is None:
                c = self.clients[cid] = ClientState(cid, min(inj.dst))
            if c.outstanding is not None:
                raise SimError(f"client {cid} already has {c.outstanding.id} outstanding")
            home = inj.home if inj.home is not None else entry_group(
                self.cfg.protocol, self.cfg.overlay, self.cfg.latency, min(inj.dst), inj.dst)
            self._issue(c, inj.dst, scripted_home=home)
            return
        c = self.clients[cid]
        if self.now < self.horizon and c.next_dst is not None:
            self._issue(c, c.next_dst())

    def _on_reply(self, cid: int, payload) -> None:
        mid, g = payload
        c = self.clients.get(cid)
        if c is None or c.outstanding is None or c.outstanding.id != mid or g not in c.awaiting:
            raise SimError(f"reply for unknown transaction {mid} at client {cid}")
        self._emit(self.now, CLIENT_REPLY, cid, mid, self._dst_of[mid], None, g)
        c.awaiting.discard(g)
        c.replies.append(self.now - c.issued)
        if c.awaiting:
            return
        self.samples.append(LatencySample(mid, c.issued, tuple(c.replies)))
        self.completed += 1
        c.outstanding = None
        if c.next_dst is not None and self.now < self.horizon:
            self._push(self.now + self.cfg.think_time, _INJECT, cid, None)

    # -- groups -----------------------------------------------------------------

    def _apply(self, g: GroupId, out) -> None:
        for to, pm in out.sends:
            self.send(g, to, pm)
        for mid in out.delivered:
            self._emit(self.now, DELIVER, g, mid, self._dst_of[mid])
            cid = mid.client
            if cid == FLUSH_CLIENT or cid not in self.clients:
                continue
            if self.cfg.reply_mode == "instant":
                at = self.now
            else:
                home = self.clients[cid].home
                at = self.now + self.cfg.latency.ms[g][home] + self.cfg.client_link
            self._push(at, _REPLY, cid, (mid, g))

    def step(self) -> bool:
        if not self._queue:
            return False
        at, _, kind, target, payload = heapq.heappop(self._queue)
        self.now = at
        self.events += 1
        if kind == _ARRIVE:
            pm = payload
            self._emit(at, RECEIVE, target, pm.msg.id, self._dst_of[pm.msg.id], pm.kind, pm.sender, pm.nbytes, pm.witness)
            self._apply(target, self.groups[target].on_message(pm))
        elif kind == _REQUEST:
            rec = payload
            self._emit(at, RECEIVE, target, rec.id, self._dst_of[rec.id], REQ, None, 0)
            self._apply(target, self.groups[target].on_client(rec))
        elif kind == _REPLY:
            self._on_reply(target, payload)
        else:
            self._on_inject(target, payload)
        return True

    def run(self, horizon: float = float("inf"), *, max_events: int | None = None) -> SimResult:
        """Run until the queue drains. Closed-loop clients stop issuing at ``horizon``;
        in-flight messages are always drained so the trace is quiescent."""
        self.horizon = horizon
        budget = max_events
        while self.step():
            if budget is not None:
                budget -= 1
                if budget <= 0:
                    raise SimError(f"event budget of {max_events} exhausted at t={self.now}")
        return SimResult(self.trace, self.samples, self.groups, self.now, self.issued, self.completed, self.events)


def simulate(cfg: SimConfig, injections: Iterable[Injection] = (), horizon: float = float("inf")) -> SimResult:
    sim = Simulation(cfg)
    for inj in injections:
        sim.inject(inj)
    return sim.run(horizon)
