"""Wire messages and transition results shared by all protocols."""

from __future__ import annotations

from dataclasses import dataclass, field

from .history import ENVELOPE_BYTES, VERTEX_BYTES, HistoryDelta, MessageId, MessageRecord, history_bytes
from .overlay import GroupId

# protocol-message kinds
MSG = "MSG"        # FlexCast payload, lca -> destination
ACK = "ACK"        # FlexCast acknowledgement carrying history
NOTIF = "NOTIF"    # FlexCast history solicitation
FWD = "FWD"        # Skeen / hierarchical payload forward
TS = "TS"          # Skeen local timestamp
REQ = "REQ"        # client request arriving at its entry group

PAYLOAD_KINDS = frozenset({MSG, FWD, REQ})

TIMESTAMP_BYTES = 8

# Client id reserved for the garbage-collection flusher.
FLUSH_CLIENT = -1


def is_flush(mid: MessageId) -> bool:
    return mid.client == FLUSH_CLIENT


@dataclass(frozen=True, slots=True)
class ProtocolMessage:
    kind: str
    msg: MessageRecord
    sender: GroupId
    history: HistoryDelta | None = None
    notif_list: frozenset = frozenset()
    ts: int | None = None
    # NOTIF only: a record in the sender's history addressed to the receiver
    witness: MessageId | None = None
    # NOTIF: this round's tag (sender, round); ACK: the tag of the NOTIF it
    # answers, None for a destination's ACK
    notifier: tuple | None = None

    @property
    def nbytes(self) -> int:
        """Modelled wire size (payloads are empty)."""
        if self.history is not None:
            return history_bytes(self.history) + VERTEX_BYTES
        size = ENVELOPE_BYTES + VERTEX_BYTES
        if self.ts is not None:
            size += TIMESTAMP_BYTES
        return size


@dataclass
class Transition:
    """Output of one handler call: messages to send and ids delivered, in order."""

    sends: list[tuple[GroupId, ProtocolMessage]] = field(default_factory=list)
    delivered: list[MessageId] = field(default_factory=list)

    def send(self, to: GroupId, pm: ProtocolMessage) -> None:
        self.sends.append((to, pm))

    def extend(self, other: "Transition") -> None:
        self.sends.extend(other.sends)
        self.delivered.extend(other.delivered)


class ProtocolError(RuntimeError):
    pass
