"""Local identifiers as futures over global ids.

Each node keeps a :class:`LidTable`.  A message that names an unresolved
LocalId is parked on every such LID and released, patched, once the last one
resolves.  Released messages go out in their original send order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .errors import ProtocolError
from .ids import GlobalId, LocalId, iter_ids, substitute_ids
from .substrate import Message


@dataclass
class Deferred:
    msg: Message
    order: int
    waiting: set = field(default_factory=set)
    released: bool = False


@dataclass
class LidEntry:
    lid: LocalId
    guid: GlobalId | None = None
    deferred: list[Deferred] = field(default_factory=list)
    callbacks: list[Callable[[GlobalId], None]] = field(default_factory=list)

    @property
    def resolved(self) -> bool:
        return self.guid is not None


@dataclass(frozen=True)
class ResolutionRecord:
    lid: LocalId
    guid: GlobalId
    origin: int


class LidTable:
    def __init__(self, node: int):
        self.node = node
        self.entries: dict[LocalId, LidEntry] = {}
        self._counters: dict[str, int] = {}
        self._order = 0
        self.records: list[ResolutionRecord] = []

    def allocate(self, owner: str) -> LocalId:
        seq = self._counters.get(owner, 0) + 1
        self._counters[owner] = seq
        lid = LocalId(owner, seq)
        self.entries[lid] = LidEntry(lid)
        return lid

    def entry(self, lid: LocalId) -> LidEntry:
        try:
            return self.entries[lid]
        except KeyError:
            raise ProtocolError(f"{lid} is not known on node {self.node}") from None

    def guid_of(self, lid: LocalId) -> GlobalId | None:
        entry = self.entries.get(lid)
        return entry.guid if entry else None

    def patch(self, msg: Message) -> list[LocalId]:
        """Substitute resolved LIDs in place; return the LIDs still pending."""
        mapping = {}
        pending = []
        for ident in iter_ids(msg.payload):
            if isinstance(ident, LocalId):
                guid = self.guid_of(ident)
                if guid is None:
                    if ident not in pending:
                        pending.append(ident)
                else:
                    mapping[ident] = guid
        if mapping:
            msg.payload = substitute_ids(msg.payload, mapping)
        return pending

    def defer(self, msg: Message, pending: list[LocalId]) -> None:
        self._order += 1
        item = Deferred(msg, self._order, set(pending))
        for lid in pending:
            self.entry(lid).deferred.append(item)

    def on_resolve(self, lid: LocalId, callback: Callable[[GlobalId], None]) -> None:
        entry = self.entry(lid)
        if entry.resolved:
            callback(entry.guid)
        else:
            entry.callbacks.append(callback)

    def resolve(self, record: ResolutionRecord):
        """Record the mapping.

        Returns ``(messages, callbacks)``: the deferred messages now fully
        patched, in send order, and the resolution callbacks to run after
        those messages have been sent.
        """
        entry = self.entry(record.lid)
        if entry.resolved:
            raise ProtocolError(f"{record.lid} resolved twice")
        entry.guid = record.guid
        self.records.append(record)
        ready = []
        for item in entry.deferred:
            item.waiting.discard(record.lid)
            if not item.waiting and not item.released:
                item.released = True
                ready.append(item)
        entry.deferred = []
        ready.sort(key=lambda d: d.order)
        out = []
        for item in ready:
            if self.patch(item.msg):
                raise ProtocolError("deferred message released with unresolved LIDs")
            out.append(item.msg)
        callbacks, entry.callbacks = entry.callbacks, []
        return out, callbacks

    def outstanding(self) -> list[LocalId]:
        """Unresolved LIDs that still hold deferred messages."""
        return [lid for lid, e in self.entries.items() if not e.resolved and e.deferred]
