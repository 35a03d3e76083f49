"""Identifiers: global ids, task-local ids and the two sentinels."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Union

from .errors import BadDescriptor, LidNotStorable


class ObjectKind(enum.IntEnum):
    TASK = 1
    TEMPLATE = 2
    EVENT = 3
    DATABLOCK = 4
    MAP = 5
    FILE = 6

    @property
    def label(self) -> str:
        return _KIND_LABELS[self]


_KIND_LABELS = {
    ObjectKind.TASK: "Task",
    ObjectKind.TEMPLATE: "TaskTemplate",
    ObjectKind.EVENT: "Event",
    ObjectKind.DATABLOCK: "DataBlock",
    ObjectKind.MAP: "Map",
    ObjectKind.FILE: "File",
}


@dataclass(frozen=True)
class GlobalId:
    node: int
    seq: int
    kind: ObjectKind

    def __str__(self) -> str:
        return f"G{self.node}.{self.seq}:{self.kind.label}"


@dataclass(frozen=True)
class LocalId:
    """Identifier valid only inside the context that allocated it.

    ``owner`` is the label of the allocating context (a task's ``node.seq``,
    or ``node.seq#index`` for a map creator invocation).
    """

    owner: str
    seq: int

    def __str__(self) -> str:
        return f"L{self.owner}.{self.seq}"


class _Sentinel:
    __slots__ = ("_name",)

    def __init__(self, name: str):
        self._name = name

    def __repr__(self) -> str:
        return self._name

    __str__ = __repr__

    def __reduce__(self):
        return self._name


NULL_GUID = _Sentinel("NULL_GUID")
UNINITIALIZED_GUID = _Sentinel("UNINITIALIZED_GUID")

Identifier = Union[GlobalId, LocalId, _Sentinel]


class IdClass(enum.Enum):
    GUID = "OCR_ID_GUID"
    LID = "OCR_ID_LID"
    UNKNOWN = "OCR_ID_UNK"


def id_type(ident: object, caller: str | None) -> IdClass:
    """Classify ``ident`` from the point of view of the context labelled ``caller``."""
    if isinstance(ident, GlobalId):
        return IdClass.GUID
    if isinstance(ident, LocalId) and caller is not None and ident.owner == caller:
        return IdClass.LID
    return IdClass.UNKNOWN


class GuidIssuer:
    """Per-node sequence counters.  Sequence 0 is never issued."""

    def __init__(self, nodes: int):
        self._counters = [0] * nodes

    def next(self, node: int, kind: ObjectKind) -> GlobalId:
        self._counters[node] += 1
        return GlobalId(node, self._counters[node], kind)

    def issued(self, node: int) -> int:
        return self._counters[node]


# 16-byte serialized form: u32 node, u32 kind, u64 sequence (little endian).
# All zeros is NULL_GUID.
GUID_BYTES = 16
_GUID_FMT = struct.Struct("<IIQ")
_UNINIT_KIND = 0xFFFFFFFF


def encode_id(ident: object) -> bytes:
    if ident is NULL_GUID:
        return bytes(GUID_BYTES)
    if ident is UNINITIALIZED_GUID:
        return _GUID_FMT.pack(0, _UNINIT_KIND, 0)
    if isinstance(ident, GlobalId):
        return _GUID_FMT.pack(ident.node, int(ident.kind), ident.seq)
    if isinstance(ident, LocalId):
        raise LidNotStorable(f"{ident} has local validity and cannot be stored in a data block")
    raise TypeError(f"not an identifier: {ident!r}")


def decode_id(raw: bytes | memoryview) -> Identifier:
    if len(raw) != GUID_BYTES:
        raise BadDescriptor(f"serialized identifier must be {GUID_BYTES} bytes, got {len(raw)}")
    node, kind, seq = _GUID_FMT.unpack(bytes(raw))
    if kind == _UNINIT_KIND:
        return UNINITIALIZED_GUID
    if seq == 0:
        return NULL_GUID
    return GlobalId(node, seq, ObjectKind(kind))


def store_id(view: memoryview, offset: int, ident: object) -> None:
    view[offset:offset + GUID_BYTES] = encode_id(ident)


def load_id(view: memoryview, offset: int) -> Identifier:
    return decode_id(view[offset:offset + GUID_BYTES])


def iter_ids(value):
    """Yield every identifier nested inside lists, tuples and dicts."""
    if isinstance(value, (GlobalId, LocalId)):
        yield value
    elif isinstance(value, dict):
        for v in value.values():
            yield from iter_ids(v)
    elif isinstance(value, (list, tuple)):
        for v in value:
            yield from iter_ids(v)


def substitute_ids(value, mapping: dict):
    """Return a copy of ``value`` with every LocalId in ``mapping`` replaced."""
    if isinstance(value, LocalId):
        return mapping.get(value, value)
    if isinstance(value, dict):
        return {k: substitute_ids(v, mapping) for k, v in value.items()}
    if isinstance(value, list):
        return [substitute_ids(v, mapping) for v in value]
    if isinstance(value, tuple):
        return tuple(substitute_ids(v, mapping) for v in value)
    return value
