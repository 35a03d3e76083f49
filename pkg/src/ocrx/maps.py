"""Labeled object maps with creator functions.

Slot state lives only on the map's home node and is changed only by the
MapGet handler there, so the creator for an index runs exactly once no matter
how many tasks ask for it concurrently.  Callers always get an identifier
back immediately; every caller's LID resolves to the same global id.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

from .errors import BadIndex, CreatorContractViolation, InvalidId
from .ids import GlobalId, LocalId, ObjectKind
from .substrate import Message, MessageKind

if TYPE_CHECKING:
    from .core import Runtime


class SlotState(enum.Enum):
    EMPTY = "empty"
    CREATING = "creating"
    CREATED = "created"


@dataclass
class MapSlot:
    state: SlotState = SlotState.EMPTY
    guid: GlobalId | None = None
    waiters: list[tuple[LocalId, int]] = field(default_factory=list)


@dataclass
class ObjectMap:
    guid: GlobalId
    size: int
    creator: Callable
    params: list[int]
    guids: list
    slots: list[MapSlot]
    dead: bool = False


def make_map(rt: Runtime, spec: dict, home: int) -> list[GlobalId]:
    guid = rt.issue(home, ObjectKind.MAP)
    size = spec["size"]
    rt.objects[guid] = ObjectMap(
        guid, size, spec["creator"], list(spec["params"]), list(spec["guids"]),
        [MapSlot() for _ in range(size)],
    )
    return [guid]


def live_map(rt: Runtime, guid) -> ObjectMap:
    m = rt.objects.get(guid)
    if not isinstance(m, ObjectMap) or m.dead:
        raise InvalidId(f"{guid} is not a live map")
    return m


def handle_map_get(rt: Runtime, msg: Message) -> None:
    m = live_map(rt, msg.payload["map"])
    index = msg.payload["index"]
    if not 0 <= index < m.size:
        raise BadIndex(f"index {index} outside map of size {m.size}")
    reply = (msg.lids[0], msg.origin)
    slot = m.slots[index]
    if slot.state is SlotState.CREATED:
        _reply(rt, m, reply, slot.guid)
    elif slot.state is SlotState.CREATING:
        slot.waiters.append(reply)
    else:
        slot.state = SlotState.CREATING
        slot.waiters.append(reply)
        _run_creator(rt, m, index)


def _reply(rt: Runtime, m: ObjectMap, reply: tuple[LocalId, int], guid: GlobalId) -> None:
    lid, node = reply
    rt.send(Message(MessageKind.MAP_RESOLUTION, m.guid.node, {"lid": lid, "guid": guid}, target=node))


def _created(rt: Runtime, m: ObjectMap, index: int, guid: GlobalId) -> None:
    slot = m.slots[index]
    slot.state = SlotState.CREATED
    slot.guid = guid
    waiters, slot.waiters = slot.waiters, []
    for reply in waiters:
        _reply(rt, m, reply, guid)


def _run_creator(rt: Runtime, m: ObjectMap, index: int) -> None:
    from .api import CreatorContext

    node = m.guid.node
    ctx = CreatorContext(rt, node, f"{node}.{m.guid.seq}#{index}")
    object_lid = ctx.new_lid()
    ctx.object_lid = object_lid
    rt.lids[node].on_resolve(object_lid, lambda guid: _created(rt, m, index, guid))
    key = (str(m.guid), index)
    rt.stats.creator_calls[key] = rt.stats.creator_calls.get(key, 0) + 1
    rt.trace(f"creator {m.guid} index={index} objectLid={object_lid} fn={m.creator.__name__}")
    try:
        m.creator(ctx, object_lid, index, list(m.params), list(m.guids))
    finally:
        ctx.close()
    if not ctx.bound:
        raise CreatorContractViolation(
            f"creator {m.creator.__name__} returned without creating an object for index {index}"
        )


def destroy_map(rt: Runtime, guid) -> None:
    m = live_map(rt, guid)
    m.dead = True
