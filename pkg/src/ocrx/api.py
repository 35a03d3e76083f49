"""The calls available to task bodies and creator functions.

Every call returns without waiting for other nodes unless documented as
blocking: effects travel as messages, and identifiers that cannot be known yet
come back as :class:`~ocrx.ids.LocalId` values owned by the calling context.
"""

from __future__ import annotations

import enum
from typing import TYPE_CHECKING, Callable, Sequence

from .blocks import OCR_DB_PARTITION_STATIC, CopyType, DbPart, Mode, check_copy_type
from .errors import (
    BadArity,
    BadIndex,
    BadSize,
    CreatorContractViolation,
    InvalidId,
    LidOwnershipViolation,
    NotAcquired,
    ProtocolError,
)
from .files import file_get_guid, file_get_size, parse_mode
from .ids import NULL_GUID, GlobalId, IdClass, LocalId, ObjectKind, id_type
from .maps import SlotState, live_map
from .substrate import Message, MessageKind

if TYPE_CHECKING:
    from .core import Runtime, Task

EDT_PARAM_DEF = None


class Prop(enum.IntFlag):
    NONE = 0
    LID = 0x1  # a local identifier is good enough for the caller
    MAPPED = 0x2  # the identifier argument is an in-out creator LID
    NO_ACQUIRE = 0x4  # no view for the creator; storage may be deferred


class Api:
    can_block = True

    def __init__(self, rt: Runtime, node: int, owner: str):
        self.rt = rt
        self.node = node
        self.owner = owner
        self.task_guid: GlobalId | None = None

    # -- identifiers ----------------------------------------------------------

    def new_lid(self) -> LocalId:
        return self.rt.lids[self.node].allocate(self.owner)

    @property
    def args(self) -> dict:
        return self.rt.args

    def id_type(self, ident) -> IdClass:
        return id_type(ident, self.owner)

    def get_guid(self, ident) -> GlobalId:
        """Return the global id behind ``ident``, blocking until it is known."""
        if isinstance(ident, GlobalId):
            return ident
        if not isinstance(ident, LocalId):
            raise InvalidId(f"{ident!r} has no global id")
        if ident.owner != self.owner:
            raise LidOwnershipViolation(f"{ident} belongs to {ident.owner}, not {self.owner}")
        table = self.rt.lids[self.node]
        if table.guid_of(ident) is None:
            if not self.can_block:
                raise ProtocolError("creator functions may not block")
            self.rt.pump_until(lambda: table.guid_of(ident) is not None)
        return table.guid_of(ident)

    def _lid_wanted(self, props: int) -> bool:
        return bool(props & Prop.LID)

    def _binding(self, props: int, bind) -> LocalId | None:
        if not props & Prop.MAPPED:
            if bind is not None:
                raise CreatorContractViolation("bind= requires Prop.MAPPED")
            return None
        if not isinstance(self, CreatorContext):
            raise CreatorContractViolation("Prop.MAPPED is only valid inside a creator function")
        if bind != self.object_lid:
            raise CreatorContractViolation(f"MAPPED create must bind {self.object_lid}, got {bind}")
        if self.bound:
            raise CreatorContractViolation("creator bound more than one object")
        self.bound = True
        return bind

    # -- templates and tasks ------------------------------------------------------

    def edt_template_create(self, entry: Callable, paramc: int, depc: int) -> GlobalId:
        from .core import Template

        guid = self.rt.issue(self.node, ObjectKind.TEMPLATE)
        self.rt.objects[guid] = Template(guid, entry, paramc, depc)
        return guid

    def edt_template_destroy(self, template) -> None:
        self.rt.template(template).dead = True

    def edt_create(
        self,
        template,
        params: Sequence[int] | None = None,
        deps: Sequence | None = None,
        *,
        paramc: int | None = EDT_PARAM_DEF,
        depc: int | None = EDT_PARAM_DEF,
        props: int = Prop.NONE,
        output_event: bool = False,
        bind: LocalId | None = None,
    ):
        """Create a task; returns its id, or ``(id, output_event_id)``."""
        tmpl = self.rt.template(template)
        params = [int(p) for p in (params or [])]
        paramc = tmpl.paramc if paramc is EDT_PARAM_DEF else paramc
        depc = tmpl.depc if depc is EDT_PARAM_DEF else depc
        if paramc != tmpl.paramc or len(params) != paramc:
            raise BadArity(f"{tmpl.name} takes {tmpl.paramc} params, got {len(params)}")
        if depc != tmpl.depc or (deps is not None and len(deps) != depc):
            raise BadArity(f"{tmpl.name} takes {tmpl.depc} deps, got {depc if deps is None else len(deps)}")
        bind = self._binding(props, bind)
        spec = {
            "template": tmpl.guid,
            "entry": tmpl.entry,
            "params": params,
            "depc": depc,
            "deps": list(deps) if deps is not None else None,
            "out": output_event,
        }
        ids = self.rt.create_object(
            self, "task", spec, home=self.rt.home_for(self.node),
            lid=self._lid_wanted(props), bind=bind, count=2 if output_event else 1,
        )
        return (ids[0], ids[1]) if output_event else ids[0]

    def add_dependence(self, src, dst, slot: int, mode: Mode = Mode.DEFAULT) -> None:
        payload = {"src": src, "dst": dst, "slot": slot, "mode": mode}
        self.rt.submit(self, Message(MessageKind.ADD_DEPENDENCE, self.node, payload, route="dst"))

    # -- events -------------------------------------------------------------------

    def event_create(self, props: int = Prop.NONE, bind: LocalId | None = None):
        bind = self._binding(props, bind)
        return self.rt.create_object(
            self, "event", {}, home=self.rt.home_for(self.node), lid=self._lid_wanted(props), bind=bind
        )[0]

    def event_satisfy(self, event, payload=NULL_GUID) -> None:
        msg = Message(MessageKind.SATISFY, self.node,
                      {"dst": event, "slot": 0, "payload": payload, "mode": Mode.DEFAULT}, route="dst")
        self.rt.submit(self, msg)

    # -- data blocks --------------------------------------------------------------

    def db_create(self, size: int, props: int = Prop.NONE, bind: LocalId | None = None):
        """Create a block; returns ``(id, view)`` where view is None if not acquired."""
        if size <= 0:
            raise BadSize(f"data block size must be positive, got {size}")
        bind = self._binding(props, bind)
        wants_view = self.task_guid is not None and bind is None and not props & Prop.NO_ACQUIRE
        if not wants_view:
            ident = self.rt.create_object(
                self, "db", {"size": size}, home=self.rt.home_for(self.node),
                lid=self._lid_wanted(props), bind=bind,
            )[0]
            return ident, None
        guid = self.rt.create_object(self, "db", {"size": size}, home=self.node)[0]
        block = self.rt.block(guid)
        block.grants[(self.task_guid, -1)] = Mode.EW
        view = block.view(writable=True)
        self.hold(guid, -1, view)
        return guid, view

    def db_release(self, block) -> None:
        slots = self._holdings_of(block)
        if slots is None:
            raise NotAcquired(f"{block} is not held by {self.owner}")
        payload = {"block": block, "task": self.task_guid, "slots": slots}
        self.rt.submit(self, Message(MessageKind.RELEASE_NOTICE, self.node, payload, route="block"))

    def db_destroy(self, block) -> None:
        slots = self._holdings_of(block) or []
        payload = {"id": block, "task": self.task_guid, "slots": slots}
        self.rt.submit(self, Message(MessageKind.DESTROY_OBJECT, self.node, payload, route="id"))

    def db_partition(self, block, parts: list[DbPart], props: int = 0) -> list:
        spec = {
            "block": block,
            "parts": [(p.offset, p.size) for p in parts],
            "static": bool(props & OCR_DB_PARTITION_STATIC),
        }
        ids = self.rt.create_object(self, "partition", spec, route="block", lid=True, count=len(parts))
        for part, ident in zip(parts, ids):
            part.guid = ident
        return ids

    def db_copy(self, dest, dest_off: int, src, src_off: int, size: int, copy_type: int = CopyType.PLAIN):
        """Start an asynchronous copy; returns the completion event."""
        ctype = check_copy_type(copy_type)
        if min(dest_off, src_off, size) < 0:
            raise BadSize("copy offsets and size must be non-negative")
        event = self.rt.create_object(self, "event", {}, home=self.node)[0]
        if size == 0 and ctype is CopyType.PLAIN:
            self.rt.obj(event).satisfied = True
            return event
        payload = {
            "dest": dest, "dest_off": dest_off, "src": src, "src_off": src_off,
            "size": size, "copy_type": ctype, "event": event,
        }
        self.rt.submit(self, Message(MessageKind.COPY_DATA, self.node, payload, route="src"))
        return event

    # -- labeled maps ---------------------------------------------------------------

    def map_create(self, size: int, creator: Callable, params: Sequence[int] = (), guids: Sequence = (),
                   props: int = Prop.NONE):
        if size <= 0:
            raise BadSize(f"map size must be positive, got {size}")
        spec = {"size": size, "creator": creator, "params": [int(p) for p in params], "guids": list(guids)}
        return self.rt.create_object(
            self, "map", spec, home=self.rt.home_for(self.node), lid=self._lid_wanted(props)
        )[0]

    def map_get(self, map_id, index: int):
        """Identifier of element ``index``; a LID unless the answer is already local."""
        rt = self.rt
        if isinstance(map_id, GlobalId):
            m = live_map(rt, map_id)
            if not 0 <= index < m.size:
                raise BadIndex(f"index {index} outside map of size {m.size}")
            slot = m.slots[index]
            if map_id.node == self.node and slot.state is SlotState.CREATED:
                return slot.guid
        lid = self.new_lid()
        msg = Message(MessageKind.MAP_GET, self.node, {"map": map_id, "index": index}, route="map", lids=[lid])
        rt.submit(self, msg)
        if rt.mode == "eager" and self.can_block:
            rt.stats.blocking_map_gets += 1
            return self.get_guid(lid)
        return lid

    def map_destroy(self, map_id) -> None:
        msg = Message(MessageKind.DESTROY_OBJECT, self.node, {"id": map_id}, route="id")
        self.rt.submit(self, msg)

    # -- files ------------------------------------------------------------------------

    def file_open(self, path: str, mode: str, descriptor: bool = True, props: int = 0):
        """Open ``path`` asynchronously; returns ``(file, descriptor_block | None)``."""
        parse_mode(mode)
        spec = {"path": str(path), "mode": mode, "descriptor": descriptor}
        ids = self.rt.create_object(
            self, "file", spec, home=self.rt.home_for(self.node), lid=True, count=2 if descriptor else 1
        )
        return ids[0], (ids[1] if descriptor else None)

    def file_get_chunk(self, file, offset: int, size: int, props: int = Prop.NONE):
        spec = {"file": file, "offset": offset, "size": size}
        return self.rt.create_object(self, "chunk", spec, route="file", lid=True, kind=MessageKind.FILE_OP)[0]

    def file_release(self, file) -> None:
        msg = Message(MessageKind.FILE_OP, self.node, {"fop": "release", "file": file}, route="file")
        self.rt.submit(self, msg)

    @staticmethod
    def file_get_guid(view) -> GlobalId:
        return file_get_guid(view)

    @staticmethod
    def file_get_size(view) -> int:
        return file_get_size(view)

    # -- misc -------------------------------------------------------------------------

    def shutdown(self) -> None:
        self.rt.request_shutdown()

    def record(self, key: str, value) -> None:
        """Report a program result; the harness collects these per key."""
        self.rt.results.setdefault(key, []).append(value)

    # holdings are only meaningful for tasks; creators never hold views
    def hold(self, guid, slot: int, view) -> None:
        raise ProtocolError("only tasks hold data blocks")

    def _holdings_of(self, block):
        return None

    def close(self) -> None:
        pass


class TaskContext(Api):
    """API handle passed to a running task body."""

    def __init__(self, rt: Runtime, task: Task):
        super().__init__(rt, task.guid.node, f"{task.guid.node}.{task.guid.seq}")
        self.task = task
        self.task_guid = task.guid
        self.holdings: dict[GlobalId, list[int]] = {}
        self.views: list[memoryview] = []

    def hold(self, guid, slot: int, view) -> None:
        self.holdings.setdefault(guid, []).append(slot)
        if view is not None:
            self.views.append(view)

    def _holdings_of(self, block):
        if isinstance(block, LocalId):
            block = self.rt.lids[self.node].guid_of(block)
        return self.holdings.pop(block, None)

    def finish(self, ret) -> None:
        for guid, slots in self.holdings.items():
            payload = {"block": guid, "task": self.task_guid, "slots": slots}
            self.rt.send(Message(MessageKind.RELEASE_NOTICE, self.node, payload, route="block"))
        self.holdings = {}
        out = self.task.out_event
        if out is not None:
            payload = {"dst": out, "slot": 0, "payload": NULL_GUID if ret is None else ret, "mode": Mode.NULL}
            self.rt.submit(self, Message(MessageKind.SATISFY, self.node, payload, route="dst"))

    def close(self) -> None:
        # Views stop working once the task ends.  Views the program cast or
        # sliced keep their own export alive, so this cannot catch every misuse.
        for view in self.views:
            try:
                view.release()
            except BufferError:
                pass
        self.views = []


class CreatorContext(Api):
    """API handle passed to a map creator function; it must never block."""

    can_block = False

    def __init__(self, rt: Runtime, node: int, owner: str):
        super().__init__(rt, node, owner)
        self.object_lid: LocalId | None = None
        self.bound = False
