"""The runtime: object table, message handlers and the scheduling loop.

Everything runs on one thread.  The loop repeatedly picks, through the
substrate's chooser, either a busy channel to deliver from or a runnable task
to execute.  Task bodies run to completion; the only calls that wait are the
blocking ones (``get_guid`` and eager-mode creation), which pump message
deliveries until their answer arrives.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable

from . import blocks, files, maps
from .blocks import WRITE_MODES, AcquireRequest, DataBlock, Mode, effective_mode
from .errors import (
    AlreadySatisfied,
    BadSlot,
    DeadlockDetected,
    InvalidId,
    LidOwnershipViolation,
    ProtocolError,
    SlotOccupied,
    TargetDestroyed,
)
from .ids import NULL_GUID, UNINITIALIZED_GUID, GlobalId, GuidIssuer, LocalId, ObjectKind, iter_ids
from .lids import LidTable, ResolutionRecord
from .substrate import Chooser, Message, MessageKind, SeededChooser, Substrate, Tracer

MODES = ("eager", "deferred")
PLACEMENTS = ("local", "round-robin")
PARTITION_IMPLS = ("eager", "zero-copy")


@dataclass
class Stats:
    tasks_executed: int = 0
    bytes_copied: int = 0
    cow_copies: int = 0
    creator_calls: dict = field(default_factory=dict)
    blocking_map_gets: int = 0


@dataclass
class Template:
    guid: GlobalId
    entry: Callable
    paramc: int
    depc: int
    dead: bool = False

    @property
    def name(self) -> str:
        return self.entry.__name__


class SlotStatus(enum.Enum):
    UNCONNECTED = "unconnected"
    CONNECTED = "connected"
    SATISFIED = "satisfied"


@dataclass
class Slot:
    status: SlotStatus = SlotStatus.UNCONNECTED
    payload: Any = NULL_GUID
    mode: Mode = Mode.NULL
    granted: bool = False
    error: str | None = None


@dataclass
class Task:
    guid: GlobalId
    entry: Callable
    params: list[int]
    slots: list[Slot]
    out_event: GlobalId | None = None
    state: str = "waiting"
    pending_grants: int = 0

    @property
    def name(self) -> str:
        return self.entry.__name__


@dataclass
class OnceEvent:
    guid: GlobalId
    sinks: list = field(default_factory=list)
    satisfied: bool = False
    payload: Any = NULL_GUID
    dead: bool = False


@dataclass
class Dep:
    """What a task receives for one pre-slot."""

    guid: Any
    ptr: memoryview | None
    mode: Mode = Mode.NULL
    error: str | None = None


class Runtime:
    def __init__(
        self,
        nodes: int = 1,
        *,
        seed: int = 0,
        chooser: Chooser | None = None,
        mode: str = "deferred",
        placement: str = "round-robin",
        partition_impl: str = "zero-copy",
        args: dict | None = None,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if placement not in PLACEMENTS:
            raise ValueError(f"placement must be one of {PLACEMENTS}")
        if partition_impl not in PARTITION_IMPLS:
            raise ValueError(f"partition_impl must be one of {PARTITION_IMPLS}")
        self.mode = mode
        self.placement = placement
        self.partition_impl = partition_impl
        self.tracer = Tracer()
        self.substrate = Substrate(nodes, chooser or SeededChooser(seed), self.tracer)
        self.substrate.handler = self._dispatch
        self.issuer = GuidIssuer(nodes)
        self.lids = [LidTable(n) for n in range(nodes)]
        self.objects: dict[GlobalId, Any] = {}
        self.runnable: list[Task] = []
        self.shutdown_requested = False
        self.in_handler = False
        self.stats = Stats()
        self.executed: list[tuple[int, GlobalId, str, tuple]] = []
        self.results: dict[str, list] = {}
        self.files: list[files.FileObject] = []
        self.cow_aliases: list[DataBlock] = []
        self.args = dict(args or {})
        self._placed = [0] * nodes
        self._handlers = {
            MessageKind.CREATE_OBJECT: self._on_create,
            MessageKind.ADD_DEPENDENCE: self._on_add_dependence,
            MessageKind.SATISFY: self._on_satisfy,
            MessageKind.MAP_RESOLUTION: self._on_resolution,
            MessageKind.MAP_GET: lambda msg: maps.handle_map_get(self, msg),
            MessageKind.ACQUIRE_REQUEST: self._on_acquire_request,
            MessageKind.ACQUIRE_GRANT: self._on_acquire_grant,
            MessageKind.RELEASE_NOTICE: self._on_release,
            MessageKind.DESTROY_OBJECT: self._on_destroy,
            MessageKind.COPY_DATA: lambda msg: blocks.copy_data(self, msg.payload),
            MessageKind.FILE_OP: self._on_file_op,
        }
        self._materializers = {
            "task": self._make_task,
            "event": self._make_event,
            "db": self._make_db,
            "map": lambda spec, home: maps.make_map(self, spec, home),
            "file": lambda spec, home: files.make_file(self, spec, home),
            "chunk": lambda spec, home: files.make_chunk(self, spec, home),
            "partition": self._make_partition,
        }

    # -- basics ----------------------------------------------------------------

    @property
    def nodes(self) -> int:
        return self.substrate.nodes

    @property
    def deliveries(self) -> int:
        return self.substrate.deliveries

    def trace(self, text: str) -> None:
        self.tracer.emit(self.substrate.deliveries, text)

    def issue(self, node: int, kind: ObjectKind) -> GlobalId:
        return self.issuer.next(node, kind)

    def home_for(self, node: int) -> int:
        """Home node of the next object created from ``node``."""
        if self.placement == "local" or self.nodes == 1:
            return node
        self._placed[node] += 1
        return (node + self._placed[node]) % self.nodes

    def obj(self, ident, cls=None):
        found = self.objects.get(ident) if isinstance(ident, GlobalId) else None
        if found is None or (cls is not None and not isinstance(found, cls)):
            what = cls.__name__ if cls else "object"
            raise InvalidId(f"{ident} does not name a known {what}")
        return found

    def block(self, ident) -> DataBlock:
        return self.obj(ident, DataBlock)

    def file(self, ident) -> files.FileObject:
        return self.obj(ident, files.FileObject)

    def template(self, ident) -> Template:
        tmpl = self.obj(ident, Template)
        if tmpl.dead:
            raise InvalidId(f"template {ident} was destroyed")
        return tmpl

    # -- messaging ---------------------------------------------------------------

    def send(self, msg: Message) -> None:
        if msg.target is None:
            dest = msg.payload.get(msg.route)
            if not isinstance(dest, GlobalId):
                raise InvalidId(f"{msg.kind.value} addressed to {dest}")
            msg.target = dest.node
        self.substrate.send(msg)

    def check_owned(self, ctx, value) -> None:
        for ident in iter_ids(value):
            if isinstance(ident, LocalId) and ident.owner != ctx.owner:
                raise LidOwnershipViolation(f"{ident} belongs to {ident.owner}, not {ctx.owner}")

    def submit(self, ctx, msg: Message) -> None:
        """Send ``msg`` now, or park it until every LID it names is resolved."""
        self.check_owned(ctx, msg.payload)
        table = self.lids[msg.origin]
        pending = table.patch(msg)
        if pending:
            table.defer(msg, pending)
            awaiting = ",".join(str(lid) for lid in pending)
            self.trace(f"defer {msg.kind.value} {msg.origin}→? {msg.summary()} awaiting={awaiting}")
        else:
            self.send(msg)

    def resolve_lid(self, node: int, lid: LocalId, guid: GlobalId) -> None:
        self.trace(f"resolve {lid} -> {guid}")
        released, callbacks = self.lids[node].resolve(ResolutionRecord(lid, guid, node))
        for msg in released:
            self.send(msg)
        for callback in callbacks:
            callback(guid)

    def pump_until(self, done: Callable[[], bool]) -> None:
        if self.in_handler:
            raise ProtocolError("cannot block inside a message handler")
        while not done():
            if self.substrate.deliver_next() is None:
                raise DeadlockDetected("a blocking call is waiting but no message is in flight")

    # -- object creation -----------------------------------------------------------

    def create_object(
        self,
        ctx,
        op: str,
        spec: dict,
        *,
        home: int | None = None,
        route: str | None = None,
        lid: bool = False,
        bind: LocalId | None = None,
        count: int = 1,
        kind: MessageKind = MessageKind.CREATE_OBJECT,
    ) -> list:
        """Create an object on ``home`` (or on the node ``spec[route]`` lives on).

        Returns global ids when the object could be created locally or the
        caller blocked for them, otherwise local ids that resolve later.
        """
        self.check_owned(ctx, spec)
        table = self.lids[ctx.node]
        probe = Message(kind, ctx.node, dict(spec))
        pending = table.patch(probe)
        spec = probe.payload
        if home is None:
            dest = spec.get(route)
            home = dest.node if isinstance(dest, GlobalId) else None

        # shortcut: same node and nothing unresolved, so no communication needed
        if home == ctx.node and not pending and self._can_make_now(op, spec):
            guids = self._materialize(op, spec, home)
            if bind is not None:
                self.resolve_lid(ctx.node, bind, guids[0])
            return guids

        nonblocking = bind is not None or not ctx.can_block or (lid and self.mode == "deferred")
        lids = [bind] if bind is not None else []
        while len(lids) < count:
            lids.append(ctx.new_lid())
        msg = Message(kind, ctx.node, {"op": op, **spec}, target=home, route=route, lids=lids)
        self.submit(ctx, msg)
        if nonblocking:
            return lids
        self.pump_until(lambda: all(table.guid_of(x) is not None for x in lids))
        return [table.guid_of(x) for x in lids]

    def _can_make_now(self, op: str, spec: dict) -> bool:
        return op != "chunk" or files.chunk_ready(self, spec)

    def _materialize(self, op: str, spec: dict, home: int) -> list[GlobalId]:
        return self._materializers[op](spec, home)

    def _make_task(self, spec: dict, home: int) -> list[GlobalId]:
        guid = self.issue(home, ObjectKind.TASK)
        task = Task(guid, spec["entry"], list(spec["params"]), [Slot() for _ in range(spec["depc"])])
        self.objects[guid] = task
        out = [guid]
        if spec["out"]:
            ev = self.issue(home, ObjectKind.EVENT)
            self.objects[ev] = OnceEvent(ev)
            task.out_event = ev
            out.append(ev)
        for slot, dep in enumerate(spec["deps"] or ()):
            if dep is not None and dep is not UNINITIALIZED_GUID:
                self.connect(dep, guid, slot, Mode.DEFAULT, home)
        if not task.slots:
            self._start_acquire(task)
        return out

    def _make_event(self, spec: dict, home: int) -> list[GlobalId]:
        guid = self.issue(home, ObjectKind.EVENT)
        self.objects[guid] = OnceEvent(guid)
        return [guid]

    def _make_db(self, spec: dict, home: int) -> list[GlobalId]:
        guid = self.issue(home, ObjectKind.DATABLOCK)
        self.objects[guid] = DataBlock(guid, spec["size"])
        return [guid]

    def _make_partition(self, spec: dict, home: int) -> list[GlobalId]:
        parent = self.block(spec["block"])
        if parent.dead or parent.destroy_pending:
            raise TargetDestroyed(f"partitioning destroyed block {parent.guid}")
        return blocks.make_partitions(self, parent, [tuple(p) for p in spec["parts"]], spec["static"])

    # -- dependences and satisfaction ------------------------------------------------

    def connect(self, src, dst, slot: int, mode: Mode, here: int) -> None:
        """Wire ``src`` to ``dst``'s pre-slot; runs on ``dst``'s home node."""
        dest = self.obj(dst)
        if isinstance(dest, Task):
            if not 0 <= slot < len(dest.slots):
                raise BadSlot(f"slot {slot} out of range for {dst} with {len(dest.slots)} pre-slots")
            if dest.slots[slot].status is not SlotStatus.UNCONNECTED:
                raise SlotOccupied(f"slot {slot} of {dst} is already connected")
            dest.slots[slot].status = SlotStatus.CONNECTED
        elif isinstance(dest, OnceEvent):
            if slot != 0:
                raise BadSlot(f"once events have a single pre-slot, got {slot}")
        else:
            raise InvalidId(f"{dst} cannot receive dependences")

        if src is NULL_GUID:
            self._satisfy(dest, slot, NULL_GUID, mode)
        elif isinstance(src, GlobalId) and src.kind is ObjectKind.DATABLOCK:
            self.block(src)
            self._satisfy(dest, slot, src, mode)
        elif isinstance(src, GlobalId) and src.kind is ObjectKind.EVENT:
            payload = {"src": src, "dst": dst, "slot": slot, "mode": mode, "register": True}
            self.send(Message(MessageKind.ADD_DEPENDENCE, here, payload, route="src"))
        else:
            raise InvalidId(f"{src} cannot be used as a dependence source")

    def _satisfy(self, dest, slot: int, payload, mode: Mode) -> None:
        if isinstance(dest, Task):
            self._satisfy_slot(dest, slot, payload, mode)
        elif isinstance(dest, OnceEvent):
            self._satisfy_event(dest, payload)
        else:
            raise InvalidId(f"{dest} cannot be satisfied")

    def _satisfy_slot(self, task: Task, slot: int, payload, mode: Mode) -> None:
        if not 0 <= slot < len(task.slots):
            raise BadSlot(f"slot {slot} out of range for {task.guid}")
        s = task.slots[slot]
        if s.status is SlotStatus.SATISFIED:
            raise SlotOccupied(f"slot {slot} of {task.guid} satisfied twice")
        s.status = SlotStatus.SATISFIED
        s.payload = payload
        s.mode = effective_mode(mode, payload)
        if s.mode is not Mode.NULL:
            blocks.check_partition_deadlock(task, self.block(payload), slot, self.objects.get)
        if all(x.status is SlotStatus.SATISFIED for x in task.slots):
            self._start_acquire(task)

    def _satisfy_event(self, event: OnceEvent, payload) -> None:
        if event.dead:
            raise TargetDestroyed(f"satisfy of destroyed event {event.guid}")
        if event.satisfied:
            raise AlreadySatisfied(f"{event.guid} satisfied twice")
        event.satisfied = True
        event.payload = payload
        for sink in event.sinks:
            self._forward(event, sink)

    def _forward(self, event: OnceEvent, sink) -> None:
        dst, slot, mode = sink
        payload = {"dst": dst, "slot": slot, "payload": event.payload, "mode": mode}
        self.send(Message(MessageKind.SATISFY, event.guid.node, payload, route="dst"))

    def _start_acquire(self, task: Task) -> None:
        task.state = "acquiring"
        wanted = [(i, s) for i, s in enumerate(task.slots) if s.mode is not Mode.NULL]
        task.pending_grants = len(wanted)
        for i, s in wanted:
            payload = {"block": s.payload, "task": task.guid, "slot": i, "mode": s.mode}
            self.send(Message(MessageKind.ACQUIRE_REQUEST, task.guid.node, payload, route="block"))
        if not wanted:
            self._make_ready(task)

    def _make_ready(self, task: Task) -> None:
        task.state = "ready"
        self.runnable.append(task)

    # -- handlers ------------------------------------------------------------------------

    def _dispatch(self, msg: Message) -> None:
        self.in_handler = True
        try:
            self._handlers[msg.kind](msg)
        finally:
            self.in_handler = False

    def _on_create(self, msg: Message) -> None:
        spec = dict(msg.payload)
        op = spec.pop("op")
        if op == "chunk" and files.defer_until_open(self, spec, lambda: self._on_create(msg)):
            return
        guids = self._materialize(op, spec, msg.target)
        for lid, guid in zip(msg.lids, guids):
            self.send(Message(MessageKind.MAP_RESOLUTION, msg.target, {"lid": lid, "guid": guid},
                              target=msg.origin))

    def _on_resolution(self, msg: Message) -> None:
        self.resolve_lid(msg.target, msg.payload["lid"], msg.payload["guid"])

    def _on_add_dependence(self, msg: Message) -> None:
        p = msg.payload
        if p.get("register"):
            event = self.obj(p["src"], OnceEvent)
            if event.dead:
                raise TargetDestroyed(f"dependence on destroyed event {event.guid}")
            sink = (p["dst"], p["slot"], p["mode"])
            event.sinks.append(sink)
            if event.satisfied:
                self._forward(event, sink)
        else:
            self.connect(p["src"], p["dst"], p["slot"], p["mode"], msg.target)

    def _on_satisfy(self, msg: Message) -> None:
        p = msg.payload
        self._satisfy(self.obj(p["dst"]), p["slot"], p["payload"], p["mode"])

    def _on_acquire_request(self, msg: Message) -> None:
        p = msg.payload
        req = AcquireRequest(p["task"], p["slot"], p["mode"], msg.origin)
        blocks.request_acquire(self, self.block(p["block"]), req)

    def _on_acquire_grant(self, msg: Message) -> None:
        p = msg.payload
        task = self.obj(p["task"], Task)
        slot = task.slots[p["slot"]]
        slot.granted = True
        slot.error = p.get("error")
        task.pending_grants -= 1
        if task.pending_grants == 0:
            self._make_ready(task)

    def _on_release(self, msg: Message) -> None:
        p = msg.payload
        blocks.release(self, self.block(p["block"]), p["task"], p["slots"])

    def _on_destroy(self, msg: Message) -> None:
        p = msg.payload
        target = self.obj(p["id"])
        if isinstance(target, DataBlock):
            blocks.destroy_request(self, target, p.get("task"), p.get("slots", []))
        elif isinstance(target, maps.ObjectMap):
            maps.destroy_map(self, target.guid)
        elif isinstance(target, OnceEvent):
            if target.dead:
                raise InvalidId(f"{target.guid} destroyed twice")
            target.dead = True
        else:
            raise InvalidId(f"{p['id']} cannot be destroyed this way")

    def _on_file_op(self, msg: Message) -> None:
        if "op" in msg.payload:
            self._on_create(msg)
        else:
            files.handle_file_op(self, msg)

    # -- execution -------------------------------------------------------------------------

    def start(self, main: Callable) -> GlobalId:
        """Create the main task on node 0 with no parameters and no pre-slots."""
        tmpl = Template(self.issue(0, ObjectKind.TEMPLATE), main, 0, 0)
        self.objects[tmpl.guid] = tmpl
        spec = {"template": tmpl.guid, "entry": main, "params": [], "depc": 0, "deps": None, "out": False}
        return self._make_task(spec, 0)[0]

    def run(self, main: Callable) -> int:
        self.start(main)
        return self.run_to_quiescence()

    def run_to_quiescence(self) -> int:
        """Deliver messages and run tasks until nothing is left; return deliveries."""
        chooser = self.substrate.chooser
        try:
            while True:
                busy = self.substrate.busy_channels()
                can_run = bool(self.runnable) and not self.shutdown_requested
                options = len(busy) + (1 if can_run else 0)
                if options == 0:
                    break
                pick = chooser.choose(options)
                if pick < len(busy):
                    self.substrate.deliver_from(busy[pick])
                else:
                    self._run_task(self.runnable.pop(chooser.choose(len(self.runnable))))
        finally:
            self.close_files()
        if not self.shutdown_requested:
            self._check_stuck()
        return self.deliveries

    def _check_stuck(self) -> None:
        problems = []
        for table in self.lids:
            problems.extend(f"unresolved {lid}" for lid in table.outstanding())
        for obj in self.objects.values():
            if isinstance(obj, Task) and obj.state != "done":
                problems.append(f"task {obj.guid} ({obj.name}) never ran")
            elif isinstance(obj, DataBlock) and obj.waiting:
                problems.append(f"acquire of {obj.guid} never granted")
        if problems:
            self.trace("deadlock " + "; ".join(problems[:5]))
            raise DeadlockDetected("; ".join(problems))

    def close_files(self) -> None:
        for fobj in self.files:
            files.maybe_close(self, fobj, force=True)

    def _run_task(self, task: Task) -> None:
        from .api import TaskContext

        task.state = "running"
        self.stats.tasks_executed += 1
        self.trace(f"run-task {task.guid} template={task.name}")
        self.executed.append((self.deliveries, task.guid, task.name, tuple(task.params)))
        ctx = TaskContext(self, task)
        depv = []
        for i, s in enumerate(task.slots):
            ptr = None
            if s.granted:
                if s.error is None:
                    ptr = self.block(s.payload).view(writable=s.mode in WRITE_MODES)
                ctx.hold(s.payload, i, ptr)
            depv.append(Dep(s.payload, ptr, s.mode, s.error))
        try:
            ret = task.entry(ctx, list(task.params), depv)
            ctx.finish(ret)
        finally:
            ctx.close()
        task.state = "done"

    def request_shutdown(self) -> None:
        self.shutdown_requested = True
        self.trace("shutdown")

