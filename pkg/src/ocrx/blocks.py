"""Data blocks: acquire modes, grant gating, partitioning and copying.

A block's bytes live in a shared ``bytearray`` (``storage``) at ``base``.
Explicit partitions and zero-copy partition copies alias their parent's
storage; copy-on-write breaks the alias when a writer would otherwise be
observed by another live alias of the same bytes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

from .errors import (
    BadFlags,
    BadRange,
    BadSize,
    InvalidId,
    PartitionDeadlock,
    PartitionOverlap,
    PartitionProtocolViolation,
    StaticPartitioned,
    TargetDestroyed,
)
from .ids import NULL_GUID, GlobalId, ObjectKind
from .substrate import Message, MessageKind

if TYPE_CHECKING:
    from .core import Runtime


class Mode(enum.Enum):
    NULL = "NULL"
    RO = "RO"
    CONST = "CONST"
    RW = "RW"
    EW = "EW"
    DEFAULT = "DEFAULT"


WRITE_MODES = frozenset({Mode.RW, Mode.EW})

OCR_DB_PARTITION_STATIC = 0x1


class CopyType(enum.IntFlag):
    PLAIN = 0
    PARTITION = 0x1
    PARTITION_BACK = 0x2


DB_COPY_PLAIN = CopyType.PLAIN
DB_COPY_PARTITION = CopyType.PARTITION
DB_COPY_PARTITION_BACK = CopyType.PARTITION_BACK


@dataclass
class DbPart:
    """One partition request; ``guid`` is filled in by ``db_partition``."""

    offset: int
    size: int
    guid: object = NULL_GUID


@dataclass
class AcquireRequest:
    task: GlobalId
    slot: int
    mode: Mode
    reply_to: int


@dataclass
class DataBlock:
    guid: GlobalId
    size: int
    storage: bytearray | None = None
    base: int = 0
    grants: dict = field(default_factory=dict)  # (task, slot) -> Mode
    waiting: list = field(default_factory=list)
    parked: list = field(default_factory=list)
    mode_history: set = field(default_factory=set)
    destroy_pending: bool = False
    dead: bool = False
    # explicit partitioning
    parent: DataBlock | None = None
    children: list = field(default_factory=list)
    reserved: list = field(default_factory=list)
    static: bool = False
    # copy-based partitioning
    partition_source: DataBlock | None = None
    partition_dests: list = field(default_factory=list)
    cow: bool = False
    # file chunks and descriptors
    chunk_file: object = None
    chunk_offset: int = 0
    ready: bool = True
    error: str | None = None

    def ensure_storage(self) -> None:
        if self.storage is None:
            self.storage = bytearray(self.size)
            self.base = 0

    def view(self, writable: bool = True) -> memoryview:
        self.ensure_storage()
        mv = memoryview(self.storage)[self.base:self.base + self.size]
        return mv if writable else mv.toreadonly()

    def read(self, lo: int = 0, hi: int | None = None) -> bytes:
        if self.storage is None:
            hi = self.size if hi is None else hi
            return bytes(hi - lo)
        hi = self.size if hi is None else hi
        return bytes(self.storage[self.base + lo:self.base + hi])

    def write(self, lo: int, data: bytes) -> None:
        self.ensure_storage()
        start = self.base + lo
        self.storage[start:start + len(data)] = data

    @property
    def span(self) -> tuple[int, int]:
        return (self.base, self.base + self.size)

    def ancestors(self):
        p = self.parent
        while p is not None:
            yield p
            p = p.parent


def overlaps(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def related(a: DataBlock, b: DataBlock) -> bool:
    """True when one block is a partition (at any depth) of the other."""

    def lineage(x):
        seen = []
        while x is not None:
            seen.append(x)
            x = x.parent or x.partition_source
        return seen

    return a is not b and (a in lineage(b) or b in lineage(a))


def effective_mode(mode: Mode, payload) -> Mode:
    is_block = isinstance(payload, GlobalId) and payload.kind is ObjectKind.DATABLOCK
    if not is_block:
        return Mode.NULL
    if mode is Mode.DEFAULT:
        return Mode.RO
    return mode


# -- acquire gating ----------------------------------------------------------


def _compatible(block: DataBlock, req: AcquireRequest) -> bool:
    for (task, _slot), held in block.grants.items():
        if task == req.task:
            continue
        if req.mode is Mode.EW or held is Mode.EW:
            return False
    return True


def _gated_by_partitions(block: DataBlock) -> bool:
    return bool(block.children)


def _ancestor_busy(block: DataBlock) -> bool:
    return any(p.grants for p in block.ancestors())


def request_acquire(rt: Runtime, block: DataBlock, req: AcquireRequest) -> None:
    if block.dead or block.destroy_pending:
        raise TargetDestroyed(f"acquire of destroyed block {block.guid}")
    if block.partition_dests:
        live = ",".join(str(d.guid) for d in block.partition_dests)
        raise PartitionProtocolViolation(
            f"{block.guid} acquired while partition copies {live} are outstanding"
        )
    if not _try_grant(rt, block, req):
        block.waiting.append(req)
        if _gated_by_partitions(block):
            rt.trace(f"gate-acquire {block.guid} task={req.task} live={len(block.children)}")


def _try_grant(rt: Runtime, block: DataBlock, req: AcquireRequest) -> bool:
    if not block.ready or _gated_by_partitions(block) or _ancestor_busy(block):
        return False
    if not _compatible(block, req):
        return False
    block.grants[(req.task, req.slot)] = req.mode
    block.mode_history.add(req.mode)
    if req.mode in WRITE_MODES and block.cow and cow_conflicts(rt, block):
        materialize(rt, block)
    payload = {"task": req.task, "slot": req.slot, "block": block.guid, "mode": req.mode}
    if block.error:
        payload["error"] = block.error
    rt.send(Message(MessageKind.ACQUIRE_GRANT, block.guid.node, payload, target=req.reply_to))
    return True


def retry(rt: Runtime, block: DataBlock) -> None:
    """Re-examine waiters after grants, partitions or readiness changed."""
    if block.dead:
        return
    still = []
    for req in block.waiting:
        if not _try_grant(rt, block, req):
            still.append(req)
    block.waiting = still
    parked, block.parked = block.parked, []
    for op in parked:
        op()
    for child in list(block.children):
        retry(rt, child)
    try_finalize(rt, block)


def release(rt: Runtime, block: DataBlock, task: GlobalId, slots: list[int]) -> None:
    for slot in slots:
        block.grants.pop((task, slot), None)
    retry(rt, block)


def destroy_request(rt: Runtime, block: DataBlock, task: GlobalId | None, slots: list[int]) -> None:
    if block.dead or block.destroy_pending:
        raise InvalidId(f"{block.guid} destroyed twice")
    block.destroy_pending = True
    if task is not None:
        for slot in slots:
            block.grants.pop((task, slot), None)
    retry(rt, block)


def try_finalize(rt: Runtime, block: DataBlock) -> None:
    if not block.destroy_pending or block.dead or block.grants or block.children:
        return
    block.dead = True
    block.waiting.clear()
    rt.trace(f"dead {block.guid}")
    if block.chunk_file is not None:
        from .files import write_back

        write_back(rt, block)
    if block.cow:
        rt.cow_aliases.remove(block)
        block.cow = False
    src = block.partition_source
    if src is not None and block in src.partition_dests:
        src.partition_dests.remove(block)
        retry(rt, src)
    parent = block.parent
    if parent is not None and block in parent.children:
        parent.children.remove(block)
        if parent.static and not parent.children:
            parent.static = False
            parent.reserved.clear()
        retry(rt, parent)


def check_partition_deadlock(task, block: DataBlock, slot: int, lookup: Callable) -> None:
    for i, other in enumerate(task.slots):
        if i == slot or other.mode is Mode.NULL or not isinstance(other.payload, GlobalId):
            continue
        if other.payload.kind is not ObjectKind.DATABLOCK:
            continue
        other_block = lookup(other.payload)
        if other_block is not None and related(block, other_block):
            raise PartitionDeadlock(
                f"task {task.guid} receives {block.guid} and {other_block.guid}, "
                "a block and one of its partitions"
            )


# -- copy-on-write -----------------------------------------------------------


def cow_conflicts(rt: Runtime, block: DataBlock, exclude: DataBlock | None = None) -> list[DataBlock]:
    """Live aliases, other than ``block``, sharing bytes with ``block``."""
    return [
        a
        for a in rt.cow_aliases
        if a is not block
        and a is not exclude
        and a.storage is block.storage
        and overlaps(a.span, block.span)
    ]


def materialize(rt: Runtime, block: DataBlock) -> None:
    """Give an aliasing block its own copy of its bytes."""
    data = bytearray(block.read())
    block.storage = data
    block.base = 0
    block.cow = False
    rt.cow_aliases.remove(block)
    rt.stats.cow_copies += 1
    rt.stats.bytes_copied += block.size
    rt.trace(f"cow-copy {block.guid} bytes={block.size}")


def _prepare_write(rt: Runtime, dest: DataBlock, lo: int, hi: int, exclude: DataBlock | None) -> None:
    if dest.cow and cow_conflicts(rt, dest, exclude):
        materialize(rt, dest)
    dest.ensure_storage()
    span = (dest.base + lo, dest.base + hi)
    for alias in list(rt.cow_aliases):
        if alias is dest or alias is exclude:
            continue
        if alias.storage is dest.storage and overlaps(alias.span, span):
            materialize(rt, alias)


def _physical_copy(rt: Runtime, dest: DataBlock, dest_off: int, src: DataBlock, src_off: int, size: int,
                   exclude: DataBlock | None = None) -> None:
    data = src.read(src_off, src_off + size)
    _prepare_write(rt, dest, dest_off, dest_off + size, exclude)
    dest.write(dest_off, data)
    rt.stats.bytes_copied += size


# -- explicit partitioning ---------------------------------------------------


def validate_partition(block: DataBlock, parts: list[tuple[int, int]], static: bool) -> None:
    if block.static and block.children:
        raise StaticPartitioned(f"{block.guid} has live static partitions")
    for offset, size in parts:
        if size <= 0:
            raise BadSize(f"partition size must be positive, got {size}")
        if offset < 0 or offset + size > block.size:
            raise BadRange(f"partition [{offset},{offset + size}) outside block of {block.size} bytes")
    ranges = [(o, o + s) for o, s in parts]
    for i, a in enumerate(ranges):
        for b in ranges[i + 1:]:
            if overlaps(a, b):
                raise PartitionOverlap(f"requested partitions {a} and {b} overlap")
        for old in block.reserved:
            if overlaps(a, old):
                raise PartitionOverlap(f"partition {a} overlaps existing partition {old}")


def make_partitions(rt: Runtime, block: DataBlock, parts: list[tuple[int, int]], static: bool) -> list[GlobalId]:
    validate_partition(block, parts, static)
    if block.cow:
        materialize(rt, block)
    block.ensure_storage()
    out = []
    for offset, size in parts:
        guid = rt.issue(block.guid.node, ObjectKind.DATABLOCK)
        child = DataBlock(guid, size, storage=block.storage, base=block.base + offset, parent=block)
        rt.objects[guid] = child
        block.children.append(child)
        block.reserved.append((offset, offset + size))
        out.append(guid)
    if static:
        block.static = True
    return out


# -- copying -----------------------------------------------------------------


def check_copy_type(copy_type: int) -> CopyType:
    if copy_type & ~0x3 or copy_type == 0x3:
        raise BadFlags(f"unsupported copy type {copy_type:#x}")
    return CopyType(copy_type)


def copy_data(rt: Runtime, payload: dict) -> None:
    dest = rt.block(payload["dest"])
    src = rt.block(payload["src"])
    dest_off, src_off, size = payload["dest_off"], payload["src_off"], payload["size"]
    ctype = CopyType(payload["copy_type"])
    for blk in (dest, src):
        if blk.dead or blk.destroy_pending:
            raise TargetDestroyed(f"copy involving destroyed block {blk.guid}")
    if dest_off < 0 or src_off < 0 or dest_off + size > dest.size or src_off + size > src.size:
        raise BadRange("copy range outside block")
    if dest is src and overlaps((dest_off, dest_off + size), (src_off, src_off + size)):
        raise BadRange("overlapping copy within one block")

    # wait until no task can still be writing the source or touching the destination
    if any(m in WRITE_MODES for m in src.grants.values()):
        src.parked.append(lambda: copy_data(rt, payload))
        return
    if dest.grants:
        dest.parked.append(lambda: copy_data(rt, payload))
        return

    if ctype is CopyType.PARTITION and _can_partition(dest, src, dest_off, size):
        if rt.partition_impl == "zero-copy":
            src.ensure_storage()
            dest.storage = src.storage
            dest.base = src.base + src_off
            dest.cow = True
            rt.cow_aliases.append(dest)
        else:
            dest.storage = bytearray(src.read(src_off, src_off + size))
            dest.base = 0
            rt.stats.bytes_copied += size
        dest.partition_source = src
        src.partition_dests.append(dest)
    elif ctype is CopyType.PARTITION_BACK:
        if src.grants:
            src.parked.append(lambda: copy_data(rt, payload))
            return
        in_place = (
            src.partition_source is dest
            and src.cow
            and src_off == 0
            and size == src.size
            and src.storage is dest.storage
            and src.base == dest.base + dest_off
        )
        if not in_place:
            _physical_copy(rt, dest, dest_off, src, src_off, size, exclude=src)
        destroy_request(rt, src, None, [])
    else:
        _physical_copy(rt, dest, dest_off, src, src_off, size)
    rt.trace(f"copied {src.guid}->{dest.guid} type={ctype.name} bytes_total={rt.stats.bytes_copied}")
    rt.send(
        Message(
            MessageKind.SATISFY,
            src.guid.node,
            {"dst": payload["event"], "slot": 0, "payload": dest.guid, "mode": Mode.NULL},
            route="dst",
        )
    )


def _can_partition(dest: DataBlock, src: DataBlock, dest_off: int, size: int) -> bool:
    return (
        dest is not src
        and dest_off == 0
        and size == dest.size
        and dest.storage is None
        and dest.partition_source is None
        and not dest.children
    )
