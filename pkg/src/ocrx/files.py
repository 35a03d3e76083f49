"""File-mapped data blocks.

A file object is opened asynchronously at its home node.  Its descriptor
block (24 bytes: serialized file id, then the size at open as u64 LE) only
becomes acquirable once the open has completed, which is how tasks wait for
it.  Chunks map disjoint byte ranges of the file into data blocks and are
written back when destroyed, provided some task acquired them RW or EW.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .blocks import WRITE_MODES, DataBlock, overlaps, retry
from .errors import (
    BadDescriptor,
    BadMode,
    BadRange,
    BadSize,
    ChunkOverlap,
    FileReleased,
    InvalidId,
    IoError,
    OpenFailed,
)
from .ids import GUID_BYTES, GlobalId, ObjectKind, decode_id, encode_id
from .substrate import Message, MessageKind

if TYPE_CHECKING:
    from .core import Runtime

DESCRIPTOR_SIZE = GUID_BYTES + 8
_SIZE_FMT = struct.Struct("<Q")


@dataclass(frozen=True)
class OpenMode:
    writable: bool
    create: bool
    truncate: bool


_MODES = {
    "r": OpenMode(False, False, False),
    "r+": OpenMode(True, False, False),
    "w": OpenMode(True, True, True),
    "w+": OpenMode(True, True, True),
    "a": OpenMode(True, True, False),
    "a+": OpenMode(True, True, False),
}


def parse_mode(mode: str) -> OpenMode:
    key = mode.replace("b", "")
    if key not in _MODES or mode.count("b") > 1:
        raise BadMode(f"unsupported open mode {mode!r}")
    return _MODES[key]


@dataclass
class Chunk:
    offset: int
    size: int
    block: GlobalId
    live: bool = True

    @property
    def span(self) -> tuple[int, int]:
        return (self.offset, self.offset + self.size)


@dataclass
class FileObject:
    guid: GlobalId
    path: str
    mode: str
    open_mode: OpenMode
    descriptor: GlobalId | None = None
    size_at_open: int = 0
    handle: object = None
    opened: bool = False
    failed: str | None = None
    released: bool = False
    closed: bool = False
    chunks: list[Chunk] = field(default_factory=list)
    waiting: list = field(default_factory=list)

    def live_chunks(self) -> list[Chunk]:
        return [c for c in self.chunks if c.live]


# -- descriptor helpers ------------------------------------------------------


def encode_descriptor(file_guid: GlobalId, size: int) -> bytes:
    return encode_id(file_guid) + _SIZE_FMT.pack(size)


def _check_descriptor(view) -> None:
    if view is None:
        raise OpenFailed("descriptor is not available; the file failed to open")
    if len(view) != DESCRIPTOR_SIZE:
        raise BadDescriptor(f"descriptor must be {DESCRIPTOR_SIZE} bytes, got {len(view)}")


def file_get_guid(view) -> GlobalId:
    _check_descriptor(view)
    return decode_id(view[:GUID_BYTES])


def file_get_size(view) -> int:
    _check_descriptor(view)
    return _SIZE_FMT.unpack(bytes(view[GUID_BYTES:DESCRIPTOR_SIZE]))[0]


# -- materializers and handlers ------------------------------------------------


def make_file(rt: Runtime, spec: dict, home: int) -> list[GlobalId]:
    guid = rt.issue(home, ObjectKind.FILE)
    fobj = FileObject(guid, spec["path"], spec["mode"], parse_mode(spec["mode"]))
    rt.objects[guid] = fobj
    rt.files.append(fobj)
    out = [guid]
    if spec["descriptor"]:
        dguid = rt.issue(home, ObjectKind.DATABLOCK)
        rt.objects[dguid] = DataBlock(dguid, DESCRIPTOR_SIZE, ready=False)
        fobj.descriptor = dguid
        out.append(dguid)
    rt.send(Message(MessageKind.FILE_OP, home, {"fop": "open", "file": guid}, target=home))
    return out


def _open(rt: Runtime, fobj: FileObject) -> None:
    om = fobj.open_mode
    try:
        exists = os.path.exists(fobj.path)
        if not exists and not om.create:
            raise FileNotFoundError(fobj.path)
        if om.truncate or not exists:
            with open(fobj.path, "wb"):
                pass
        fobj.handle = open(fobj.path, "r+b" if om.writable else "rb")
        fobj.handle.seek(0, os.SEEK_END)
        fobj.size_at_open = fobj.handle.tell()
    except OSError as exc:
        fobj.failed = f"{type(exc).__name__}: {exc}"
    fobj.opened = True
    rt.trace(f"file-open {fobj.guid} path={os.path.basename(fobj.path)} "
             f"size={fobj.size_at_open} ok={fobj.failed is None}")
    if fobj.descriptor is not None:
        desc = rt.objects[fobj.descriptor]
        if fobj.failed:
            desc.error = "OpenFailed"
        else:
            desc.write(0, encode_descriptor(fobj.guid, fobj.size_at_open))
        desc.ready = True
        retry(rt, desc)
    waiting, fobj.waiting = fobj.waiting, []
    for op in waiting:
        op()


def handle_file_op(rt: Runtime, msg: Message) -> None:
    fobj = rt.file(msg.payload["file"])
    fop = msg.payload["fop"]
    if fop == "open":
        _open(rt, fobj)
    elif not fobj.opened:
        fobj.waiting.append(lambda: handle_file_op(rt, msg))
    elif fop == "release":
        if fobj.released or fobj.closed:
            raise InvalidId(f"{fobj.guid} released twice")
        fobj.released = True
        maybe_close(rt, fobj)
    else:
        raise ValueError(f"unknown file op {fop}")


def chunk_ready(rt: Runtime, spec: dict) -> bool:
    fobj = rt.objects.get(spec["file"])
    return isinstance(fobj, FileObject) and fobj.opened


def defer_until_open(rt: Runtime, spec: dict, op) -> bool:
    """Queue ``op`` if the file has not finished opening yet."""
    fobj = rt.file(spec["file"])
    if fobj.opened:
        return False
    fobj.waiting.append(op)
    return True


def make_chunk(rt: Runtime, spec: dict, home: int) -> list[GlobalId]:
    fobj = rt.file(spec["file"])
    offset, size = spec["offset"], spec["size"]
    if fobj.failed:
        raise OpenFailed(f"{fobj.path}: {fobj.failed}")
    if fobj.released or fobj.closed:
        raise FileReleased(f"{fobj.guid} was released; no more chunks")
    if size <= 0 or offset < 0:
        raise BadSize(f"chunk [{offset},{offset + size}) is empty or negative")
    span = (offset, offset + size)
    for c in fobj.chunks:
        if overlaps(c.span, span):
            raise ChunkOverlap(f"chunk {span} overlaps chunk {c.span} of {fobj.guid}")
    handle = fobj.handle
    handle.seek(0, os.SEEK_END)
    length = handle.tell()
    if span[1] > length:
        if not fobj.open_mode.writable:
            raise BadRange(f"chunk {span} extends past end of read-only file ({length} bytes)")
        try:
            handle.write(bytes(span[1] - length))
            handle.flush()
        except OSError as exc:
            raise IoError(str(exc)) from exc
        rt.trace(f"file-grow {fobj.guid} {length}->{span[1]}")
    handle.seek(offset)
    data = handle.read(size)
    guid = rt.issue(home, ObjectKind.DATABLOCK)
    block = DataBlock(guid, size, storage=bytearray(data.ljust(size, b"\0")),
                      chunk_file=fobj, chunk_offset=offset)
    rt.objects[guid] = block
    fobj.chunks.append(Chunk(offset, size, guid))
    return [guid]


def write_back(rt: Runtime, block: DataBlock) -> None:
    fobj: FileObject = block.chunk_file
    dirty = bool(block.mode_history & WRITE_MODES)
    if dirty:
        try:
            fobj.handle.seek(block.chunk_offset)
            fobj.handle.write(block.read())
            fobj.handle.flush()
        except (OSError, ValueError) as exc:
            raise IoError(f"write-back to {fobj.path} failed: {exc}") from exc
    rt.trace(f"write-back {block.guid} offset={block.chunk_offset} size={block.size} written={dirty}")
    for c in fobj.chunks:
        if c.block == block.guid:
            c.live = False
    maybe_close(rt, fobj)


def maybe_close(rt: Runtime, fobj: FileObject, force: bool = False) -> None:
    if fobj.closed or not (force or (fobj.released and not fobj.live_chunks())):
        return
    fobj.closed = True
    if fobj.handle is not None:
        fobj.handle.close()
    rt.trace(f"file-close {fobj.guid}")
