"""Registered example programs.

The four larger programs follow the classic extension examples (task matrix,
file doubling, explicit partitioning, copy-based partitioning).  The smaller
ones each isolate one behaviour for tests.  Every program is a ``main`` task
plus a ``summarize`` function that turns the finished runtime into the
mode-independent values compared across runs.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .api import Prop
from .blocks import DB_COPY_PARTITION, DB_COPY_PARTITION_BACK, DbPart, Mode
from .ids import GUID_BYTES, NULL_GUID, UNINITIALIZED_GUID, load_id, store_id

U32 = 4


def _u32s(view, count: int) -> tuple[int, ...]:
    return struct.unpack_from(f"<{count}I", view)


def _scale(view, count: int, factor: int) -> None:
    values = _u32s(view, count)
    struct.pack_into(f"<{count}I", view, 0, *(v * factor for v in values))


def _fill(view, count: int, value: int) -> None:
    struct.pack_into(f"<{count}I", view, 0, *([value] * count))


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(frozen=True)
class Program:
    name: str
    main: Callable
    summarize: Callable
    needs_fixture: bool = False
    description: str = ""


REGISTRY: dict[str, Program] = {}


def register(name: str, summarize: Callable, needs_fixture: bool = False):
    def wrap(main: Callable) -> Callable:
        REGISTRY[name] = Program(name, main, summarize, needs_fixture, (main.__doc__ or "").strip())
        return main

    return wrap


def _first(rt, key, default=None):
    values = rt.results.get(key)
    return values[0] if values else default


# -- matrix of tasks created through a labeled map -----------------------------

_MATRIX = struct.Struct(f"<{GUID_BYTES}s{GUID_BYTES}sQQ")  # map, template, width, height


def matrix_creator(ctx, object_lid, index, params, guids):
    width, height = params
    x, y = index % width, index // width
    deps = [guids[0], UNINITIALIZED_GUID, UNINITIALIZED_GUID]
    if x == 0:
        deps[1] = NULL_GUID
    if y == 0:
        deps[2] = NULL_GUID
    ctx.edt_create(guids[1], [x, y], deps, props=Prop.MAPPED, bind=object_lid)


def matrix_work(ctx, params, depv):
    x, y = params
    view = depv[0].ptr
    map_id = load_id(view, 0)
    template = load_id(view, GUID_BYTES)
    width, height = struct.unpack_from("<QQ", view, 2 * GUID_BYTES)
    if x == width - 1 and y == height - 1:
        ctx.edt_template_destroy(template)
        ctx.map_destroy(map_id)
        ctx.db_destroy(depv[0].guid)
        ctx.shutdown()
        return NULL_GUID
    if x < width - 1:
        right = ctx.map_get(map_id, x + 1 + y * width)
        ctx.add_dependence(NULL_GUID, right, 1)
    if y < height - 1:
        below = ctx.map_get(map_id, x + (y + 1) * width)
        ctx.add_dependence(NULL_GUID, below, 2)
    return NULL_GUID


def _summarize_matrix(rt, cfg) -> dict:
    order = [params for _, _, entry, params in rt.executed if entry == "matrix_work"]
    pos = {p: i for i, p in enumerate(order)}
    ok = len(pos) == len(order) == 9
    for (x, y), i in pos.items():
        if x > 0 and pos.get((x - 1, y), i + 1) > i:
            ok = False
        if y > 0 and pos.get((x, y - 1), i + 1) > i:
            ok = False
    creations = sorted(rt.stats.creator_calls.values())
    return {
        "work_tasks": len(order),
        "order_ok": int(ok),
        "creator_calls": sum(creations),
        "last": "%d,%d" % order[-1] if order else "",
    }


@register("matrix", _summarize_matrix)
def matrix_main(ctx, params, depv):
    """3x3 task matrix; each task waits for its left and upper neighbours."""
    width, height = ctx.args.get("width", 3), ctx.args.get("height", 3)
    db, view = ctx.db_create(_MATRIX.size)
    template = ctx.edt_template_create(matrix_work, 2, 3)
    map_id = ctx.map_create(width * height, matrix_creator, [width, height], [db, template], props=Prop.LID)
    # the map id goes into a data block, so it has to be a real global id
    map_id = ctx.get_guid(map_id)
    store_id(view, 0, map_id)
    store_id(view, GUID_BYTES, template)
    struct.pack_into("<QQ", view, 2 * GUID_BYTES, width, height)
    ctx.map_get(map_id, 0)
    return NULL_GUID


# -- file doubling ------------------------------------------------------------------


def file_work(ctx, params, depv):
    _scale(depv[0].ptr, params[0], 2)
    ctx.db_destroy(depv[0].guid)
    return NULL_GUID


def file_sum(ctx, params, depv):
    ctx.record("chunk_sum", sum(_u32s(depv[0].ptr, params[0])))
    ctx.db_destroy(depv[0].guid)
    return NULL_GUID


def file_finish(ctx, params, depv):
    ctx.shutdown()
    return NULL_GUID


def _file_check(ctx, depv, worker, mode: Mode, overlap: bool = False):
    size = ctx.file_get_size(depv[0].ptr)
    file = ctx.file_get_guid(depv[0].ptr)
    half = size // 2
    chunk1 = ctx.file_get_chunk(file, 0, half)
    chunk2 = ctx.file_get_chunk(file, half // 2 if overlap else half, half)
    ctx.file_release(file)
    ctx.db_destroy(depv[0].guid)
    worker_template = ctx.edt_template_create(worker, 1, 1)
    finish_template = ctx.edt_template_create(file_finish, 0, 2)
    params = [half // U32]
    worker1, event1 = ctx.edt_create(worker_template, params, props=Prop.LID, output_event=True)
    worker2, event2 = ctx.edt_create(worker_template, params, props=Prop.LID, output_event=True)
    finish = ctx.edt_create(finish_template, props=Prop.LID)
    ctx.add_dependence(event1, finish, 0)
    ctx.add_dependence(event2, finish, 1)
    ctx.add_dependence(chunk1, worker1, 0, mode)
    ctx.add_dependence(chunk2, worker2, 0, mode)
    ctx.edt_template_destroy(worker_template)
    ctx.edt_template_destroy(finish_template)


def file_check(ctx, params, depv):
    # chunks are taken EW: they are modified, and only written chunks are saved
    _file_check(ctx, depv, file_work, Mode.EW)
    return NULL_GUID


def file_check_readonly(ctx, params, depv):
    _file_check(ctx, depv, file_sum, Mode.RO)
    return NULL_GUID


def file_check_overlap(ctx, params, depv):
    _file_check(ctx, depv, file_work, Mode.EW, overlap=True)
    return NULL_GUID


def _open_and_check(ctx, checker):
    file, info = ctx.file_open(ctx.args["fixture"], "rb+", descriptor=True)
    template = ctx.edt_template_create(checker, 0, 1)
    ctx.edt_create(template, deps=[info], props=Prop.LID)
    ctx.edt_template_destroy(template)


def _summarize_file(rt, cfg) -> dict:
    out = {"file_sha256": _sha256(rt.args["fixture"])}
    if "chunk_sum" in rt.results:
        out["sum"] = sum(rt.results["chunk_sum"])
    return out


@register("file-double", _summarize_file, needs_fixture=True)
def file_double_main(ctx, params, depv):
    """Double every u32 of a file using two chunks processed in parallel."""
    _open_and_check(ctx, file_check)
    return NULL_GUID


@register("file-readonly", _summarize_file, needs_fixture=True)
def file_readonly_main(ctx, params, depv):
    """Sum a file through read-only chunks; the file must not change."""
    _open_and_check(ctx, file_check_readonly)
    return NULL_GUID


@register("file-overlap", _summarize_file, needs_fixture=True)
def file_overlap_main(ctx, params, depv):
    """Request two overlapping chunks; fails with ChunkOverlap."""
    _open_and_check(ctx, file_check_overlap)
    return NULL_GUID


# -- explicit partitioning -------------------------------------------------------------

WORDS = 1024
HALF = WORDS // 2


def partition_work(ctx, params, depv):
    _scale(depv[0].ptr, HALF, params[0])
    ctx.db_destroy(depv[0].guid)
    return NULL_GUID


def partition_finish(ctx, params, depv):
    ctx.record("sum", sum(_u32s(depv[0].ptr, WORDS)))
    ctx.db_destroy(depv[0].guid)
    ctx.shutdown()
    return NULL_GUID


def _partitioned_block(ctx):
    block, view = ctx.db_create(WORDS * U32)
    _fill(view, WORDS, 1)
    parts = [DbPart(0, HALF * U32), DbPart(HALF * U32, HALF * U32)]
    ctx.db_release(block)
    ctx.db_partition(block, parts)
    return block, parts


def _summarize_sum(rt, cfg) -> dict:
    return {"sum": _first(rt, "sum", -1)}


@register("partition-sum", _summarize_sum)
def partition_sum_main(ctx, params, depv):
    """Two workers scale the halves of a partitioned block; finish sums it."""
    block, parts = _partitioned_block(ctx)
    worker_template = ctx.edt_template_create(partition_work, 1, 1)
    finish_template = ctx.edt_template_create(partition_finish, 0, 3)
    finish = ctx.edt_create(finish_template, props=Prop.LID)
    worker1, event1 = ctx.edt_create(worker_template, [2], props=Prop.LID, output_event=True)
    worker2, event2 = ctx.edt_create(worker_template, [6], props=Prop.LID, output_event=True)
    ctx.edt_template_destroy(worker_template)
    ctx.edt_template_destroy(finish_template)
    ctx.add_dependence(block, finish, 0, Mode.RO)
    ctx.add_dependence(event1, finish, 1)
    ctx.add_dependence(event2, finish, 2)
    ctx.add_dependence(parts[0].guid, worker1, 0, Mode.EW)
    ctx.add_dependence(parts[1].guid, worker2, 0, Mode.EW)
    return NULL_GUID


@register("partition-gate", _summarize_sum)
def partition_gate_main(ctx, params, depv):
    """Like partition-sum, but the finish task waits on nothing except the block."""
    block, parts = _partitioned_block(ctx)
    worker_template = ctx.edt_template_create(partition_work, 1, 1)
    finish_template = ctx.edt_template_create(partition_finish, 0, 1)
    finish = ctx.edt_create(finish_template, props=Prop.LID)
    ctx.add_dependence(block, finish, 0, Mode.RO)
    for part, factor in zip(parts, (2, 6)):
        worker = ctx.edt_create(worker_template, [factor], props=Prop.LID)
        ctx.add_dependence(part.guid, worker, 0, Mode.EW)
    ctx.edt_template_destroy(worker_template)
    ctx.edt_template_destroy(finish_template)
    return NULL_GUID


def _never_runs(ctx, params, depv):
    return NULL_GUID


@register("partition-deadlock", _summarize_sum)
def partition_deadlock_main(ctx, params, depv):
    """Hand a block and one of its partitions to the same task."""
    block, parts = _partitioned_block(ctx)
    template = ctx.edt_template_create(_never_runs, 0, 2)
    task = ctx.edt_create(template, props=Prop.LID)
    ctx.add_dependence(block, task, 0, Mode.RO)
    ctx.add_dependence(parts[0].guid, task, 1, Mode.EW)
    return NULL_GUID


# -- copy-based partitioning -------------------------------------------------------------

CHUNK = HALF * U32


def copy_work(ctx, params, depv):
    factor, slot, offset = params
    finish, block = load_id(depv[1].ptr, 0), load_id(depv[1].ptr, GUID_BYTES)
    _scale(depv[0].ptr, HALF, factor)
    ctx.db_release(depv[0].guid)
    # copying back destroys the source block
    event = ctx.db_copy(block, offset * U32, depv[0].guid, 0, CHUNK, DB_COPY_PARTITION_BACK)
    ctx.add_dependence(event, finish, slot, Mode.NULL)
    return NULL_GUID


def copy_finish(ctx, params, depv):
    ctx.db_destroy(depv[3].guid)
    ctx.record("sum", sum(_u32s(depv[0].ptr, WORDS)))
    ctx.db_destroy(depv[0].guid)
    ctx.shutdown()
    return NULL_GUID


def _copy_setup(ctx, extra_params: int = 0):
    """Block of ones, a params block, and two NO_ACQUIRE halves filled by PARTITION copies."""
    block, view = ctx.db_create(WORDS * U32)
    _fill(view, WORDS, 1)
    ctx.db_release(block)
    params, params_view = ctx.db_create((2 + extra_params) * GUID_BYTES)
    chunk1, _ = ctx.db_create(CHUNK, Prop.NO_ACQUIRE | Prop.LID)
    chunk2, _ = ctx.db_create(CHUNK, Prop.NO_ACQUIRE | Prop.LID)
    copied1 = ctx.db_copy(chunk1, 0, block, 0, CHUNK, DB_COPY_PARTITION)
    copied2 = ctx.db_copy(chunk2, 0, block, CHUNK, CHUNK, DB_COPY_PARTITION)
    return block, params, params_view, (copied1, copied2)


def _summarize_copy(rt, cfg) -> dict:
    out = {"sum": _first(rt, "sum", -1)}
    if "snapshot_sum" in rt.results:
        out["snapshot_sum"] = _first(rt, "snapshot_sum")
    return out


@register("copy-partition-sum", _summarize_copy)
def copy_partition_main(ctx, params, depv):
    """Partition by copying out and back; zero-copy when the runtime aliases."""
    block, pblock, pview, (copied1, copied2) = _copy_setup(ctx)
    worker_template = ctx.edt_template_create(copy_work, 3, 2)
    finish_template = ctx.edt_template_create(copy_finish, 0, 4)
    finish = ctx.edt_create(finish_template, props=Prop.LID)
    worker1 = ctx.edt_create(worker_template, [2, 1, 0], props=Prop.LID)
    worker2 = ctx.edt_create(worker_template, [6, 2, HALF], props=Prop.LID)
    # identifiers stored in a block must be global ids
    store_id(pview, 0, ctx.get_guid(finish))
    store_id(pview, GUID_BYTES, block)
    ctx.db_release(pblock)
    ctx.edt_template_destroy(worker_template)
    ctx.edt_template_destroy(finish_template)
    ctx.add_dependence(block, finish, 0, Mode.RO)
    ctx.add_dependence(pblock, finish, 3, Mode.RO)
    ctx.add_dependence(copied1, worker1, 0, Mode.EW)
    ctx.add_dependence(copied2, worker2, 0, Mode.EW)
    ctx.add_dependence(pblock, worker1, 1, Mode.CONST)
    ctx.add_dependence(pblock, worker2, 1, Mode.CONST)
    return NULL_GUID


def cow_writer(ctx, params, depv):
    """Writes its half while a second alias of the same bytes is still alive."""
    block = load_id(depv[1].ptr, GUID_BYTES)
    ctx.record("snapshot_sum", sum(_u32s(depv[2].ptr, HALF)))
    ctx.db_release(depv[2].guid)
    snapshot_back = ctx.db_copy(block, 0, depv[2].guid, 0, CHUNK, DB_COPY_PARTITION_BACK)
    _scale(depv[0].ptr, HALF, params[0])
    ctx.db_release(depv[0].guid)
    template = ctx.edt_template_create(cow_copy_back, 0, 3)
    backer = ctx.edt_create(template, props=Prop.LID)
    ctx.edt_template_destroy(template)
    ctx.add_dependence(snapshot_back, backer, 0, Mode.NULL)
    ctx.add_dependence(depv[0].guid, backer, 1, Mode.NULL)
    ctx.add_dependence(depv[1].guid, backer, 2, Mode.CONST)
    return NULL_GUID


def cow_copy_back(ctx, params, depv):
    finish, block = load_id(depv[2].ptr, 0), load_id(depv[2].ptr, GUID_BYTES)
    event = ctx.db_copy(block, 0, depv[1].guid, 0, CHUNK, DB_COPY_PARTITION_BACK)
    ctx.add_dependence(event, finish, 1, Mode.NULL)
    return NULL_GUID


@register("copy-partition-cow", _summarize_copy)
def copy_cow_main(ctx, params, depv):
    """copy-partition-sum plus an overlapping snapshot alias, forcing one copy-on-write."""
    block, pblock, pview, (copied1, copied2) = _copy_setup(ctx)
    snapshot, _ = ctx.db_create(CHUNK, Prop.NO_ACQUIRE | Prop.LID)
    snapped = ctx.db_copy(snapshot, 0, block, 0, CHUNK, DB_COPY_PARTITION)
    writer_template = ctx.edt_template_create(cow_writer, 1, 3)
    worker_template = ctx.edt_template_create(copy_work, 3, 2)
    finish_template = ctx.edt_template_create(copy_finish, 0, 4)
    finish = ctx.edt_create(finish_template, props=Prop.LID)
    writer = ctx.edt_create(writer_template, [2], props=Prop.LID)
    worker2 = ctx.edt_create(worker_template, [6, 2, HALF], props=Prop.LID)
    store_id(pview, 0, ctx.get_guid(finish))
    store_id(pview, GUID_BYTES, block)
    ctx.db_release(pblock)
    for template in (writer_template, worker_template, finish_template):
        ctx.edt_template_destroy(template)
    ctx.add_dependence(block, finish, 0, Mode.RO)
    ctx.add_dependence(pblock, finish, 3, Mode.RO)
    ctx.add_dependence(copied1, writer, 0, Mode.EW)
    ctx.add_dependence(pblock, writer, 1, Mode.CONST)
    ctx.add_dependence(snapped, writer, 2, Mode.RO)
    ctx.add_dependence(copied2, worker2, 0, Mode.EW)
    ctx.add_dependence(pblock, worker2, 1, Mode.CONST)
    return NULL_GUID


# -- micro-programs -----------------------------------------------------------------------


def launch_target(ctx, params, depv):
    ctx.record("value", struct.unpack_from("<Q", depv[0].ptr)[0])
    ctx.db_destroy(depv[0].guid)
    ctx.shutdown()
    return NULL_GUID


def _summarize_values(rt, cfg) -> dict:
    return {key: ",".join(str(v) for v in sorted(vals)) for key, vals in sorted(rt.results.items())}


@register("launch-task", _summarize_values)
def launch_task_main(ctx, params, depv):
    """Create a task by LID and wire a data block to it before the LID resolves."""
    data, view = ctx.db_create(8)
    struct.pack_into("<Q", view, 0, 42)
    ctx.db_release(data)
    template = ctx.edt_template_create(launch_target, 0, 1)
    task = ctx.edt_create(template, [], paramc=0, depc=1, props=Prop.LID)
    ctx.add_dependence(data, task, 0, Mode.EW)
    ctx.edt_template_destroy(template)
    return NULL_GUID


def two_lid_target(ctx, params, depv):
    ctx.record("payloads", sum(1 for d in depv if d.guid is NULL_GUID))
    ctx.shutdown()
    return NULL_GUID


@register("two-lid", _summarize_values)
def two_lid_main(ctx, params, depv):
    """Messages naming two unresolved LIDs wait for both."""
    template = ctx.edt_template_create(two_lid_target, 0, 2)
    first = ctx.event_create(Prop.LID)
    second = ctx.event_create(Prop.LID)
    task = ctx.edt_create(template, props=Prop.LID)
    ctx.add_dependence(first, task, 0)
    ctx.add_dependence(second, task, 1)
    ctx.event_satisfy(second)
    ctx.event_satisfy(first)
    ctx.edt_template_destroy(template)
    return NULL_GUID


STRESS_TASKS = 8
STRESS_SLOTS = 16


def stress_creator(ctx, object_lid, index, params, guids):
    ctx.event_create(Prop.MAPPED, bind=object_lid)


def stress_getter(ctx, params, depv):
    map_id = depv[0].guid
    ids = [ctx.map_get(map_id, i) for i in range(STRESS_SLOTS)]
    for index, ident in enumerate(ids):
        ctx.record("resolved", (index, str(ctx.get_guid(ident))))
    return NULL_GUID


def stress_finish(ctx, params, depv):
    ctx.shutdown()
    return NULL_GUID


def _summarize_stress(rt, cfg) -> dict:
    seen: dict[int, set] = {}
    for index, guid in rt.results.get("resolved", []):
        seen.setdefault(index, set()).add(guid)
    calls = rt.stats.creator_calls
    agree = len(seen) == STRESS_SLOTS and all(len(g) == 1 for g in seen.values())
    return {
        "creator_calls": sum(calls.values()),
        "max_calls_per_index": max(calls.values(), default=0),
        "resolutions": len(rt.results.get("resolved", [])),
        "agreement": int(agree),
    }


@register("map-stress", _summarize_stress)
def map_stress_main(ctx, params, depv):
    """Eight tasks race to get every element of a 16-slot map."""
    map_id = ctx.map_create(STRESS_SLOTS, stress_creator)
    getter = ctx.edt_template_create(stress_getter, 0, 1)
    finisher = ctx.edt_template_create(stress_finish, 0, STRESS_TASKS)
    finish = ctx.edt_create(finisher, props=Prop.LID)
    for slot in range(STRESS_TASKS):
        task, done = ctx.edt_create(getter, props=Prop.LID, output_event=True)
        ctx.add_dependence(done, finish, slot)
        # the map id reaches each getter as an event payload
        handoff = ctx.event_create(Prop.LID)
        ctx.add_dependence(handoff, task, 0)
        ctx.event_satisfy(handoff, map_id)
    ctx.edt_template_destroy(getter)
    ctx.edt_template_destroy(finisher)
    return NULL_GUID


@register("shutdown-only", _summarize_values)
def shutdown_only_main(ctx, params, depv):
    """Does nothing but shut down."""
    ctx.shutdown()
    return NULL_GUID


def names() -> list[str]:
    return sorted(REGISTRY)
