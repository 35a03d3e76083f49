import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from support import noop, run_main

from ocrx import NULL_GUID, UNINITIALIZED_GUID, GlobalId, IdClass, LocalId, Mode, ObjectKind, Prop, Runtime
from ocrx.api import EDT_PARAM_DEF
from ocrx.core import SlotStatus, Task
from ocrx.errors import (
    AlreadySatisfied,
    BadArity,
    BadSize,
    BadSlot,
    DeadlockDetected,
    InvalidId,
    LidOwnershipViolation,
    NotAcquired,
    SlotOccupied,
)
from ocrx.substrate import ScriptedChooser, enumerate_schedules


def test_shutdown_only():
    def main(ctx, params, depv):
        ctx.shutdown()

    rt = run_main(main)
    assert rt.stats.tasks_executed == 1
    assert rt.deliveries == 0


def test_template_use_after_destroy():
    def main(ctx, params, depv):
        t = ctx.edt_template_create(noop, 0, 0)
        ctx.edt_template_destroy(t)
        ctx.edt_create(t)

    with pytest.raises(InvalidId):
        run_main(main)


def test_template_destroy_unknown():
    def main(ctx, params, depv):
        ctx.edt_template_destroy(GlobalId(0, 99, ObjectKind.TEMPLATE))

    with pytest.raises(InvalidId):
        run_main(main)


def test_arity_is_checked():
    def main(ctx, params, depv):
        t = ctx.edt_template_create(noop, 2, 3)
        ctx.edt_create(t, [1])

    with pytest.raises(BadArity):
        run_main(main)


def test_template_destroyed_while_task_pending():
    def main(ctx, params, depv):
        t = ctx.edt_template_create(noop, 1, 1)
        task = ctx.edt_create(t, [5], paramc=EDT_PARAM_DEF)
        ctx.edt_template_destroy(t)
        ctx.add_dependence(NULL_GUID, task, 0)

    rt = run_main(main)
    assert rt.stats.tasks_executed == 2


def test_dep_variants_null_and_uninitialized():
    states = {}

    def main(ctx, params, depv):
        t = ctx.edt_template_create(noop, 0, 3)
        db, _ = ctx.db_create(8)
        task = ctx.edt_create(t, deps=[db, UNINITIALIZED_GUID, NULL_GUID])
        obj = ctx.rt.objects[task]
        states["slots"] = [s.status for s in obj.slots]
        ctx.shutdown()

    run_main(main)
    assert states["slots"] == [SlotStatus.SATISFIED, SlotStatus.UNCONNECTED, SlotStatus.SATISFIED]


def test_add_dependence_errors():
    def bad_slot(ctx, params, depv):
        task = ctx.edt_create(ctx.edt_template_create(noop, 0, 1))
        ctx.add_dependence(NULL_GUID, task, 1)

    def double(ctx, params, depv):
        task = ctx.edt_create(ctx.edt_template_create(noop, 0, 1))
        ctx.add_dependence(NULL_GUID, task, 0)
        ctx.add_dependence(NULL_GUID, task, 0)

    with pytest.raises(BadSlot):
        run_main(bad_slot)
    with pytest.raises(SlotOccupied):
        run_main(double)


def test_event_payload_forwarding_and_late_sinks():
    got = []

    def sink(ctx, params, depv):
        got.append(depv[0].guid)

    def main(ctx, params, depv):
        t = ctx.edt_template_create(sink, 0, 1)
        ev = ctx.event_create()
        early = ctx.edt_create(t)
        ctx.add_dependence(ev, early, 0)
        ctx.event_satisfy(ev, NULL_GUID)
        late = ctx.edt_create(t)
        ctx.add_dependence(ev, late, 0)

    rt = run_main(main, nodes=3, seed=4)
    assert got == [NULL_GUID, NULL_GUID]
    assert rt.stats.tasks_executed == 3


def test_double_satisfy():
    def main(ctx, params, depv):
        ev = ctx.event_create()
        ctx.event_satisfy(ev)
        ctx.event_satisfy(ev)

    with pytest.raises(AlreadySatisfied):
        run_main(main)


def test_output_event_carries_return_value():
    got = []

    def producer(ctx, params, depv):
        db, _ = ctx.db_create(4, Prop.NO_ACQUIRE)
        return db

    def consumer(ctx, params, depv):
        got.append((depv[0].guid.kind.label, depv[0].mode, len(depv[0].ptr)))

    def main(ctx, params, depv):
        p, done = ctx.edt_create(ctx.edt_template_create(producer, 0, 0), output_event=True)
        c = ctx.edt_create(ctx.edt_template_create(consumer, 0, 1))
        ctx.add_dependence(done, c, 0, Mode.RW)

    run_main(main, nodes=2)
    assert got == [("DataBlock", Mode.RW, 4)]


def test_db_create_zero_filled_and_visible_after_release():
    seen = []

    def reader(ctx, params, depv):
        seen.append(bytes(depv[0].ptr))

    def main(ctx, params, depv):
        db, view = ctx.db_create(4096)
        assert bytes(view) == bytes(4096)
        view[:3] = b"abc"
        ctx.db_release(db)
        task = ctx.edt_create(ctx.edt_template_create(reader, 0, 1))
        ctx.add_dependence(db, task, 0, Mode.RO)

    run_main(main, nodes=2, seed=3)
    assert seen[0][:4] == b"abc\0" and len(seen[0]) == 4096


def test_db_create_no_acquire_and_bad_size():
    out = {}

    def main(ctx, params, depv):
        out["pair"] = ctx.db_create(2048, Prop.NO_ACQUIRE)
        ctx.db_create(0)

    with pytest.raises(BadSize):
        run_main(main)
    assert out["pair"][1] is None


def test_release_without_grant():
    def main(ctx, params, depv):
        db, _ = ctx.db_create(8, Prop.NO_ACQUIRE)
        ctx.db_release(db)

    with pytest.raises(NotAcquired):
        run_main(main)


def test_double_destroy():
    def main(ctx, params, depv):
        db, _ = ctx.db_create(8)
        ctx.db_destroy(db)
        ctx.db_destroy(db)

    with pytest.raises(InvalidId):
        run_main(main)


def test_ro_view_is_read_only():
    errors = []

    def reader(ctx, params, depv):
        try:
            depv[0].ptr[0] = 1
        except TypeError as exc:
            errors.append(exc)

    def main(ctx, params, depv):
        db, _ = ctx.db_create(8, Prop.NO_ACQUIRE)
        task = ctx.edt_create(ctx.edt_template_create(reader, 0, 1))
        ctx.add_dependence(db, task, 0, Mode.CONST)

    run_main(main)
    assert len(errors) == 1


def test_ew_waits_for_ro_release():
    order = []

    def reader(ctx, params, depv):
        order.append("ro")

    def writer(ctx, params, depv):
        order.append("ew")

    def main(ctx, params, depv):
        db, _ = ctx.db_create(8, Prop.NO_ACQUIRE)
        r = ctx.edt_create(ctx.edt_template_create(reader, 0, 1))
        ctx.add_dependence(db, r, 0, Mode.RO)
        w = ctx.edt_create(ctx.edt_template_create(writer, 0, 1))
        ctx.add_dependence(db, w, 0, Mode.EW)

    run_main(main, placement="local")
    assert order == ["ro", "ew"]


# -- exclusive write never coexists with another grant ------------------------------


def _contention(chooser):
    """Three tasks (EW, RO, RW) contend for one block; record grant overlaps."""
    violations = []

    def body(ctx, params, depv):
        block = ctx.rt.block(depv[0].guid)
        modes = list(block.grants.values())
        if Mode.EW in modes and len(modes) > 1:
            violations.append(modes)

    def main(ctx, params, depv):
        db, _ = ctx.db_create(8, Prop.NO_ACQUIRE)
        t = ctx.edt_template_create(body, 0, 1)
        for mode in (Mode.EW, Mode.RO, Mode.RW):
            ctx.add_dependence(db, ctx.edt_create(t, props=Prop.LID), 0, mode)

    rt = Runtime(2, chooser=chooser)
    rt.run(main)
    return tuple(violations), rt.stats.tasks_executed


def test_mode_exclusion_over_many_schedules():
    results = list(enumerate_schedules(_contention, limit=400))
    assert len(results) == 400
    assert all(r.outcome == ((), 4) for r in results)


class _Wrapped(ScriptedChooser):
    """Scripted chooser whose picks wrap around instead of failing."""

    def choose(self, n):
        i = len(self.taken)
        pick = self.prefix[i] % n if i < len(self.prefix) else 0
        self.taken.append(pick)
        self.widths.append(n)
        return pick


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 7), max_size=60))
def test_mode_exclusion_random_schedules(prefix):
    assert _contention(_Wrapped(prefix)) == ((), 4)


# -- local identifiers ---------------------------------------------------------------------


def test_local_placement_returns_guids_even_when_lid_requested():
    kinds = []

    def main(ctx, params, depv):
        t = ctx.edt_template_create(noop, 0, 0)
        kinds.append(ctx.id_type(ctx.edt_create(t, props=Prop.LID)))
        kinds.append(ctx.id_type(ctx.event_create(Prop.LID)))

    run_main(main, nodes=4, placement="local")
    assert kinds == [IdClass.GUID, IdClass.GUID]


def test_remote_placement_returns_lids_and_get_guid_resolves():
    out = {}

    def main(ctx, params, depv):
        ev = ctx.event_create(Prop.LID)
        out["type"] = ctx.id_type(ev)
        before = ctx.rt.deliveries
        guid = ctx.get_guid(ev)
        out["pumped"] = ctx.rt.deliveries - before
        out["resolved"] = ctx.id_type(guid)
        out["same"] = ctx.get_guid(guid) is guid

    run_main(main, nodes=2)
    assert out == {"type": IdClass.LID, "pumped": 2, "resolved": IdClass.GUID, "same": True}


def test_eager_mode_never_returns_lids():
    kinds = set()

    def main(ctx, params, depv):
        t = ctx.edt_template_create(noop, 0, 0)
        for _ in range(4):
            kinds.add(ctx.id_type(ctx.edt_create(t, props=Prop.LID)))

    run_main(main, nodes=3, mode="eager")
    assert kinds == {IdClass.GUID}


def test_foreign_lid_is_rejected():
    stash = {}

    def child(ctx, params, depv):
        ctx.get_guid(stash["lid"])

    def main(ctx, params, depv):
        stash["lid"] = ctx.event_create(Prop.LID)
        ctx.edt_create(ctx.edt_template_create(child, 0, 0))

    with pytest.raises(LidOwnershipViolation):
        run_main(main, nodes=2)


def test_foreign_lid_in_api_call_is_rejected():
    stash = {}

    def child(ctx, params, depv):
        ctx.event_satisfy(stash["lid"])

    def main(ctx, params, depv):
        stash["lid"] = ctx.event_create(Prop.LID)
        ctx.edt_create(ctx.edt_template_create(child, 0, 0))

    with pytest.raises(LidOwnershipViolation):
        run_main(main, nodes=2)


def test_deferred_messages_survive_their_task():
    def main(ctx, params, depv):
        t = ctx.edt_template_create(noop, 0, 1)
        task = ctx.edt_create(t, props=Prop.LID)
        ctx.add_dependence(NULL_GUID, task, 0)
        assert isinstance(task, LocalId)

    rt = run_main(main, nodes=2)
    assert rt.stats.tasks_executed == 2
    assert any("defer AddDependence" in line for line in rt.tracer.lines)


def test_delivered_payloads_never_contain_lids():
    from ocrx.ids import iter_ids
    from ocrx.programs import REGISTRY
    from ocrx.substrate import MessageKind

    for program in ("matrix", "copy-partition-sum", "two-lid", "map-stress"):
        rt = Runtime(4, seed=2)
        handler = rt.substrate.handler
        leaked = []

        def check(msg, handler=handler, leaked=leaked):
            payload = dict(msg.payload)
            if msg.kind is MessageKind.MAP_RESOLUTION:
                payload.pop("lid")  # the one place a LID is the subject
            leaked.extend(i for i in iter_ids(payload) if isinstance(i, LocalId))
            handler(msg)

        rt.substrate.handler = check
        rt.run(REGISTRY[program].main)
        assert leaked == [], program


def test_unresolvable_wait_is_a_deadlock():
    def main(ctx, params, depv):
        ctx.get_guid(ctx.new_lid())

    with pytest.raises(DeadlockDetected):
        run_main(main)


def test_quiescence_with_unrun_task_is_a_deadlock():
    def main(ctx, params, depv):
        ctx.edt_create(ctx.edt_template_create(noop, 0, 1))

    with pytest.raises(DeadlockDetected):
        run_main(main)


def test_clean_quiescence_without_shutdown():
    rt = run_main(noop)
    assert rt.stats.tasks_executed == 1


def test_tasks_run_at_most_once():
    def main(ctx, params, depv):
        t = ctx.edt_template_create(noop, 0, 1)
        for _ in range(5):
            ctx.add_dependence(NULL_GUID, ctx.edt_create(t, props=Prop.LID), 0)

    rt = run_main(main, nodes=3, seed=9)
    guids = [g for _, g, _, _ in rt.executed]
    assert len(guids) == len(set(guids)) == 6
    assert all(t.state == "done" for t in rt.objects.values() if isinstance(t, Task))
