import pytest
from support import noop, run_main

from ocrx import NULL_GUID, IdClass, Mode, Prop
from ocrx.errors import BadIndex, BadSize, CreatorContractViolation, InvalidId


def event_creator(ctx, object_lid, index, params, guids):
    ctx.event_create(Prop.MAPPED, bind=object_lid)


def lazy_creator(ctx, object_lid, index, params, guids):
    pass


def test_first_get_runs_creator_once_and_agrees():
    out = {}

    def main(ctx, params, depv):
        m = ctx.map_create(4, event_creator)
        a, b = ctx.map_get(m, 2), ctx.map_get(m, 2)
        out["distinct"] = a != b
        out["same"] = ctx.get_guid(a) == ctx.get_guid(b)

    rt = run_main(main, nodes=2, seed=1)
    assert out == {"distinct": True, "same": True}
    assert list(rt.stats.creator_calls.values()) == [1]


def test_map_get_never_delivers_messages_in_deferred_mode():
    deliveries = []

    def main(ctx, params, depv):
        m = ctx.map_create(8, event_creator)
        for i in range(8):
            before = ctx.rt.deliveries
            ctx.map_get(m, i)
            deliveries.append(ctx.rt.deliveries - before)

    rt = run_main(main, nodes=3, seed=5)
    assert deliveries == [0] * 8
    assert rt.stats.blocking_map_gets == 0


def test_created_local_slot_shortcuts_to_guid():
    kinds = []

    def main(ctx, params, depv):
        m = ctx.map_create(2, event_creator)
        ctx.get_guid(ctx.map_get(m, 0))
        kinds.append(ctx.id_type(ctx.map_get(m, 0)))
        kinds.append(ctx.id_type(ctx.map_get(m, 1)))

    run_main(main, placement="local")
    assert kinds == [IdClass.GUID, IdClass.LID]


def test_bad_index_and_size():
    def oob(ctx, params, depv):
        ctx.map_get(ctx.map_create(9, event_creator), 9)

    def empty(ctx, params, depv):
        ctx.map_create(0, event_creator)

    with pytest.raises(BadIndex):
        run_main(oob)
    with pytest.raises(BadSize):
        run_main(empty)


def test_destroyed_map():
    def get_after(ctx, params, depv):
        m = ctx.map_create(1, event_creator)
        ctx.map_destroy(m)
        ctx.get_guid(ctx.map_get(m, 0))

    def twice(ctx, params, depv):
        m = ctx.map_create(1, event_creator)
        ctx.map_destroy(m)
        ctx.map_destroy(m)

    with pytest.raises(InvalidId):
        run_main(get_after)
    with pytest.raises(InvalidId):
        run_main(twice)


def test_destroy_does_not_cascade():
    def main(ctx, params, depv):
        m = ctx.map_create(1, event_creator)
        ev = ctx.get_guid(ctx.map_get(m, 0))
        ctx.map_destroy(m)
        ctx.event_satisfy(ev)

    rt = run_main(main, nodes=2)
    assert any(getattr(o, "satisfied", False) for o in rt.objects.values())


def test_creator_must_bind():
    def main(ctx, params, depv):
        ctx.map_get(ctx.map_create(2, lazy_creator), 0)

    with pytest.raises(CreatorContractViolation):
        run_main(main)


def test_mapped_outside_creator_is_rejected():
    def main(ctx, params, depv):
        ctx.event_create(Prop.MAPPED, bind=ctx.new_lid())

    with pytest.raises(CreatorContractViolation):
        run_main(main)


def test_data_block_elements_have_no_view():
    seen = []

    def db_creator(ctx, object_lid, index, params, guids):
        ident, view = ctx.db_create(16, Prop.MAPPED, bind=object_lid)
        seen.append(view)

    def reader(ctx, params, depv):
        seen.append(len(depv[0].ptr))

    def main(ctx, params, depv):
        m = ctx.map_create(1, db_creator)
        block = ctx.map_get(m, 0)
        task = ctx.edt_create(ctx.edt_template_create(reader, 0, 1), props=Prop.LID)
        ctx.add_dependence(block, task, 0, Mode.RO)

    run_main(main, nodes=2, seed=2)
    assert seen == [None, 16]


def test_guids_with_lids_are_deferred_like_any_payload():
    got = []

    def creator(ctx, object_lid, index, params, guids):
        ctx.edt_create(guids[0], deps=[NULL_GUID], props=Prop.MAPPED, bind=object_lid)

    def main(ctx, params, depv):
        t = ctx.edt_template_create(noop, 0, 1)
        ev = ctx.event_create(Prop.LID)
        m = ctx.map_create(1, creator, [], [t, ev], props=Prop.LID)
        got.append(ctx.id_type(m))
        ctx.map_get(m, 0)

    for mode in ("deferred", "eager"):
        rt = run_main(main, nodes=2, mode=mode)
        assert rt.stats.tasks_executed == 2
    assert got == [IdClass.LID, IdClass.GUID]
