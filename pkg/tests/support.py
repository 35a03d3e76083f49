from ocrx import NULL_GUID, Runtime


def run_main(main, nodes=1, **kwargs):
    """Run ``main`` as the first task and return the finished runtime."""
    rt = Runtime(nodes, **kwargs)
    rt.run(main)
    return rt


def started(main, nodes=1, **kwargs):
    """A runtime with ``main`` created but nothing executed yet."""
    rt = Runtime(nodes, **kwargs)
    rt.start(main)
    return rt


def noop(ctx, params, depv):
    return NULL_GUID


def causal_violations(lines: list[str]) -> list[str]:
    """Check the create / defer / resolve / patched-send chain in one trace."""

    def first(pred, start=0):
        return next((i for i in range(start, len(lines)) if pred(lines[i])), None)

    problems = []
    create = first(lambda x: "deliver CreateObject" in x and "lid=[L" in x and "op=task" in x)
    if create is None:
        return ["no CreateObject carrying a LocalId"]
    lid = lines[create].split("lid=[", 1)[1].split("]", 1)[0]
    deferred = first(lambda x: "defer AddDependence" in x and f"dst={lid}" in x)
    resolution = first(lambda x: "deliver MapResolution" in x and f"lid={lid}" in x)
    if deferred is None or resolution is None:
        return [f"missing deferral or resolution for {lid}"]
    guid = lines[resolution].split("guid=", 1)[1].split()[0]
    patched = first(lambda x: "deliver AddDependence" in x and f"dst={guid}" in x, resolution)
    if not deferred < create < resolution:
        problems.append("defer / create / resolution out of order")
    if patched is None:
        problems.append(f"no AddDependence naming {guid} after resolution")
    if any(lid in x for x in lines[resolution + 1:] if "deliver" in x):
        problems.append("LocalId reached a delivery after resolution")
    return problems


# criterion number -> "PASS" / "FAIL ..." filled in by the acceptance tests
CRITERIA: dict[int, str] = {}


def report(number: int, problems: list) -> None:
    """Record and print one criterion line, then fail the test if needed."""
    line = "PASS" if not problems else f"FAIL {problems[:3]}"
    CRITERIA[number] = line
    print(f"criterion {number}: {line}")
    assert not problems, problems
