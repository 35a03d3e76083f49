from pathlib import Path

from support import causal_violations

from ocrx.harness import RunConfig, run_program

GOLDEN = Path(__file__).parent / "golden" / "launch_task_seed1.trace"


def _launch(seed=1, **kw):
    return run_program(RunConfig("launch-task", nodes=2, seed=seed, **kw))


def test_launch_task_matches_golden():
    assert _launch().trace == GOLDEN.read_text()


def test_golden_shows_the_chain():
    assert causal_violations(GOLDEN.read_text().splitlines()) == []


def test_chain_holds_for_other_seeds():
    for seed in range(20):
        assert causal_violations(_launch(seed).trace.splitlines()) == [], seed


def test_local_placement_needs_no_resolution():
    lines = _launch(placement="local").trace.splitlines()
    assert not any("MapResolution" in x or "defer" in x for x in lines)
