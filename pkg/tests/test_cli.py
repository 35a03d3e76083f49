import subprocess
import sys

import pytest

from ocrx.cli import main
from ocrx.harness import RunSummary


def _pairs(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines())


def test_gen_file_writes_little_endian_counter(tmp_path, capsys):
    path = tmp_path / "data.dat"
    assert main(["gen-file", str(path), "3"]) == 0
    assert path.read_bytes() == b"\x01\0\0\0\x02\0\0\0\x03\0\0\0"


def test_gen_file_unwritable_path(tmp_path):
    assert main(["gen-file", str(tmp_path / "no" / "such" / "dir" / "f"), "4"]) == 5


def test_run_prints_key_value_summary(capsys):
    assert main(["run", "partition-sum", "--nodes", "2", "--seed", "1"]) == 0
    out = _pairs(capsys.readouterr().out)
    assert out["outcome"] == "Success" and out["sum"] == "4096"
    assert out["bytes_bulk_copied"] == "0"


def test_eager_partition_impl_flag(capsys):
    main(["run", "copy-partition-sum", "--nodes", "2", "--partition-impl", "eager"])
    assert _pairs(capsys.readouterr().out)["bytes_bulk_copied"] == "8192"


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "no-such-program"],
        ["run", "matrix", "--nodes", "0"],
        ["run", "matrix", "--mode", "sometimes"],
        ["gen-file", "x", "-1"],
        [],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


def test_runtime_error_exit_code(capsys):
    assert main(["run", "partition-deadlock", "--nodes", "2"]) == 4
    out = _pairs(capsys.readouterr().out)
    assert out["outcome"] == "Error(PartitionDeadlock)"


def test_missing_fixture_is_an_io_failure(tmp_path, capsys):
    code = main(["run", "file-double", "--fixture", str(tmp_path / "absent.dat")])
    assert code == 5
    assert _pairs(capsys.readouterr().out)["outcome"] == "Error(OpenFailed)"


def test_exit_code_mapping():
    base = dict(program="p", tasks_executed=0, deliveries=0, bytes_bulk_copied=0, cow_copies=0, result_values={})
    assert RunSummary(outcome="Success", **base).exit_code == 0
    assert RunSummary(outcome="DeadlockDetected", **base).exit_code == 3
    assert RunSummary(outcome="Error(BadRange)", **base).exit_code == 4
    assert RunSummary(outcome="Error(IoError)", **base).exit_code == 5
    assert RunSummary(outcome="Error(OpenFailed)", **base).exit_code == 5


def test_trace_file_is_written(tmp_path, capsys):
    trace = tmp_path / "t.trace"
    main(["run", "launch-task", "--nodes", "2", "--seed", "1", "--trace", str(trace)])
    lines = trace.read_text().splitlines()
    assert lines[0].startswith("step=0 run-task") and any("MapResolution" in x for x in lines)


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ocrx.cli", "run", "shutdown-only"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and "outcome=Success" in proc.stdout
