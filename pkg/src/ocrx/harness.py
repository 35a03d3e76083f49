"""Run registered programs under a configuration and summarize the outcome."""

from __future__ import annotations

import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .core import Runtime
from .errors import DeadlockDetected, IoError, OcrError
from .programs import REGISTRY

FIXTURE_VALUES = 1024


@dataclass
class RunConfig:
    program: str
    nodes: int = 1
    seed: int = 0
    mode: str = "deferred"
    placement: str = "round-robin"
    partition_impl: str = "zero-copy"
    trace: str | None = None
    fixture: str | None = None
    args: dict = field(default_factory=dict)


@dataclass
class RunSummary:
    program: str
    outcome: str
    tasks_executed: int
    deliveries: int
    bytes_bulk_copied: int
    cow_copies: int
    result_values: dict
    error: str | None = None
    trace: str = ""
    runtime: Runtime | None = field(default=None, repr=False, compare=False)

    @property
    def exit_code(self) -> int:
        if self.outcome == "Success":
            return 0
        if self.outcome == "DeadlockDetected":
            return 3
        if self.outcome in ("Error(IoError)", "Error(OpenFailed)"):
            return 5
        return 4

    def lines(self) -> list[str]:
        out = [
            f"program={self.program}",
            f"outcome={self.outcome}",
            f"tasks_executed={self.tasks_executed}",
            f"deliveries={self.deliveries}",
            f"bytes_bulk_copied={self.bytes_bulk_copied}",
            f"cow_copies={self.cow_copies}",
        ]
        out.extend(f"{key}={value}" for key, value in self.result_values.items())
        if self.error:
            out.append(f"error={self.error}")
        return out

    def comparable(self) -> tuple:
        """The parts that must not depend on identifier mode, placement or seed."""
        return (self.outcome, self.tasks_executed, tuple(sorted(self.result_values.items())))


def gen_fixture(path, count: int) -> None:
    """Write ``count`` little-endian u32 values 1..count to ``path``."""
    Path(path).write_bytes(struct.pack(f"<{count}I", *range(1, count + 1)))


def run_program(cfg: RunConfig) -> RunSummary:
    try:
        program = REGISTRY[cfg.program]
    except KeyError:
        raise ValueError(f"unknown program {cfg.program!r}; choose from {', '.join(sorted(REGISTRY))}") from None
    args = dict(cfg.args)
    with tempfile.TemporaryDirectory(prefix="ocrx-") as scratch:
        if program.needs_fixture:
            fixture = cfg.fixture
            if fixture is None:
                fixture = str(Path(scratch) / "data.dat")
                gen_fixture(fixture, FIXTURE_VALUES)
            args["fixture"] = fixture
        rt = Runtime(cfg.nodes, seed=cfg.seed, mode=cfg.mode, placement=cfg.placement,
                     partition_impl=cfg.partition_impl, args=args)
        outcome, error = "Success", None
        try:
            rt.run(program.main)
        except DeadlockDetected as exc:
            outcome, error = "DeadlockDetected", str(exc)
        except OcrError as exc:
            outcome, error = f"Error({exc.kind})", str(exc)
        try:
            values = program.summarize(rt, cfg)
        except OSError as exc:
            values = {}
            if outcome == "Success":
                outcome, error = f"Error({IoError.__name__})", str(exc)
    trace = rt.tracer.text()
    if cfg.trace:
        Path(cfg.trace).write_text(trace, encoding="utf-8")
    return RunSummary(
        program=cfg.program,
        outcome=outcome,
        tasks_executed=rt.stats.tasks_executed,
        deliveries=rt.deliveries,
        bytes_bulk_copied=rt.stats.bytes_copied,
        cow_copies=rt.stats.cow_copies,
        result_values=values,
        error=error,
        trace=trace,
        runtime=rt,
    )
