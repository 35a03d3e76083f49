"""Simulated nodes exchanging messages over per-(origin, target) FIFO channels.

The substrate owns nothing but queues.  Which channel is served next is
decided by a :class:`Chooser`; a seeded chooser gives reproducible runs and a
scripted chooser lets :func:`enumerate_schedules` walk every interleaving of a
small program.
"""

from __future__ import annotations

import enum
import itertools
import os
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator


class MessageKind(enum.Enum):
    CREATE_OBJECT = "CreateObject"
    ADD_DEPENDENCE = "AddDependence"
    SATISFY = "Satisfy"
    MAP_RESOLUTION = "MapResolution"
    MAP_GET = "MapGet"
    ACQUIRE_REQUEST = "AcquireRequest"
    ACQUIRE_GRANT = "AcquireGrant"
    RELEASE_NOTICE = "ReleaseNotice"
    DESTROY_OBJECT = "DestroyObject"
    COPY_DATA = "CopyData"
    FILE_OP = "FileOp"


@dataclass
class Message:
    kind: MessageKind
    origin: int
    payload: dict
    target: int | None = None
    # payload key whose identifier's home node becomes the target once known
    route: str | None = None
    # identifiers the receiver must bind to whatever it creates or looks up
    lids: list = field(default_factory=list)
    serial: int = 0

    def summary(self) -> str:
        parts = [f"lid={_fmt(self.lids)}"] if self.lids else []
        for key, value in self.payload.items():
            # host paths vary between runs; the file name is enough to follow a trace
            if key == "path":
                value = os.path.basename(value)
            parts.append(f"{key}={_fmt(value)}")
        return " ".join(parts)


def _fmt(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    if callable(value) and hasattr(value, "__name__"):
        return value.__name__
    if isinstance(value, enum.Enum):
        return value.name
    return str(value)


class Chooser:
    def choose(self, n: int) -> int:
        raise NotImplementedError


class SeededChooser(Chooser):
    def __init__(self, seed: int):
        self._rng = random.Random(seed)

    def choose(self, n: int) -> int:
        return 0 if n == 1 else self._rng.randrange(n)


class ScriptedChooser(Chooser):
    """Follows ``prefix`` and then always picks 0, recording branching factors."""

    def __init__(self, prefix: list[int]):
        self.prefix = list(prefix)
        self.taken: list[int] = []
        self.widths: list[int] = []

    def choose(self, n: int) -> int:
        i = len(self.taken)
        pick = self.prefix[i] if i < len(self.prefix) else 0
        if pick >= n:
            raise ValueError(f"schedule prefix picks {pick} of {n} options at step {i}")
        self.taken.append(pick)
        self.widths.append(n)
        return pick


class Tracer:
    def __init__(self):
        self.lines: list[str] = []

    def emit(self, step: int, text: str) -> None:
        self.lines.append(f"step={step} {text}")

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)


class Substrate:
    """FIFO channels between ``nodes`` virtual nodes."""

    def __init__(self, nodes: int, chooser: Chooser, tracer: Tracer | None = None):
        if nodes < 1:
            raise ValueError("need at least one node")
        self.nodes = nodes
        self.chooser = chooser
        self.tracer = tracer or Tracer()
        self.channels: dict[tuple[int, int], deque[Message]] = {}
        self.deliveries = 0
        self._serial = itertools.count(1)
        self.handler: Callable[[Message], None] = lambda msg: None

    def send(self, msg: Message) -> None:
        if msg.target is None or not 0 <= msg.target < self.nodes:
            raise ValueError(f"message has no valid target: {msg}")
        msg.serial = next(self._serial)
        self.channels.setdefault((msg.origin, msg.target), deque()).append(msg)

    def busy_channels(self) -> list[tuple[int, int]]:
        return sorted(key for key, q in self.channels.items() if q)

    def pending(self) -> bool:
        return any(self.channels.values())

    def deliver_from(self, channel: tuple[int, int]) -> Message:
        msg = self.channels[channel].popleft()
        self.deliveries += 1
        self.tracer.emit(
            self.deliveries,
            f"deliver {msg.kind.value} {msg.origin}→{msg.target} {msg.summary()}".rstrip(),
        )
        self.handler(msg)
        return msg

    def deliver_next(self) -> Message | None:
        """Deliver one message from a chooser-selected channel; None when idle."""
        busy = self.busy_channels()
        if not busy:
            return None
        return self.deliver_from(busy[self.chooser.choose(len(busy))])


@dataclass
class ScheduleResult:
    choices: list[int]
    outcome: Any


def enumerate_schedules(
    run: Callable[[Chooser], Any], limit: int = 10_000
) -> Iterator[ScheduleResult]:
    """Breadth-first walk over every choice sequence of ``run``.

    ``run`` must build a fresh system around the given chooser and execute it
    to completion; it is called once per distinct schedule, at most ``limit``
    times.
    """
    frontier: deque[list[int]] = deque([[]])
    produced = 0
    while frontier and produced < limit:
        prefix = frontier.popleft()
        chooser = ScriptedChooser(prefix)
        outcome = run(chooser)
        produced += 1
        yield ScheduleResult(chooser.taken, outcome)
        for i in range(len(prefix), len(chooser.widths)):
            for alt in range(1, chooser.widths[i]):
                frontier.append(chooser.taken[:i] + [alt])

