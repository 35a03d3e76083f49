"""A simulated task-based dataflow runtime.

Tasks, events and data blocks live on virtual nodes that talk only through
messages.  On top of that core sit four extensions: local identifiers that act
as futures over global ids, labeled maps with creator functions, file-mapped
data blocks, and data block partitioning with copy-on-write.
"""

from .api import EDT_PARAM_DEF, CreatorContext, Prop, TaskContext
from .blocks import (
    DB_COPY_PARTITION,
    DB_COPY_PARTITION_BACK,
    DB_COPY_PLAIN,
    OCR_DB_PARTITION_STATIC,
    CopyType,
    DbPart,
    Mode,
)
from .core import Dep, Runtime
from .errors import OcrError
from .harness import RunConfig, RunSummary, gen_fixture, run_program
from .ids import NULL_GUID, UNINITIALIZED_GUID, GlobalId, IdClass, LocalId, ObjectKind

__all__ = [
    "DB_COPY_PARTITION",
    "DB_COPY_PARTITION_BACK",
    "DB_COPY_PLAIN",
    "EDT_PARAM_DEF",
    "NULL_GUID",
    "OCR_DB_PARTITION_STATIC",
    "UNINITIALIZED_GUID",
    "CopyType",
    "CreatorContext",
    "DbPart",
    "Dep",
    "GlobalId",
    "IdClass",
    "LocalId",
    "Mode",
    "ObjectKind",
    "OcrError",
    "Prop",
    "RunConfig",
    "RunSummary",
    "Runtime",
    "TaskContext",
    "gen_fixture",
    "run_program",
]

__version__ = "0.1.0"
