"""Exception hierarchy for the runtime.

Every error raised by an API call or a message handler derives from
:class:`OcrError`.  ``kind`` is the stable name reported in run summaries.
"""


class OcrError(Exception):
    """Base class for all runtime errors."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class InvalidId(OcrError):
    pass


class BadArity(OcrError):
    pass


class BadSlot(OcrError):
    pass


class SlotOccupied(OcrError):
    pass


class AlreadySatisfied(OcrError):
    pass


class BadSize(OcrError):
    pass


class BadIndex(OcrError):
    pass


class BadRange(OcrError):
    pass


class BadFlags(OcrError):
    pass


class BadMode(OcrError):
    pass


class NotAcquired(OcrError):
    pass


class TargetDestroyed(OcrError):
    """A message reached an object that had already been destroyed."""


class LidOwnershipViolation(OcrError):
    pass


class LidNotStorable(OcrError):
    """A local identifier was about to be serialized into a data block."""


class CreatorContractViolation(OcrError):
    pass


class DeadlockDetected(OcrError):
    pass


class ProtocolError(OcrError):
    """Internal protocol invariant broken; indicates a runtime bug or API misuse."""


class OpenFailed(OcrError):
    pass


class BadDescriptor(OcrError):
    pass


class ChunkOverlap(OcrError):
    pass


class FileReleased(OcrError):
    pass


class IoError(OcrError):
    pass


class PartitionOverlap(OcrError):
    pass


class StaticPartitioned(OcrError):
    pass


class PartitionDeadlock(OcrError):
    pass


class PartitionProtocolViolation(OcrError):
    pass
