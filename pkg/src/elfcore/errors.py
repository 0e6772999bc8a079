"""Exception hierarchy shared by every elfcore module."""


class ElfError(Exception):
    """Base class for all elfcore errors."""


# event-io
class TruncatedStream(ElfError):
    pass


class PayloadOverflow(ElfError):
    pass


class WidthMismatch(ElfError):
    pass


# sparse-store
class InvalidSpec(ElfError):
    pass


class IndexOutOfRange(ElfError):
    pass


class KTooLarge(ElfError):
    pass


class CardinalityMismatch(ElfError):
    pass


class PruneNotActive(ElfError):
    pass


class RegrowCollision(ElfError):
    pass


# plasticity / dsst
class LengthMismatch(ElfError):
    pass


class ShapeMismatch(ElfError):
    pass


class LabelOutOfRange(ElfError):
    pass


class InsufficientCandidates(ElfError):
    pass


# harness
class ConfigError(ElfError):
    pass


class DataError(ElfError):
    pass


class DimensionMismatch(DataError):
    pass


class CheckpointError(DataError):
    pass
