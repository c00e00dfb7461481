"""Exception hierarchy.

Every error raised on bad input derives from :class:`HHMMError` so the CLI
can map it onto the data-error exit code in one place.
"""


class HHMMError(Exception):
    """Base class for all helicase_hmm errors."""


class InvalidBase(HHMMError, ValueError):
    pass


class LengthMismatch(HHMMError, ValueError):
    pass


class IndexOutOfRange(HHMMError, IndexError):
    pass


class NonEmittingState(HHMMError, ValueError):
    pass


class InsufficientReference(HHMMError, ValueError):
    pass


class ModelValidation(HHMMError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class InfeasibleClamp(HHMMError, ValueError):
    """More k-mers than signal samples: every k-mer needs at least one."""


class InvalidKmerPath(HHMMError, ValueError):
    """Consecutive k-mers do not overlap in k-1 bases."""


class OracleTooLarge(HHMMError, ValueError):
    pass


class MissingLabels(HHMMError, ValueError):
    pass


class EmptyDataset(HHMMError, ValueError):
    pass


class EmptySignal(HHMMError, ValueError):
    pass


class NoAlignment(HHMMError, ValueError):
    pass


class NonAbsorbing(HHMMError, ValueError):
    pass


class NoData(HHMMError, ValueError):
    pass


class DegenerateFit(HHMMError, ValueError):
    pass


class MissingKmerLevel(HHMMError, KeyError):
    pass


class CorruptModel(HHMMError, ValueError):
    pass


class UnsupportedVersion(HHMMError, ValueError):
    pass


class CorruptDataset(HHMMError, ValueError):
    pass
