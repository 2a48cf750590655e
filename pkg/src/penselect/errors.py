"""Exception hierarchy shared by all penselect modules."""


class PenselectError(Exception):
    """Base class for every error raised by this package."""


class AllZeroInput(PenselectError, ValueError):
    pass


class DimensionMismatch(PenselectError, ValueError):
    pass


class NotOrthonormal(PenselectError, ValueError):
    pass


class InvalidPartition(PenselectError, ValueError):
    pass


class BlockTooSmall(PenselectError, ValueError):
    pass


class EmptySubset(PenselectError, ValueError):
    pass


class OutOfDomain(PenselectError, ValueError):
    pass


class CertificationFailed(PenselectError, ValueError):
    """A (sigma, c) pair does not satisfy the sub-gamma envelope on the grid."""


class InvalidPartitionSizes(PenselectError, ValueError):
    pass


class KNotGreaterThanOne(PenselectError, ValueError):
    pass


class DeltaOutOfRange(PenselectError, ValueError):
    pass


class PhiTooSmall(PenselectError, ValueError):
    pass


class ModeFamilyMismatch(PenselectError, ValueError):
    pass


class ConditionViolated(PenselectError, ValueError):
    """A proposition-mode penalty was requested outside its size conditions."""


class ConfigError(PenselectError, ValueError):
    pass
