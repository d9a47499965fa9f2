"""Exception types raised across the package."""


class DistDFTError(Exception):
    """Base class for all errors raised by distdft."""


# tensors and kernels
class ShapeMismatch(DistDFTError, ValueError):
    pass


class IndexOutOfBounds(DistDFTError, IndexError):
    pass


class InvalidPermutation(DistDFTError, ValueError):
    pass


class InvalidMode(DistDFTError, ValueError):
    pass


class EmptyInput(DistDFTError, ValueError):
    pass


# distributions
class ParseError(DistDFTError, ValueError):
    """Malformed distribution string. ``position`` is the offending character offset."""

    def __init__(self, message, text="", position=0):
        super().__init__(f"{message} at position {position}: {text!r}")
        self.text = text
        self.position = position


class DistributionError(DistDFTError, ValueError):
    """A distribution that cannot be placed on the given grid."""


class UnsupportedRedist(DistDFTError, ValueError):
    pass


# runtime
class DeadlockDetected(DistDFTError, RuntimeError):
    pass


class ProgramError(DistDFTError, RuntimeError):
    """Members of one communicator disagree on the collective sequence."""


class SizeMismatch(DistDFTError, ValueError):
    pass


class InvalidRoot(DistDFTError, ValueError):
    pass


# cost model
class InvalidParams(DistDFTError, ValueError):
    pass


class UnsupportedAlgorithm(DistDFTError, ValueError):
    pass


class GridMismatch(DistDFTError, ValueError):
    pass


class UnsupportedCount(DistDFTError, ValueError):
    pass


class NoFeasibleConfiguration(DistDFTError, RuntimeError):
    pass
