"""Exception types shared across the package."""


class MatedCrtError(Exception):
    pass


class DomainError(MatedCrtError, ValueError):
    """An argument lies outside the domain of the operation."""


class ResourceError(MatedCrtError, MemoryError):
    """A requested object would not fit in memory."""

    def __init__(self, message, required_bytes=None):
        super().__init__(message)
        self.required_bytes = required_bytes


class FormatError(MatedCrtError, ValueError):
    """A binary or text file failed validation on load."""


class TopologyError(MatedCrtError):
    """Source and sink of a boundary problem are not connected."""


class ConvergenceError(MatedCrtError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class AccuracyError(MatedCrtError):
    def __init__(self, message, achieved=None, partial=None):
        super().__init__(message)
        self.achieved = achieved
        self.partial = partial


class ContaminationError(MatedCrtError):
    """A ball or walk reached the part of a finite window that is not exact."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConsistencyError(MatedCrtError):
    """An internal invariant failed; indicates a bug upstream."""
