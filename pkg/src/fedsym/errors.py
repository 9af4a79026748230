"""Exception types raised across the package."""


class FedSymError(Exception):
    """Base class for domain errors (mapped to exit code 2 by the CLI)."""


class InvalidDistribution(FedSymError, ValueError):
    pass


class InfeasibleTarget(FedSymError):
    pass


class NoConvergence(FedSymError):
    """The solver ran out of iterations; ``best_result`` holds the closest result found."""

    def __init__(self, message, best_result=None):
        super().__init__(message)
        self.best_result = best_result


class PartitionInfeasible(FedSymError):
    def __init__(self, cls, needed, available):
        super().__init__(
            f"class {cls}: partition needs {needed} samples but only {available} are available"
        )
        self.cls = cls
        self.needed = needed
        self.available = available


class BadMagic(FedSymError):
    pass


class TruncatedFile(FedSymError):
    pass


class CountMismatch(FedSymError):
    pass


class InvalidDataset(FedSymError):
    pass


class EmptyShard(FedSymError):
    pass


class ShapeMismatch(FedSymError):
    pass


class DegenerateInput(FedSymError):
    pass
