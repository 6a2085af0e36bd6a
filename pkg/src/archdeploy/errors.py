"""Exception types shared across the package."""


class ArchDeployError(Exception):
    """Base class for all package errors."""


class PreconditionViolated(ArchDeployError):
    """A closed form was asked for outside the setting it is valid in."""


class CapExceeded(ArchDeployError):
    """An exact computation would exceed its configured size cap."""


class NonConvergence(ArchDeployError):
    """Best-response iteration hit its safety bound."""


class NonMonotonic(ArchDeployError):
    """Threshold brackets moved the wrong way by more than the tolerance."""


class DegenerateBenefit(ArchDeployError):
    """Total immediate benefit is zero, so the coordination ratio is undefined."""


class InvalidM(ArchDeployError):
    """Flattening length below 2."""


class CostMismatch(ArchDeployError):
    """Device-level and ISP-level cost totals differ."""


class NoProgress(ArchDeployError):
    """Tipping was requested from a set that is already the largest equilibrium."""


class ParseError(ArchDeployError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyGraph(ArchDeployError):
    """A topology file contained no edges."""


class Unreachable(ArchDeployError):
    def __init__(self, src, dst):
        self.src = src
        self.dst = dst
        super().__init__(f"no path from {src} to {dst}")


class DatasetMissing(ArchDeployError):
    """A dataset-backed experiment was requested but the files are absent."""
