"""Exception hierarchy.  CLI exit codes key off these classes."""


class FrachomError(Exception):
    """Base class for all package errors."""


class SpecError(FrachomError, ValueError):
    """Invalid problem or morphology specification."""


class ConfigError(SpecError):
    """Missing or inconsistent scenario configuration."""


class MeshParseError(FrachomError, ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class GeometryError(FrachomError, ValueError):
    """Degenerate or inconsistent mesh geometry."""


class PairingError(GeometryError):
    """Opposite boundary nodes cannot be matched one-to-one."""


class ConstraintError(FrachomError, ValueError):
    """Periodic constraints are cyclic or inconsistent."""


class TaggingError(GeometryError):
    """Phase tags disagree with the mesh topology."""


class DomainError(FrachomError, ValueError):
    """Argument outside the mathematical domain of a function."""


class SolverError(FrachomError, RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")
        self.residual = residual


class BudgetError(SolverError):
    """Step budget exhausted before the stopping criterion was met."""

    def __init__(self, message: str, last_change: float):
        super().__init__(f"{message}; last change metric {last_change:.3e}")
        self.last_change = last_change


class IncompleteInputError(SpecError):
    """A computation needs inputs that were not supplied."""
