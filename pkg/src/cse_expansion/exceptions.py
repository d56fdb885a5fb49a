"""Exception types raised by cse-expansion."""

from __future__ import annotations

__all__ = (
    "BasisError",
    "ConditioningError",
    "ConvergenceError",
    "CseExpansionError",
    "DimensionError",
    "DomainError",
    "GeometryError",
    "SectorSizeError",
    "SeriesError",
    "SingularityError",
    "ZeroStateError",
)


class CseExpansionError(Exception):
    """Base class of every error raised by this package."""


class DomainError(CseExpansionError, ValueError):
    """An argument lies outside the domain of the operation."""


class GeometryError(CseExpansionError, ValueError):
    """Invalid nuclear geometry (coincident centers, bad charges)."""


class BasisError(CseExpansionError, ValueError):
    """Malformed basis data or contracted shell definition."""


class DimensionError(CseExpansionError, ValueError):
    """Operator, state and determinant sector do not fit together."""


class SectorSizeError(CseExpansionError, ValueError):
    """Determinant sector too large for the dense eigensolver."""


class ZeroStateError(CseExpansionError, ValueError):
    """A state vector with zero norm where a physical state is required."""


class ConditioningError(CseExpansionError, ArithmeticError):
    """The AO overlap matrix is not positive definite."""

    def __init__(self, smallest_eigenvalue: float) -> None:
        self.smallest_eigenvalue = smallest_eigenvalue
        super().__init__(
            "overlap matrix is not positive definite; smallest eigenvalue "
            f"is {smallest_eigenvalue:.3e}"
        )


class SingularityError(CseExpansionError, ArithmeticError):
    """A perturbative denominator vanishes."""


class SeriesError(CseExpansionError, ArithmeticError):
    """A Taylor series did not converge in the allowed number of terms."""


class ConvergenceError(CseExpansionError, RuntimeError):
    """An iterative procedure stopped without meeting its tolerances."""

    def __init__(self, message: str, last_delta: float | None = None) -> None:
        self.last_delta = last_delta
        if last_delta is not None:
            message = f"{message} (last energy change {last_delta:.3e})"
        super().__init__(message)
