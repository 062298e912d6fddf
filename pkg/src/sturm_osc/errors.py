"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SturmOscError(Exception):
    """Base class for every error raised by the package."""


class PreconditionError(SturmOscError, ValueError):
    """An operation was called outside its documented domain."""


# --- expressions -----------------------------------------------------------


class ExprSyntaxError(SturmOscError, ValueError):
    """Malformed expression text.

    Attributes:
        offset: zero-based character offset where parsing failed.
    """

    def __init__(self, message: str, offset: int, source: str = ""):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifier(ExprSyntaxError):
    """An identifier that is neither ``x`` nor a known function."""


class ExprDomainError(SturmOscError, ArithmeticError):
    """Evaluation left the real domain (pole, log/sqrt of a negative, overflow)."""


# --- problems --------------------------------------------------------------


class ProblemError(SturmOscError, ValueError):
    """Invalid problem definition."""


class PositivityViolation(ProblemError):
    """K or G is not strictly positive on the validation grid."""

    def __init__(self, name: str, minimum: float, where: float):
        self.name = name
        self.minimum = minimum
        self.where = where
        super().__init__(f"{name} must be positive; min {minimum:.6g} at x={where:.6g}")


class NegativeL(ProblemError):
    """L is not positive on the grid while strong regularity was requested."""

    def __init__(self, minimum: float, where: float):
        self.minimum = minimum
        self.where = where
        super().__init__(
            f"L must be positive in strong mode; min {minimum:.6g} at x={where:.6g}"
        )


class ProblemFileError(ProblemError):
    """Syntax error in a problem file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class MissingKey(ProblemFileError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"missing key {key!r}")


# --- numerics --------------------------------------------------------------


class IntegrationError(SturmOscError, RuntimeError):
    """The initial value problem could not be integrated."""


class BracketNotFound(SturmOscError, RuntimeError):
    """No eigenvalue bracket below the search cap."""


class OscillationMismatch(SturmOscError, AssertionError):
    def __init__(self, index: int, found: int):
        self.index = index
        self.found = found
        super().__init__(f"eigenfunction {index} has {found} interior zeros, expected {index - 1}")


class UnresolvedCluster(SturmOscError, RuntimeError):
    """Derivative probing could not certify a zero's order below P_MAX."""

    def __init__(self, location: float, order: int):
        self.location = location
        self.order = order
        super().__init__(f"zero near x={location:.12g} has order >= {order}")


class OddBoundaryOrder(SturmOscError, RuntimeError):
    """A boundary zero under a non-Dirichlet condition has odd order."""

    def __init__(self, endpoint: float, order: int):
        self.endpoint = endpoint
        self.order = order
        super().__init__(f"boundary zero at x={endpoint:.12g} has odd order {order}")


class DegenerateDeterminant(SturmOscError, RuntimeError):
    """The fixed block of Liouville's determinant is rank deficient."""


class NoCertificate(SturmOscError, RuntimeError):
    """The limiting exponent exceeds the cap (near-degenerate spectrum)."""
