"""Sturm-Liouville problem definition, validation and the problem-file format.

The eigenproblem is ``(K V')' + (r G - L) V = 0`` on ``[alpha, beta]`` with
``K V' - h V = 0`` at ``alpha`` and ``K V' + H V = 0`` at ``beta``;
``h = inf`` (resp. ``H = inf``) means ``V = 0`` at that end.

Problem files are line oriented ``key = value``::

    interval = [0, 3.141592653589793]
    K = "1"
    G = "1"
    L = "1"
    bc_left = dirichlet
    bc_right = robin 1.0
    regularity = strong

``#`` starts a comment. ``neumann`` is accepted as ``robin 0``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ExprDomainError,
    ExprSyntaxError,
    MissingKey,
    NegativeL,
    PositivityViolation,
    ProblemError,
    ProblemFileError,
)
from .expr import Expression, evaluate, parse, to_text

DEFAULT_GRID = 4096
WEAK_MARGIN = 1e-6
MIN_LENGTH = 1e-8


class Regularity(str, enum.Enum):
    STRONG = "strong"
    WEAK = "weak"


@dataclass(frozen=True)
class BoundaryCondition:
    """Robin condition with constant ``h >= 0``; ``h = inf`` is Dirichlet."""

    h: float

    def __post_init__(self):
        if math.isnan(self.h) or self.h < 0:
            raise ProblemError(f"Robin constant must be >= 0, got {self.h}")

    @classmethod
    def robin(cls, h: float) -> "BoundaryCondition":
        if not math.isfinite(h):
            raise ProblemError(f"Robin constant must be finite, got {h}")
        return cls(float(h))

    @classmethod
    def dirichlet(cls) -> "BoundaryCondition":
        return cls(math.inf)

    @classmethod
    def neumann(cls) -> "BoundaryCondition":
        return cls(0.0)

    @property
    def is_dirichlet(self) -> bool:
        return math.isinf(self.h)

    def __str__(self) -> str:
        return "dirichlet" if self.is_dirichlet else f"robin {self.h!r}"


@dataclass(frozen=True)
class Problem:
    alpha: float
    beta: float
    K: Expression
    G: Expression
    L: Expression
    bc_left: BoundaryCondition
    bc_right: BoundaryCondition
    regularity: Regularity = Regularity.STRONG

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ProblemError("interval endpoints must be finite")
        if self.beta - self.alpha < MIN_LENGTH:
            raise ProblemError(
                f"interval [{self.alpha}, {self.beta}] is shorter than {MIN_LENGTH}"
            )
        object.__setattr__(self, "regularity", Regularity(self.regularity))

    @classmethod
    def from_strings(
        cls,
        alpha: float,
        beta: float,
        K: str = "1",
        G: str = "1",
        L: str = "1",
        bc_left: BoundaryCondition | None = None,
        bc_right: BoundaryCondition | None = None,
        regularity: str | Regularity = Regularity.STRONG,
    ) -> "Problem":
        return cls(
            float(alpha),
            float(beta),
            parse(K),
            parse(G),
            parse(L),
            bc_left or BoundaryCondition.dirichlet(),
            bc_right or BoundaryCondition.dirichlet(),
            Regularity(regularity),
        )

    @property
    def length(self) -> float:
        return self.beta - self.alpha

    def grid(self, points: int = DEFAULT_GRID) -> np.ndarray:
        return np.linspace(self.alpha, self.beta, points)


def sine_problem(
    bc_left: BoundaryCondition | None = None, bc_right: BoundaryCondition | None = None
) -> Problem:
    """``-V'' + V = r V`` on ``[0, pi]``; Dirichlet ends unless overridden."""
    return Problem.from_strings(0.0, math.pi, "1", "1", "1", bc_left, bc_right)


@dataclass(frozen=True)
class ValidationReport:
    grid_points: int
    min_K: float
    min_G: float
    min_L: float
    min_L_over_G: float
    shift: float
    regularity: Regularity
    max_K: float = field(default=math.nan)
    max_G: float = field(default=math.nan)
    max_L: float = field(default=math.nan)


def validate(p: Problem, grid_points: int = DEFAULT_GRID) -> ValidationReport:
    """Check the positivity assumptions on a uniform grid.

    Positivity is only checked on the grid, not proved.

    Returns:
        A report with the grid minima and the spectral shift ``c >= 0`` such
        that ``L + c G > 0`` on the grid (``c = 0`` whenever ``L / G > 0``).

    Raises:
        PositivityViolation: K or G not positive somewhere on the grid.
        NegativeL: L not positive in strong mode.
    """
    if grid_points < 64:
        raise ProblemError(f"grid_points must be >= 64, got {grid_points}")
    x = p.grid(grid_points)
    try:
        k = evaluate(p.K, x)
        g = evaluate(p.G, x)
        l = evaluate(p.L, x)
    except ExprDomainError as exc:
        raise ProblemError(f"coefficient not defined on the interval: {exc}") from exc
    for name, values in (("K", k), ("G", g)):
        i = int(np.argmin(values))
        if values[i] <= 0:
            raise PositivityViolation(name, float(values[i]), float(x[i]))
    ratio = l / g
    i_l = int(np.argmin(l))
    if p.regularity is Regularity.STRONG:
        if l[i_l] <= 0:
            raise NegativeL(float(l[i_l]), float(x[i_l]))
        shift = 0.0
    else:
        lowest = float(ratio.min())
        shift = 0.0 if lowest > 0 else -lowest + WEAK_MARGIN
    return ValidationReport(
        grid_points=grid_points,
        min_K=float(k.min()),
        min_G=float(g.min()),
        min_L=float(l.min()),
        min_L_over_G=float(ratio.min()),
        shift=shift,
        regularity=p.regularity,
        max_K=float(k.max()),
        max_G=float(g.max()),
        max_L=float(l.max()),
    )


# ---------------------------------------------------------------------------
# file format

_REQUIRED = ("interval", "K", "G", "L", "bc_left", "bc_right")
_KNOWN = _REQUIRED + ("regularity",)


def _parse_bc(value: str, line: int) -> BoundaryCondition:
    words = value.split()
    if not words:
        raise ProblemFileError("empty boundary condition", line)
    kind = words[0].lower()
    if kind == "dirichlet" and len(words) == 1:
        return BoundaryCondition.dirichlet()
    if kind == "neumann" and len(words) == 1:
        return BoundaryCondition.neumann()
    if kind == "robin" and len(words) == 2:
        try:
            h = float(words[1].replace("−", "-"))
        except ValueError:
            raise ProblemFileError(f"bad Robin constant {words[1]!r}", line) from None
        if not math.isfinite(h) or h < 0:
            raise ProblemFileError(f"Robin constant must be finite and >= 0, got {words[1]}", line)
        return BoundaryCondition.robin(h)
    raise ProblemFileError(f"bad boundary condition {value!r}", line)


def _unquote(value: str) -> str:
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def parse_problem(text: str) -> Problem:
    """Parse problem-file text. Does not validate positivity."""
    entries: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ProblemFileError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KNOWN:
            raise ProblemFileError(f"unknown key {key!r}", lineno)
        if key in entries:
            raise ProblemFileError(f"duplicate key {key!r}", lineno)
        entries[key] = (value, lineno)
    for key in _REQUIRED:
        if key not in entries:
            raise MissingKey(key)

    value, lineno = entries["interval"]
    try:
        bounds = json.loads(value.replace("−", "-"))
        alpha, beta = (float(b) for b in bounds)
    except (ValueError, TypeError):
        raise ProblemFileError(f"interval must look like [a, b], got {value!r}", lineno) from None

    coeffs = {}
    for key in ("K", "G", "L"):
        value, lineno = entries[key]
        try:
            coeffs[key] = parse(_unquote(value))
        except ExprSyntaxError as exc:
            raise ProblemFileError(f"{key}: {exc}", lineno) from exc

    bc_left = _parse_bc(*entries["bc_left"])
    bc_right = _parse_bc(*entries["bc_right"])
    regularity = Regularity.STRONG
    if "regularity" in entries:
        value, lineno = entries["regularity"]
        try:
            regularity = Regularity(_unquote(value).lower())
        except ValueError:
            raise ProblemFileError(f"regularity must be strong or weak, got {value!r}", lineno) from None
    try:
        return Problem(alpha, beta, coeffs["K"], coeffs["G"], coeffs["L"], bc_left, bc_right, regularity)
    except ProblemError as exc:
        raise ProblemFileError(str(exc), entries["interval"][1]) from exc


def load_problem(path: str | Path) -> Problem:
    """Read a problem file; raises ``FileNotFoundError`` if it is absent."""
    return parse_problem(Path(path).read_text())


def dump_problem(p: Problem) -> str:
    return "\n".join(
        [
            f"interval = [{p.alpha!r}, {p.beta!r}]",
            f'K = "{to_text(p.K)}"',
            f'G = "{to_text(p.G)}"',
            f'L = "{to_text(p.L)}"',
            f"bc_left = {p.bc_left}",
            f"bc_right = {p.bc_right}",
            f"regularity = {p.regularity.value}",
            "",
        ]
    )


def wavenumber(p: Problem, report: ValidationReport, rho: float) -> float:
    """Upper bound on the local oscillation rate of a mode with eigenvalue ``rho``.

    Used to scale derivative thresholds: ``|V^(n)| <~ sup|V| * wavenumber^n``.
    """
    top = max(rho * report.max_G - report.min_L, 0.0)
    return math.sqrt(top / report.min_K) + math.pi / p.length


def half_wavelength(report: ValidationReport, rho: float) -> float:
    """Shortest zero spacing ``pi * sqrt(min K / (rho max G))`` of a mode at ``rho``.

    A negative ``L`` raises the local rate, so ``-min L`` is added to the denominator.
    Returns ``inf`` if the mode does not oscillate.
    """
    top = max(rho, 0.0) * report.max_G + max(-report.min_L, 0.0)
    if top <= 0:
        return math.inf
    return math.pi * math.sqrt(report.min_K / top)
