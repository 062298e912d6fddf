"""Zeros of eigenfunction combinations with multiplicities, and the counts.

A target for :func:`locate_zeros` is either a batch (``FormBatch``, or any
object with a ``batch()`` method returning one) or a single function with
``problem``, ``rho_max``, ``taylor(x, order)`` (Taylor coefficients, shape
``(order + 1,) + x.shape``) and ``deriv_scales(order)``.

The scan step is an eighth of the shortest zero spacing of the top mode.
Critical points are added to the samples so that a double zero, or two
zeros in one cell, still shows up as a sample or a sign change.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import OddBoundaryOrder, PreconditionError, UnresolvedCluster
from .expr import Expression, evaluate, taylor
from .ivp import P_MAX
from .problem import BoundaryCondition, Problem, half_wavelength, validate, wavenumber


@dataclass(frozen=True)
class Tolerances:
    zero_tol: float = 1e-9
    deriv_tol: float = 1e-6
    merge_tol: float = 1e-7  # relative to beta - alpha
    root_tol: float = 1e-12  # relative to beta - alpha
    side_floor: float = 1e-13  # below this (times sup|f|) a side sign is unreadable
    scan_cap: int = 1 << 20


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class ZeroRecord:
    xi: float
    p: int
    B: float
    sign_change: bool
    is_boundary: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ZeroCount:
    N: int
    N_m: int
    N_bar_m: int
    N_v: int
    m_bar_alpha: int = 0
    m_bar_beta: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def chain(self) -> tuple[int, int, int, int]:
        """``(N_v, N, N_m, N_bar_m)`` in the order of the inequality chain."""
        return (self.N_v, self.N, self.N_m, self.N_bar_m)


class ExpressionFunction:
    """Adapter turning an :class:`Expression` of ``x`` into a zero-search target.

    ``rho_max`` plays the role of the top eigenvalue: it fixes the scan step
    and the derivative scales.
    """

    def __init__(self, expr: Expression, problem: Problem, rho_max: float):
        self.expr = expr
        self.problem = problem
        self.rho_max = float(rho_max)
        self.report = validate(problem)

    def values(self, x):
        return evaluate(self.expr, np.asarray(x, dtype=float))

    def taylor(self, x, order: int):
        return taylor(self.expr, np.asarray(x, dtype=float), order)

    def deriv_scales(self, order: int) -> np.ndarray:
        sup = float(np.max(np.abs(self.values(self.problem.grid(2049)))))
        kappa = wavenumber(self.problem, self.report, self.rho_max)
        return sup * kappa ** np.arange(order + 1)


class _Single:
    """One function seen as a batch of one row."""

    def __init__(self, f):
        self.f = f
        self.problem = f.problem
        self.rho_max = float(f.rho_max)
        self.report = getattr(f, "report", None) or validate(f.problem)

    def __len__(self) -> int:
        return 1

    def grid_jet(self, x, order):
        return np.asarray(self.f.taylor(np.asarray(x, dtype=float), order))[:, None, :]

    def point_jet(self, rows, x, order):
        return np.asarray(self.f.taylor(np.asarray(x, dtype=float), order))

    def deriv_scales(self, order):
        return np.asarray(self.f.deriv_scales(order))[None, :]


def as_batch(f):
    if hasattr(f, "point_jet"):
        return f
    if hasattr(f, "batch"):
        return f.batch()
    return _Single(f)


def _bisect(fun, a, b, fa, tol, max_iter=200):
    """Vectorized bracketing root search on ``[a, b]`` with ``fa = fun(a)``.

    Illinois false position, kept inside the bracket; a midpoint step is
    forced whenever the bracket failed to halve over the last two steps.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    fa = np.array(fa, dtype=float)
    if a.size == 0:
        return a
    fb = np.asarray(fun(b), dtype=float)
    kept = np.zeros(a.shape, dtype=int)  # +1: a kept last step, -1: b kept
    widths = [b - a, b - a]
    for _ in range(max_iter):
        w = b - a
        if np.max(w) <= tol:
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            x = a - fa * w / (fb - fa)
        slow = w > 0.5 * widths[-2]
        x = np.where(np.isfinite(x) & ~slow, x, 0.5 * (a + b))
        x = np.clip(x, a + 0.01 * w, b - 0.01 * w)
        x = np.where(w > tol, x, 0.5 * (a + b))
        fx = fun(x)
        left = np.sign(fx) == np.sign(fa)
        exact = fx == 0
        # Illinois: halve the value at an endpoint that survives twice
        fb = np.where(left & (kept == -1), 0.5 * fb, fb)
        fa = np.where(~left & (kept == 1), 0.5 * fa, fa)
        kept = np.where(left, -1, 1)
        a, fa = np.where(left, x, a), np.where(left, fx, fa)
        b, fb = np.where(left, b, x), np.where(left, fb, fx)
        a = np.where(exact, x, a)
        b = np.where(exact, x, b)
        widths = [widths[-1], b - a]
    return 0.5 * (a + b)


def _probe(coeffs: np.ndarray, scales: np.ndarray, deriv_tol: float) -> np.ndarray:
    """First order ``p >= 1`` whose derivative clears ``deriv_tol * scale_p``; 0 if none.

    ``coeffs`` is (order+1, P) and ``scales`` is (P, order+1).
    """
    fact = np.array([math.factorial(j) for j in range(coeffs.shape[0])], dtype=float)
    deriv = np.abs(coeffs) * fact[:, None]
    big = deriv[1:] > deriv_tol * scales.T[1:]
    first = np.argmax(big, axis=0) + 1
    return np.where(big.any(axis=0), first, 0)


def scan_step(f, resolution_hint: float | None = None) -> float:
    """``min(hint, lambda_min / 8)``, never coarser than 1/256 of the interval."""
    step = min(half_wavelength(f.report, f.rho_max) / 8.0, f.problem.length / 256.0)
    if resolution_hint is not None:
        if not resolution_hint > 0:
            raise PreconditionError("resolution_hint must be positive")
        step = min(step, resolution_hint)
    return step


def locate_zeros(
    f,
    p: Problem | None = None,
    resolution_hint: float | None = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> list[ZeroRecord]:
    """All zeros of ``f`` on ``[alpha, beta]``, sorted by location.

    Dirichlet endpoints are not reported (their reduced multiplicity is 0).
    A vanishing non-Dirichlet endpoint gives a record with ``is_boundary``.

    Raises:
        UnresolvedCluster: no derivative up to ``P_MAX`` clears its threshold.
    """
    batch = as_batch(f)
    if len(batch) != 1:
        raise PreconditionError("locate_zeros takes one function; use locate_zeros_batch")
    if p is not None and p != batch.problem:
        raise PreconditionError("function belongs to a different problem")
    return locate_zeros_batch(batch, resolution_hint, tol)[0]


def locate_zeros_batch(
    f, resolution_hint: float | None = None, tol: Tolerances = DEFAULT_TOLERANCES
) -> list[list[ZeroRecord]]:
    """Zero records of every row of a batch (see :func:`locate_zeros`)."""
    batch = as_batch(f)
    p = batch.problem
    length = p.length
    n_rows = len(batch)
    step = scan_step(batch, resolution_hint)
    n = min(int(math.ceil(length / step)) + 1, tol.scan_cap)
    grid = np.linspace(p.alpha, p.beta, n)
    jet = batch.grid_jet(grid, 1)
    fx, dfx = jet[0], jet[1]
    scale0 = np.max(np.abs(fx), axis=1)
    if np.any(scale0 == 0.0):
        raise PreconditionError("function vanishes identically on the scan")

    def values(rows, x):
        return batch.point_jet(rows, x, 0)[0]

    def slope(rows, x):
        return batch.point_jet(rows, x, 1)[1]

    root_tol = tol.root_tol * length
    row_scale = np.asarray(getattr(batch, "row_scale", np.ones(n_rows)), dtype=float)

    # critical points split cells that may hide a pair of zeros
    ti, ci = np.nonzero(dfx[:, :-1] * dfx[:, 1:] < 0)
    crit = _bisect(lambda t: slope(ti, t), grid[ci], grid[ci + 1], dfx[ti, ci], root_tol)
    crit_f = values(ti, crit) if crit.size else crit

    rows = np.concatenate([np.repeat(np.arange(n_rows), n), ti])
    xs = np.concatenate([np.tile(grid, n_rows), crit])
    fs = np.concatenate([fx.ravel(), crit_f])
    order = np.lexsort((xs, rows))
    rows, xs, fs = rows[order], xs[order], fs[order]

    small = np.abs(fs) <= tol.zero_tol * scale0[rows]
    sign = np.where(small, 0.0, np.sign(fs))
    same = rows[:-1] == rows[1:]

    # sign changes between non-small neighbours
    brk = np.nonzero(same & (sign[:-1] * sign[1:] < 0))[0]
    b_rows = rows[brk]
    roots = _bisect(lambda t: values(b_rows, t), xs[brk], xs[brk + 1], fs[brk], root_tol)

    # small samples flanked by opposite signs: polish to the actual crossing
    mid = np.nonzero(small[1:-1] & same[:-1] & same[1:])[0] + 1
    flank = mid[sign[mid - 1] * sign[mid + 1] < 0]
    f_rows = rows[flank]
    polished = _bisect(lambda t: values(f_rows, t), xs[flank - 1], xs[flank + 1], fs[flank - 1], root_tol)
    keep = small.copy()
    keep[flank] = False

    c_rows = np.concatenate([rows[keep], b_rows, f_rows])
    c_x = np.concatenate([xs[keep], roots, polished])
    out: list[list[ZeroRecord]] = [[] for _ in range(n_rows)]
    if c_x.size == 0:
        return out
    order = np.lexsort((c_x, c_rows))
    c_rows, c_x = c_rows[order], c_x[order]
    c_f = np.abs(values(c_rows, c_x))

    # merge clusters; pick the member with the smallest |f|
    merge = tol.merge_tol * length
    new = np.ones(c_x.size, dtype=bool)
    new[1:] = (c_rows[1:] != c_rows[:-1]) | (np.diff(c_x) > merge)
    starts = np.nonzero(new)[0]
    ends = np.append(starts[1:], c_x.size)
    pick = np.array([s + int(np.argmin(c_f[s:e])) for s, e in zip(starts, ends)])
    r_rows = c_rows[pick]
    reps = c_x[pick]
    at_alpha = reps - p.alpha <= merge
    at_beta = p.beta - reps <= merge
    reps = np.where(at_alpha, p.alpha, np.where(at_beta, p.beta, reps))

    coeffs = batch.point_jet(r_rows, reps, P_MAX)
    scales = batch.deriv_scales(P_MAX)[r_rows]
    orders = _probe(coeffs, scales, tol.deriv_tol)
    sides = _side_signs(values, p, r_rows, reps, at_alpha | at_beta, tol.side_floor * scale0)

    for j, xi in enumerate(reps):
        bc = p.bc_left if at_alpha[j] else p.bc_right if at_beta[j] else None
        if bc is not None and bc.is_dirichlet:
            continue
        order_j = int(orders[j])
        if order_j == 0:
            raise UnresolvedCluster(float(xi), P_MAX)
        if bc is None and sides[j] is not None and sides[j] != (order_j % 2 == 1):
            # the observed sign behaviour wins over a borderline derivative test
            order_j = order_j - 1 if order_j % 2 == 0 else order_j + 1
        B = float(coeffs[order_j, j] * row_scale[r_rows[j]]) if order_j <= P_MAX else math.nan
        out[r_rows[j]].append(
            ZeroRecord(
                float(xi),
                order_j,
                B,
                sign_change=bc is None and order_j % 2 == 1,
                is_boundary=bc is not None,
            )
        )
    return out


def _side_signs(values, p: Problem, rows, reps, boundary, floors):
    """Whether ``f`` changes sign across each interior point; None if unreadable."""
    out: list[bool | None] = [None] * reps.size
    idx = np.nonzero(~boundary)[0]
    if idx.size == 0:
        return out
    # distance to the neighbouring zero of the same row, or to the ends
    prev = np.full(reps.size, np.nan)
    nxt = np.full(reps.size, np.nan)
    same = rows[1:] == rows[:-1]
    prev[1:] = np.where(same, reps[1:] - reps[:-1], np.nan)
    nxt[:-1] = np.where(same, reps[1:] - reps[:-1], np.nan)
    prev = np.where(np.isnan(prev), reps - p.alpha, prev)
    nxt = np.where(np.isnan(nxt), p.beta - reps, nxt)
    delta = np.minimum(1e-6 * p.length, 0.25 * np.minimum(prev, nxt))[idx]
    left = values(rows[idx], reps[idx] - delta)
    right = values(rows[idx], reps[idx] + delta)
    floor = floors[rows[idx]]
    for j, lv, rv, fl in zip(idx, left, right, floor):
        if abs(lv) > fl and abs(rv) > fl:
            out[j] = bool(np.sign(lv) != np.sign(rv))
    return out


def _sup(batch) -> float:
    grid = batch.problem.grid(4097)
    return float(np.max(np.abs(batch.grid_jet(grid, 0)[0, 0])))


def multiplicity(f, xi: float, tol: Tolerances = DEFAULT_TOLERANCES) -> tuple[int, float]:
    """Order ``p`` of the zero of ``f`` at ``xi`` and ``B = f^(p)(xi) / p!``.

    Raises:
        PreconditionError: ``f(xi)`` is not small.
        UnresolvedCluster: no derivative up to ``P_MAX`` clears its threshold.
    """
    batch = as_batch(f)
    coeffs = batch.point_jet([0], np.array([xi], dtype=float), P_MAX)
    value = float(coeffs[0, 0])
    if abs(value) > tol.zero_tol * _sup(batch):
        raise PreconditionError(f"f({xi!r}) = {value:.3e} is not a zero")
    order = int(_probe(coeffs, batch.deriv_scales(P_MAX)[:1], tol.deriv_tol)[0])
    if order == 0:
        raise UnresolvedCluster(float(xi), P_MAX)
    scale = float(np.asarray(getattr(batch, "row_scale", [1.0]))[0])
    return order, float(coeffs[order, 0] * scale)


def reduced_multiplicity(
    f, endpoint: float, bc: BoundaryCondition, tol: Tolerances = DEFAULT_TOLERANCES
) -> int:
    """Half the (even) order of a boundary zero; 0 for Dirichlet or ``f != 0``.

    Raises:
        OddBoundaryOrder: the order came out odd under a non-Dirichlet condition.
    """
    if bc.is_dirichlet:
        return 0
    batch = as_batch(f)
    p = batch.problem
    if endpoint not in (p.alpha, p.beta):
        raise PreconditionError(f"{endpoint!r} is not an endpoint")
    value = float(batch.point_jet([0], np.array([endpoint], dtype=float), 0)[0, 0])
    if abs(value) > tol.zero_tol * _sup(batch):
        return 0
    order, _ = multiplicity(batch, endpoint, tol)
    if order % 2:
        raise OddBoundaryOrder(endpoint, order)
    return order // 2


def count(records: list[ZeroRecord], p: Problem) -> ZeroCount:
    """The counts ``N, N_m, N_bar_m, N_v`` of a record list."""
    inner = [r for r in records if not r.is_boundary]
    m_bar = {"alpha": 0, "beta": 0}
    for r in records:
        if not r.is_boundary:
            continue
        side = "alpha" if r.xi == p.alpha else "beta"
        bc = p.bc_left if side == "alpha" else p.bc_right
        if bc.is_dirichlet:
            continue
        if r.p % 2:
            raise OddBoundaryOrder(r.xi, r.p)
        m_bar[side] = r.p // 2
    n_m = sum(r.p for r in inner)
    return ZeroCount(
        N=len(inner),
        N_m=n_m,
        N_bar_m=n_m + m_bar["alpha"] + m_bar["beta"],
        N_v=sum(1 for r in inner if r.sign_change),
        m_bar_alpha=m_bar["alpha"],
        m_bar_beta=m_bar["beta"],
    )


def zero_count(f, resolution_hint: float | None = None) -> ZeroCount:
    batch = as_batch(f)
    return count(locate_zeros(batch, resolution_hint=resolution_hint), batch.problem)


def zero_counts(f, resolution_hint: float | None = None) -> list[ZeroCount]:
    batch = as_batch(f)
    return [count(r, batch.problem) for r in locate_zeros_batch(batch, resolution_hint)]
