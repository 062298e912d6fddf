"""Initial value problems for ``(K V')' + (r G - L) V = 0``.

The state is the pair ``(V, P)`` with ``P = K V'``, so that

    V' = P / K,        P' = (L - r G) V.

The system is linear, so each mesh cell is advanced by a sixth-order Magnus
step (three Gauss-Legendre nodes, exact 2x2 matrix exponential). For constant
coefficients the step is exact. The mesh is refined by step doubling until the
local error per unit length is below ``tol`` and the phase rotation per cell
is small, for every spectral parameter the mesh is built for. Values between
nodes come from a partial Magnus step out of the left node.

Oscillation is tracked with a scaled Pruefer phase ``phi = arg(P + i s V)``
whose crossings of multiples of pi are exactly the zeros of ``V``; the scale
``s`` only changes how fast the phase turns between zeros, not where the
crossings are. :func:`prufer_angle` reports the classical angle
``theta = arg(P + i V)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ExprDomainError, IntegrationError, PreconditionError
from .expr import _tdiv, evaluate, taylor
from .problem import BoundaryCondition, Problem, ValidationReport, validate

P_MAX = 8
TOL_ODE = 1e-10
ROT_MAX = 0.5
MAX_CELLS = 1 << 16

_SQ15 = math.sqrt(15.0)
GAUSS3 = np.array([0.5 - _SQ15 / 10.0, 0.5, 0.5 + _SQ15 / 10.0])
_QN, _QW = np.polynomial.legendre.leggauss(8)
QUAD_NODES = 0.5 * (_QN + 1.0)
QUAD_WEIGHTS = 0.5 * _QW


# ---------------------------------------------------------------------------
# 2x2 traceless matrix algebra; a matrix [[a, b], [c, -a]] is a tuple (a, b, c)


def _comm(x, y):
    a1, b1, c1 = x
    a2, b2, c2 = y
    return (b1 * c2 - b2 * c1, 2.0 * (a1 * b2 - a2 * b1), 2.0 * (c1 * a2 - a1 * c2))


def _lin(*terms):
    """Linear combination of (coefficient, matrix) pairs."""
    a = sum(w * m[0] for w, m in terms)
    b = sum(w * m[1] for w, m in terms)
    c = sum(w * m[2] for w, m in terms)
    return (a, b, c)


def _expm(omega):
    """exp of a traceless 2x2 matrix; returns (m00, m01, m10, m11)."""
    a, b, c = omega
    delta = a * a + b * c
    w = np.sqrt(np.abs(delta))
    small = w < 1e-4
    ws = np.where(small, 1.0, w)
    with np.errstate(over="ignore", invalid="ignore"):
        cos_part = np.where(delta >= 0, np.cosh(w), np.cos(w))
        sin_part = np.where(delta >= 0, np.sinh(ws) / ws, np.sin(ws) / ws)
    sin_part = np.where(small, 1.0 + delta / 6.0 + delta * delta / 120.0, sin_part)
    cos_part = np.where(small, 1.0 + delta / 2.0 + delta * delta / 24.0, cos_part)
    return (cos_part + sin_part * a, sin_part * b, sin_part * c, cos_part - sin_part * a)


def magnus_step(h, inv_k, g, l, r):
    """Sixth-order Magnus propagator over a step of length ``h``.

    ``inv_k``, ``g``, ``l`` hold 1/K, G, L at the three Gauss nodes along axis
    0; everything else broadcasts. Returns the four matrix entries.
    """
    c = [l[j] - r * g[j] for j in range(3)]
    zero = np.zeros(np.broadcast(h, c[0]).shape)
    A = [(zero, inv_k[j] + zero, c[j]) for j in range(3)]
    a1 = _lin((h, A[1]))
    a2 = _lin((_SQ15 * h / 3.0, A[2]), (-_SQ15 * h / 3.0, A[0]))
    a3 = _lin((10.0 * h / 3.0, A[2]), (-20.0 * h / 3.0, A[1]), (10.0 * h / 3.0, A[0]))
    c1 = _comm(a1, a2)
    c2 = _lin((-1.0 / 60.0, _comm(a1, _lin((2.0, a3), (1.0, c1)))))
    inner = _comm(_lin((-20.0, a1), (-1.0, a3), (1.0, c1)), _lin((1.0, a2), (1.0, c2)))
    omega = _lin((1.0, a1), (1.0 / 12.0, a3), (1.0 / 240.0, inner))
    return _expm(omega)


def _matmul(m, n):
    """Entrywise-broadcast product m @ n of 2x2 matrices stored as 4-tuples."""
    return (
        m[0] * n[0] + m[1] * n[2],
        m[0] * n[1] + m[1] * n[3],
        m[2] * n[0] + m[3] * n[2],
        m[2] * n[1] + m[3] * n[3],
    )


# ---------------------------------------------------------------------------
# coefficient tables


def coefficient_values(p: Problem, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """1/K, G and L at ``x``."""
    try:
        k = evaluate(p.K, x)
        g = evaluate(p.G, x)
        l = evaluate(p.L, x)
    except ExprDomainError as exc:
        raise IntegrationError(f"coefficient domain error: {exc}") from exc
    if np.any(k <= 0):
        raise IntegrationError("K is not positive inside the interval")
    return 1.0 / np.asarray(k), np.asarray(g), np.asarray(l)


class Stencil:
    """Partial-step data for evaluating trajectories at fixed points.

    Coefficients at the Gauss nodes of ``[x_cell, x]`` do not depend on the
    spectral parameter, so one stencil serves every trajectory on the mesh.
    """

    def __init__(self, mesh: "Mesh", x):
        x = np.asarray(x, dtype=float)
        if np.any(x < mesh.alpha - 1e-12 * mesh.length) or np.any(
            x > mesh.beta + 1e-12 * mesh.length
        ):
            raise PreconditionError("evaluation point outside [alpha, beta]")
        self.x = np.clip(x, mesh.alpha, mesh.beta)
        self.cell = np.clip(np.searchsorted(mesh.x, self.x, side="right") - 1, 0, mesh.n_cells - 1)
        self.d = self.x - mesh.x[self.cell]
        pts = mesh.x[self.cell] + GAUSS3.reshape((3,) + (1,) * self.x.ndim) * self.d
        self.inv_k, self.g, self.l = coefficient_values(mesh.problem, pts)

    def propagators(self, r):
        r = np.asarray(r, dtype=float).reshape(np.shape(r) + (1,) * self.x.ndim)
        return magnus_step(self.d, self.inv_k, self.g, self.l, r)


@dataclass
class Mesh:
    """Cell decomposition of ``[alpha, beta]`` with tabulated coefficients."""

    problem: Problem
    x: np.ndarray
    inv_k: np.ndarray  # (3, n_cells) at Gauss nodes
    g: np.ndarray
    l: np.ndarray
    r_range: tuple[float, float]
    tol: float
    mean_k: float
    mean_g: float
    mean_l: float

    @property
    def alpha(self) -> float:
        return self.problem.alpha

    @property
    def beta(self) -> float:
        return self.problem.beta

    @property
    def length(self) -> float:
        return self.problem.length

    @property
    def n_cells(self) -> int:
        return self.x.size - 1

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.x)

    def scale(self, r):
        """Pruefer scale ``s(r)``: equalizes the turning rates of V and P."""
        floor = self.mean_k * (math.pi / self.length) ** 2
        return np.sqrt(self.mean_k * np.maximum(np.abs(np.asarray(r) * self.mean_g - self.mean_l), floor))

    def step_matrices(self, r):
        r = np.asarray(r, dtype=float)
        return magnus_step(self.h, self.inv_k, self.g, self.l, r.reshape(r.shape + (1,)))

    @cached_property
    def quadrature(self) -> tuple[Stencil, np.ndarray]:
        """Composite 8-point Gauss-Legendre rule on the cells."""
        pts = self.x[:-1, None] + QUAD_NODES[None, :] * self.h[:, None]
        w = QUAD_WEIGHTS[None, :] * self.h[:, None]
        return Stencil(self, pts.ravel()), w.ravel()

    def stencil(self, x) -> Stencil:
        return Stencil(self, x)


def _cell_error(p: Problem, x: np.ndarray, r_values, scale_fn):
    """Step-doubling error and rotation bound per cell."""
    h = np.diff(x)
    left = x[:-1]
    nodes = GAUSS3[:, None]
    full = coefficient_values(p, left + nodes * h)
    half1 = coefficient_values(p, left + nodes * h / 2)
    half2 = coefficient_values(p, left + h / 2 + nodes * h / 2)
    k_min = 1.0 / np.max(np.concatenate([full[0], half1[0], half2[0]]), axis=0)
    err = np.zeros_like(h)
    rot = np.zeros_like(h)
    for r in r_values:
        s = float(scale_fn(r))
        m = magnus_step(h, *full, r)
        m1 = magnus_step(h / 2, *half1, r)
        m2 = magnus_step(h / 2, *half2, r)
        m21 = _matmul(m2, m1)
        diff = (
            np.abs(m[0] - m21[0]),
            np.abs(m[1] - m21[1]) * s,
            np.abs(m[2] - m21[2]) / s,
            np.abs(m[3] - m21[3]),
        )
        err = np.maximum(err, np.max(np.stack(diff), axis=0))
        q = np.abs(np.concatenate([full[2] - r * full[1], half1[2] - r * half1[1], half2[2] - r * half2[1]]))
        rot = np.maximum(rot, h * np.maximum(s / k_min, q.max(axis=0) / s))
    return err, rot, full


def build_mesh(
    p: Problem,
    r_values,
    tol: float = TOL_ODE,
    report: ValidationReport | None = None,
    initial_cells: int = 16,
) -> Mesh:
    """Adaptive mesh good for every spectral parameter in ``r_values``.

    A cell is split until its step-doubling error is at most
    ``tol * h / (beta - alpha)`` and the phase rotation bound over it is at
    most ``ROT_MAX`` radians.

    Raises:
        IntegrationError: if the cell count exceeds ``MAX_CELLS`` or a cell
            shrinks below ``1e-12 (beta - alpha)`` (step-size underflow).
    """
    report = report or validate(p)
    grid = p.grid(report.grid_points)
    mean_k = float(np.mean(evaluate(p.K, grid)))
    mean_g = float(np.mean(evaluate(p.G, grid)))
    mean_l = float(np.mean(evaluate(p.L, grid)))
    r_values = [float(r) for r in np.atleast_1d(r_values)]
    length = p.length
    floor = mean_k * (math.pi / length) ** 2

    def scale_fn(r):
        return math.sqrt(mean_k * max(abs(r * mean_g - mean_l), floor))

    x = np.linspace(p.alpha, p.beta, initial_cells + 1)
    while True:
        err, rot, full = _cell_error(p, x, r_values, scale_fn)
        h = np.diff(x)
        bad = (err > tol * h / length) | (rot > ROT_MAX)
        if not bad.any():
            break
        if x.size - 1 + int(bad.sum()) > MAX_CELLS or np.any(h[bad] < 1e-12 * length):
            raise IntegrationError("step-size underflow while refining the mesh")
        mids = x[:-1][bad] + h[bad] / 2
        x = np.sort(np.concatenate([x, mids]))
    return Mesh(
        problem=p,
        x=x,
        inv_k=full[0],
        g=full[1],
        l=full[2],
        r_range=(min(r_values), max(r_values)),
        tol=tol,
        mean_k=mean_k,
        mean_g=mean_g,
        mean_l=mean_l,
    )


# ---------------------------------------------------------------------------
# shooting


def _prefix_apply(m, v0, p0):
    """Node states ``y_{i+1} = M_i y_i`` for batched step matrices (..., N).

    Uses an associative doubling scan so that the work is vectorized.
    """
    a, b, c, d = (np.array(t, dtype=float, copy=True) for t in m)
    n = a.shape[-1]
    shift = 1
    while shift < n:
        # prefix[i] <- prefix[i] @ prefix[i - shift]
        na = a[..., shift:] * a[..., :-shift] + b[..., shift:] * c[..., :-shift]
        nb = a[..., shift:] * b[..., :-shift] + b[..., shift:] * d[..., :-shift]
        nc = c[..., shift:] * a[..., :-shift] + d[..., shift:] * c[..., :-shift]
        nd = c[..., shift:] * b[..., :-shift] + d[..., shift:] * d[..., :-shift]
        a[..., shift:], b[..., shift:], c[..., shift:], d[..., shift:] = na, nb, nc, nd
        shift *= 2
    v0 = np.asarray(v0, dtype=float)[..., None]
    p0 = np.asarray(p0, dtype=float)[..., None]
    v = np.concatenate([np.broadcast_to(v0, a.shape[:-1] + (1,)), a * v0 + b * p0], axis=-1)
    p = np.concatenate([np.broadcast_to(p0, a.shape[:-1] + (1,)), c * v0 + d * p0], axis=-1)
    return v, p


def _wrap(angle):
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


def initial_state(bc: BoundaryCondition) -> tuple[float, float]:
    """Left data ``(V, K V')`` on the ray fixed by ``K V' = h V``, unit length."""
    if bc.is_dirichlet:
        return 0.0, 1.0
    norm = math.hypot(1.0, bc.h)
    return 1.0 / norm, bc.h / norm


def shoot(mesh: Mesh, r, v0, p0):
    """Integrate for an array of ``r``; returns node arrays V, P, phi, s."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    v0 = np.broadcast_to(np.asarray(v0, dtype=float), r.shape)
    p0 = np.broadcast_to(np.asarray(p0, dtype=float), r.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        v, p = _prefix_apply(mesh.step_matrices(r), v0, p0)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(p))):
        raise IntegrationError("solution overflow; spectral parameter too far below the spectrum")
    s = mesh.scale(r)[:, None]
    ang = np.arctan2(s * v, p)
    # the starting ray is defined up to sign: put the initial phase in [0, pi)
    start = np.mod(ang[:, :1], np.pi)
    start = np.where(start >= np.pi, 0.0, start)
    turns = np.cumsum(_wrap(np.diff(ang, axis=-1)), axis=-1)
    phi = start + np.concatenate([np.zeros_like(start), turns], axis=-1)
    return v, p, phi, s[:, 0]


def theta_from_phi(phi, s):
    """Classical Pruefer angle from the scaled phase (same multiples of pi)."""
    k = np.floor(phi / np.pi)
    frac = phi - k * np.pi
    return k * np.pi + np.arctan2(np.sin(frac), s * np.cos(frac)) % np.pi


@dataclass
class Trajectory:
    """Dense solution of one initial value problem.

    Attributes:
        mesh: the cell decomposition the solution lives on.
        r: spectral parameter.
        v, p: ``V`` and ``K V'`` at the mesh nodes.
        phi: scaled Pruefer phase at the nodes.
        s: Pruefer scale.
    """

    mesh: Mesh
    r: float
    v: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    s: float
    n_steps: int = field(default=0)

    @property
    def problem(self) -> Problem:
        return self.mesh.problem

    def state(self, x=None, stencil: Stencil | None = None):
        """``(V(x), K V'(x))``; pass a prebuilt ``stencil`` to skip coefficient work."""
        st = stencil if stencil is not None else Stencil(self.mesh, x)
        m = st.propagators(self.r)
        vi = self.v[st.cell]
        pi = self.p[st.cell]
        return m[0] * vi + m[1] * pi, m[2] * vi + m[3] * pi

    def __call__(self, x):
        v, _ = self.state(x)
        return float(v) if np.ndim(x) == 0 else v

    def phase(self, x):
        """Scaled Pruefer phase at ``x``."""
        st = Stencil(self.mesh, x)
        m = st.propagators(self.r)
        vi, pi = self.v[st.cell], self.p[st.cell]
        v = m[0] * vi + m[1] * pi
        p = m[2] * vi + m[3] * pi
        node = np.arctan2(self.s * vi, pi)
        here = np.arctan2(self.s * v, p)
        return self.phi[st.cell] + _wrap(here - node)

    def theta(self, x):
        return theta_from_phi(self.phase(x), self.s)

    def derivatives(self, x, order: int = P_MAX) -> np.ndarray:
        """Exact derivatives ``V^(n)(x)``, ``n = 0..order`` (shape (order+1, ...))."""
        v, p = self.state(x)
        return ode_derivatives(self.problem, np.asarray(x, dtype=float), v, p, self.r, order)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.v)))


def ode_taylor(problem: Problem, x, v, p, r, order: int):
    """Taylor coefficients of V at ``x`` from ``(V, K V')`` via the ODE.

    ``r`` broadcasts against ``v``; ``x`` broadcasts against the trailing axes.
    Returns an array of shape ``(order + 1,) + broadcast shape``.
    """
    if order > P_MAX or order < 0:
        raise PreconditionError(f"derivative order must be in 0..{P_MAX}, got {order}")
    x = np.asarray(x, dtype=float)
    if order <= 1:  # bisection hot path: no coefficient jets needed
        shape = np.broadcast(v, p, np.asarray(r), x).shape
        u0 = np.broadcast_to(v, shape)
        if order == 0:
            return u0[None].copy()
        return np.stack([u0, np.broadcast_to(p / evaluate(problem.K, x), shape)])
    n = order
    kt = taylor(problem.K, x, n)
    gt = taylor(problem.G, x, n)
    lt = taylor(problem.L, x, n)
    one = np.zeros_like(kt)
    one[0] = 1.0
    at = _tdiv(one, kt)
    r = np.asarray(r, dtype=float)
    shape = np.broadcast(v, p, r, x).shape
    u = np.zeros((n + 1,) + shape)
    w = np.zeros((n + 1,) + shape)
    u[0] = v
    w[0] = p
    for k in range(n):
        u[k + 1] = sum(at[k - j] * w[j] for j in range(k + 1)) / (k + 1)
        w[k + 1] = sum((lt[k - j] - r * gt[k - j]) * u[j] for j in range(k + 1)) / (k + 1)
    return u[: order + 1]


def ode_derivatives(problem: Problem, x, v, p, r, order: int):
    coeffs = ode_taylor(problem, x, v, p, r, order)
    fact = np.array([math.factorial(k) for k in range(order + 1)], dtype=float)
    return coeffs * fact.reshape((-1,) + (1,) * (coeffs.ndim - 1))


def integrate(
    p: Problem,
    r: float,
    v0: float,
    kv0: float,
    tol: float = TOL_ODE,
    mesh: Mesh | None = None,
    report: ValidationReport | None = None,
) -> Trajectory:
    """Solve from ``alpha`` with ``V = v0``, ``K V' = kv0``.

    Raises:
        PreconditionError: if ``(v0, kv0) = (0, 0)``.
        IntegrationError: on step-size underflow or coefficient domain errors.
    """
    if v0 == 0 and kv0 == 0:
        raise PreconditionError("initial data (0, 0) gives the trivial solution")
    if mesh is None:
        report = report or validate(p)
        mesh = build_mesh(p, [r], tol=tol, report=report)
    v, pp, phi, s = shoot(mesh, [r], v0, kv0)
    return Trajectory(mesh, float(r), v[0], pp[0], phi[0], float(s[0]), n_steps=mesh.n_cells)


def prufer_angle(
    p: Problem, r: float, bc_left: BoundaryCondition | None = None, tol: float = TOL_ODE
) -> Trajectory:
    """Trajectory started on the ray of ``bc_left``; use ``.theta(x)``.

    ``theta(alpha)`` is 0 for Dirichlet and ``atan2(1, h)`` for Robin ``h``;
    the number of zeros of V in ``]alpha, x]`` is ``floor(theta(x) / pi)``.
    """
    bc = bc_left if bc_left is not None else p.bc_left
    v0, kv0 = initial_state(bc)
    return integrate(p, r, v0, kv0, tol=tol)


def derivative_at(t: Trajectory, x: float, order: int) -> float:
    """Exact ``order``-th derivative of the solution at ``x`` (not finite differences)."""
    if order < 0 or order > P_MAX:
        raise PreconditionError(f"derivative order must be in 0..{P_MAX}, got {order}")
    return float(t.derivatives(x, order)[order])
