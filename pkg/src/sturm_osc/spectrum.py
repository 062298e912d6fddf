"""Eigenpairs by shooting, indexed by the Pruefer phase.

For a trial ``r`` the solution started on the left boundary ray is integrated
to ``beta``. Its scaled phase there increases strictly with ``r``, and the
``i``-th eigenvalue is the unique ``r`` where it equals

    i*pi - atan2(s, H)          (= i*pi for Dirichlet at beta).

The phase brackets each eigenvalue on one branch of the right-boundary
mismatch, and Brent's method on the mismatch polishes it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from .errors import BracketNotFound, IntegrationError, OscillationMismatch, PreconditionError
from .expr import evaluate
from .ivp import (
    Mesh,
    Stencil,
    Trajectory,
    build_mesh,
    initial_state,
    ode_taylor,
    shoot,
    TOL_ODE,
)
from .problem import Problem, ValidationReport, validate, wavenumber

TOL_EIG = 1e-12
N_MAX = 64
R_CAP_FACTOR = 1e6


@dataclass(frozen=True)
class EigenPair:
    """Normalized eigenpair: ``int G V^2 = 1`` and ``V > 0`` just right of alpha.

    ``rho`` is the user-facing (un-shifted) eigenvalue; ``shift`` is the
    constant ``c`` with ``L + c G > 0`` used for positive weights.
    """

    index: int
    rho: float
    trajectory: Trajectory
    shift: float = 0.0
    sign: int = 1
    spectrum: "Spectrum | None" = field(default=None, repr=False, compare=False)

    @property
    def problem(self) -> Problem:
        return self.trajectory.problem

    @property
    def shifted_rho(self) -> float:
        return self.rho + self.shift

    def __call__(self, x):
        return self.trajectory(x)

    def derivatives(self, x, order: int):
        return self.trajectory.derivatives(x, order)

    # zero-search protocol

    @property
    def rho_max(self) -> float:
        return self.rho

    @property
    def report(self) -> ValidationReport:
        return self.spectrum.report if self.spectrum is not None else validate(self.problem)

    def values(self, x):
        return self.trajectory.state(x)[0]

    def taylor(self, x, order: int):
        x = np.asarray(x, dtype=float)
        v, p = self.trajectory.state(x)
        return ode_taylor(self.problem, x, v, p, self.trajectory.r, order)

    def sup_norm(self) -> float:
        if self.spectrum is not None:
            return float(self.spectrum.sup_norms[self.spectrum.rows([self.index])[0]])
        st, _ = self.trajectory.mesh.quadrature
        return max(self.trajectory.sup_norm, float(np.max(np.abs(self.trajectory.state(stencil=st)[0]))))

    def deriv_scales(self, order: int) -> np.ndarray:
        kappa = wavenumber(self.problem, self.report, self.rho)
        return self.sup_norm() * kappa ** np.arange(order + 1)


def _right_target(mesh: Mesh, r, index) -> np.ndarray:
    bc = mesh.problem.bc_right
    s = mesh.scale(r)
    h = math.inf if bc.is_dirichlet else bc.h
    offset = np.zeros_like(s) if bc.is_dirichlet else np.arctan2(s, h)
    return np.asarray(index) * np.pi - offset


def _end_phase(mesh: Mesh, r) -> tuple[np.ndarray, np.ndarray]:
    """Phase at beta and the target for index 0, for an array of r."""
    v0, p0 = initial_state(mesh.problem.bc_left)
    _, _, phi, _ = shoot(mesh, r, v0, p0)
    return phi[:, -1], _right_target(mesh, r, 0)


def _mismatch_on(mesh: Mesh, r: float) -> float:
    v0, p0 = initial_state(mesh.problem.bc_left)
    v, p, _, _ = shoot(mesh, [r], v0, p0)
    v, p = v[0], p[0]
    bc = mesh.problem.bc_right
    if bc.is_dirichlet:
        return float(v[-1] / np.max(np.abs(v)))
    return float((p[-1] + bc.h * v[-1]) / np.max(np.abs(p) + bc.h * np.abs(v)))


def mismatch(p: Problem, r: float, tol: float = TOL_ODE) -> float:
    """Right-boundary functional ``K V'(beta) + H V(beta)`` (``V(beta)`` for
    Dirichlet) of the solution shot from the left data, divided by the
    trajectory's sup-norm."""
    report = validate(p)
    mesh = build_mesh(p, [r], tol=tol, report=report)
    return _mismatch_on(mesh, r)


class Spectrum:
    """The first eigenpairs of one problem on a common mesh.

    Attributes:
        problem, report, mesh: the problem, its validation report, the mesh.
        pairs: list of :class:`EigenPair` ordered by index.
    """

    def __init__(self, problem: Problem, report: ValidationReport, mesh: Mesh, pairs: list[EigenPair]):
        self.problem = problem
        self.report = report
        self.mesh = mesh
        self.pairs = [
            EigenPair(e.index, e.rho, e.trajectory, e.shift, e.sign, spectrum=self) for e in pairs
        ]
        self.shift = report.shift
        self._by_index = {e.index: e for e in self.pairs}
        self._v = np.stack([e.trajectory.v for e in self.pairs])
        self._p = np.stack([e.trajectory.p for e in self.pairs])
        self._r = np.array([e.trajectory.r for e in self.pairs])

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, index: int) -> EigenPair:
        """Eigenpair by its (1-based) index."""
        try:
            return self._by_index[index]
        except KeyError:
            raise PreconditionError(f"eigenpair {index} was not computed") from None

    @property
    def indices(self) -> list[int]:
        return [e.index for e in self.pairs]

    @property
    def rho(self) -> np.ndarray:
        return np.array([e.rho for e in self.pairs])

    @property
    def shifted_rho(self) -> np.ndarray:
        return self.rho + self.shift

    def rows(self, indices) -> np.ndarray:
        pos = {e.index: i for i, e in enumerate(self.pairs)}
        try:
            return np.array([pos[i] for i in indices], dtype=int)
        except KeyError as exc:
            raise PreconditionError(f"eigenpair {exc.args[0]} was not computed") from None

    def stencil(self, x) -> Stencil:
        return Stencil(self.mesh, x)

    def state(self, x=None, stencil: Stencil | None = None):
        """Normalized ``(V_j, K V_j')`` for every pair: arrays (n_pairs, ...)."""
        st = stencil if stencil is not None else Stencil(self.mesh, x)
        m = st.propagators(self._r)
        vi = self._v[:, st.cell]
        pi = self._p[:, st.cell]
        return m[0] * vi + m[1] * pi, m[2] * vi + m[3] * pi

    def values(self, x=None, stencil: Stencil | None = None) -> np.ndarray:
        return self.state(x, stencil)[0]

    def taylor(self, x, order: int) -> np.ndarray:
        """Taylor coefficients (order+1, n_pairs, ...) of every eigenfunction."""
        st = Stencil(self.mesh, x)
        v, p = self.state(stencil=st)
        r = self._r.reshape((-1,) + (1,) * st.x.ndim)
        return ode_taylor(self.problem, st.x, v, p, r, order)

    @cached_property
    def sup_norms(self) -> np.ndarray:
        """``sup |V_j|`` over mesh nodes and quadrature nodes."""
        st, _ = self.mesh.quadrature
        inner = np.max(np.abs(self.values(stencil=st)), axis=1)
        return np.maximum(inner, np.max(np.abs(self._v), axis=1))

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.array([wavenumber(self.problem, self.report, r) for r in self.rho])

    def quadrature(self):
        """(stencil, weights, G at nodes) of the composite Gauss rule."""
        st, w = self.mesh.quadrature
        return st, w, evaluate(self.problem.G, st.x)


def _normalize(mesh: Mesh, r: float, v: np.ndarray, p: np.ndarray, phi, s) -> Trajectory:
    traj = Trajectory(mesh, float(r), v, p, phi, float(s), n_steps=mesh.n_cells)
    st, w = mesh.quadrature
    g = evaluate(mesh.problem.G, st.x)
    vq, _ = traj.state(stencil=st)
    norm = math.sqrt(float(np.sum(w * g * vq * vq)))
    return Trajectory(mesh, float(r), v / norm, p / norm, phi, float(s), n_steps=mesh.n_cells)


def compute_spectrum(
    p: Problem,
    n: int | None = None,
    indices=None,
    tol_eig: float = TOL_EIG,
    tol_ode: float = TOL_ODE,
    report: ValidationReport | None = None,
    r_cap: float | None = None,
) -> Spectrum:
    """Eigenpairs ``1..n`` (or the given ``indices``) on one shared mesh.

    Raises:
        PreconditionError: for indices outside ``1..N_MAX``.
        BracketNotFound: if the search passes ``r_cap``.
    """
    if indices is None:
        if n is None or n < 1:
            raise PreconditionError("need n >= 1 or explicit indices")
        indices = range(1, n + 1)
    indices = sorted({int(i) for i in indices})
    if indices[0] < 1 or indices[-1] > N_MAX:
        raise PreconditionError(f"eigenpair indices must lie in 1..{N_MAX}")
    report = report or validate(p)
    top = indices[-1]

    grid = p.grid(report.grid_points)
    k = evaluate(p.K, grid)
    g = evaluate(p.G, grid)
    l = evaluate(p.L, grid)
    # Rayleigh quotient bound: rho_1 >= inf L/G since h, H >= 0
    r_lo = report.min_L_over_G - 1.0 - 0.1 * abs(report.min_L_over_G)
    width = float(trapezoid(np.sqrt(g / k), grid))
    r_hi = 1.2 * (top * math.pi / width) ** 2 + float(np.max(l / g)) + 1.0
    cap = r_cap if r_cap is not None else R_CAP_FACTOR * (1.0 + abs(r_lo) + (math.pi / width) ** 2)
    r_hi = min(r_hi, cap)

    while True:
        mesh = build_mesh(p, [r_lo, 0.5 * (r_lo + r_hi), r_hi], tol=tol_ode, report=report)
        phase, offset = _end_phase(mesh, [r_lo, r_hi])
        if phase[0] - offset[0] >= math.pi:
            raise IntegrationError("lower eigenvalue bound is not below the ground state")
        if phase[1] - offset[1] > top * math.pi:
            break
        if r_hi >= cap:
            raise BracketNotFound(f"eigenvalue {top} not bracketed below r_cap={cap:.6g}")
        r_hi = min(r_lo + 2.0 * (r_hi - r_lo), cap)

    # phase table: r -> (phase at beta) - (target for index 0)
    table_r = [r_lo, r_hi]
    table_v = list(phase - offset)

    lo = np.full(len(indices), r_lo)
    hi = np.full(len(indices), r_hi)
    lo_v = np.full(len(indices), table_v[0])
    hi_v = np.full(len(indices), table_v[1])
    targets = np.array(indices, dtype=float) * math.pi
    for _ in range(200):
        # tighten from the table, then bisect the brackets that are still wide
        for r, val in zip(table_r, table_v):
            below = (val < targets) & (r > lo)
            above = (val >= targets) & (r < hi)
            lo[below], lo_v[below] = r, val
            hi[above], hi_v[above] = r, val
        done = (lo_v > targets - math.pi) & (hi_v < targets + math.pi)
        if done.all():
            break
        mids = 0.5 * (lo[~done] + hi[~done])
        mids = np.unique(mids)
        ph, off = _end_phase(mesh, mids)
        table_r.extend(mids.tolist())
        table_v.extend((ph - off).tolist())
    else:
        raise BracketNotFound("phase bisection did not isolate the eigenvalues")

    v0, p0 = initial_state(p.bc_left)
    pairs = []
    for j, index in enumerate(indices):
        a, b = float(lo[j]), float(hi[j])
        fa, fb = _mismatch_on(mesh, a), _mismatch_on(mesh, b)
        if fa == 0.0:
            rho = a
        elif fb == 0.0:
            rho = b
        else:
            if fa * fb > 0:
                raise BracketNotFound(f"mismatch does not change sign around eigenvalue {index}")
            rho = brentq(
                lambda r: _mismatch_on(mesh, r),
                a,
                b,
                xtol=tol_eig * (1.0 + abs(a)),
                rtol=4 * np.finfo(float).eps,
                maxiter=200,
            )
        v, pp, phi, s = shoot(mesh, [rho], v0, p0)
        traj = _normalize(mesh, rho, v[0], pp[0], phi[0], s[0])
        pairs.append(EigenPair(index, float(rho), traj, shift=report.shift))
    return Spectrum(p, report, mesh, pairs)


def compute_eigenvalue(p: Problem, i: int, **kwargs) -> EigenPair:
    """The ``i``-th eigenpair (1-based)."""
    if i < 1:
        raise PreconditionError("eigenvalue index must be >= 1")
    return compute_spectrum(p, indices=[i], **kwargs).pairs[0]


def verify_oscillation(e: EigenPair, resolution_hint: float | None = None) -> int:
    """Interior zero count of ``V_i``; raises unless it equals ``i - 1``."""
    from .zeros import count, locate_zeros

    records = locate_zeros(e, e.problem, resolution_hint)
    found = count(records, e.problem).N
    if found != e.index - 1:
        raise OscillationMismatch(e.index, found)
    return found


def verify_interlacing(e_i: EigenPair, e_next: EigenPair) -> bool:
    """Strict interlacing of the zeros of ``V_i`` and ``V_{i+1}``.

    The points ``alpha``, the interior zeros of ``V_i``, and ``beta`` cut the
    interval into ``i`` open pieces; the check passes iff each piece holds
    exactly one zero of ``V_{i+1}`` and no zero is shared.
    """
    if e_next.index != e_i.index + 1:
        raise PreconditionError("interlacing needs consecutive indices")
    if e_i.problem != e_next.problem:
        raise PreconditionError("eigenpairs belong to different problems")
    from .zeros import locate_zeros

    p = e_i.problem
    low = [z.xi for z in locate_zeros(e_i, p) if not z.is_boundary]
    high = [z.xi for z in locate_zeros(e_next, p) if not z.is_boundary]
    cuts = [p.alpha] + low + [p.beta]
    if len(high) != len(cuts) - 1:
        return False
    tol = 1e-9 * p.length
    for (a, b), z in zip(zip(cuts[:-1], cuts[1:]), high):
        if not (a + tol < z < b - tol):
            return False
    return True


class FormBatch:
    """Rows of weights over eigenfunctions of one spectrum: ``f_t = sum_j W[t, j] V_j``.

    This is the workhorse of the zero search: heat-evolution time slices and
    the members of a ``Y_k`` family share one basis evaluation.
    """

    def __init__(self, spectrum: Spectrum, indices, weights, row_scale=None):
        self.spectrum = spectrum
        self.indices = list(indices)
        self.rows = spectrum.rows(self.indices)
        w = np.atleast_2d(np.asarray(weights, dtype=float))
        if w.shape[1] != len(self.indices):
            raise PreconditionError("weight rows do not match the eigenpair indices")
        if not np.all(np.isfinite(w)):
            raise PreconditionError("weights must be finite")
        self.weights = w
        # the rows may be rescaled copies of the functions of interest;
        # row_scale maps derivative values back (used for reported B)
        self.row_scale = np.ones(w.shape[0]) if row_scale is None else np.asarray(row_scale, dtype=float)
        self._r = spectrum._r[self.rows]

    @property
    def problem(self) -> Problem:
        return self.spectrum.problem

    @property
    def report(self) -> ValidationReport:
        return self.spectrum.report

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def rho_max(self) -> float:
        used = np.any(self.weights != 0, axis=0)
        rho = self.spectrum.rho[self.rows]
        return float(np.max(rho[used])) if used.any() else float(np.max(rho))

    def basis_jet(self, x, order: int) -> np.ndarray:
        """Taylor coefficients (order+1, B, ...) of the basis functions."""
        st = Stencil(self.spectrum.mesh, x)
        v, p = self.spectrum.state(stencil=st)
        v, p = v[self.rows], p[self.rows]
        if order == 0:
            return v[None]
        r = self._r.reshape((-1,) + (1,) * st.x.ndim)
        return ode_taylor(self.problem, st.x, v, p, r, order)

    def grid_jet(self, x, order: int) -> np.ndarray:
        """Taylor coefficients (order+1, T, M) of every row on a 1-d grid."""
        return np.einsum("tb,obm->otm", self.weights, self.basis_jet(np.asarray(x, dtype=float), order))

    def point_jet(self, rows, x, order: int) -> np.ndarray:
        """Taylor coefficients (order+1, P) of row ``rows[i]`` at ``x[i]``."""
        jet = self.basis_jet(np.asarray(x, dtype=float), order)
        return np.einsum("pb,obp->op", self.weights[np.asarray(rows, dtype=int)], jet)

    def deriv_scales(self, order: int) -> np.ndarray:
        """(T, order+1) array: ``sum_j |W_tj| sup|V_j| kappa_j^n``."""
        sup = self.spectrum.sup_norms[self.rows]
        kappa = self.spectrum.wavenumbers[self.rows]
        per = sup[:, None] * kappa[:, None] ** np.arange(order + 1)[None, :]
        return np.abs(self.weights) @ per

    def values(self, x) -> np.ndarray:
        """Values (T, ...) of every row."""
        return np.tensordot(self.weights, self.basis_jet(x, 0)[0], axes=(1, 0))
