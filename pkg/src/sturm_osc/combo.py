"""Linear combinations of eigenfunctions and the two ``Y_k`` families.

Sturm's family reweights by powers of the (shifted) eigenvalues,

    Y_k = (-1)^k sum_j (rho_j + c)^k A_j V_j,

and satisfies ``G Y_{k+1} = K Y_k'' + K' Y_k' - (L + c G) Y_k``. Liouville's
family uses ``Y_k = sum_p (rho_1 - rho_p)^k A_p V_p``, which kills the
ground-state component for ``k >= 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import DegenerateDeterminant, NoCertificate, PreconditionError
from .expr import differentiate, evaluate
from .ivp import P_MAX
from .spectrum import EigenPair, FormBatch, Spectrum
from .zeros import ZeroRecord, locate_zeros

RESIDUAL_GRID = 512
K_STAR_CAP = 10_000


class Family(str, enum.Enum):
    STURM = "sturm"
    LIOUVILLE = "liouville"


@dataclass(frozen=True)
class Combination:
    """``sum_j w_j(k) A_j V_j`` over eigenpairs of one spectrum.

    ``pairs`` carry the eigenvalues used in the weights; the eigenfunctions
    themselves are always read from ``spectrum``. Replacing a pair's ``rho``
    therefore perturbs the weights only, which is what a corrupted-spectrum
    test double needs.
    """

    spectrum: Spectrum
    pairs: tuple[EigenPair, ...]
    coeffs: tuple[float, ...]
    k: int = 0
    family: Family = Family.STURM

    def __post_init__(self):
        if len(self.pairs) != len(self.coeffs):
            raise PreconditionError("one coefficient per eigenpair")
        if not self.pairs:
            raise PreconditionError("empty combination")
        idx = [e.index for e in self.pairs]
        if idx != sorted(set(idx)):
            raise PreconditionError("eigenpair indices must be distinct and increasing")
        if not any(a != 0 for a in self.coeffs):
            raise PreconditionError("combination is identically zero")
        if not all(math.isfinite(a) for a in self.coeffs):
            raise PreconditionError("coefficients must be finite")
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "k", int(self.k))
        if self.family is Family.LIOUVILLE:
            self.spectrum[1]  # rho_1 must be available

    # --- construction --------------------------------------------------------

    @classmethod
    def build(
        cls,
        spectrum: Spectrum,
        coeffs,
        k: int = 0,
        family: Family | str = Family.STURM,
        start: int = 1,
    ) -> "Combination":
        """From ``{index: A}`` or a list of ``A`` starting at index ``start``.

        Zero leading and trailing coefficients are trimmed.
        """
        if isinstance(coeffs, dict):
            items = sorted((int(i), float(a)) for i, a in coeffs.items())
        else:
            items = [(start + j, float(a)) for j, a in enumerate(coeffs)]
        nz = [j for j, (_, a) in enumerate(items) if a != 0]
        if not nz:
            raise PreconditionError("combination is identically zero")
        items = items[nz[0] : nz[-1] + 1]
        pairs = tuple(spectrum[i] for i, _ in items)
        return cls(spectrum, pairs, tuple(a for _, a in items), k, Family(family))

    @property
    def problem(self):
        return self.spectrum.problem

    @property
    def indices(self) -> list[int]:
        return [e.index for e in self.pairs]

    @property
    def m(self) -> int:
        return self.pairs[0].index

    @property
    def n(self) -> int:
        return self.pairs[-1].index

    @property
    def rho1(self) -> float:
        return self.spectrum[1].rho

    @property
    def rho_max(self) -> float:
        return max(e.rho for e, a in zip(self.pairs, self.coeffs) if a != 0)

    # --- weights -------------------------------------------------------------

    def _bases(self) -> np.ndarray:
        rho = np.array([e.rho for e in self.pairs])
        if self.family is Family.STURM:
            return rho + self.spectrum.shift
        return self.rho1 - rho

    def log_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """``(sign, log|w|)`` of the weights; ``log|w| = -inf`` for vanishing ones."""
        base = self._bases()
        a = np.asarray(self.coeffs, dtype=float)
        if self.family is Family.STURM and np.any(base <= 0):
            raise PreconditionError("shifted eigenvalues must be positive")
        if self.k < 0 and np.any((base == 0) & (a != 0)):
            raise PreconditionError("negative k with a zero weight base")
        with np.errstate(divide="ignore"):
            log_a = np.log(np.abs(a))
            if self.k == 0:
                log_w = log_a
                sign = np.sign(a)
            else:
                log_w = log_a + self.k * np.log(np.abs(base))
                sign = np.sign(a) * np.sign(base) ** (self.k % 2)
        if self.family is Family.STURM and self.k % 2:
            sign = -sign
        log_w = np.where(sign == 0, -np.inf, log_w)
        return sign, log_w

    def weights(self) -> np.ndarray:
        """Actual weights of ``Y_k`` (may overflow for large ``|k|``)."""
        sign, log_w = self.log_weights()
        with np.errstate(over="raise"):
            return sign * np.exp(log_w)

    def unit_weights(self) -> np.ndarray:
        """Weights divided by their largest magnitude (same zeros as ``Y_k``)."""
        sign, log_w = self.log_weights()
        return sign * np.exp(log_w - np.max(log_w))

    def batch(self) -> FormBatch:
        """Zero-search view (scaled by a positive constant)."""
        sign, log_w = self.log_weights()
        with np.errstate(over="ignore"):
            scale = np.exp(np.max(log_w))
        return FormBatch(self.spectrum, self.indices, self.unit_weights()[None, :], row_scale=[scale])

    def with_k(self, k: int) -> "Combination":
        return replace(self, k=int(k))

    def to_dict(self) -> dict:
        return {
            "problem_ref": getattr(self.spectrum, "source", None),
            "family": self.family.value,
            "k": self.k,
            "coeffs": [[e.index, a] for e, a in zip(self.pairs, self.coeffs)],
        }


def combination(spectrum: Spectrum, coeffs, k: int = 0, family="sturm", start: int = 1) -> Combination:
    return Combination.build(spectrum, coeffs, k, family, start)


def shift_k(c: Combination, dk: int) -> Combination:
    return c.with_k(c.k + int(dk))


def evaluate_combination(c: Combination, x, order: int = 0):
    """``d^order Y_k / dx^order`` at ``x`` (scalar or array)."""
    if not 0 <= order <= P_MAX:
        raise PreconditionError(f"derivative order must be in 0..{P_MAX}, got {order}")
    form = FormBatch(c.spectrum, c.indices, c.weights()[None, :])
    xa = np.asarray(x, dtype=float)
    jet = form.basis_jet(xa, order)[order]
    out = np.tensordot(form.weights[0], jet, axes=(0, 0)) * math.factorial(order)
    return float(out) if np.ndim(x) == 0 else out


def relation_residual(c: Combination, points: int = RESIDUAL_GRID) -> float:
    """Normalized sup of ``G Y_{k+1} - (K Y_k'' + K' Y_k' - (L + c G) Y_k)``.

    The scale is the sup of the sum of the four term magnitudes.
    """
    if c.family is not Family.STURM:
        raise PreconditionError("the differential relation holds for the Sturm family")
    p = c.problem
    x = p.grid(points)
    form = FormBatch(c.spectrum, c.indices, np.vstack([c.unit_weights(), _next_weights(c)]))
    jet = form.grid_jet(x, 2)
    y, dy, d2y = jet[0, 0], jet[1, 0], 2.0 * jet[2, 0]
    y_next = jet[0, 1]
    k_val = evaluate(p.K, x)
    dk_val = evaluate(differentiate(p.K), x) * np.ones_like(x)
    g_val = evaluate(p.G, x)
    l_val = evaluate(p.L, x) + c.spectrum.shift * g_val
    terms = [g_val * y_next, k_val * d2y, dk_val * dy, l_val * y]
    resid = terms[0] - (terms[1] + terms[2] - terms[3])
    scale = np.max(sum(np.abs(t) for t in terms))
    return float(np.max(np.abs(resid)) / scale)


def _next_weights(c: Combination) -> np.ndarray:
    """Weights of ``Y_{k+1}`` on the same scale as ``c.unit_weights()``."""
    sign, log_w = c.log_weights()
    base = -c._bases()
    return sign * np.exp(log_w - np.max(log_w)) * base


# --- Liouville's determinant ---------------------------------------------------


@dataclass(frozen=True)
class Determinant:
    """``W(x) = det[V_q(a_1), ..., V_q(a_mu), V_q(x)]_{q=1..mu+1}`` as a combination."""

    points: tuple[float, ...]
    cofactors: np.ndarray
    combination: Combination

    def __call__(self, x):
        return evaluate_combination(self.combination, x)


def liouville_w(spectrum: Spectrum, points) -> Determinant:
    """Build ``W`` once; the last column is expanded along cofactors.

    The top ``mu x mu`` block ``T`` (rows ``V_1..V_mu``) is LU-factored and the
    cofactor vector is ``c_{mu+1} = det T``, ``c_top = -det T * T^{-T} b`` with
    ``b`` the row of ``V_{mu+1}``.
    """
    a = np.asarray(points, dtype=float)
    p = spectrum.problem
    if a.ndim != 1 or a.size < 1:
        raise PreconditionError("need at least one point a_i")
    if np.any(np.diff(a) <= 0) or a[0] <= p.alpha or a[-1] >= p.beta:
        raise PreconditionError("points must be strictly increasing inside (alpha, beta)")
    mu = a.size
    rows = spectrum.rows(range(1, mu + 2))
    block = spectrum.values(a)[rows]  # (mu+1, mu)
    top, b = block[:mu], block[mu]
    lu, piv = scipy.linalg.lu_factor(top, check_finite=True)
    diag = np.abs(np.diag(lu))
    if diag.min() <= 1e-13 * max(diag.max(), 1e-300):
        raise DegenerateDeterminant(f"fixed block is rank deficient at points {a.tolist()}")
    det = float(np.prod(np.diag(lu)) * (-1.0) ** int(np.sum(piv != np.arange(mu))))
    top_c = -det * scipy.linalg.lu_solve((lu, piv), b, trans=1)
    cof = np.append(top_c, det)
    comb = Combination.build(spectrum, {q + 1: float(v) for q, v in enumerate(cof)})
    return Determinant(tuple(a.tolist()), cof, comb)


def liouville_determinant(spectrum: Spectrum, points, x):
    """Value of ``W`` at ``x``."""
    return liouville_w(spectrum, points)(x)


# --- orthogonality -------------------------------------------------------------


def weighted_inner(y: Combination, w: Combination) -> float:
    """``int G Y W dx`` by the composite Gauss rule on the shared mesh."""
    if y.spectrum is not w.spectrum:
        raise PreconditionError("combinations must share one spectrum")
    st, wq, g = y.spectrum.quadrature()
    vals = y.spectrum.values(stencil=st)
    fy = np.tensordot(y.weights(), vals[y.spectrum.rows(y.indices)], axes=(0, 0))
    fw = np.tensordot(w.weights(), vals[w.spectrum.rows(w.indices)], axes=(0, 0))
    return float(np.sum(wq * g * fy * fw))


def weighted_norm(y: Combination) -> float:
    return math.sqrt(weighted_inner(y, y))


def orthogonality_integral(y: Combination, w: Combination) -> float:
    """``int G Y W`` for ``W`` built from modes strictly below those of ``Y``."""
    if w.n >= y.m:
        raise PreconditionError("index ranges of Y and W must be disjoint with W below Y")
    return weighted_inner(y, w)


# --- limit certificate ---------------------------------------------------------


@dataclass(frozen=True)
class LimitCertificate:
    omega_ratio: float
    omega: float
    M: float
    Nbound: float
    epsilon1: float
    delta1: float
    k_star: int
    k: int
    windows: list[tuple[float, float]]
    boundary_windows: list[tuple[float, float]] = field(default_factory=list)
    zeros: list[float] = field(default_factory=list)
    holds: bool = False

    def to_dict(self) -> dict:
        return {
            "omega": self.omega,
            "omega_ratio": self.omega_ratio,
            "M": self.M,
            "N": self.Nbound,
            "epsilon1": self.epsilon1,
            "delta1": self.delta1,
            "k_star": self.k_star,
            "k": self.k,
            "windows": [list(w) for w in self.windows],
            "boundary_windows": [list(w) for w in self.boundary_windows],
            "zeros": list(self.zeros),
            "holds": self.holds,
        }


def _certificate_grid(spectrum: Spectrum, n: int) -> np.ndarray:
    p = spectrum.problem
    pts = max(4097, int(400 * n))
    return p.grid(pts)


def limit_certificate(c: Combination, k: int | None = None) -> LimitCertificate:
    """Constants showing that ``Y_k`` has one zero near each zero of ``V_n``.

    ``epsilon1`` is the larger of the two competing minima: ``|V_n'|`` on the
    windows of half-width ``delta1`` around the zeros of ``V_n``, and ``|V_n|``
    off them. ``delta1`` is found by bisection where they meet. A Dirichlet end
    gets a half-window, inside which ``Y_k`` may vanish only at the end itself.

    ``k`` defaults to ``k_star``; the zeros of ``Y_k`` are located and
    ``holds`` records whether they fall one per window and nowhere else.
    """
    if c.family is not Family.LIOUVILLE:
        raise PreconditionError("limit certificate needs the Liouville family")
    n = c.n
    if n < 2:
        raise PreconditionError("limit certificate needs n >= 2")
    spectrum = c.spectrum
    p = spectrum.problem
    a = dict(zip(c.indices, c.coeffs))
    a_n = a[n]
    rho1, rho_prev, rho_n = spectrum[1].rho, spectrum[n - 1].rho, spectrum[n].rho
    ratio = (rho_prev - rho1) / (rho_n - rho1)

    lower = [i for i in c.indices if i < n]
    if lower:
        rows = spectrum.rows(lower)
        grid = _certificate_grid(spectrum, n)
        v, kv = spectrum.state(grid)
        dv = kv / evaluate(p.K, grid)
        amax = max(abs(a[i] / a_n) for i in lower)
        M = n * amax * float(np.max(np.abs(v[rows])))
        Nb = n * amax * float(np.max(np.abs(dv[rows])))
    else:
        M = Nb = 0.0

    top = spectrum[n]
    xi = [r.xi for r in locate_zeros(top) if not r.is_boundary]
    grid = _certificate_grid(spectrum, n)
    vn, kvn = top.trajectory.state(grid)
    dvn = np.abs(kvn / evaluate(p.K, grid))
    avn = np.abs(vn)
    ends = []
    if p.bc_left.is_dirichlet:
        ends.append(p.alpha)
    if p.bc_right.is_dirichlet:
        ends.append(p.beta)
    centers = np.array(sorted(xi + ends))
    anchors = np.array([p.alpha] + xi + [p.beta])
    gaps = np.diff(anchors)
    delta_max = 0.5 * float(np.min(gaps)) if gaps.size else p.length / 2

    def minima(delta):
        near = np.zeros(grid.shape, dtype=bool)
        for c0 in centers:
            near |= np.abs(grid - c0) <= delta
        inside = float(np.min(dvn[near])) if near.any() else math.inf
        outside_mask = ~near
        outside = float(np.min(avn[outside_mask])) if outside_mask.any() else math.inf
        return inside, outside

    lo, hi = 0.0, delta_max * (1 - 1e-9)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        inside, outside = minima(mid)
        if inside > outside:
            lo = mid
        else:
            hi = mid
    delta1 = lo
    inside, outside = minima(delta1)
    eps1 = min(inside, outside)
    if not eps1 > 0:
        raise NoCertificate("epsilon1 vanished; V_n has a degenerate zero on the grid")

    bound = max(M, Nb)
    if ratio == 0.0 or bound <= eps1 / 2:
        k_star = 1
    else:
        k_star = max(1, math.ceil(math.log(eps1 / (2.0 * bound)) / math.log(ratio)))
    if k_star > K_STAR_CAP:
        raise NoCertificate(f"k_star = {k_star} exceeds {K_STAR_CAP}")
    k_eval = k_star if k is None else int(k)
    omega = ratio ** k_eval

    windows = [(x0 - delta1, x0 + delta1) for x0 in xi]
    bwin = []
    if p.bc_left.is_dirichlet:
        bwin.append((p.alpha, p.alpha + delta1))
    if p.bc_right.is_dirichlet:
        bwin.append((p.beta - delta1, p.beta))

    records = locate_zeros(c.with_k(k_eval))
    found = [r.xi for r in records if not r.is_boundary]
    holds = _one_per_window(found, records, windows) if k_eval >= k_star else False
    return LimitCertificate(
        omega_ratio=ratio,
        omega=omega,
        M=M,
        Nbound=Nb,
        epsilon1=eps1,
        delta1=delta1,
        k_star=k_star,
        k=k_eval,
        windows=windows,
        boundary_windows=bwin,
        zeros=found,
        holds=holds,
    )


def _one_per_window(found, records: list[ZeroRecord], windows) -> bool:
    if any(r.p != 1 for r in records if not r.is_boundary):
        return False
    if len(found) != len(windows):
        return False
    return all(lo < z < hi for z, (lo, hi) in zip(sorted(found), windows))
