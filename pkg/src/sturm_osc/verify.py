"""Executable theorem checks and a randomized harness.

Each check returns a :class:`VerificationReport`. A failed inequality is a
finding recorded in the report, never an exception; exceptions are reserved
for bad inputs.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .combo import Combination, Family, combination, relation_residual
from .errors import PreconditionError, SturmOscError
from .problem import BoundaryCondition, Problem, dump_problem, sine_problem
from .spectrum import FormBatch, compute_spectrum
from .zeros import ZeroCount, count, locate_zeros_batch, zero_count

MAX_K_SPAN = 16
RESIDUAL_TOL = 1e-6


@dataclass
class Check:
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)


@dataclass
class VerificationReport:
    tag: str
    digest: str
    checks: list[Check] = field(default_factory=list)
    seed: int | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def add(self, name: str, passed: bool, **measured) -> Check:
        check = Check(name, bool(passed), measured)
        self.checks.append(check)
        return check

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "digest": self.digest,
            "seed": self.seed,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "details": self.details,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def digest(*parts) -> str:
    text = json.dumps(parts, sort_keys=True, default=_json_default)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _combo_digest(c: Combination) -> str:
    return digest(dump_problem(c.problem), c.to_dict())


def _chain_ok(cnt: ZeroCount, m: int, n: int) -> bool:
    return m - 1 <= cnt.N_v <= cnt.N <= cnt.N_m <= cnt.N_bar_m <= n - 1


def check_st2(c: Combination) -> VerificationReport:
    """``m-1 <= N_v <= N <= N_m <= N_bar_m <= n-1`` for ``Y`` (trimmed to ``A_m A_n != 0``)."""
    report = VerificationReport("st2", _combo_digest(c))
    cnt = zero_count(c)
    report.add("chain", _chain_ok(cnt, c.m, c.n), m=c.m, n=c.n, k=c.k, **cnt.to_dict())
    return report


def family_counts(c: Combination, k_values) -> list[ZeroCount]:
    """Zero counts of ``Y_k`` for several ``k`` with one shared basis evaluation."""
    rows = [c.with_k(k).unit_weights() for k in k_values]
    batch = FormBatch(c.spectrum, c.indices, np.vstack(rows))
    return [count(r, c.problem) for r in locate_zeros_batch(batch)]


def check_monotonicity(c: Combination, k_min: int, k_max: int) -> VerificationReport:
    """``N_v``, ``N_m`` and ``N_bar_m`` of ``Y_k`` are non-decreasing in ``k``."""
    if c.family is not Family.STURM:
        raise PreconditionError("monotonicity is checked on the Sturm family")
    if k_max < k_min or k_max - k_min > MAX_K_SPAN:
        raise PreconditionError(f"need 0 <= k_max - k_min <= {MAX_K_SPAN}")
    report = VerificationReport("mono", _combo_digest(c))
    ks = list(range(k_min, k_max + 1))
    counts = family_counts(c, ks)
    report.details["counts"] = {k: cnt.to_dict() for k, cnt in zip(ks, counts)}
    for k, lo, hi in zip(ks, counts, counts[1:]):
        for name in ("N_v", "N_m", "N_bar_m"):
            a, b = getattr(lo, name), getattr(hi, name)
            if b < a:
                report.add(f"{name}@k={k}", False, k=k, before=a, after=b)
    if not report.checks:
        report.add("monotone", True, k_min=k_min, k_max=k_max)
    return report


@dataclass
class HeatSeries:
    t: list[float]
    counts: list[ZeroCount]
    non_increasing: bool
    least_index: int
    t_relax: float | None
    settled: bool | None  # N(t_last) == p - 1 when t_last >= t_relax; None if not applicable

    @property
    def N(self) -> list[int]:
        return [c.N for c in self.counts]

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "N": self.N,
            "counts": [c.to_dict() for c in self.counts],
            "non_increasing": self.non_increasing,
            "least_index": self.least_index,
            "t_relax": self.t_relax,
            "settled": self.settled,
        }


def heat_weights(c: Combination, t_grid) -> np.ndarray:
    """Rows ``e^{-t rho_j} A_j``, each rescaled by a positive factor to avoid overflow."""
    rho = np.array([e.rho for e in c.pairs])
    a = np.asarray(c.coeffs, dtype=float)
    t = np.asarray(t_grid, dtype=float)[:, None]
    with np.errstate(divide="ignore"):
        log_w = np.log(np.abs(a))[None, :] - t * rho[None, :]
    log_w = np.where(a[None, :] == 0, -np.inf, log_w)
    return np.sign(a)[None, :] * np.exp(log_w - np.max(log_w, axis=1, keepdims=True))


def evolve_heat(c: Combination, t_grid) -> HeatSeries:
    """Zero counts of ``u(., t) = sum_j e^{-t rho_j} A_j V_j`` along ``t_grid``."""
    if c.family is not Family.STURM or c.k != 0:
        raise PreconditionError("heat evolution starts from the Sturm family at k = 0")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or not np.all(np.isfinite(t)) or np.any(t < 0):
        raise PreconditionError("t_grid must be a non-empty list of finite t >= 0")
    if np.any(np.diff(t) <= 0):
        raise PreconditionError("t_grid must be increasing")
    batch = FormBatch(c.spectrum, c.indices, heat_weights(c, t))
    counts = [count(r, c.problem) for r in locate_zeros_batch(batch)]
    ns = [cnt.N for cnt in counts]
    non_inc = all(b <= a for a, b in zip(ns, ns[1:]))
    p = c.m
    t_relax = settled = None
    if p + 1 in c.spectrum.indices:
        t_relax = 3.0 / (c.spectrum[p + 1].rho - c.spectrum[p].rho)
        if t[-1] >= t_relax:
            settled = ns[-1] == p - 1
    return HeatSeries(t.tolist(), counts, non_inc, p, t_relax, settled)


def sturm_hurwitz_check(c: Combination) -> VerificationReport:
    """A combination starting at mode ``m >= 2`` changes sign at least ``m - 1`` times."""
    if c.m < 2:
        raise PreconditionError("the bound is vacuous for m = 1")
    report = VerificationReport("sturm-hurwitz", _combo_digest(c))
    cnt = zero_count(c)
    report.add("lower-bound", cnt.N_v >= c.m - 1, m=c.m, N_v=cnt.N_v)
    return report


# --- randomized harness --------------------------------------------------------


@dataclass(frozen=True)
class ProblemGenerator:
    """Random problems ``1 + a sin(b x + phi)`` for K, G, L with ``a <= amplitude``.

    ``kind="identity"`` always returns the sine problem.
    """

    kind: str = "perturbed"
    amplitude: float = 0.3
    robin_probability: float = 0.5
    max_h: float = 3.0

    def __post_init__(self):
        if self.kind not in ("perturbed", "identity"):
            raise PreconditionError(f"unknown generator kind {self.kind!r}")
        if not 0 <= self.amplitude <= 0.3:
            raise PreconditionError("amplitude must lie in [0, 0.3]")

    def _coef(self, rng: np.random.Generator) -> str:
        a = round(float(rng.uniform(0.0, self.amplitude)), 6)
        b = round(float(rng.uniform(0.5, 4.0)), 6)
        phi = round(float(rng.uniform(0.0, 2 * math.pi)), 6)
        return f"1 + {a!r}*sin({b!r}*x + {phi!r})"

    def _bc(self, rng: np.random.Generator) -> BoundaryCondition:
        if rng.uniform() < self.robin_probability:
            return BoundaryCondition.robin(round(float(rng.uniform(0.0, self.max_h)), 6))
        return BoundaryCondition.dirichlet()

    def draw(self, rng: np.random.Generator) -> Problem:
        if self.kind == "identity":
            return sine_problem()
        length = round(float(rng.uniform(1.0, 4.0)), 6)
        return Problem.from_strings(
            0.0,
            length,
            self._coef(rng),
            self._coef(rng),
            self._coef(rng),
            self._bc(rng),
            self._bc(rng),
        )


def draw_coefficients(rng: np.random.Generator, n_pairs: int) -> dict[int, float]:
    """Random ``(m, n, A)`` with ``A_m A_n != 0``; inner coefficients may vanish."""
    m, n = sorted(int(i) for i in rng.integers(1, n_pairs + 1, size=2))
    coeffs = {}
    for i in range(m, n + 1):
        a = float(rng.normal())
        if m < i < n and rng.uniform() < 0.25:
            a = 0.0
        elif a == 0.0:
            a = 1.0
        coeffs[i] = a
    return coeffs


def trial_seeds(seed: int, trials: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(trials)


def run_trial(
    seq: np.random.SeedSequence,
    generator: ProblemGenerator,
    n_pairs: int = 8,
    k_range: tuple[int, int] = (-2, 2),
) -> dict:
    """One random instance; failures and numerical errors are recorded, not raised."""
    rng = np.random.default_rng(seq)
    problem = generator.draw(rng)
    out = {"problem": dump_problem(problem), "entropy": seq.entropy, "spawn_key": list(seq.spawn_key)}
    try:
        spectrum = compute_spectrum(problem, n_pairs)
        coeffs = draw_coefficients(rng, n_pairs)
        c = combination(spectrum, coeffs)
        out.update(m=c.m, n=c.n, coeffs=[[i, a] for i, a in coeffs.items()])
        ks = list(range(k_range[0], k_range[1] + 1))
        counts = family_counts(c, ks)
        chain = {k: cnt.to_dict() for k, cnt in zip(ks, counts)}
        st2 = _chain_ok(counts[ks.index(0)], c.m, c.n) if 0 in ks else _chain_ok(zero_count(c), c.m, c.n)
        mono = all(
            getattr(b, name) >= getattr(a, name)
            for a, b in zip(counts, counts[1:])
            for name in ("N_v", "N_m", "N_bar_m")
        )
        residual = max(relation_residual(c.with_k(k)) for k in ks)
        out.update(
            counts=chain,
            st2=st2,
            mono=mono,
            residual=residual,
            residual_ok=residual <= RESIDUAL_TOL,
        )
        out["passed"] = st2 and mono and out["residual_ok"]
    except SturmOscError as exc:
        out.update(passed=False, error=f"{type(exc).__name__}: {exc}")
    return out


def _workers(requested: int | None) -> int:
    cap = os.environ.get("STURM_OSC_THREADS")
    n = requested if requested is not None else 1
    if cap:
        try:
            n = min(n, max(1, int(cap))) if requested is not None else max(1, int(cap))
        except ValueError:
            raise PreconditionError(f"STURM_OSC_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def random_suite(
    seed: int,
    trials: int,
    generator: ProblemGenerator | None = None,
    n_pairs: int = 8,
    k_range: tuple[int, int] = (-2, 2),
    workers: int | None = None,
) -> VerificationReport:
    """Chain, monotonicity and relation checks on ``trials`` random instances.

    Trial ``i`` uses the ``i``-th child of ``SeedSequence(seed)``, so results do
    not depend on the worker count.
    """
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    generator = generator or ProblemGenerator()
    seqs = trial_seeds(seed, trials)
    n_workers = _workers(workers)
    args = (generator, n_pairs, k_range)
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run_trial, seqs, *[[a] * trials for a in args]))
    else:
        results = [run_trial(s, *args) for s in seqs]
    report = VerificationReport(
        "suite", digest(seed, trials, asdict(generator), n_pairs, list(k_range)), seed=seed
    )
    for i, r in enumerate(results):
        if not r["passed"]:
            report.add(f"trial {i}", False, **r)
    report.add(
        "summary",
        all(r["passed"] for r in results),
        trials=trials,
        failures=sum(not r["passed"] for r in results),
    )
    report.details["trials"] = results
    return report
