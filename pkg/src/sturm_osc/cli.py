"""Command-line front end.

Exit codes: 0 success, 1 bad input or IO error, 2 a theorem check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .combo import Family, combination, evaluate_combination, limit_certificate, relation_residual
from .errors import SturmOscError
from .problem import load_problem
from .spectrum import N_MAX, compute_spectrum, verify_oscillation
from .verify import (
    ProblemGenerator,
    check_monotonicity,
    check_st2,
    evolve_heat,
    random_suite,
    sturm_hurwitz_check,
)
from .zeros import count, locate_zeros

FLOAT = "%.12e"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; 2 is reserved for failed theorem checks."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    return FLOAT % x


def _round(obj):
    """Floats rounded to the text precision so JSON output is stable."""
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round(obj.item())
    return obj


def dump_json(obj) -> str:
    return json.dumps(_round(obj), sort_keys=True, indent=2)


def parse_coeffs(text: str) -> dict[int, float]:
    """``"A@index,A@index"``, e.g. ``"1@1,-0.5@3"``."""
    out: dict[int, float] = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, idx = item.split("@")
            i = int(idx)
            out[i] = out.get(i, 0.0) + float(a)
        except ValueError:
            raise UsageError(f"bad coefficient {item!r}; expected A@index") from None
        if i < 1 or i > N_MAX:
            raise UsageError(f"eigenpair index {i} outside 1..{N_MAX}")
    if not out:
        raise UsageError("no coefficients given")
    return out


def parse_range(text: str) -> np.ndarray:
    """``start:stop:step`` (stop included when it lands on the grid)."""
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"bad range {text!r}; expected start:stop:step") from None
    if step <= 0 or stop < start:
        raise UsageError("range needs step > 0 and stop >= start")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def _table(header: list[str], rows: list[list], style: str) -> str:
    if style == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in r])
        return buf.getvalue()
    lines = [" ".join(header)]
    for r in rows:
        lines.append(" ".join(fmt(v) if isinstance(v, float) else str(v) for v in r))
    return "\n".join(lines) + "\n"


def _emit_samples(path: str, x: np.ndarray, columns: dict[str, np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x"] + list(columns))
        for i, xi in enumerate(x):
            w.writerow([fmt(xi)] + [fmt(col[i]) for col in columns.values()])


def _load(args):
    if not args.problem:
        raise UsageError("a problem file is required (-p)")
    try:
        return load_problem(args.problem)
    except FileNotFoundError:
        raise FileNotFoundError(f"file not found: {args.problem}") from None


def _combination(args):
    problem = _load(args)
    coeffs = parse_coeffs(args.coeffs)
    spectrum = compute_spectrum(problem, max(coeffs))
    spectrum.source = str(args.problem)
    return combination(spectrum, coeffs, k=args.k, family=args.family)


# --- commands ------------------------------------------------------------------


def cmd_spectrum(args, out) -> int:
    problem = _load(args)
    spectrum = compute_spectrum(problem, args.n)
    rows = [[e.index, e.rho, verify_oscillation(e)] for e in spectrum.pairs]
    if args.format == "json":
        out.write(dump_json([{"index": i, "rho": r, "zeros": z} for i, r, z in rows]) + "\n")
    else:
        out.write(_table(["index", "rho", "zeros"], rows, args.format))
    return 0


def cmd_zeros(args, out) -> int:
    c = _combination(args)
    records = locate_zeros(c, resolution_hint=args.resolution)
    cnt = count(records, c.problem)
    if args.emit_samples:
        x = c.problem.grid(args.samples)
        _emit_samples(args.emit_samples, x, {"Y": c.batch().values(x)[0]})
    if args.format == "json":
        out.write(
            dump_json(
                {
                    "combination": c.to_dict(),
                    "records": [r.to_dict() for r in records],
                    "count": cnt.to_dict(),
                }
            )
            + "\n"
        )
    else:
        rows = [[r.xi, r.p, r.B, int(r.sign_change), int(r.is_boundary)] for r in records]
        out.write(_table(["xi", "p", "B", "sign_change", "boundary"], rows, args.format))
        cd = cnt.to_dict()
        out.write(_table(list(cd), [list(cd.values())], args.format))
    return 0


def cmd_combo(args, out) -> int:
    c = _combination(args)
    p = c.problem
    x = p.grid(args.points)
    y = evaluate_combination(c, x)
    result = {"combination": c.to_dict(), "x": x.tolist(), "Y": y.tolist()}
    if c.family is Family.STURM:
        result["relation_residual"] = relation_residual(c)
    elif args.certificate:
        result["certificate"] = limit_certificate(c).to_dict()
    if args.emit_samples:
        xs = p.grid(args.samples)
        _emit_samples(args.emit_samples, xs, {"Y": evaluate_combination(c, xs)})
    if args.format == "json":
        out.write(dump_json(result) + "\n")
    else:
        out.write(_table(["x", "Y"], [[a, b] for a, b in zip(x.tolist(), y.tolist())], args.format))
        if "relation_residual" in result:
            out.write(f"relation_residual {fmt(result['relation_residual'])}\n")
        if "certificate" in result:
            cert = result["certificate"]
            for key in ("omega", "M", "N", "epsilon1", "delta1", "k_star", "holds"):
                val = cert[key]
                out.write(f"{key} {fmt(val) if isinstance(val, float) else val}\n")
    return 0


def _write_report(report, args, out) -> int:
    if args.format == "json":
        out.write(dump_json(report.to_dict()) + "\n")
    else:
        rows = []
        for chk in report.checks:
            measured = " ".join(
                f"{k}={fmt(v) if isinstance(v, float) else v}"
                for k, v in sorted(chk.measured.items())
                if not isinstance(v, (dict, list))
            )
            rows.append([chk.name.replace(" ", "_"), "pass" if chk.passed else "FAIL", measured])
        out.write(_table(["check", "status", "measured"], rows, args.format))
        out.write(f"{report.tag} {'PASS' if report.passed else 'FAIL'} digest={report.digest}\n")
    return 0 if report.passed else 2


def cmd_verify(args, out) -> int:
    if args.check == "suite":
        gen = ProblemGenerator(args.generator)
        report = random_suite(args.seed, args.trials, gen, workers=args.workers)
        if args.format != "json":
            report.details = {}
        return _write_report(report, args, out)
    c = _combination(args)
    if args.check == "st2":
        report = check_st2(c)
    elif args.check == "mono":
        report = check_monotonicity(c, args.k_min, args.k_max)
    else:
        report = sturm_hurwitz_check(c)
    return _write_report(report, args, out)


def cmd_evolve(args, out) -> int:
    c = _combination(args)
    t = parse_range(args.t)
    series = evolve_heat(c, t)
    if args.emit_samples:
        from .verify import heat_weights
        from .spectrum import FormBatch

        x = c.problem.grid(args.samples)
        vals = FormBatch(c.spectrum, c.indices, heat_weights(c, t)).values(x)
        _emit_samples(args.emit_samples, x, {f"t={fmt(ti)}": vals[j] for j, ti in enumerate(t)})
    if args.format == "json":
        out.write(dump_json(series.to_dict()) + "\n")
    else:
        rows = [[ti, cnt.N, cnt.N_m, cnt.N_v] for ti, cnt in zip(series.t, series.counts)]
        out.write(_table(["t", "N", "N_m", "N_v"], rows, args.format))
        out.write(f"non_increasing {series.non_increasing}\n")
        if series.settled is not None:
            out.write(f"settled {series.settled} t_relax {fmt(series.t_relax)}\n")
    return 0 if series.non_increasing else 2


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    shared = _Parser(add_help=False)
    shared.add_argument("-p", "--problem", help="problem file")
    shared.add_argument("--format", choices=["text", "json", "csv"], default="text")
    shared.add_argument("--emit-samples", metavar="CSV", help="write (x, Y(x)) samples")
    shared.add_argument("--samples", type=int, default=1001, help="sample count for --emit-samples")

    combo_args = _Parser(add_help=False)
    combo_args.add_argument("--coeffs", required=True, help='coefficients "A@index,..."')
    combo_args.add_argument("-k", type=int, default=0, help="family exponent")
    combo_args.add_argument("--family", choices=[f.value for f in Family], default="sturm")

    parser = _Parser(prog="sturm-osc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", parents=[shared], help="eigenvalues and zero counts")
    sp.add_argument("-n", type=int, default=10)
    sp.set_defaults(func=cmd_spectrum)

    zp = sub.add_parser("zeros", parents=[shared, combo_args], help="zeros of a combination")
    zp.add_argument("--resolution", type=float, default=None, help="upper bound on the scan step")
    zp.set_defaults(func=cmd_zeros)

    cp = sub.add_parser("combo", parents=[shared, combo_args], help="evaluate a Y_k member")
    cp.add_argument("--points", type=int, default=9)
    cp.add_argument("--certificate", action="store_true", help="limit certificate (Liouville)")
    cp.set_defaults(func=cmd_combo)

    vp = sub.add_parser("verify", parents=[shared], help="theorem checks")
    vp.add_argument("check", choices=["st2", "mono", "hurwitz", "suite"])
    vp.add_argument("--coeffs", help='coefficients "A@index,..."')
    vp.add_argument("-k", type=int, default=0)
    vp.add_argument("--family", choices=[f.value for f in Family], default="sturm")
    vp.add_argument("--k-min", type=int, default=-2)
    vp.add_argument("--k-max", type=int, default=2)
    vp.add_argument("--seed", type=int, default=0)
    vp.add_argument("--trials", type=int, default=10)
    vp.add_argument("--generator", choices=["perturbed", "identity"], default="perturbed")
    vp.add_argument("--workers", type=int, default=None, help="process count (capped by STURM_OSC_THREADS)")
    vp.set_defaults(func=cmd_verify)

    ep = sub.add_parser("evolve", parents=[shared, combo_args], help="heat-evolution zero counts")
    ep.add_argument("--t", required=True, help="time grid start:stop:step")
    ep.set_defaults(func=cmd_evolve)
    return parser


def main(argv: list[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "check", None) in ("st2", "mono", "hurwitz") and not args.coeffs:
        err.write("error: --coeffs is required for this check\n")
        return 1
    try:
        return args.func(args, out)
    except FileNotFoundError as exc:
        msg = str(exc) if str(exc).startswith("file not found") else f"file not found: {exc.filename}"
        err.write(f"error: {msg}\n")
        return 1
    except (UsageError, SturmOscError, OSError) as exc:
        err.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
