"""Command line: ``illbilevel <command> [options]``.

Exit codes: 0 success, 2 bad configuration or input, 3 precision exhausted,
4 eps below the admissible threshold, 5 a certificate or invariant failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from fractions import Fraction
from importlib import resources

from . import eps_analysis, exact_lower, kkt_cert, linlin_stability, lp_core
from .errors import (
    AssumptionViolation,
    CertificateError,
    EpsBelowThreshold,
    HypothesisViolation,
    InconclusiveEnclosure,
    LimitExceeded,
    PrecisionExhausted,
)
from .instance import InstanceParams, LeaderPoint
from .scalars import Round, decimal_string, format_rational, parse_rational

log = logging.getLogger("illbilevel")

EXIT_OK, EXIT_CONFIG, EXIT_PRECISION, EXIT_THRESHOLD, EXIT_INVARIANT = 0, 2, 3, 4, 5
PRECISION_ENV = "ILLBILEVEL_PRECISION_BITS"
GAP_SWEEP_EPS = tuple(f"1e-{k}" for k in range(2, 11))
STABILITY_EPS = tuple(f"1e-{k}" for k in range(1, 7))


class ConfigError(ValueError):
    pass


def _rational(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from exc


def _pair(text: str) -> tuple[Fraction, Fraction]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return tuple(_rational(p.strip()) for p in parts)


def _eps_list(text: str) -> list[Fraction]:
    return [_rational(p.strip()) for p in text.split(",") if p.strip()]


def _precision_default():
    raw = os.environ.get(PRECISION_ENV)
    if raw is None:
        return None
    try:
        bits = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{PRECISION_ENV} must be an integer, got {raw!r}") from exc
    if bits < 2:
        raise ConfigError(f"{PRECISION_ENV} must be at least 2")
    return bits


def _params(args, n=None) -> InstanceParams:
    n = args.n if n is None else n
    if n is None:
        raise ConfigError("--n is required")
    return InstanceParams(n, args.xlo, args.xhi)


def _leader(args, p: InstanceParams) -> LeaderPoint:
    return LeaderPoint(*args.x) if args.x is not None else LeaderPoint(p.x_lo[0], p.x_hi[1])


# -- commands -------------------------------------------------------------------------
# each returns (document, csv rows or None, exit code)


def cmd_solve_exact(args):
    p = _params(args)
    sol = exact_lower.solve_bilevel_exact(p, precision=args.precision_bits, max_precision=args.max_precision_bits)
    doc = {"params": p.to_json(), **sol.to_json()}
    row = {
        "n": p.n,
        "x_star": " ".join(format_rational(v) for v in sol.x_star.as_tuple()),
        "F_star": format_rational(sol.F_star),
        "y1_lo": doc["y1"]["lo"],
        "y1_hi": doc["y1"]["hi"],
        "precision_bits": doc["y1"]["precision_bits"],
    }
    return doc, [row], EXIT_OK


def cmd_solve_eps(args):
    p = _params(args)
    report = eps_analysis.solve_bilevel_eps(eps_analysis.EpsScenario(p, args.eps, args.mode))
    return report.to_json(), [report.csv_row()], EXIT_OK


def _gap_params(args):
    def for_eps(eps):
        if args.auto_n:
            return _params(args, eps_analysis.min_n_for_eps(eps))
        return _params(args)

    return for_eps


def _modes(args):
    if args.mode == "both":
        return (eps_analysis.Mode.OPTIMISTIC, eps_analysis.Mode.PESSIMISTIC)
    return (eps_analysis.Mode(args.mode),)


def cmd_gap_report(args):
    if args.n is None and not args.auto_n:
        raise ConfigError("give --n or --auto-n")
    eps_values = [_rational(e) for e in GAP_SWEEP_EPS] if args.sweep else [args.eps]
    if eps_values == [None]:
        raise ConfigError("--eps is required without --sweep")
    reports = eps_analysis.gap_sweep(_gap_params(args), eps_values, _modes(args))
    rows = [r.csv_row() for r in reports]
    if args.sweep:
        by_mode = {}
        for r in rows:
            by_mode.setdefault(r["mode"], set()).add(r["gap"])
        doc = {"rows": rows, "gap_constant_in_eps": {m: len(g) == 1 for m, g in sorted(by_mode.items())}}
    else:
        doc = reports[0].to_json() if len(reports) == 1 else {"reports": [r.to_json() for r in reports]}
    if args.figure:
        from .plotting import gap_figure

        gap_figure(rows, args.figure)
    return doc, rows, EXIT_OK


def cmd_kkt_verify(args):
    p = _params(args)
    x = _leader(args, p)
    if not (p.x_lo[0] <= x.x1 <= p.x_hi[0] and p.x_lo[1] <= x.x2 <= p.x_hi[1]):
        raise ConfigError("--x lies outside the leader box")
    cert = kkt_cert.certify_kkt(p, x, precision=args.precision_bits)
    bound = Fraction(1, 1 << 32)
    ok = cert.strict and cert.matches_expected and cert.residual_within(bound)
    doc = cert.to_json()
    doc["residual_bound"] = decimal_string(bound, 20)
    doc["certified"] = ok
    rows = [r.to_json() for r in cert.rows]
    return doc, rows, EXIT_OK if ok else EXIT_INVARIANT


def cmd_slater_check(args):
    lo = args.n if args.n is not None else 2
    hi = args.n_max if args.n_max is not None else lo
    rows = []
    for n in range(lo, hi + 1):
        rep = exact_lower.slater_check(_params(args, n))
        worst_quad = max(rep.quad_residuals)
        rows.append(
            {
                "n": n,
                "eq_residual": format_rational(rep.eq_residual),
                "max_quad_residual": decimal_string(worst_quad, 12, Round.CEILING),
                "min_slack": decimal_string(rep.min_slack, 12, Round.FLOOR),
                "strict": rep.strict and worst_quad < 0,
            }
        )
    ok = all(r["strict"] for r in rows)
    return {"rows": rows, "all_strict": ok}, rows, EXIT_OK if ok else EXIT_INVARIANT


def cmd_min_n(args):
    rows = []
    for eps in args.eps:
        n = eps_analysis.min_n_for_eps(eps)
        rows.append(
            {
                "eps": format_rational(eps),
                "n": n,
                "threshold": decimal_string(eps_analysis.eps_threshold(n), 12),
            }
        )
    return {"rows": rows}, rows, EXIT_OK


def _load_instances(args):
    if args.random:
        return [linlin_stability.random_instance(s) for s in range(args.random)]
    if args.instance:
        with open(args.instance) as fh:
            return [linlin_stability.LinearBilevelInstance.from_json(fh.read())]
    text = resources.files("illbilevel").joinpath("data/linlin_1d.json").read_text()
    return [linlin_stability.LinearBilevelInstance.from_json(text)]


def _stability_rows(args):
    rows, ok = [], True
    eps_values = args.eps or [_rational(e) for e in STABILITY_EPS]
    for inst in _load_instances(args):
        linlin_stability.check_assumptions(inst)
        for seed, rep in linlin_stability.stability_sweep(inst, eps_values, range(args.seeds)):
            row = {"instance": inst.name or "instance", "seed": seed, **rep.csv_row()}
            rows.append(row)
            ok &= rep.holds
    return rows, ok


def cmd_linlin(args):
    rows, ok = _stability_rows(args)
    if args.figure:
        from .plotting import stability_figure

        stability_figure(rows, args.figure)
    return {"rows": rows, "all_within_bounds": ok}, rows, EXIT_OK if ok else EXIT_INVARIANT


def cmd_lp_solve(args):
    with open(args.lp) as fh:
        lp = lp_core.LinearProgram.from_json(fh.read())
    sol = lp_core.solve_lp(lp)
    doc = sol.to_json()
    if args.kappa and sol.status == "optimal":
        doc["kappa"] = lp_core.kappa_of(lp).to_json()
    row = {"status": sol.status, "value": doc["value"], "x": " ".join(doc["x"] or [])}
    return doc, [row], EXIT_OK


def cmd_dichotomy(args):
    """Nonconvex gap (constant in eps) next to linear recovery error (linear in eps)."""
    rows = []
    gap_args = argparse.Namespace(**{**vars(args), "auto_n": True})
    eps_gap = [_rational(e) for e in GAP_SWEEP_EPS]
    for rep in eps_analysis.gap_sweep(_gap_params(gap_args), eps_gap):
        rows.append(
            {
                "family": "nonconvex",
                "series": rep.scenario.mode.value,
                "eps": format_rational(rep.scenario.eps),
                "error": format_rational(rep.objective_gap),
                "error_over_eps": format_rational(rep.objective_gap / rep.scenario.eps),
                "bound": "",
            }
        )
    lin_args = argparse.Namespace(**{**vars(args), "eps": None})
    lin_rows, ok = _stability_rows(lin_args)
    for r in lin_rows:
        eps = parse_rational(r["eps"])
        err = parse_rational(r["dist_total"])
        rows.append(
            {
                "family": "linear",
                "series": f"{r['instance']} seed {r['seed']}",
                "eps": r["eps"],
                "error": r["dist_total"],
                "error_over_eps": format_rational(err / eps) if eps else "",
                "bound": r["distance_bound"],
            }
        )
    gaps = {}
    for r in rows:
        if r["family"] == "nonconvex":
            gaps.setdefault(r["series"], set()).add(r["error"])
    summary = {
        "nonconvex_gap_constant": all(len(v) == 1 for v in gaps.values()),
        "nonconvex_gaps": {k: sorted(v) for k, v in sorted(gaps.items())},
        "linear_within_bounds": ok,
    }
    if args.figure:
        from .plotting import dichotomy_figure

        dichotomy_figure(rows, args.figure)
    code = EXIT_OK if summary["nonconvex_gap_constant"] and ok else EXIT_INVARIANT
    return {"summary": summary, "rows": rows}, rows, code


# -- plumbing -------------------------------------------------------------------------


def _box_options(p):
    p.add_argument("--xlo", type=_pair, default=_pair("1,1"), help="lower leader bounds, e.g. 1,1")
    p.add_argument("--xhi", type=_pair, default=_pair("2,3"), help="upper leader bounds, e.g. 2,3")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--output", help="write the report here instead of stdout")
    common.add_argument("--figure", help="also render a figure to this file (needs matplotlib)")
    common.add_argument("--precision-bits", type=int, default=None, help=f"starting precision (env {PRECISION_ENV})")
    common.add_argument("--max-precision-bits", type=int, default=None)
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="illbilevel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-exact", parents=[common], help="exact bilevel solution")
    p.add_argument("--n", type=int, required=True)
    _box_options(p)
    p.set_defaults(func=cmd_solve_exact)

    p = sub.add_parser("solve-eps", parents=[common], help="solution with eps-feasible follower")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", type=_rational, required=True)
    p.add_argument("--mode", choices=("optimistic", "pessimistic"), default="optimistic")
    _box_options(p)
    p.set_defaults(func=cmd_solve_eps)

    p = sub.add_parser("gap-report", parents=[common], help="exact vs eps-feasible gap")
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=_rational)
    p.add_argument("--auto-n", action="store_true", help="pick the smallest n admissible for eps")
    p.add_argument("--sweep", action="store_true", help="eps = 1e-2 ... 1e-10")
    p.add_argument("--mode", choices=("optimistic", "pessimistic", "both"), default="both")
    _box_options(p)
    p.set_defaults(func=cmd_gap_report)

    p = sub.add_parser("kkt-verify", parents=[common], help="certify multipliers and strict complementarity")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--x", type=_pair, default=None, help="leader point (default: the exact optimum)")
    _box_options(p)
    p.set_defaults(func=cmd_kkt_verify)

    p = sub.add_parser("slater-check", parents=[common], help="strict feasibility of the interior point")
    p.add_argument("--n", type=int)
    p.add_argument("--n-max", type=int)
    _box_options(p)
    p.set_defaults(func=cmd_slater_check)

    p = sub.add_parser("min-n", parents=[common], help="smallest n whose eps-point is admissible")
    p.add_argument("--eps", type=_eps_list, required=True, help="comma-separated tolerances")
    p.set_defaults(func=cmd_min_n)

    def linlin_options(p):
        p.add_argument("--instance", help="linear bilevel instance JSON (default: bundled 1-D example)")
        p.add_argument("--random", type=int, default=0, help="use this many generated instances instead")
        p.add_argument("--seeds", type=int, default=3)

    p = sub.add_parser("linlin", parents=[common], help="stability sweep for a linear bilevel instance")
    linlin_options(p)
    p.add_argument("--eps", type=_eps_list, default=None, help="comma-separated tolerances")
    p.set_defaults(func=cmd_linlin)

    p = sub.add_parser("lp-solve", parents=[common], help="solve an LP file exactly")
    p.add_argument("--lp", required=True)
    p.add_argument("--kappa", action="store_true", help="also report the dual extreme-point bound")
    p.set_defaults(func=cmd_lp_solve)

    p = sub.add_parser("dichotomy", parents=[common], help="nonconvex gap next to linear recovery error")
    linlin_options(p)
    _box_options(p)
    p.set_defaults(func=cmd_dichotomy, n=None, mode="both")
    return parser


def _write(doc, rows, args):
    if args.format == "csv":
        rows = rows or [doc]
        buf = io.StringIO()
        fields = list(rows[0].keys())
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.precision_bits is None:
            args.precision_bits = _precision_default()
        doc, rows, code = args.func(args)
        _write(doc, rows, args)
        return code
    except EpsBelowThreshold as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_THRESHOLD
    except (PrecisionExhausted, InconclusiveEnclosure) as exc:
        print(f"error: {exc} (raise --max-precision-bits)", file=sys.stderr)
        return EXIT_PRECISION
    except (CertificateError, HypothesisViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (AssumptionViolation, LimitExceeded, ConfigError, ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ImportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
