"""Lagrange multipliers of the follower at its exact optimum, and their certification.

The Lagrangian is written for ``min -f`` with every inequality as
``slack >= 0`` (ordering from :func:`~illbilevel.instance.constraint_table`).
At the optimum the chain is tight, the tail sits at ``(x1, x2)`` and the
follower's own bounds are inactive, so the multipliers follow from a short
recurrence instead of a general KKT solve:

    P       = prod_{i=2}^{n-1} 2 y_i
    alpha_1 = 1 / (2 y_1 + 1/P),   alpha_i = alpha_{i-1} / (2 y_i)
    pi      = -alpha_{n-1},        gamma = delta_plus = y_n
    beta    = 0,                   delta_minus = 0
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from fractions import Fraction

import mpmath

from .errors import CertificateError, InconclusiveEnclosure, PrecisionExhausted
from .exact_lower import ExactLowerSolution, solve_lower_exact
from .instance import InstanceParams, LeaderPoint, constraint_slacks, constraint_table
from .scalars import (
    Enclosure,
    PrecReal,
    Round,
    Scalar,
    decimal_string,
    default_precision,
    lower_bound,
    upper_bound,
)

log = logging.getLogger(__name__)

ZERO = Fraction(0)


@dataclass(frozen=True)
class Multipliers:
    alpha: tuple
    beta: tuple
    gamma: Scalar
    delta_minus: Scalar
    delta_plus: Scalar
    pi: Scalar

    def in_table_order(self) -> list:
        """Inequality multipliers in :func:`constraint_table` order (``pi`` excluded)."""
        return list(self.alpha) + list(self.beta) + [self.gamma, self.delta_minus, self.delta_plus]


def compute_multipliers(sol: ExactLowerSolution) -> Multipliers:
    n = sol.params.n
    y = sol.y_star.y
    for i in range(n):
        if not (isinstance(y[i], Enclosure) and y[i].certainly_positive()):
            raise CertificateError(f"y_{i + 1} is not certified positive; recurrence would divide by zero")
    twice = [2 * y[i] for i in range(n - 1)]
    P = Fraction(1)
    for t in twice[1:]:
        P = t * P
    alpha = [1 / (twice[0] + 1 / P)]
    for i in range(1, n - 1):
        alpha.append(alpha[-1] / twice[i])
    y_n = y[n - 1]
    return Multipliers(
        alpha=tuple(alpha),
        beta=(ZERO,) * (n + 1),
        gamma=y_n,
        delta_minus=ZERO,
        delta_plus=y_n,
        pi=-alpha[-1],
    )


def gradient_components(x: LeaderPoint, sol: ExactLowerSolution, m: Multipliers) -> list:
    """The ``n + 2`` partial derivatives of the Lagrangian in ``y``."""
    n = sol.params.n
    y = sol.y_star.y
    a, b = m.alpha, m.beta
    comps = [-1 + 2 * a[0] * y[0] - b[0] - m.pi]
    for i in range(1, n - 1):
        comps.append(-a[i - 1] + 2 * a[i] * y[i] - b[i])
    comps.append(x.x1 + x.x2 - y[n] - y[n + 1] - a[n - 2] - b[n - 1] - m.pi)
    comps.append(-y[n - 1] - b[n] + m.gamma)
    comps.append(-y[n - 1] - m.delta_minus + m.delta_plus)
    return comps


def _inf_norm(values) -> Enclosure:
    prec = min((v.precision for v in values if isinstance(v, Enclosure)), default=64)
    lo = max(abs(v) if not isinstance(v, Enclosure) else v.mignitude() for v in values)
    hi = max(abs(v) if not isinstance(v, Enclosure) else v.magnitude() for v in values)
    return Enclosure(
        PrecReal.from_rational(lo, prec, Round.FLOOR), PrecReal.from_rational(hi, prec, Round.CEILING)
    )


def stationarity_residual(x: LeaderPoint, sol: ExactLowerSolution, m: Multipliers) -> Enclosure:
    """Enclosure of the infinity norm of the Lagrangian gradient."""
    if len(m.alpha) != sol.params.n - 1 or len(m.beta) != sol.params.n + 1:
        raise ValueError("multiplier dimensions do not match the instance")
    return _inf_norm(gradient_components(x, sol, m))


def dense_multipliers(x: LeaderPoint, sol: ExactLowerSolution, precision: int | None = None) -> list:
    """Solve the stationarity rows for ``(alpha, pi)`` as one dense linear system.

    Independent of the recurrence: the ``n`` equations from the first ``n``
    gradient components (with beta = 0) are assembled as a matrix and solved
    by LU at ``precision`` bits.  Returns ``[alpha_1, ..., alpha_{n-1}, pi]``
    as exact rationals of the floating solution.
    """
    n = sol.params.n
    ctx = mpmath.MPContext()
    ctx.prec = precision or sol.precision + 64

    def num(q: Fraction):
        return ctx.mpf(q.numerator) / q.denominator

    y = [num(v.mid if isinstance(v, Enclosure) else v) for v in sol.y_star.y]
    A = ctx.zeros(n, n)
    rhs = ctx.zeros(n, 1)
    A[0, 0] = 2 * y[0]
    A[0, n - 1] = -1
    rhs[0] = 1
    for i in range(1, n - 1):
        A[i, i - 1] = -1
        A[i, i] = 2 * y[i]
    A[n - 1, n - 2] = -1
    A[n - 1, n - 1] = -1
    rhs[n - 1] = -(num(x.x1) + num(x.x2) - y[n] - y[n + 1])
    sol_vec = ctx.lu_solve(A, rhs)
    return [Fraction(*mpmath.libmp.to_rational(ctx.mpf(sol_vec[i])._mpf_)) for i in range(n)]


def dense_agreement(x: LeaderPoint, sol: ExactLowerSolution, m: Multipliers) -> Fraction:
    """Largest relative deviation between the dense solve and the recurrence."""
    dense = dense_multipliers(x, sol)
    ours = list(m.alpha) + [m.pi]
    worst = Fraction(0)
    for d, e in zip(dense, ours):
        scale = e.magnitude()
        if d < lower_bound(e):
            worst = max(worst, (lower_bound(e) - d) / scale)
        elif d > upper_bound(e):
            worst = max(worst, (d - upper_bound(e)) / scale)
    return worst


def _sign(v: Scalar, strict_required: bool, constraint: str) -> str:
    if not isinstance(v, Enclosure):
        return "+" if v > 0 else "-" if v < 0 else "0"
    if v.is_zero():
        return "0"
    if v.certainly_positive():
        return "+"
    if v.certainly_negative():
        return "-"
    if strict_required:
        raise InconclusiveEnclosure(f"sign of {constraint} not certified at {v.precision} bits", constraint)
    return "0?"


@dataclass(frozen=True)
class ConstraintRow:
    id: str
    multiplier: str
    slack: Scalar
    mult: Scalar
    slack_sign: str  # "+" inactive, "0" active (enclosure contains 0), "-" violated
    mult_sign: str
    status: str

    @property
    def strict(self) -> bool:
        return self.status in ("active", "inactive")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "slack_lo": decimal_string(lower_bound(self.slack), 20, Round.FLOOR),
            "slack_hi": decimal_string(upper_bound(self.slack), 20, Round.CEILING),
            "mult_lo": decimal_string(lower_bound(self.mult), 20, Round.FLOOR),
            "mult_hi": decimal_string(upper_bound(self.mult), 20, Round.CEILING),
            "status": self.status,
        }


def expected_pattern(n: int) -> list[tuple[str, str]]:
    """(slack sign, multiplier sign) per constraint at the exact optimum."""
    return (
        [("0", "+")] * (n - 1)  # chain tight, alpha > 0
        + [("+", "0")] * (n + 1)  # own bounds slack, beta = 0
        + [("0", "+"), ("+", "0"), ("0", "+")]  # tail: gamma > 0, delta_minus = 0, delta_plus > 0
    )


@dataclass(frozen=True)
class KktCertificate:
    n: int
    x: LeaderPoint
    multipliers: Multipliers
    stationarity_residual_inf: Enclosure
    rows: tuple
    strict: bool
    matches_expected: bool
    complementarity_ok: bool
    dense_deviation: Fraction | None = None
    precision: int = 0

    @property
    def complementarity_pattern(self) -> list:
        return [(r.id, r.slack_sign, r.mult_sign) for r in self.rows]

    def residual_within(self, bound: Fraction) -> bool:
        r = self.stationarity_residual_inf
        return r.lo.sign() == 0 and r.hi.to_fraction() <= bound

    def to_json(self) -> dict:
        m = self.multipliers
        return {
            "n": self.n,
            "x": [str(self.x.x1), str(self.x.x2)],
            "precision_bits": self.precision,
            "strict": self.strict,
            "matches_expected": self.matches_expected,
            "complementarity_ok": self.complementarity_ok,
            "stationarity_residual_inf": {
                "lo": decimal_string(self.stationarity_residual_inf.lo.to_fraction(), 20, Round.FLOOR),
                "hi": decimal_string(self.stationarity_residual_inf.hi.to_fraction(), 20, Round.CEILING),
            },
            "alpha": [decimal_string(a.mid, 30) for a in m.alpha],
            "pi": decimal_string(m.pi.mid, 30),
            "dense_max_relative_deviation": None
            if self.dense_deviation is None
            else decimal_string(self.dense_deviation, 10, Round.CEILING),
            "constraints": [r.to_json() for r in self.rows],
        }


def certify_strict_complementarity(
    x: LeaderPoint, sol: ExactLowerSolution, m: Multipliers, dense_check: bool = True
) -> KktCertificate:
    n = sol.params.n
    table = constraint_table(n)
    slacks = constraint_slacks(n, x, sol.y_star)
    mults = m.in_table_order()
    if len(mults) != len(table):
        raise ValueError("multiplier count does not match the constraint table")
    rows = []
    comp_ok = True
    for spec, s, mu in zip(table, slacks, mults):
        ss = _sign(s, strict_required=False, constraint=spec.id)
        if ss == "0?":
            ss = "0"  # slack encloses zero: treated as active
        ms = _sign(mu, strict_required=True, constraint=spec.multiplier)
        if ss == "-" or ms == "-":
            status = "violated" if ss == "-" else "negative-multiplier"
        elif ss == "0":
            status = "active" if ms == "+" else "degenerate"
        else:
            status = "inactive" if ms == "0" else "complementarity-broken"
        product = s * mu
        if isinstance(product, Enclosure):
            comp_ok &= product.contains(0)
        else:
            comp_ok &= product == 0
        rows.append(ConstraintRow(spec.id, spec.multiplier, s, mu, ss, ms, status))
    strict = all(r.strict for r in rows)
    pattern = [(r.slack_sign, r.mult_sign) for r in rows]
    deviation = dense_agreement(x, sol, m) if dense_check else None
    return KktCertificate(
        n=n,
        x=x,
        multipliers=m,
        stationarity_residual_inf=stationarity_residual(x, sol, m),
        rows=tuple(rows),
        strict=strict,
        matches_expected=pattern == expected_pattern(n),
        complementarity_ok=comp_ok,
        dense_deviation=deviation,
        precision=sol.precision,
    )


def certify_kkt(p: InstanceParams, x: LeaderPoint, precision: int | None = None) -> KktCertificate:
    """Solve, compute multipliers and certify; doubles precision on inconclusive signs.

    Gives up after eight times the starting precision.
    """
    start = precision or default_precision(p.n)
    prec = start
    while True:
        sol = solve_lower_exact(p, x, precision=prec)
        try:
            m = compute_multipliers(sol)
            return certify_strict_complementarity(x, sol, m)
        except (InconclusiveEnclosure, CertificateError, ZeroDivisionError) as exc:
            if prec * 2 > 8 * start:
                raise PrecisionExhausted(f"KKT signs not certified up to {prec} bits: {exc}", prec) from exc
            log.info("raising precision to %d bits after: %s", prec * 2, exc)
            prec *= 2


def with_multiplier(m: Multipliers, name: str, value) -> Multipliers:
    """Copy of ``m`` with one named multiplier replaced (``alpha_3``, ``delta_plus``, ...)."""
    if name.startswith(("alpha_", "beta_")):
        group, idx = name.split("_")
        values = list(getattr(m, group))
        values[int(idx) - 1] = value
        return replace(m, **{group: tuple(values)})
    return replace(m, **{name: value})
