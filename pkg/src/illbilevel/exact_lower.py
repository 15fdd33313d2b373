"""Exact solution of the follower and of the whole bilevel problem.

With the tail pinned to ``(y[n+1], y[n+2]) = (x1, x2)`` the bilinear term
vanishes and the follower reduces to maximizing ``y1`` over the chain.  At
the optimum every quadratic constraint is tight, so ``y_i = y1 ** 2**(i-1)``
and ``y1`` is the unique root in ``(0, 1/2)`` of

    h(z) = z + z ** 2**(n-1) - 1/2,

which is continuous and strictly increasing with ``h(0) < 0 < h(1/2)``.
The root is enclosed by sign-certified bisection on dyadic midpoints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import mpmath

from .errors import CertificateError, LimitExceeded, PrecisionExhausted
from .instance import (
    FollowerPoint,
    InstanceParams,
    LeaderPoint,
    constraint_slacks,
    evaluate_constraints,
    follower_objective,
    is_feasible,
    leader_feasible,
    leader_objective,
)
from .scalars import (
    Enclosure,
    PrecReal,
    Round,
    decimal_string,
    default_precision,
    enclose,
    format_rational,
    pow2tower,
)

log = logging.getLogger(__name__)

HALF = Fraction(1, 2)

#: Newton acceleration is switched on automatically from this ``n`` upward.
NEWTON_FROM_N = 13


def default_target_width(n: int) -> Fraction:
    """``2 ** -(2 ** (n-1) + 32)``: leaves 32 certified bits in ``y_n``."""
    return Fraction(1, 1 << ((1 << (n - 1)) + 32))


def h_enclosure(n: int, z, precision: int) -> Enclosure:
    """Outward-rounded enclosure of ``z + z ** 2**(n-1) - 1/2`` for ``0 <= z``."""
    zz = z if isinstance(z, Enclosure) else enclose(z, precision)
    return zz + zz.pow2k(n - 1) - HALF


def _bits_for(width: Fraction) -> int:
    """Smallest k with 2^-k <= width."""
    k = 0
    while Fraction(1, 1 << k) > width:
        k += 1
    return k


def _newton_bracket(n: int, width: Fraction, precision: int):
    """Approximate root by Newton iteration, then a dyadic bracket around it."""
    ctx = mpmath.MPContext()
    ctx.prec = precision + 16
    power = 1 << (n - 1)
    z = ctx.mpf(1) / 2
    for _ in range(8 * precision.bit_length() + 20):
        step = (z + z**power - ctx.mpf(1) / 2) / (1 + power * z ** (power - 1))
        z -= step
        if step == 0 or abs(step) < ctx.ldexp(1, -(precision + 8)):
            break
    k = _bits_for(width) + 1  # grid spacing <= width / 2
    grid = Fraction(1, 1 << k)
    r = Fraction(*mpmath.libmp.to_rational(z._mpf_))
    base = (r // grid) * grid
    return base - grid / 2, base + grid + grid / 2


def root_of_h(
    n: int,
    target_width=None,
    *,
    precision: int | None = None,
    max_precision: int | None = None,
    accelerate: bool | None = None,
) -> Enclosure:
    """Certified enclosure ``[lo, hi]`` of the root of ``h`` with ``hi - lo <= target_width``.

    Every bisection decision is taken only when the outward-rounded value of
    ``h`` at the midpoint has a certain sign; otherwise the precision is
    doubled, up to ``max_precision`` (default eight times the starting one).
    ``h(lo) <= 0 <= h(hi)`` holds for the returned endpoints, each
    certified at the precision it carries.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    width = default_target_width(n) if target_width is None else Fraction(target_width)
    if width <= 0:
        raise ValueError("target width must be positive")
    prec = precision or default_precision(n)
    # dyadic midpoints must stay exactly representable
    prec = max(prec, _bits_for(width) + 8)
    cap = max_precision or 8 * prec
    if accelerate is None:
        accelerate = n >= NEWTON_FROM_N

    if accelerate:
        lo, hi = _newton_bracket(n, width, prec)
        lo_enc, hi_enc = h_enclosure(n, lo, prec), h_enclosure(n, hi, prec)
        if lo >= 0 and hi <= HALF and lo_enc.certainly_nonpositive() and hi_enc.certainly_nonnegative():
            return Enclosure(PrecReal.from_rational(lo, prec), PrecReal.from_rational(hi, prec))
        log.info("Newton bracket for n=%d not certified; falling back to bisection", n)

    lo, hi = Fraction(0), HALF
    lo_prec = hi_prec = prec
    if not h_enclosure(n, lo, prec).certainly_negative() or not h_enclosure(n, hi, prec).certainly_positive():
        raise CertificateError("h does not change sign on [0, 1/2]")
    while hi - lo > width:
        mid = (lo + hi) / 2
        while True:
            value = h_enclosure(n, mid, prec)
            if value.certainly_positive():
                hi, hi_prec = mid, prec
                break
            if value.certainly_negative():
                lo, lo_prec = mid, prec
                break
            if value.is_zero():
                lo = hi = mid
                lo_prec = hi_prec = prec
                break
            prec *= 2
            if prec > cap:
                raise PrecisionExhausted(
                    f"cannot certify the sign of h at the bisection midpoint below {cap} bits", cap
                )
            log.debug("raising precision to %d bits", prec)
    return Enclosure(PrecReal.from_rational(lo, lo_prec), PrecReal.from_rational(hi, hi_prec))


@dataclass(frozen=True)
class ExactLowerSolution:
    params: InstanceParams
    x: LeaderPoint
    y_star: FollowerPoint
    y1_enclosure: Enclosure
    objective: Enclosure
    witness: FollowerPoint

    @property
    def precision(self) -> int:
        return self.y1_enclosure.precision

    def to_json(self) -> dict:
        return {
            "y1": enclosure_json(self.y1_enclosure),
            "y": [entry_string(v) for v in self.y_star.y],
        }


@dataclass(frozen=True)
class ExactBilevelSolution:
    x_star: LeaderPoint
    F_star: Fraction
    y_star: ExactLowerSolution

    def to_json(self) -> dict:
        out = {
            "x_star": [format_rational(v) for v in self.x_star.as_tuple()],
            "F_star": format_rational(self.F_star),
        }
        out.update(self.y_star.to_json())
        return out


def enclosure_json(e: Enclosure, digits: int = 40) -> dict:
    return {
        "lo": decimal_string(e.lo.to_fraction(), digits, Round.FLOOR),
        "hi": decimal_string(e.hi.to_fraction(), digits, Round.CEILING),
        "precision_bits": e.precision,
    }


def entry_string(v, digits: int = 40) -> str:
    if isinstance(v, Enclosure):
        return decimal_string(v.mid, digits)
    return format_rational(v)


def _chain_witness(n: int, lo: PrecReal, x: LeaderPoint) -> FollowerPoint:
    """Exactly feasible rational point next to ``y*``.

    Uses the same upward-rounded squaring chain that certified ``h(lo) <= 0``,
    so ``y_{n-1}^2 <= 1/2 - lo`` holds exactly.
    """
    chain = [lo]
    for _ in range(n - 2):
        chain.append(chain[-1].square(Round.CEILING))
    values = [c.to_fraction() for c in chain]
    values.append(HALF - values[0])
    return FollowerPoint(tuple(values) + (x.x1, x.x2))


def solve_lower_exact(
    p: InstanceParams,
    x: LeaderPoint,
    target_width=None,
    *,
    precision: int | None = None,
    max_precision: int | None = None,
    accelerate: bool | None = None,
) -> ExactLowerSolution:
    """Unique follower optimum at ``x`` with certified enclosures."""
    if not leader_feasible(p, x):
        raise ValueError(f"leader point {x} lies outside the box")
    n = p.n
    y1 = root_of_h(
        n, target_width, precision=precision, max_precision=max_precision, accelerate=accelerate
    )
    chain = [y1]
    for _ in range(n - 1):
        chain.append(chain[-1].square())
    # y_n is also pinned by the equality; keep the tighter of the two bounds
    chain[-1] = chain[-1].intersect(HALF - y1)
    y_star = FollowerPoint(tuple(chain) + (x.x1, x.x2))

    witness = _chain_witness(n, y1.lo, x)
    if not is_feasible(p, x, witness):
        raise CertificateError("rational witness next to y* is not exactly feasible")
    return ExactLowerSolution(
        params=p,
        x=x,
        y_star=y_star,
        y1_enclosure=y1,
        objective=y1,
        witness=witness,
    )


def solve_bilevel_exact(p: InstanceParams, **kwargs) -> ExactBilevelSolution:
    """Leader optimum with the follower's exact response.

    The follower's tail equals ``x``, so the leader maximizes ``-x1 + x2``
    over the box; that linear problem is solved over the box corners.
    """
    corners = [
        LeaderPoint(a, b) for a in (p.x_lo[0], p.x_hi[0]) for b in (p.x_lo[1], p.x_hi[1])
    ]

    def reduced_value(x: LeaderPoint) -> Fraction:
        tail_only = FollowerPoint((Fraction(0),) * p.n + (x.x1, x.x2))
        return leader_objective(x, tail_only)

    x_star = max(corners, key=reduced_value)
    lower = solve_lower_exact(p, x_star, **kwargs)
    F_star = leader_objective(x_star, lower.y_star)
    if isinstance(F_star, Enclosure):
        raise CertificateError("leader objective at y* should be exact")
    return ExactBilevelSolution(x_star=x_star, F_star=F_star, y_star=lower)


def slater_point(p: InstanceParams) -> FollowerPoint:
    """Exact point strictly inside every follower inequality (for any feasible x)."""
    n = p.n
    unit = pow2tower(n)  # 1 / 2^(2^n)
    chain = [i * unit for i in range(1, n)] + [HALF - unit]
    return FollowerPoint(tuple(chain) + (HALF, Fraction(0)))


@dataclass(frozen=True)
class SlaterReport:
    n: int
    point: FollowerPoint
    eq_residual: Fraction
    min_slack: Fraction
    quad_residuals: tuple
    strict: bool


def slater_check(p: InstanceParams, x: LeaderPoint | None = None) -> SlaterReport:
    """Exact strict-feasibility check of the Slater point.

    Slacks of the bound constraints only grow with ``x``, so the lower
    corner of the box is the binding case and is used by default.
    """
    x = x or LeaderPoint(*p.x_lo)
    y = slater_point(p)
    report = evaluate_constraints(p, x, y)
    slacks = constraint_slacks(p.n, x, y)
    min_slack = min(slacks)
    strict = report.eq_residual == 0 and min_slack > 0
    return SlaterReport(
        n=p.n,
        point=y,
        eq_residual=report.eq_residual,
        min_slack=min_slack,
        quad_residuals=report.quad_violations,
        strict=strict,
    )


def brute_force_lower(p: InstanceParams, x: LeaderPoint, grid: int = 1000) -> FollowerPoint:
    """Grid-search oracle for the follower, independent of the root finder.

    Scans ``y1 = k / (2 grid)`` with the chain tight up to ``y_{n-1}``,
    ``y_n = 1/2 - y1`` checked against ``y_{n-1}^2``, and the tail over the
    corners of its box.  Exact rational arithmetic throughout.
    """
    if p.n > 4:
        raise LimitExceeded("brute force is limited to n <= 4")
    if not 1 <= grid <= 2000:
        raise LimitExceeded("grid must be in [1, 2000]")
    tails = [(a, b) for a in (Fraction(0), x.x1) for b in (-x.x2, x.x2)]
    best, best_value = None, None
    for k in range(grid + 1):
        y1 = Fraction(k, 2 * grid)
        chain = [y1]
        for _ in range(p.n - 2):
            chain.append(chain[-1] * chain[-1])
        y_n = HALF - y1
        if y_n < 0 or chain[-1] * chain[-1] > y_n:
            continue
        for tail in tails:
            y = FollowerPoint(tuple(chain) + (y_n,) + tail)
            value = follower_objective(x, y)
            if best_value is None or value > best_value:
                best, best_value = y, value
    return best
