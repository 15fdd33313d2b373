"""The parameterized bilevel family with a chained quadratic lower level.

Leader::

    max_x  F(x, y) = x1 - 2 y[n+1] + y[n+2]
    s.t.   x in [x_lo1, x_hi1] x [x_lo2, x_hi2],  y optimal for the follower

Follower (``y`` has ``n + 2`` entries, 1-based in the comments below)::

    max_y  f(x, y) = y1 - y_n (x1 + x2 - y[n+1] - y[n+2])
    s.t.   y1 + y_n = 1/2                      (linear equality)
           y_i^2 <= y[i+1],  i = 1..n-1        (the only nonlinear constraints)
           y_i >= 0,         i = 1..n
           0 <= y[n+1] <= x1
           -x2 <= y[n+2] <= x2

Points hold either exact :class:`~fractions.Fraction` entries or
:class:`~illbilevel.scalars.Enclosure` entries.  Checks on enclosures are
fail-closed: a constraint counts as satisfied only if the enclosure proves it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

from .errors import DimensionError, LimitExceeded
from .scalars import (
    Enclosure,
    Scalar,
    format_rational,
    lower_bound,
    parse_rational,
    scalar_max,
    upper_bound,
)

#: Cap on ``n``; exact rationals of size 2^(-2^(n-1)) have exponentially many bits.
MAX_N = 24


@dataclass(frozen=True)
class InstanceParams:
    n: int
    x_lo: tuple[Fraction, Fraction]
    x_hi: tuple[Fraction, Fraction]
    max_n: int = MAX_N

    def __post_init__(self):
        if not isinstance(self.n, int) or isinstance(self.n, bool):
            raise TypeError("n must be an integer")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.n > self.max_n:
            raise LimitExceeded(f"n = {self.n} exceeds the configured maximum {self.max_n}")
        lo = tuple(parse_rational(v) for v in self.x_lo)
        hi = tuple(parse_rational(v) for v in self.x_hi)
        if len(lo) != 2 or len(hi) != 2:
            raise DimensionError("leader bounds must be pairs")
        object.__setattr__(self, "x_lo", lo)
        object.__setattr__(self, "x_hi", hi)
        for i in range(2):
            if not (1 <= lo[i] < hi[i]):
                raise ValueError(f"leader bounds need 1 <= x_lo[{i}] < x_hi[{i}], got {lo[i]}, {hi[i]}")

    @property
    def dim_y(self) -> int:
        return self.n + 2

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "x_lo": [format_rational(v) for v in self.x_lo],
            "x_hi": [format_rational(v) for v in self.x_hi],
        }

    @classmethod
    def from_json(cls, data) -> "InstanceParams":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(
            n=int(data["n"]),
            x_lo=tuple(parse_rational(v) for v in data["x_lo"]),
            x_hi=tuple(parse_rational(v) for v in data["x_hi"]),
        )


@dataclass(frozen=True)
class LeaderPoint:
    x1: Fraction
    x2: Fraction

    def __post_init__(self):
        object.__setattr__(self, "x1", parse_rational(self.x1))
        object.__setattr__(self, "x2", parse_rational(self.x2))

    def as_tuple(self) -> tuple[Fraction, Fraction]:
        return (self.x1, self.x2)


@dataclass(frozen=True)
class FollowerPoint:
    """Follower decision ``(y1, ..., y_n, y[n+1], y[n+2])`` stored 0-based."""

    y: tuple

    def __post_init__(self):
        entries = []
        for v in self.y:
            entries.append(v if isinstance(v, Enclosure) else parse_rational(v))
        object.__setattr__(self, "y", tuple(entries))

    @property
    def is_exact(self) -> bool:
        return not any(isinstance(v, Enclosure) for v in self.y)

    def __len__(self):
        return len(self.y)

    def __getitem__(self, i):
        return self.y[i]

    def chain(self) -> tuple:
        """The chained block ``y1..y_n``."""
        return self.y[:-2]

    @property
    def tail(self) -> tuple:
        return self.y[-2:]


@dataclass(frozen=True)
class ConstraintReport:
    eq_residual: Scalar
    quad_violations: tuple
    bound_violations: tuple
    max_nonlinear_violation: Scalar


@dataclass(frozen=True)
class ConstraintSpec:
    """One inequality of the follower written as ``slack >= 0``."""

    id: str
    multiplier: str
    description: str


def constraint_table(n: int) -> list[ConstraintSpec]:
    """Fixed ordering of the ``2n + 3`` follower inequalities and their multipliers.

    Shared by constraint evaluation and KKT certification so both index the
    same way.  Indices in ids are 1-based, matching the usual notation.
    """
    rows = [
        ConstraintSpec(f"quad_{i}", f"alpha_{i}", f"y_{i}^2 <= y_{i + 1}") for i in range(1, n)
    ]
    rows += [
        ConstraintSpec(f"nonneg_{i}", f"beta_{i}", f"y_{i} >= 0") for i in range(1, n + 2)
    ]
    rows.append(ConstraintSpec(f"upper_{n + 1}", "gamma", f"y_{n + 1} <= x_1"))
    rows.append(ConstraintSpec(f"lower_{n + 2}", "delta_minus", f"y_{n + 2} >= -x_2"))
    rows.append(ConstraintSpec(f"upper_{n + 2}", "delta_plus", f"y_{n + 2} <= x_2"))
    return rows


def constraint_slacks(n: int, x: LeaderPoint, y: FollowerPoint) -> list[Scalar]:
    """Slacks in :func:`constraint_table` order (nonnegative iff satisfied)."""
    _check_dims(n, y)
    v = y.y
    slacks = [v[i + 1] - _square(v[i]) for i in range(n - 1)]
    slacks += [v[i] for i in range(n + 1)]
    slacks.append(x.x1 - v[n])
    slacks.append(v[n + 1] + x.x2)
    slacks.append(x.x2 - v[n + 1])
    return slacks


def _square(v: Scalar) -> Scalar:
    if isinstance(v, Enclosure):
        return v.square()
    return v * v


def _check_dims(n: int, y: FollowerPoint):
    if len(y) != n + 2:
        raise DimensionError(f"follower point has {len(y)} entries, instance needs {n + 2}")


def _violation(amount: Scalar) -> Scalar:
    """``max(0, amount)``, the amount by which ``amount <= 0`` fails."""
    return scalar_max([amount], floor=0)


def leader_feasible(p: InstanceParams, x: LeaderPoint) -> bool:
    return (p.x_lo[0] <= x.x1 <= p.x_hi[0]) and (p.x_lo[1] <= x.x2 <= p.x_hi[1])


def evaluate_constraints(p: InstanceParams, x: LeaderPoint, y: FollowerPoint) -> ConstraintReport:
    if not leader_feasible(p, x):
        raise ValueError(f"leader point {x} lies outside the box")
    _check_dims(p.n, y)
    n, v = p.n, y.y
    eq_residual = v[0] + v[n - 1] - Fraction(1, 2)
    quad = tuple(_square(v[i]) - v[i + 1] for i in range(n - 1))
    bounds = [_violation(-v[i]) for i in range(n)]  # y_i >= 0
    bounds.append(_violation(-v[n]))  # y[n+1] >= 0
    bounds.append(_violation(v[n] - x.x1))  # y[n+1] <= x1
    bounds.append(_violation(-x.x2 - v[n + 1]))  # y[n+2] >= -x2
    bounds.append(_violation(v[n + 1] - x.x2))  # y[n+2] <= x2
    return ConstraintReport(
        eq_residual=eq_residual,
        quad_violations=quad,
        bound_violations=tuple(bounds),
        max_nonlinear_violation=scalar_max(quad, floor=0),
    )


def _certified_zero(v: Scalar) -> bool:
    if isinstance(v, Enclosure):
        return v.is_zero()
    return v == 0


def is_eps_feasible(
    p: InstanceParams,
    x: LeaderPoint,
    y: FollowerPoint,
    eps,
    strict_linear: bool = True,
) -> bool:
    """Eps-feasibility where only the quadratic chain may be violated.

    Linear constraints must hold exactly unless ``strict_linear`` is False, in
    which case they too may be violated by at most ``eps``.  Enclosed data must
    certify every condition (an equality is only certified by an exact zero).
    """
    eps = parse_rational(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    r = evaluate_constraints(p, x, y)
    if strict_linear:
        if not _certified_zero(r.eq_residual):
            return False
        if not all(upper_bound(b) <= 0 for b in r.bound_violations):
            return False
    else:
        if not (upper_bound(r.eq_residual) <= eps and lower_bound(r.eq_residual) >= -eps):
            return False
        if not all(upper_bound(b) <= eps for b in r.bound_violations):
            return False
    return upper_bound(r.max_nonlinear_violation) <= eps


def is_feasible(p: InstanceParams, x: LeaderPoint, y: FollowerPoint) -> bool:
    """Exact (zero-tolerance) feasibility, certified."""
    r = evaluate_constraints(p, x, y)
    return (
        _certified_zero(r.eq_residual)
        and all(upper_bound(b) <= 0 for b in r.bound_violations)
        and all(upper_bound(q) <= 0 for q in r.quad_violations)
    )


def leader_objective(x: LeaderPoint, y: FollowerPoint) -> Scalar:
    return x.x1 - 2 * y.y[-2] + y.y[-1]


def follower_objective(x: LeaderPoint, y: FollowerPoint) -> Scalar:
    v = y.y
    y_n = v[-3]
    return v[0] - y_n * (x.x1 + x.x2 - v[-2] - v[-1])
