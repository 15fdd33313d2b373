"""Epsilon-feasible follower responses and the gap they open.

All arithmetic here is exact.  The eps-point keeps every linear constraint
and breaks only the last link of the quadratic chain, by exactly
``2 ** -2**(n-1)``, which lets the follower reach the value 1/2 with any tail.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from fractions import Fraction

from .errors import CertificateError, EpsBelowThreshold
from .exact_lower import ExactBilevelSolution, solve_bilevel_exact
from .instance import (
    FollowerPoint,
    InstanceParams,
    LeaderPoint,
    follower_objective,
    is_eps_feasible,
    leader_objective,
)
from .scalars import format_rational, parse_rational, pow2tower

HALF = Fraction(1, 2)


class Mode(str, enum.Enum):
    OPTIMISTIC = "optimistic"
    PESSIMISTIC = "pessimistic"


def eps_threshold(n: int) -> Fraction:
    """Smallest tolerance at which the eps-point is admissible: ``2 ** -2**(n-1)``."""
    return pow2tower(n - 1)


def eps_point(p: InstanceParams, x: LeaderPoint, tail) -> FollowerPoint:
    """``(1/2, 1/4, 1/16, ..., 2**-2**(n-2), 0, tail)``."""
    t1, t2 = (parse_rational(v) for v in tail)
    if not (0 <= t1 <= x.x1 and -x.x2 <= t2 <= x.x2):
        raise ValueError(f"tail {format_rational(t1)}, {format_rational(t2)} is outside its bounds at x")
    chain = [pow2tower(i) for i in range(p.n - 1)]
    return FollowerPoint(tuple(chain) + (Fraction(0), t1, t2))


@dataclass(frozen=True)
class EpsScenario:
    params: InstanceParams
    eps: Fraction
    mode: Mode = Mode.OPTIMISTIC

    def __post_init__(self):
        object.__setattr__(self, "eps", parse_rational(self.eps))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class GapReport:
    scenario: EpsScenario
    exact: ExactBilevelSolution
    x_eps: LeaderPoint
    y_eps: FollowerPoint
    F_eps: Fraction
    leader_distance_1norm: Fraction
    objective_gap: Fraction
    eps_threshold: Fraction

    @property
    def n(self) -> int:
        return self.scenario.params.n

    CSV_FIELDS = ("n", "eps", "mode", "F_exact", "F_eps", "gap", "distance")

    def csv_row(self) -> dict:
        return {
            "n": self.n,
            "eps": format_rational(self.scenario.eps),
            "mode": self.scenario.mode.value,
            "F_exact": format_rational(self.exact.F_star),
            "F_eps": format_rational(self.F_eps),
            "gap": format_rational(self.objective_gap),
            "distance": format_rational(self.leader_distance_1norm),
        }

    def to_json(self) -> dict:
        return {
            "params": self.scenario.params.to_json(),
            "eps": format_rational(self.scenario.eps),
            "mode": self.scenario.mode.value,
            "eps_threshold": format_rational(self.eps_threshold),
            "exact": {
                "x_star": [format_rational(v) for v in self.exact.x_star.as_tuple()],
                "F_star": format_rational(self.exact.F_star),
            },
            "eps_solution": {
                "x": [format_rational(v) for v in self.x_eps.as_tuple()],
                "y": [format_rational(v) for v in self.y_eps.y],
                "F": format_rational(self.F_eps),
                "follower_value": format_rational(follower_objective(self.x_eps, self.y_eps)),
            },
            "leader_distance_1norm": format_rational(self.leader_distance_1norm),
            "objective_gap": format_rational(self.objective_gap),
        }


def _box_corners(p: InstanceParams):
    return [LeaderPoint(a, b) for a in (p.x_lo[0], p.x_hi[0]) for b in (p.x_lo[1], p.x_hi[1])]


def _tail_corners(x: LeaderPoint):
    return [(a, b) for a in (Fraction(0), x.x1) for b in (-x.x2, x.x2)]


def _follower_choice(p: InstanceParams, x: LeaderPoint, mode: Mode) -> FollowerPoint:
    """Tail the follower picks among its eps-optimal responses at ``x``.

    Every tail gives follower value 1/2, so the tie is broken for the leader
    (optimistic) or against it (pessimistic).  ``F`` is linear in the tail,
    so the extremes sit at corners of the tail box.
    """
    points = [eps_point(p, x, t) for t in _tail_corners(x)]
    pick = max if mode is Mode.OPTIMISTIC else min
    return pick(points, key=lambda y: leader_objective(x, y))


def solve_bilevel_eps(s: EpsScenario, exact: ExactBilevelSolution | None = None) -> GapReport:
    p = s.params
    threshold = eps_threshold(p.n)
    if s.eps < threshold:
        raise EpsBelowThreshold(s.eps, threshold)

    best = None
    for x in _box_corners(p):
        y = _follower_choice(p, x, s.mode)
        value = leader_objective(x, y)
        if best is None or value > best[2]:
            best = (x, y, value)
    x, y, value = best
    if not is_eps_feasible(p, x, y, s.eps):
        raise CertificateError("eps-point failed its own feasibility check")

    exact = exact or solve_bilevel_exact(p)
    distance = sum(abs(a - b) for a, b in zip(x.as_tuple(), exact.x_star.as_tuple()))
    return GapReport(
        scenario=s,
        exact=exact,
        x_eps=x,
        y_eps=y,
        F_eps=value,
        leader_distance_1norm=distance,
        objective_gap=abs(value - exact.F_star),
        eps_threshold=threshold,
    )


def min_n_for_eps(eps) -> int:
    """Smallest ``n >= 2`` with ``2 ** -2**(n-1) <= eps``, by exact comparison."""
    eps = parse_rational(eps)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    n = 2
    # compare 1/2^(2^(n-1)) <= eps  <=>  den <= num * 2^(2^(n-1)) without building huge fractions twice
    while eps.denominator > eps.numerator << (1 << (n - 1)):
        n += 1
    return n


def gap_sweep(params_for, eps_values, modes=(Mode.OPTIMISTIC, Mode.PESSIMISTIC)) -> list[GapReport]:
    """Reports for each eps and mode; ``params_for(eps)`` picks the instance (e.g. auto n)."""
    reports = []
    exact_cache = {}
    for eps in eps_values:
        p = params_for(eps)
        if p not in exact_cache:
            exact_cache[p] = solve_bilevel_exact(p)
        for mode in modes:
            reports.append(solve_bilevel_eps(EpsScenario(p, eps, mode), exact_cache[p]))
    return reports


def _random_eps_feasible(p: InstanceParams, x: LeaderPoint, eps: Fraction, rng: random.Random):
    """Random point meeting the linear constraints exactly and the chain up to ``eps``."""
    scale = 1 << 64
    n = p.n
    y1 = Fraction(rng.randrange(scale + 1), 2 * scale)
    y_n = HALF - y1
    chain = [y1]
    for i in range(1, n - 1):
        # y_i^2 - eps <= y_{i+1}; draw above that floor (clamped at 0) and below 1/2
        floor = max(Fraction(0), chain[-1] ** 2 - eps)
        floor = Fraction(-((-floor.numerator * scale) // floor.denominator), scale)
        top = max(floor, HALF)
        chain.append(floor + (top - floor) * Fraction(rng.randrange(scale + 1), scale))
    if chain[-1] ** 2 - y_n > eps:
        return None
    tail = (
        x.x1 * Fraction(rng.randrange(scale + 1), scale),
        x.x2 * Fraction(rng.randrange(-scale, scale + 1), scale),
    )
    return FollowerPoint(tuple(chain) + (y_n,) + tail)


def superoptimality_certificate(p: InstanceParams, eps, samples: int = 10_000, seed: int = 0) -> Fraction:
    """Certify 1/2 as the best follower value over eps-feasible points.

    With ``y1 = 1/2 - y_n`` the objective reads
    ``1/2 - y_n * (1 + x1 + x2 - y[n+1] - y[n+2])`` and the bracket is
    positive on the tail box, so the value is at most 1/2 as long as
    ``y_n >= 0`` stays exact.  Both steps are checked as exact identities on
    random eps-feasible samples; the eps-point attains 1/2.
    """
    eps = parse_rational(eps)
    threshold = eps_threshold(p.n)
    if eps < threshold:
        raise EpsBelowThreshold(eps, threshold)
    rng = random.Random(seed)
    corners = _box_corners(p)
    checked = 0
    while checked < samples:
        x = corners[checked % len(corners)]
        y = _random_eps_feasible(p, x, eps, rng)
        if y is None:
            continue
        checked += 1
        if not is_eps_feasible(p, x, y, eps):
            raise CertificateError("sampler produced a point that is not eps-feasible")
        v = y.y
        y_n = v[p.n - 1]
        value = follower_objective(x, y)
        rewritten = HALF - y_n - y_n * (x.x1 + x.x2 - v[-2] - v[-1])
        if value != rewritten:
            raise CertificateError("objective rewrite via the equality failed")
        if y_n < 0 or 1 + x.x1 + x.x2 - v[-2] - v[-1] < 0 or value > HALF:
            raise CertificateError("eps-feasible sample beats 1/2")
    attained = follower_objective(corners[0], eps_point(p, corners[0], (0, 0)))
    if attained != HALF:
        raise CertificateError("eps-point does not attain 1/2")
    return HALF
