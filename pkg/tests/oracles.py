"""Independent reference computations used to check the package.

Nothing here imports from ``illbilevel``: LP optima come from sympy vertex
enumeration plus scipy status classification, root values from plain mpmath
bisection, and follower optima of linear instances from the same vertex
enumeration.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import mpmath
import sympy


def _frac(v) -> Fraction:
    v = sympy.Rational(v)
    return Fraction(int(v.p), int(v.q))


def lp_vertex_optimum(v, M, f):
    """``min v.x s.t. M x >= f`` by enumerating vertices; None unless a finite optimum exists.

    Rank-deficient ``M`` is handled by dropping non-pivot columns: if ``v`` is
    orthogonal to the null space of ``M`` every feasible point can be slid along
    it onto the pivot coordinates without changing the objective.  If ``v`` is
    not orthogonal and the set is non-empty the LP is unbounded.
    """
    S = sympy.Matrix([[sympy.Rational(a) for a in row] for row in M])
    vs = sympy.Matrix([sympy.Rational(a) for a in v])
    fs = [sympy.Rational(a) for a in f]
    n = S.cols
    for null in S.nullspace():
        if (vs.T * null)[0] != 0:
            return None
    _, pivots = S.rref()
    r = len(pivots)
    sub = S.extract(list(range(S.rows)), list(pivots))
    best = None
    for rows in itertools.combinations(range(S.rows), r):
        B = sub.extract(list(rows), list(range(r)))
        if B.det() == 0:
            continue
        xr = B.LUsolve(sympy.Matrix([fs[i] for i in rows]))
        x = [sympy.Integer(0)] * n
        for k, j in enumerate(pivots):
            x[j] = xr[k]
        xv = sympy.Matrix(x)
        if all((S.row(i) * xv)[0] >= fs[i] for i in range(S.rows)):
            val = (vs.T * xv)[0]
            best = val if best is None or val < best else best
    return None if best is None else _frac(best)


def lp_status_highs(v, M, f) -> str:
    """Floating-point status from scipy's HiGHS: 'optimal', 'infeasible' or 'unbounded'."""
    from scipy.optimize import linprog

    res = linprog(
        c=[float(a) for a in v],
        A_ub=[[-float(a) for a in row] for row in M],
        b_ub=[-float(a) for a in f],
        bounds=[(None, None)] * len(v),
        method="highs",
    )
    return {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, f"status {res.status}")


def h_root_bisection(n: int, dps: int = 80, steps: int = 400):
    """Root of ``z + z**(2**(n-1)) - 1/2`` on [0, 1/2] by naive bisection at ``dps`` digits."""
    with mpmath.workdps(dps):
        lo, hi = mpmath.mpf(0), mpmath.mpf(1) / 2
        for _ in range(steps):
            mid = (lo + hi) / 2
            if mid + mid ** (2 ** (n - 1)) - mpmath.mpf(1) / 2 <= 0:
                lo = mid
            else:
                hi = mid
        return +lo


def h_root_fixed_point(n: int, dps: int = 80, steps: int = 50):
    """Same root by iterating ``z <- 1/2 - z**(2**(n-1))``; contracts fast once n >= 4."""
    with mpmath.workdps(dps):
        z = mpmath.mpf(1) / 2
        for _ in range(steps):
            z = mpmath.mpf(1) / 2 - z ** (2 ** (n - 1))
        return +z


def sqrt3_root_contains(lo: Fraction, hi: Fraction) -> bool:
    """Exact test that (sqrt(3) - 1)/2 lies in [lo, hi] with 0 < lo."""
    return (2 * lo + 1) ** 2 <= 3 <= (2 * hi + 1) ** 2


def inv_sqrt3_contains(lo: Fraction, hi: Fraction) -> bool:
    """Exact test that 1/sqrt(3) lies in [lo, hi] with 0 < lo."""
    return lo * lo <= Fraction(1, 3) <= hi * hi


def follower_value(D, b, C, d, x):
    """Optimal value of ``min d.y s.t. D y >= b - C x`` by vertex enumeration."""
    rhs = [Fraction(bi) - sum(Fraction(c) * xj for c, xj in zip(row, x)) for bi, row in zip(b, C)]
    return lp_vertex_optimum(d, D, rhs)


def kkt_multipliers(n: int, dps: int = 60):
    """(alpha_1..alpha_{n-1}, pi) from the first n stationarity rows, all sign multipliers zero.

    Uses the bisection root and an mpmath LU solve; the tail sits at x so the
    leader terms cancel.
    """
    with mpmath.workdps(dps):
        y1 = h_root_bisection(n, dps=dps + 20)
        y = [y1 ** (2**i) for i in range(n)]
        A = mpmath.zeros(n, n)
        rhs = mpmath.zeros(n, 1)
        A[0, 0], A[0, n - 1], rhs[0] = 2 * y[0], -1, 1
        for i in range(1, n - 1):
            A[i, i - 1], A[i, i] = -1, 2 * y[i]
        A[n - 1, n - 2], A[n - 1, n - 1] = -1, -1
        sol = mpmath.lu_solve(A, rhs)
        return [sol[i] for i in range(n - 1)], sol[n - 1]


def dual_vertices(v, M):
    """Extreme points of ``{z >= 0 : M^T z = v}`` via sympy, by brute force over supports."""
    Mt = sympy.Matrix([[sympy.Rational(a) for a in row] for row in M]).T
    vs = sympy.Matrix([sympy.Rational(a) for a in v])
    m = Mt.cols
    out = set()
    for k in range(0, Mt.rank() + 1):
        for support in itertools.combinations(range(m), k):
            cols = Mt.extract(list(range(Mt.rows)), list(support)) if support else sympy.zeros(Mt.rows, 0)
            if k and cols.rank() < k:
                continue
            if k == 0:
                if all(a == 0 for a in vs):
                    out.add((Fraction(0),) * m)
                continue
            try:
                sol, params = cols.gauss_jordan_solve(vs)
            except ValueError:
                continue
            if params.shape[0]:
                continue
            z = [Fraction(0)] * m
            for idx, j in enumerate(support):
                z[j] = _frac(sol[idx])
            if all(a >= 0 for a in z):
                out.add(tuple(z))
    return out
