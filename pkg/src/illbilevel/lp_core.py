"""Exact rational linear programming.

Every program is first brought to the canonical form

    min v^T x   s.t.   M x >= f,   x free

(``<=`` rows are negated, ``=`` rows become a ``>=`` pair, ``max`` negates
``v``).  The solver works on the dual, ``max f^T z  s.t.  M^T z = v, z >= 0``,
with a two-phase tableau simplex under Bland's rule.  The simplex multipliers
of the dual are a primal solution, so one run yields both sides and strong
duality is checked exactly before returning.

Dual extreme points (basic feasible solutions of ``{z >= 0 : M^T z = v}``)
are enumerated either over all square bases or by walking feasible bases
with pivots; their largest 1-norm is the sensitivity constant kappa.
"""

from __future__ import annotations

import itertools
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, isqrt

from .errors import CertificateError, DimensionError, HypothesisViolation, IllBilevelError, LimitExceeded
from .linalg import dot, integer_rows, mat_vec, rank_and_pivots, solve, transpose
from .scalars import format_rational, parse_rational

log = logging.getLogger(__name__)

SIMPLEX_MAX_DIM = 200
ENUMERATION_MAX_DIM = 30
DEFAULT_CAP = 200_000
BASES_METHOD_LIMIT = 2000

RELATIONS = (">=", "=", "<=")


class DualInfeasible(IllBilevelError):
    """``{z >= 0 : M^T z = v}`` is empty, so there are no dual extreme points."""


@dataclass(frozen=True)
class LinearProgram:
    v: tuple
    M: tuple
    f: tuple
    sense: str = "min"
    relations: tuple | None = None

    def __post_init__(self):
        v = tuple(parse_rational(a) for a in self.v)
        M = tuple(tuple(parse_rational(a) for a in row) for row in self.M)
        f = tuple(parse_rational(a) for a in self.f)
        rel = tuple(self.relations) if self.relations is not None else (">=",) * len(M)
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if len(f) != len(M) or len(rel) != len(M):
            raise DimensionError("M, f and relations need one entry per row")
        if any(len(row) != len(v) for row in M):
            raise DimensionError("every row of M needs len(v) entries")
        if any(r not in RELATIONS for r in rel):
            raise ValueError(f"relations must be among {RELATIONS}")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "relations", rel)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.M), len(self.v)

    def canonical(self) -> "LinearProgram":
        """Equivalent program ``min v^T x, M x >= f`` (same variables)."""
        if self.sense == "min" and all(r == ">=" for r in self.relations):
            return self
        rows, rhs = [], []
        for row, b, rel in zip(self.M, self.f, self.relations):
            if rel in (">=", "="):
                rows.append(row)
                rhs.append(b)
            if rel in ("<=", "="):
                rows.append(tuple(-a for a in row))
                rhs.append(-b)
        v = self.v if self.sense == "min" else tuple(-a for a in self.v)
        return LinearProgram(v, tuple(rows), tuple(rhs))

    def to_json(self) -> dict:
        return {
            "sense": self.sense,
            "v": [format_rational(a) for a in self.v],
            "M": [[format_rational(a) for a in row] for row in self.M],
            "f": [format_rational(a) for a in self.f],
            "relations": list(self.relations),
        }

    @classmethod
    def from_json(cls, data) -> "LinearProgram":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(
            v=data["v"], M=data["M"], f=data["f"], sense=data.get("sense", "min"), relations=data.get("relations")
        )


@dataclass(frozen=True)
class LpSolution:
    """Result of :func:`solve_lp`; ``dual``, ``basis`` and certificates refer to the canonical form."""

    status: str
    x: tuple | None = None
    value: Fraction | None = None
    basis: tuple = ()
    dual: tuple | None = None
    ray: tuple | None = None
    farkas: tuple | None = None
    iterations: tuple = (0, 0)

    def to_json(self) -> dict:
        def vec(values):
            return None if values is None else [format_rational(a) for a in values]

        return {
            "status": self.status,
            "x": vec(self.x),
            "value": None if self.value is None else format_rational(self.value),
            "basis": list(self.basis),
            "dual": vec(self.dual),
            "ray": vec(self.ray),
            "farkas": vec(self.farkas),
            "iterations": {"phase1": self.iterations[0], "phase2": self.iterations[1]},
        }


# -- simplex engine on  max c^T z  s.t.  A z = b, z >= 0 ------------------------------


@dataclass
class _Tableau:
    rows: list  # each row: q structural + p artificial + rhs
    basis: list
    q: int
    p: int
    signs: list
    iterations: int = 0

    def reduced(self, cost, j) -> Fraction:
        return cost[j] - sum((cost[b] * row[j] for b, row in zip(self.basis, self.rows)), Fraction(0))

    def pivot(self, r: int, j: int):
        row = self.rows[r]
        piv = row[j]
        row[:] = [a / piv for a in row]
        for i, other in enumerate(self.rows):
            if i != r and other[j] != 0:
                g = other[j]
                other[:] = [a - g * b for a, b in zip(other, row)]
        self.basis[r] = j
        self.iterations += 1

    def multipliers(self, cost) -> list[Fraction]:
        """``c_B^T B^-1`` for the original (unflipped) rows."""
        q, p = self.q, self.p
        y = []
        for i in range(p):
            yi = sum((cost[b] * row[q + i] for b, row in zip(self.basis, self.rows)), Fraction(0))
            y.append(self.signs[i] * yi)
        return y

    def point(self) -> list[Fraction]:
        z = [Fraction(0)] * self.q
        for b, row in zip(self.basis, self.rows):
            if b < self.q:
                z[b] = row[-1]
        return z

    def run(self, cost, max_iter: int):
        """Bland's rule until optimal; returns None or the entering column of an unbounded ray."""
        q = self.q
        while True:
            entering = None
            basic = set(self.basis)
            for j in range(q):
                if j not in basic and self.reduced(cost, j) > 0:
                    entering = j
                    break
            if entering is None:
                return None
            best = None
            for i, row in enumerate(self.rows):
                if row[entering] > 0:
                    ratio = row[-1] / row[entering]
                    key = (ratio, self.basis[i])
                    if best is None or key < best[0]:
                        best = (key, i)
            if best is None:
                return entering
            self.pivot(best[1], entering)
            if self.iterations > max_iter:
                raise LimitExceeded(f"simplex exceeded {max_iter} pivots")


@dataclass
class _EngineResult:
    status: str
    z: list | None = None
    y: list | None = None
    basis: list = field(default_factory=list)
    ray: list | None = None
    farkas: list | None = None
    iterations: tuple = (0, 0)


def maximize_standard(A, b, c, max_iter: int = 100_000) -> _EngineResult:
    """Two-phase simplex for ``max c^T z, A z = b, z >= 0``.

    Optimal: ``z`` basic optimal, ``y`` with ``A^T y >= c`` and ``b^T y = c^T z``.
    Infeasible: ``farkas`` = ``y`` with ``A^T y >= 0`` and ``b^T y < 0``.
    Unbounded: ``ray`` = ``d >= 0`` with ``A d = 0`` and ``c^T d > 0``, plus a feasible ``z``.
    """
    p, q = len(A), len(c)
    A = [[Fraction(a) for a in row] for row in A]
    b = [Fraction(a) for a in b]
    c = [Fraction(a) for a in c]
    signs = [1 if bi >= 0 else -1 for bi in b]
    rows = []
    for i in range(p):
        s = signs[i]
        unit = [Fraction(int(k == i)) for k in range(p)]
        rows.append([s * a for a in A[i]] + unit + [s * b[i]])
    tab = _Tableau(rows=rows, basis=[q + i for i in range(p)], q=q, p=p, signs=signs)

    phase1_cost = [Fraction(0)] * q + [Fraction(-1)] * p
    tab.run(phase1_cost, max_iter)
    it1 = tab.iterations
    infeasibility = sum((row[-1] for bi, row in zip(tab.basis, tab.rows) if bi >= q), Fraction(0))
    if infeasibility > 0:
        return _EngineResult("infeasible", farkas=tab.multipliers(phase1_cost), iterations=(it1, 0))

    # drive zero-level artificials out of the basis where possible
    for r in range(p):
        if tab.basis[r] >= q:
            j = next((j for j in range(q) if j not in tab.basis and tab.rows[r][j] != 0), None)
            if j is not None:
                tab.pivot(r, j)
    it1 = tab.iterations

    phase2_cost = c + [Fraction(0)] * p
    entering = tab.run(phase2_cost, max_iter)
    iters = (it1, tab.iterations - it1)
    if entering is not None:
        ray = [Fraction(0)] * q
        ray[entering] = Fraction(1)
        for bi, row in zip(tab.basis, tab.rows):
            if bi < q:
                ray[bi] = -row[entering]
        return _EngineResult("unbounded", z=tab.point(), ray=ray, iterations=iters)
    return _EngineResult(
        "optimal",
        z=tab.point(),
        y=tab.multipliers(phase2_cost),
        basis=sorted(bi for bi in tab.basis if bi < q),
        iterations=iters,
    )


# -- LP solve -------------------------------------------------------------------------


def _check_size(lp: LinearProgram, limit: int):
    m, n = lp.shape
    if m > limit or n > limit:
        raise LimitExceeded(f"LP of shape {m}x{n} exceeds the limit {limit}")


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Exact optimum with a dual certificate, or an infeasibility/unboundedness certificate.

    ``x`` and ``value`` are in the caller's terms; ``dual``, ``basis``,
    ``ray`` and ``farkas`` refer to ``lp.canonical()``.
    """
    _check_size(lp, SIMPLEX_MAX_DIM)
    can = lp.canonical()
    m, n = can.shape
    sign = 1 if lp.sense == "min" else -1
    Mt = transpose(can.M) if m else [[] for _ in range(n)]
    res = maximize_standard(Mt, can.v, can.f)

    if res.status == "optimal":
        x, z = res.y, res.z
        value = dot(can.v, x)
        _verify_optimal(can, x, z, value)
        return LpSolution(
            "optimal", tuple(x), sign * value, tuple(res.basis), tuple(z), iterations=res.iterations
        )
    if res.status == "unbounded":
        # dual unbounded: the ray is a Farkas certificate for the primal
        return LpSolution("infeasible", farkas=tuple(res.ray), iterations=res.iterations)

    # dual infeasible: primal is infeasible or unbounded along ``d``
    d = res.farkas
    feas = maximize_standard(Mt, [Fraction(0)] * n, can.f)
    if feas.status == "unbounded":
        return LpSolution("infeasible", farkas=tuple(feas.ray), iterations=res.iterations)
    x = feas.y
    if any(a < b for a, b in zip(mat_vec(can.M, x), can.f)):
        raise CertificateError("feasibility run returned an infeasible point")
    if any(a < 0 for a in mat_vec(can.M, d)) or dot(can.v, d) >= 0:
        raise CertificateError("primal ray certificate failed")
    return LpSolution("unbounded", x=tuple(x), ray=tuple(d), iterations=res.iterations)


def _verify_optimal(can: LinearProgram, x, z, value):
    if any(a < b for a, b in zip(mat_vec(can.M, x), can.f)):
        raise CertificateError("primal point violates M x >= f")
    if any(a < 0 for a in z):
        raise CertificateError("dual point has a negative entry")
    back = mat_vec(transpose(can.M), z) if can.M else [Fraction(0)] * len(can.v)
    if back != list(can.v):
        raise CertificateError("dual point violates M^T z = v")
    if dot(can.f, z) != value:
        raise CertificateError("strong duality fails")


# -- dual extreme points --------------------------------------------------------------


@dataclass(frozen=True)
class DualEnumeration:
    points: tuple
    bases: tuple
    truncated: bool
    visited: int
    method: str


def _independent_equations(lp: LinearProgram):
    """Rows of ``[M^T | v]`` restricted to a maximal independent set of ``M^T`` rows."""
    Mt = transpose(lp.M)
    rank, pivots = rank_and_pivots(lp.M)  # independent columns of M = independent rows of M^T
    rows = [Mt[i] for i in pivots]
    rhs = [lp.v[i] for i in pivots]
    return Mt, rows, rhs, rank


def _is_dual_point(Mt, v, z) -> bool:
    return all(a >= 0 for a in z) and mat_vec(Mt, z) == list(v)


def _enumerate_by_bases(can, cap):
    Mt, rows, rhs, r = _independent_equations(can)
    m = len(can.M)
    seen, points, bases = set(), [], []
    visited, truncated = 0, False
    for subset in itertools.combinations(range(m), r):
        visited += 1
        if visited > cap:
            truncated = True
            break
        square = [[row[j] for j in subset] for row in rows]
        sol = solve(square, rhs)
        if sol is None or any(a < 0 for a in sol):
            continue
        z = [Fraction(0)] * m
        for j, a in zip(subset, sol):
            z[j] = a
        if not _is_dual_point(Mt, can.v, z):
            continue
        key = tuple(z)
        if key not in seen:
            seen.add(key)
            points.append(key)
            bases.append(subset)
    return points, bases, truncated, visited


def _basis_tableau(rows, rhs, basis):
    """``B^-1 [A | b]`` for a basis of the independent equations, or None if singular."""
    r = len(rows)
    aug = [list(row) + [b] for row, b in zip(rows, rhs)]
    for k, j in enumerate(basis):
        p = next((i for i in range(k, r) if aug[i][j] != 0), None)
        if p is None:
            return None
        aug[k], aug[p] = aug[p], aug[k]
        piv = aug[k][j]
        aug[k] = [a / piv for a in aug[k]]
        for i in range(r):
            if i != k and aug[i][j] != 0:
                g = aug[i][j]
                aug[i] = [a - g * c for a, c in zip(aug[i], aug[k])]
    return aug


def _enumerate_by_pivots(can, cap):
    """Breadth-first walk over feasible bases; neighbouring bases differ by one feasible pivot."""
    Mt, rows, rhs, r = _independent_equations(can)
    m = len(can.M)
    start = maximize_standard(rows, rhs, [Fraction(0)] * m)
    if start.status == "infeasible":
        return [], [], False, 0
    basis0 = list(start.basis)
    # complete a degenerate starting basis to r independent columns
    for j in range(m):
        if len(basis0) == r:
            break
        if j not in basis0 and rank_and_pivots([[row[k] for k in basis0 + [j]] for row in rows])[0] == len(basis0) + 1:
            basis0.append(j)
    start_key = tuple(sorted(basis0))
    queue, seen_bases = deque([start_key]), {start_key}
    seen, points, bases = set(), [], []
    visited, truncated = 0, False
    while queue:
        basis = queue.popleft()
        visited += 1
        if visited > cap:
            truncated = True
            break
        tab = _basis_tableau(rows, rhs, list(basis))
        if tab is None:
            continue
        z = [Fraction(0)] * m
        for k, j in enumerate(basis):
            z[j] = tab[k][-1]
        if any(a < 0 for a in z):
            continue
        key = tuple(z)
        if key not in seen and _is_dual_point(Mt, can.v, z):
            seen.add(key)
            points.append(key)
            bases.append(basis)
        for j in range(m):
            if j in basis:
                continue
            col = [tab[k][j] for k in range(r)]
            ratios = [tab[k][-1] / col[k] for k in range(r) if col[k] > 0]
            theta = min(ratios) if ratios else None
            for k in range(r):
                ok = (col[k] > 0 and tab[k][-1] / col[k] == theta) or (col[k] < 0 and tab[k][-1] == 0)
                if ok:
                    nxt = tuple(sorted(set(basis) - {basis[k]} | {j}))
                    if nxt not in seen_bases:
                        seen_bases.add(nxt)
                        queue.append(nxt)
    return points, bases, truncated, visited


def enumerate_dual_extreme_points(lp: LinearProgram, cap: int = DEFAULT_CAP, method: str = "auto") -> DualEnumeration:
    """All extreme points of ``{z >= 0 : M^T z = v}`` for the canonical form of ``lp``.

    ``method`` is ``"bases"`` (every square basis, solved exactly),
    ``"pivot"`` (walk of feasible bases) or ``"auto"``.  More than ``cap``
    visited bases sets ``truncated``.
    """
    _check_size(lp, ENUMERATION_MAX_DIM)
    can = lp.canonical()
    if method == "auto":
        r = rank_and_pivots(can.M)[0] if can.M else 0
        method = "bases" if comb(len(can.M), r) <= BASES_METHOD_LIMIT else "pivot"
    if method == "bases":
        points, bases, truncated, visited = _enumerate_by_bases(can, cap)
    elif method == "pivot":
        points, bases, truncated, visited = _enumerate_by_pivots(can, cap)
    else:
        raise ValueError(f"unknown enumeration method {method!r}")
    return DualEnumeration(tuple(points), tuple(bases), truncated, visited, method)


@dataclass(frozen=True)
class KappaBound:
    kappa: Fraction
    witnessing_basis: tuple
    truncated: bool = False
    n_points: int = 0
    max_inf_norm: Fraction | None = None
    method: str = ""

    def to_json(self) -> dict:
        return {
            "kappa": format_rational(self.kappa),
            "witnessing_basis": list(self.witnessing_basis),
            "truncated": self.truncated,
            "n_points": self.n_points,
            "max_inf_norm": None if self.max_inf_norm is None else format_rational(self.max_inf_norm),
            "method": self.method,
        }


def _ceil_sqrt(n: int) -> int:
    k = isqrt(n)
    return k if k * k == n else k + 1


def hadamard_kappa(lp: LinearProgram) -> Fraction:
    """Upper bound on the 1-norm of every dual extreme point from determinant estimates.

    With each independent equation scaled to integers, a basic entry is
    ``det(B_i) / det(B)`` with ``|det(B)| >= 1``; Hadamard's inequality bounds
    ``|det(B_i)|`` by the norm of the right-hand side times the ``r - 1``
    largest column norms.  At most ``r`` entries are nonzero.
    """
    can = lp.canonical()
    _, rows, rhs, r = _independent_equations(can)
    if r == 0:
        return Fraction(0)
    scaled, _ = integer_rows([list(row) + [b] for row, b in zip(rows, rhs)])
    m = len(can.M)
    col_norms = sorted((_ceil_sqrt(sum(row[j] ** 2 for row in scaled)) for j in range(m)), reverse=True)
    rhs_norm = _ceil_sqrt(sum(row[-1] ** 2 for row in scaled))
    prod = 1
    for c in col_norms[: r - 1]:
        prod *= c
    return Fraction(r * rhs_norm * prod)


def kappa_of(lp: LinearProgram, cap: int = DEFAULT_CAP, method: str = "auto") -> KappaBound:
    """Largest dual extreme-point 1-norm (or a flagged Hadamard bound if enumeration is cut off)."""
    enum = enumerate_dual_extreme_points(lp, cap, method)
    if enum.truncated:
        log.warning("dual enumeration truncated after %d bases; using the Hadamard bound", enum.visited)
        return KappaBound(hadamard_kappa(lp), (), True, len(enum.points), None, enum.method)
    if not enum.points:
        raise DualInfeasible("dual polyhedron is empty (the LP is unbounded or data inconsistent)")
    norms = [sum(abs(a) for a in z) for z in enum.points]
    k = max(range(len(norms)), key=norms.__getitem__)
    inf = max(max((abs(a) for a in z), default=Fraction(0)) for z in enum.points)
    return KappaBound(norms[k], tuple(enum.bases[k]), False, len(enum.points), inf, enum.method)


def nearly_optimal_bound_check(
    lp: LinearProgram, x_hat, eps, kappa: KappaBound | Fraction | None = None
) -> tuple[bool, Fraction]:
    """Check ``v^T x_hat >= v* - eps * kappa`` exactly for an eps-feasible ``x_hat``.

    Works on the canonical form.  Returns ``(holds, slack)`` with
    ``slack = v^T x_hat - (v* - eps * kappa)``.
    """
    eps = parse_rational(eps)
    x_hat = [parse_rational(a) for a in x_hat]
    can = lp.canonical()
    if len(x_hat) != len(can.v):
        raise DimensionError("x_hat has the wrong length")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    for i, (a, b) in enumerate(zip(mat_vec(can.M, x_hat), can.f)):
        if a < b - eps:
            raise HypothesisViolation("eps-feasibility", f"row {i}: {a} < {b} - {eps}")
    sol = solve_lp(can)
    if sol.status != "optimal":
        raise ValueError(f"LP has no optimum (status {sol.status})")
    if kappa is None:
        kappa = kappa_of(can)
    k = kappa.kappa if isinstance(kappa, KappaBound) else Fraction(kappa)
    slack = dot(can.v, x_hat) - (sol.value - eps * k)
    return slack >= 0, slack
