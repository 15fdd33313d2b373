"""Stability of linear bilevel problems under near-feasibility.

The instance is

    min_{x,y}  c_x^T x + c_y^T y
    s.t.       A x >= a,
               y in argmin { d^T y' : C x + D y' >= b }.

A near-feasible triple ``(x_hat, y_hat, z_hat)`` (``z_hat`` approximately
dual optimal for the follower) is repaired in two exact steps: the nearest
point of the joint polyhedron in the 1-norm, then the nearest follower
optimum at the repaired ``x``.  Distances are compared with bounds built from
dual extreme-point norms computed by :mod:`illbilevel.lp_core`.
"""

from __future__ import annotations

import itertools
import json
import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

from .errors import AssumptionViolation, CertificateError, DimensionError, HypothesisViolation, LimitExceeded
from .linalg import dot, mat_vec, solve, transpose
from .lp_core import KappaBound, LinearProgram, kappa_of, solve_lp
from .scalars import format_rational, parse_rational

log = logging.getLogger(__name__)

MAX_VARS = 6
MAX_ROWS = 12
MAX_SUBSETS = 200_000


def _vec(values) -> tuple:
    return tuple(parse_rational(v) for v in values)


def _mat(rows) -> tuple:
    return tuple(tuple(parse_rational(v) for v in row) for row in rows)


def _norm1(u) -> Fraction:
    return sum((abs(a) for a in u), Fraction(0))


def _norm_inf(u) -> Fraction:
    return max((abs(a) for a in u), default=Fraction(0))


def _col_sum_norm(matrix) -> Fraction:
    """Induced 1-norm: largest absolute column sum."""
    return max((_norm1(col) for col in transpose(matrix)), default=Fraction(0))


def _sub(u, w) -> list:
    return [a - b for a, b in zip(u, w)]


@dataclass(frozen=True)
class LinearBilevelInstance:
    A: tuple
    a: tuple
    C: tuple
    D: tuple
    b: tuple
    c_x: tuple
    c_y: tuple
    d: tuple
    name: str = ""

    def __post_init__(self):
        for key in ("A", "C", "D"):
            object.__setattr__(self, key, _mat(getattr(self, key)))
        for key in ("a", "b", "c_x", "c_y", "d"):
            object.__setattr__(self, key, _vec(getattr(self, key)))
        nx, ny = len(self.c_x), len(self.c_y)
        if len(self.d) != ny:
            raise DimensionError("d and c_y must have the same length")
        if len(self.a) != len(self.A) or any(len(r) != nx for r in self.A):
            raise DimensionError("A must be m x n_x with len(a) = m")
        if len(self.b) != len(self.C) or len(self.D) != len(self.C):
            raise DimensionError("C, D and b need the same number of rows")
        if any(len(r) != nx for r in self.C) or any(len(r) != ny for r in self.D):
            raise DimensionError("C must be l x n_x and D must be l x n_y")

    @property
    def n_x(self) -> int:
        return len(self.c_x)

    @property
    def n_y(self) -> int:
        return len(self.c_y)

    def lower_rhs(self, x) -> list:
        """``b - C x``."""
        return _sub(self.b, mat_vec(self.C, x))

    def lower_lp(self, x) -> LinearProgram:
        return LinearProgram(self.d, self.D, self.lower_rhs(x))

    def joint_rows(self) -> tuple[list, list]:
        """``[A 0; C D]`` and ``(a; b)`` over the stacked variables ``(x, y)``."""
        rows = [list(r) + [Fraction(0)] * self.n_y for r in self.A]
        rows += [list(c) + list(dd) for c, dd in zip(self.C, self.D)]
        return rows, list(self.a) + list(self.b)

    def objective(self, x, y) -> Fraction:
        return dot(self.c_x, x) + dot(self.c_y, y)

    def to_json(self) -> dict:
        out = {"format": "linear-bilevel"}
        if self.name:
            out["name"] = self.name
        for key in ("A", "C", "D"):
            out[key] = [[format_rational(v) for v in row] for row in getattr(self, key)]
        for key in ("a", "b", "c_x", "c_y", "d"):
            out[key] = [format_rational(v) for v in getattr(self, key)]
        return out

    @classmethod
    def from_json(cls, data) -> "LinearBilevelInstance":
        if isinstance(data, str):
            data = json.loads(data)
        keys = ("A", "a", "C", "D", "b", "c_x", "c_y", "d")
        missing = [k for k in keys if k not in data]
        if missing:
            raise ValueError(f"instance file lacks {missing}")
        return cls(**{k: data[k] for k in keys}, name=data.get("name", ""))


def polytope_vertices(M, f) -> list[tuple]:
    """Vertices of ``{x : M x >= f}`` by solving every square row subset."""
    n = len(M[0]) if M else 0
    if comb(len(M), n) > MAX_SUBSETS:
        raise LimitExceeded("too many row subsets for vertex enumeration")
    out = []
    seen = set()
    for rows in itertools.combinations(range(len(M)), n):
        x = solve([list(M[i]) for i in rows], [f[i] for i in rows])
        if x is None:
            continue
        if all(p >= q for p, q in zip(mat_vec(M, x), f)):
            key = tuple(x)
            if key not in seen:
                seen.add(key)
                out.append(key)
    return out


# -- standing assumptions -------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    upper_vertices: tuple
    joint_bounded: bool
    upper_bounded: bool
    lower_feasible_everywhere: bool


def _probe_bounded(M, f, name):
    n = len(M[0])
    for i in range(n):
        for s in (1, -1):
            v = [Fraction(0)] * n
            v[i] = Fraction(s)
            sol = solve_lp(LinearProgram(v, M, f))
            if sol.status == "infeasible":
                raise AssumptionViolation(name, "the set is empty")
            if sol.status == "unbounded":
                raise AssumptionViolation(name, f"unbounded along {'+' if s < 0 else '-'}e_{i + 1}")


def check_assumptions(inst: LinearBilevelInstance) -> AssumptionReport:
    """Verify the standing assumptions exactly or raise :class:`AssumptionViolation`.

    Boundedness is probed with ``+-e_i`` objectives.  Follower feasibility at
    every vertex of ``{A x >= a}`` covers the whole box, since the set of
    ``x`` admitting a feasible follower response is convex.
    """
    rows, rhs = inst.joint_rows()
    _probe_bounded(rows, rhs, "joint set non-empty and bounded")
    _probe_bounded(inst.A, inst.a, "upper-level set bounded")
    vertices = polytope_vertices(inst.A, inst.a)
    for x in vertices:
        feas = solve_lp(LinearProgram([Fraction(0)] * inst.n_y, inst.D, inst.lower_rhs(x)))
        if feas.status == "infeasible":
            raise AssumptionViolation(
                "lower level feasible for every upper-level decision",
                f"no follower response at x = {[format_rational(v) for v in x]}",
            )
    return AssumptionReport(tuple(vertices), True, True, True)


# -- 1-norm recovery problems ---------------------------------------------------------


def projection_lp(M, f, point, extra_rows=(), extra_rhs=()) -> LinearProgram:
    """``min sum(t)  s.t.  t - u >= -point, t + u >= point, M u >= f`` over ``(u, t)``.

    Its optimum is the 1-norm distance from ``point`` to ``{M u >= f}``.
    The constraint matrix does not depend on ``point`` or ``f``.
    """
    n = len(point)
    rows, rhs = [], []
    eye = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for i in range(n):
        rows.append([-e for e in eye[i]] + eye[i])
        rhs.append(-point[i])
    for i in range(n):
        rows.append(eye[i] + eye[i])
        rhs.append(point[i])
    for r, q in itertools.chain(zip(M, f), zip(extra_rows, extra_rhs)):
        rows.append(list(r) + [Fraction(0)] * n)
        rhs.append(q)
    v = [Fraction(0)] * n + [Fraction(1)] * n
    return LinearProgram(v, rows, rhs)


@dataclass(frozen=True)
class Recovery:
    point: tuple
    distance: Fraction
    kappa: Fraction | None = None
    bound: Fraction | None = None

    @property
    def within_bound(self) -> bool:
        return self.bound is None or self.distance <= self.bound


def _project(M, f, point, extra_rows=(), extra_rhs=(), what="set"):
    lp = projection_lp(M, f, point, extra_rows, extra_rhs)
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise AssumptionViolation(f"{what} non-empty", f"projection LP is {sol.status}")
    n = len(point)
    u = sol.x[:n]
    dist = _norm1(_sub(u, point))
    if dist != sol.value:
        raise CertificateError("projection value differs from the 1-norm distance")
    return tuple(u), dist


def _kappa_projection(M, n, extra_rows=()) -> KappaBound:
    """kappa of the projection LP; only its matrix matters, so the point is a dummy."""
    zeros = [Fraction(0)] * n
    lp = projection_lp(M, [Fraction(0)] * len(M), zeros, extra_rows, [Fraction(0)] * len(extra_rows))
    return kappa_of(lp)


def _check_near(M, f, u, eps, condition):
    for i, (p, q) in enumerate(zip(mat_vec(M, u), f)):
        if p < q - eps:
            raise HypothesisViolation(condition, f"row {i + 1}: {format_rational(p)} < {format_rational(q)} - eps")


def recover_upper(inst: LinearBilevelInstance, x_hat, eps, kappa: Fraction | None = None) -> Recovery:
    """Nearest ``x`` with ``A x >= a`` in the 1-norm; distance checked against ``eps * kappa(A)``."""
    x_hat, eps = _vec(x_hat), parse_rational(eps)
    _check_near(inst.A, inst.a, x_hat, eps, "upper")
    x, dist = _project(inst.A, inst.a, x_hat, what="upper-level set")
    if kappa is None:
        kappa = _kappa_projection(inst.A, inst.n_x).kappa
    return Recovery(x, dist, kappa, eps * kappa)


def recover_joint(inst: LinearBilevelInstance, x_hat, y_hat, eps, kappa: Fraction | None = None) -> Recovery:
    """Nearest point of the joint polyhedron; distance checked against ``eps * kappa6``."""
    x_hat, y_hat, eps = _vec(x_hat), _vec(y_hat), parse_rational(eps)
    rows, rhs = inst.joint_rows()
    point = x_hat + y_hat
    _check_near(rows, rhs, point, eps, "primal near-feasibility")
    u, dist = _project(rows, rhs, point, what="joint set")
    if kappa is None:
        kappa = _kappa_projection(rows, len(point)).kappa
    return Recovery(u, dist, kappa, eps * kappa)


def _lower_value(inst, x) -> Fraction:
    sol = solve_lp(inst.lower_lp(x))
    if sol.status != "optimal":
        raise AssumptionViolation("lower level solvable", f"follower LP is {sol.status} at x")
    return sol.value


def check_lower_hypotheses(inst: LinearBilevelInstance, x, y_hat, z_hat, eps, x_for_gap=None):
    """Near primal feasibility, near dual feasibility and a small duality gap."""
    rhs = inst.lower_rhs(x)
    _check_near(inst.D, rhs, y_hat, eps, "primal near-feasibility")
    resid = _sub(mat_vec(transpose(inst.D), z_hat), inst.d)
    if _norm_inf(resid) > eps:
        raise HypothesisViolation("dual near-feasibility", f"|D^T z - d|_inf = {format_rational(_norm_inf(resid))} > eps")
    if any(z < -eps for z in z_hat):
        raise HypothesisViolation("dual near-feasibility", "z_hat has an entry below -eps")
    gap_rhs = rhs if x_for_gap is None else inst.lower_rhs(x_for_gap)
    gap = dot(inst.d, y_hat) - dot(gap_rhs, z_hat)
    if gap > eps:
        raise HypothesisViolation("duality gap", f"duality gap {format_rational(gap)} > eps")


def lower_dual_kappa_bound(inst: LinearBilevelInstance, x_points) -> Fraction:
    """Bound on dual extreme-point 1-norms for the follower's dual, uniform over ``x_points``.

    The follower's dual, written as ``min -(b - C x)^T z`` over
    ``D^T z = d, z >= 0`` in inequality form, has dual polyhedron
    ``{w >= 0 : [D, -D, I] w = C x - b}``.  Every extreme point is a basic
    solution ``G_S^-1 (C x - b)``; taking all square bases (feasible or not)
    and all listed ``x`` (vertices of the upper-level box suffice by convexity
    of ``x -> |G_S^-1 (C x - b)|_1``) gives a bound valid for every feasible ``x``.
    """
    ell = len(inst.D)
    G = [list(dd) + [-v for v in dd] + [Fraction(int(i == j)) for j in range(ell)] for i, dd in enumerate(inst.D)]
    cols = len(G[0])
    if comb(cols, ell) > MAX_SUBSETS:
        raise LimitExceeded("too many bases for the follower dual bound")
    targets = [_sub(mat_vec(inst.C, x), inst.b) for x in x_points]
    best = Fraction(0)
    for subset in itertools.combinations(range(cols), ell):
        square = [[row[j] for j in subset] for row in G]
        for t in targets:
            w = solve(square, t)
            if w is None:
                break
            best = max(best, _norm1(w))
    return best


@dataclass(frozen=True)
class InstanceKappas:
    """Per-instance sensitivity constants; all are computed, none assumed.

    kappa_upper     1-norm recovery onto ``{A x >= a}``
    kappa1          dual extreme points of ``{D^T z = d, z >= 0}`` (1-norm)
    kappa6          1-norm recovery onto the joint polyhedron
    kappa7          sup-norm of dual extreme points (and of the declared basis solution)
    kappa_lower_dual, kappa_lower_proj
                    the two factors of the follower recovery bound; kappa10 is
                    ``(kappa_lower_dual + 1) * kappa_lower_proj``
    kappa8, kappa9  inflate eps for the follower step
    kappa2..kappa5  final distance and objective bounds
    """

    values: dict = field(default_factory=dict)

    def __getitem__(self, key) -> Fraction:
        return self.values[key]

    def to_json(self) -> dict:
        return {k: format_rational(v) for k, v in sorted(self.values.items())}


def declared_basis_solution(inst: LinearBilevelInstance, basis) -> list:
    """``D_B^-T d`` for a basis ``B`` of follower rows."""
    D_B = [list(inst.D[i]) for i in basis]
    w = solve(transpose(D_B), list(inst.d))
    if w is None:
        raise HypothesisViolation("declared basis", f"declared basis {list(basis)} is singular")
    return w


def compute_kappas(inst: LinearBilevelInstance, basis=None) -> InstanceKappas:
    rows, _ = inst.joint_rows()
    k_upper = _kappa_projection(inst.A, inst.n_x).kappa
    k6 = _kappa_projection(rows, inst.n_x + inst.n_y).kappa
    dual_poly = kappa_of(LinearProgram(inst.d, inst.D, [Fraction(0)] * len(inst.D)))
    k1 = dual_poly.kappa
    k7 = dual_poly.max_inf_norm if dual_poly.max_inf_norm is not None else k1
    if basis is not None:
        k7 = max(k7, _norm_inf(declared_basis_solution(inst, basis)))
    c_norm = _col_sum_norm(inst.C)
    k8 = k6 * (_norm_inf(inst.d) + c_norm * k7) + 1
    k9 = k6 * c_norm * (k1 + 1)
    k_ld = lower_dual_kappa_bound(inst, polytope_vertices(inst.A, inst.a))
    value_row = [[-v for v in inst.d]]
    k_lp = _kappa_projection(inst.D, inst.n_y, value_row).kappa
    k10 = (k_ld + 1) * k_lp
    cx, cy = _norm_inf(inst.c_x), _norm_inf(inst.c_y)
    values = {
        "kappa_upper": k_upper,
        "kappa1": k1,
        "kappa6": k6,
        "kappa7": k7,
        "kappa8": k8,
        "kappa9": k9,
        "kappa_lower_dual": k_ld,
        "kappa_lower_proj": k_lp,
        "kappa10": k10,
        "kappa2": k6 + k8 * k10,
        "kappa3": k9 * k10,
        "kappa4": k6 * (cx + cy) + k8 * k10 * cy,
        "kappa5": k9 * k10 * cy,
    }
    return InstanceKappas(values)


def recover_lower(
    inst: LinearBilevelInstance, x, y_hat, z_hat, eps_effective, kappa10: Fraction | None = None
) -> Recovery:
    """Nearest follower optimum at ``x`` to ``y_hat``.

    Solves the follower for its optimal value first, then projects ``y_hat``
    onto ``{D y >= b - C x, d^T y <= v*}``.  The distance is compared with
    ``eps_effective * kappa10``.
    """
    x, y_hat, z_hat = _vec(x), _vec(y_hat), _vec(z_hat)
    eps = parse_rational(eps_effective)
    if any(p < q for p, q in zip(mat_vec(inst.A, x), inst.a)):
        raise HypothesisViolation("upper", "x is not upper-level feasible")
    check_lower_hypotheses(inst, x, y_hat, z_hat, eps)
    v_star = _lower_value(inst, x)
    y, dist = _project(inst.D, inst.lower_rhs(x), y_hat, [[-v for v in inst.d]], [-v_star], what="follower optimal set")
    if dot(inst.d, y) != v_star:
        raise CertificateError("recovered follower point is not optimal")
    if kappa10 is None:
        kappa10 = compute_kappas(inst)["kappa10"]
    return Recovery(y, dist, kappa10, eps * kappa10)


# -- near-feasible triples ------------------------------------------------------------


@dataclass(frozen=True)
class NearFeasibleTriple:
    x_hat: tuple
    y_hat: tuple
    z_hat: tuple
    eps: Fraction
    basis: tuple | None = None

    def __post_init__(self):
        for key in ("x_hat", "y_hat", "z_hat"):
            object.__setattr__(self, key, _vec(getattr(self, key)))
        object.__setattr__(self, "eps", parse_rational(self.eps))
        if self.basis is not None:
            object.__setattr__(self, "basis", tuple(int(i) for i in self.basis))

    def to_json(self) -> dict:
        return {
            "x_hat": [format_rational(v) for v in self.x_hat],
            "y_hat": [format_rational(v) for v in self.y_hat],
            "z_hat": [format_rational(v) for v in self.z_hat],
            "eps": format_rational(self.eps),
            "basis": None if self.basis is None else list(self.basis),
        }


def check_triple(inst: LinearBilevelInstance, t: NearFeasibleTriple, kappa1: Fraction):
    """All stability hypotheses, exactly; raises :class:`HypothesisViolation` naming the first failure."""
    if len(t.x_hat) != inst.n_x or len(t.y_hat) != inst.n_y or len(t.z_hat) != len(inst.D):
        raise DimensionError("triple does not match the instance dimensions")
    _check_near(inst.A, inst.a, t.x_hat, t.eps, "upper")
    check_lower_hypotheses(inst, t.x_hat, t.y_hat, t.z_hat, t.eps)
    if t.basis is None:
        raise HypothesisViolation("declared basis", "no basis declared for z_hat")
    if len(t.basis) != inst.n_y:
        raise HypothesisViolation("declared basis", f"basis needs {inst.n_y} rows")
    w = declared_basis_solution(inst, t.basis)
    zb = [t.z_hat[i] for i in t.basis]
    if _norm_inf(_sub(zb, w)) > t.eps * kappa1:
        raise HypothesisViolation("declared basis", "z_B is farther than eps * kappa1 from D_B^-T d")
    rest = [t.z_hat[i] for i in range(len(t.z_hat)) if i not in t.basis]
    if _norm_inf(rest) > t.eps:
        raise HypothesisViolation("declared basis", "nonbasic part of z_hat exceeds eps")


@dataclass(frozen=True)
class StabilityReport:
    eps: Fraction
    x_star: tuple
    y_star: tuple
    y_prime: tuple
    dist_x: Fraction
    dist_y: Fraction
    obj_diff: Fraction
    eps_effective: Fraction
    kappas: InstanceKappas

    @property
    def dist_total(self) -> Fraction:
        return self.dist_x + self.dist_y

    @property
    def distance_bound(self) -> Fraction:
        return self.eps * self.kappas["kappa2"] + self.eps**2 * self.kappas["kappa3"]

    @property
    def objective_bound(self) -> Fraction:
        return self.eps * self.kappas["kappa4"] + self.eps**2 * self.kappas["kappa5"]

    @property
    def holds(self) -> bool:
        return self.dist_total <= self.distance_bound and self.obj_diff <= self.objective_bound

    CSV_FIELDS = (
        "eps", "dist_x", "dist_y", "dist_total", "obj_diff",
        "kappa2", "kappa3", "kappa4", "kappa5", "distance_bound", "objective_bound", "holds",
    )

    def csv_row(self) -> dict:
        row = {
            "eps": self.eps,
            "dist_x": self.dist_x,
            "dist_y": self.dist_y,
            "dist_total": self.dist_total,
            "obj_diff": self.obj_diff,
            "distance_bound": self.distance_bound,
            "objective_bound": self.objective_bound,
        }
        for k in ("kappa2", "kappa3", "kappa4", "kappa5"):
            row[k] = self.kappas[k]
        out = {k: format_rational(v) for k, v in row.items()}
        out["holds"] = self.holds
        return out

    def to_json(self) -> dict:
        out = self.csv_row()
        out["x_star"] = [format_rational(v) for v in self.x_star]
        out["y_star"] = [format_rational(v) for v in self.y_star]
        out["eps_effective"] = format_rational(self.eps_effective)
        out["kappas"] = self.kappas.to_json()
        return out


def verify_bilevel_feasible(inst: LinearBilevelInstance, x, y):
    if any(p < q for p, q in zip(mat_vec(inst.A, x), inst.a)):
        raise CertificateError("x violates A x >= a")
    if any(p < q for p, q in zip(mat_vec(inst.D, y), inst.lower_rhs(x))):
        raise CertificateError("y violates D y >= b - C x")
    if dot(inst.d, y) != _lower_value(inst, x):
        raise CertificateError("y is not follower-optimal at x")


def repair_near_feasible(
    inst: LinearBilevelInstance, triple: NearFeasibleTriple, kappas: InstanceKappas | None = None
) -> StabilityReport:
    """Repair a near-feasible triple and measure it against the computed bounds.

    Joint 1-norm recovery gives ``(x*, y')``; then ``(y', z_hat)`` is nearly
    primal-dual optimal for the follower at ``x*`` with the inflated
    tolerance ``eps (kappa8 + eps kappa9)``, and the follower recovery
    projects ``y'`` onto the optimal set.
    """
    kappas = kappas or compute_kappas(inst, triple.basis)
    if triple.basis is not None:
        k7_needed = _norm_inf(declared_basis_solution(inst, triple.basis))
        if k7_needed > kappas["kappa7"]:
            kappas = compute_kappas(inst, triple.basis)
    check_triple(inst, triple, kappas["kappa1"])
    eps = triple.eps

    joint = recover_joint(inst, triple.x_hat, triple.y_hat, eps, kappas["kappa6"])
    if not joint.within_bound:
        raise CertificateError("joint recovery distance exceeds eps * kappa6")
    x_star = joint.point[: inst.n_x]
    y_prime = joint.point[inst.n_x:]

    eps_eff = eps * (kappas["kappa8"] + eps * kappas["kappa9"])
    lower = recover_lower(inst, x_star, y_prime, triple.z_hat, eps_eff, kappas["kappa10"])
    if not lower.within_bound:
        raise CertificateError("follower recovery distance exceeds eps_eff * kappa10")
    y_star = lower.point
    verify_bilevel_feasible(inst, x_star, y_star)

    return StabilityReport(
        eps=eps,
        x_star=x_star,
        y_star=y_star,
        y_prime=y_prime,
        dist_x=_norm1(_sub(x_star, triple.x_hat)),
        dist_y=_norm1(_sub(y_star, triple.y_hat)),
        obj_diff=abs(inst.objective(x_star, y_star) - inst.objective(triple.x_hat, triple.y_hat)),
        eps_effective=eps_eff,
        kappas=kappas,
    )


# -- generators -----------------------------------------------------------------------


@dataclass(frozen=True)
class BilevelOptimum:
    x: tuple
    y: tuple
    z: tuple
    basis: tuple
    value: Fraction


def solve_bilevel_exact(inst: LinearBilevelInstance) -> BilevelOptimum:
    """Optimistic optimum by scanning vertices of the joint polyhedron.

    The bilevel-feasible set is a union of faces of the joint polyhedron,
    so an optimum sits at one of its vertices.  Ties break lexicographically.
    """
    if inst.n_x > MAX_VARS or inst.n_y > MAX_VARS or len(inst.A) > MAX_ROWS or len(inst.D) > MAX_ROWS:
        raise LimitExceeded("instance too large for exact bilevel enumeration")
    rows, rhs = inst.joint_rows()
    best = None
    values = {}
    for u in polytope_vertices(rows, rhs):
        x, y = u[: inst.n_x], u[inst.n_x:]
        if x not in values:
            values[x] = _lower_value(inst, x)
        if dot(inst.d, y) != values[x]:
            continue
        key = (inst.objective(x, y), u)
        if best is None or key < best:
            best = key
    if best is None:
        raise AssumptionViolation("bilevel feasible set non-empty", "no vertex is bilevel feasible")
    value, u = best
    x, y = u[: inst.n_x], u[inst.n_x:]
    dual = solve_lp(inst.lower_lp(x))
    if len(dual.basis) != inst.n_y:
        raise CertificateError("follower dual basis is incomplete")
    return BilevelOptimum(x, y, dual.dual, dual.basis, value)


def _random_direction(rng: random.Random, n: int) -> list:
    return [Fraction(rng.randint(-1000, 1000), 1000) for _ in range(n)]


def generate_perturbed_triple(
    inst: LinearBilevelInstance, eps, seed: int, optimum: BilevelOptimum | None = None, kappa1=None
) -> NearFeasibleTriple:
    """Exact optimum plus a random perturbation of size at most ``eps``, deterministic per seed.

    The perturbation direction depends only on the seed; its length is halved
    until every hypothesis holds exactly.
    """
    eps = parse_rational(eps)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    opt = optimum or solve_bilevel_exact(inst)
    if kappa1 is None:
        kappa1 = kappa_of(LinearProgram(inst.d, inst.D, [Fraction(0)] * len(inst.D))).kappa
    rng = random.Random(seed)
    rx = _random_direction(rng, inst.n_x)
    ry = _random_direction(rng, inst.n_y)
    rz = _random_direction(rng, len(inst.D))
    scale = Fraction(1)
    for _ in range(64):
        step = eps * scale
        t = NearFeasibleTriple(
            x_hat=[a + step * r for a, r in zip(opt.x, rx)],
            y_hat=[a + step * r for a, r in zip(opt.y, ry)],
            z_hat=[a + step * r for a, r in zip(opt.z, rz)],
            eps=eps,
            basis=opt.basis,
        )
        try:
            check_triple(inst, t, kappa1)
            return t
        except HypothesisViolation:
            scale /= 2
    raise CertificateError("could not produce a triple meeting the hypotheses")


def random_instance(seed: int, n_x: int | None = None, n_y: int | None = None) -> LinearBilevelInstance:
    """Small instance with box constraints on both levels and one or two coupling rows.

    Coupling right-hand sides are chosen so the centre of the follower box
    stays feasible for every leader decision.
    """
    rng = random.Random(seed)
    n_x = n_x or rng.randint(1, 2)
    n_y = n_y or rng.randint(1, 2)

    def box(n):
        lo = [rng.randint(-2, 1) for _ in range(n)]
        hi = [l + rng.randint(1, 3) for l in lo]
        rows = [[int(i == j) for j in range(n)] for i in range(n)] + [[-int(i == j) for j in range(n)] for i in range(n)]
        return rows, lo + [-h for h in hi], lo, hi

    A, a, xlo, xhi = box(n_x)
    Dbox, bbox, ylo, yhi = box(n_y)
    C = [[0] * n_x for _ in Dbox]
    D, b = list(Dbox), list(bbox)
    centre = [Fraction(l + h, 2) for l, h in zip(ylo, yhi)]
    corners = list(itertools.product(*[(l, h) for l, h in zip(xlo, xhi)]))
    for _ in range(rng.randint(1, 2)):
        c_row = [rng.randint(-2, 2) for _ in range(n_x)]
        d_row = [rng.randint(-2, 2) for _ in range(n_y)]
        if not any(d_row):
            d_row[0] = 1
        worst = min(dot(c_row, x) + dot(d_row, centre) for x in corners)
        C.append(c_row)
        D.append(d_row)
        b.append(worst - rng.randint(0, 1))
    d = [rng.choice([-2, -1, 1, 2]) for _ in range(n_y)]
    c_x = [rng.randint(-2, 2) for _ in range(n_x)]
    c_y = [rng.randint(-2, 2) for _ in range(n_y)]
    return LinearBilevelInstance(A, a, C, D, b, c_x, c_y, d, name=f"random-{seed}")


def stability_sweep(
    inst: LinearBilevelInstance, eps_values, seeds=(0,), kappas: InstanceKappas | None = None
) -> list[tuple[int, StabilityReport]]:
    """Reports for every (seed, eps); instance constants are computed once."""
    opt = solve_bilevel_exact(inst)
    kappas = kappas or compute_kappas(inst, opt.basis)
    out = []
    for seed in seeds:
        for eps in eps_values:
            t = generate_perturbed_triple(inst, eps, seed, opt, kappas["kappa1"])
            out.append((seed, repair_near_feasible(inst, t, kappas)))
    return out
