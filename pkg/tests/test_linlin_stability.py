import itertools
import json
from fractions import Fraction
from importlib import resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from illbilevel.errors import AssumptionViolation, DimensionError, HypothesisViolation
from illbilevel.linalg import dot, mat_vec
from illbilevel.linlin_stability import (
    LinearBilevelInstance,
    NearFeasibleTriple,
    check_assumptions,
    compute_kappas,
    generate_perturbed_triple,
    polytope_vertices,
    projection_lp,
    random_instance,
    recover_joint,
    recover_lower,
    recover_upper,
    solve_bilevel_exact,
    stability_sweep,
    repair_near_feasible,
)


@pytest.fixture(scope="module")
def chain():
    text = resources.files("illbilevel").joinpath("data/linlin_1d.json").read_text()
    return LinearBilevelInstance.from_json(text)


def _bilevel_optimum_oracle(inst):
    """Best joint vertex whose follower part is optimal, all through sympy."""
    rows, rhs = inst.joint_rows()
    n = len(rows[0])
    best = None
    for S in itertools.combinations(range(len(rows)), n):
        import sympy

        B = sympy.Matrix([[sympy.Rational(a) for a in rows[i]] for i in S])
        if B.det() == 0:
            continue
        u = [oracles._frac(v) for v in B.LUsolve(sympy.Matrix([sympy.Rational(rhs[i]) for i in S]))]
        if any(p < q for p, q in zip(mat_vec(rows, u), rhs)):
            continue
        x, y = u[: inst.n_x], u[inst.n_x:]
        if dot(inst.d, y) != oracles.follower_value(inst.D, inst.b, inst.C, inst.d, x):
            continue
        val = inst.objective(x, y)
        best = val if best is None or val < best else best
    return best


def test_bundled_instance_optimum_and_kappas(chain):
    check_assumptions(chain)
    opt = solve_bilevel_exact(chain)
    assert opt.x == (1,) and opt.y == (0,) and opt.value == 1
    k = compute_kappas(chain, opt.basis)
    frozen = {"kappa2": 74, "kappa3": 0, "kappa4": 78, "kappa5": 0, "kappa6": 4, "kappa10": 14}
    assert {key: k[key] for key in frozen} == frozen


def test_projection_kappa_matches_dual_vertex_oracle(chain):
    k = compute_kappas(chain)
    rows, _ = chain.joint_rows()
    lp = projection_lp(rows, [0] * len(rows), [0, 0])
    ref = max(sum(abs(a) for a in z) for z in oracles.dual_vertices(lp.v, lp.M))
    assert k["kappa6"] == ref
    lp_up = projection_lp(chain.A, [0] * len(chain.A), [0])
    assert k["kappa_upper"] == max(sum(abs(a) for a in z) for z in oracles.dual_vertices(lp_up.v, lp_up.M))


@pytest.mark.parametrize("seed", range(6))
def test_random_instance_optimum_matches_oracle(seed):
    inst = random_instance(seed)
    check_assumptions(inst)
    assert solve_bilevel_exact(inst).value == _bilevel_optimum_oracle(inst)


def test_recover_upper(chain):
    rec = recover_upper(chain, [Fraction(9, 10)], Fraction(1, 10))
    assert rec.point == (1,) and rec.distance == Fraction(1, 10) and rec.within_bound
    with pytest.raises(HypothesisViolation, match="upper"):
        recover_upper(chain, [Fraction(1, 2)], Fraction(1, 10))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 9), st.lists(st.fractions(-1, 1, max_denominator=50), min_size=4, max_size=4))
def test_joint_recovery_is_nearest_among_vertices(seed, noise):
    inst = random_instance(seed)
    opt = solve_bilevel_exact(inst)
    point = [a + b for a, b in zip(opt.x + opt.y, noise)]
    rows, rhs = inst.joint_rows()
    eps = max([Fraction(0)] + [q - p for p, q in zip(mat_vec(rows, point), rhs)])
    rec = recover_joint(inst, point[: inst.n_x], point[inst.n_x:], eps)
    assert all(p >= q for p, q in zip(mat_vec(rows, rec.point), rhs))
    nearest_vertex = min(sum(abs(a - b) for a, b in zip(v, point)) for v in polytope_vertices(rows, rhs))
    assert rec.distance <= nearest_vertex
    assert rec.within_bound


def test_recover_lower_lands_on_optimal_face(chain):
    rec = recover_lower(chain, [1], [Fraction(1, 20)], [1, 0], Fraction(1, 10))
    assert rec.point == (0,) and rec.distance == Fraction(1, 20)


def test_zero_eps_triple_is_fixed_point(chain):
    t = generate_perturbed_triple(chain, 0, seed=5)
    rep = repair_near_feasible(chain, t)
    assert rep.dist_total == 0 and rep.obj_diff == 0 and rep.holds


@pytest.mark.parametrize(
    "triple, condition",
    [
        (dict(x_hat=[Fraction(1, 2)], y_hat=[0], z_hat=[1, 0]), "upper"),
        (dict(x_hat=[1], y_hat=[Fraction(-1, 2)], z_hat=[1, 0]), "primal near-feasibility"),
        (dict(x_hat=[1], y_hat=[0], z_hat=[Fraction(1, 2), 0]), "dual near-feasibility"),
        (dict(x_hat=[1], y_hat=[1], z_hat=[1, 0]), "duality gap"),
        (dict(x_hat=[1], y_hat=[0], z_hat=[1, 0], basis=None), "declared basis"),
        (dict(x_hat=[1], y_hat=[0], z_hat=[1, 0], basis=(1,)), "declared basis"),
    ],
)
def test_hypothesis_violations_are_named(chain, triple, condition):
    t = NearFeasibleTriple(eps=Fraction(1, 10), **{"basis": (0,), **triple})
    with pytest.raises(HypothesisViolation, match=condition):
        repair_near_feasible(chain, t)


def test_triple_dimension_checked(chain):
    with pytest.raises(DimensionError):
        repair_near_feasible(chain, NearFeasibleTriple([1, 2], [0], [1, 0], 0, (0,)))


@pytest.mark.parametrize(
    "A, a, C, D, b, name",
    [
        ([[1]], [0], [[0], [0]], [[1], [-1]], [0, -1], "joint set non-empty and bounded"),
        ([[1], [-1]], [1, -2], [[0], [0]], [[1], [-1]], [1, 0], "joint set non-empty and bounded"),
        # joint set bounded through the coupling y >= x, y <= 3, but x alone is not
        ([[1]], [0], [[-1], [0]], [[1], [-1]], [0, -3], "upper-level set bounded"),
    ],
)
def test_assumption_violations(A, a, C, D, b, name):
    inst = LinearBilevelInstance(A, a, C, D, b, [1], [1], [1])
    with pytest.raises(AssumptionViolation, match=name):
        check_assumptions(inst)


def test_lower_level_infeasible_for_some_x():
    # y >= x - 1 and y <= 0 fails for x = 2
    inst = LinearBilevelInstance([[1], [-1]], [0, -2], [[-1], [0]], [[1], [-1]], [-1, 0], [1], [1], [1])
    with pytest.raises(AssumptionViolation, match="lower level feasible"):
        check_assumptions(inst)


def test_json_roundtrips(chain):
    assert LinearBilevelInstance.from_json(json.dumps(chain.to_json())) == chain
    t = generate_perturbed_triple(chain, Fraction(1, 100), seed=1)
    assert NearFeasibleTriple(**{**t.to_json(), "basis": t.to_json()["basis"]}) == t
    with pytest.raises(ValueError):
        LinearBilevelInstance.from_json({"A": [[1]]})


def test_sweep_reports_linear_scaling(chain):
    eps_values = [Fraction(1, 10**k) for k in range(1, 6)]
    reports = [r for _, r in stability_sweep(chain, eps_values, seeds=(0, 1))]
    assert all(r.holds for r in reports)
    for seed_block in (reports[:5], reports[5:]):
        ratios = {r.dist_total / r.eps for r in seed_block}
        assert len(ratios) == 1
    row = reports[0].csv_row()
    assert set(row) == set(reports[0].CSV_FIELDS) and row["holds"] is True
