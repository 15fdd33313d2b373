"""Exit criteria of the build, one test group per criterion.

Each test carries ``@pytest.mark.acceptance("<k>. <label>")``; the terminal
summary prints one PASS/FAIL line per label.
"""

import csv
import io
import json
import random
import time
from fractions import Fraction

import mpmath
import pytest

from illbilevel import (
    EpsScenario,
    InstanceParams,
    LeaderPoint,
    LinearProgram,
    Mode,
    brute_force_lower,
    certify_kkt,
    compute_kappas,
    kappa_of,
    min_n_for_eps,
    nearly_optimal_bound_check,
    root_of_h,
    slater_check,
    solve_bilevel_eps,
    solve_bilevel_exact,
    solve_lp,
    repair_near_feasible,
)
from illbilevel.linalg import dot, mat_vec, rank_and_pivots, transpose
from illbilevel.linlin_stability import generate_perturbed_triple, random_instance
from illbilevel.linlin_stability import solve_bilevel_exact as solve_linear_bilevel

import oracles

BOX = ((1, 1), (2, 3))
C1 = "1. headline reproduction"
C2 = "2. threshold formula"
C3 = "3. gap independent of eps"
C4 = "4. root certification"
C5 = "5. brute-force follower agrees"
C6 = "6. KKT certification"
C7 = "7. Slater certification"
C8 = "8. LP core correctness"
C9 = "9. near-optimality bound"
C10 = "10. linear bilevel recovery"
C11 = "11. dichotomy run"


def _frac(x: mpmath.mpf) -> Fraction:
    return Fraction(*mpmath.libmp.to_rational(x._mpf_))


# -- 1 -------------------------------------------------------------------------------


@pytest.mark.acceptance(C1)
def test_headline_numbers_exact_and_fast():
    start = time.perf_counter()
    p = InstanceParams(6, *BOX)
    exact = solve_bilevel_exact(p)
    opt = solve_bilevel_eps(EpsScenario(p, Fraction(1, 10**8), Mode.OPTIMISTIC), exact)
    pes = solve_bilevel_eps(EpsScenario(p, Fraction(1, 10**8), Mode.PESSIMISTIC), exact)
    elapsed = time.perf_counter() - start

    assert exact.F_star == 2 and exact.x_star.as_tuple() == (1, 3)
    assert opt.F_eps == 5 and opt.x_eps.as_tuple() == (2, 3)
    assert pes.F_eps == -2 and pes.x_eps.as_tuple() == (1, 1)
    assert (opt.objective_gap, pes.objective_gap) == (3, 4)
    assert all(isinstance(v, Fraction) for v in (exact.F_star, opt.F_eps, pes.F_eps))
    assert elapsed < 1.0, f"took {elapsed:.3f}s"


@pytest.mark.acceptance(C1)
def test_headline_numbers_from_cli(run_cli):
    code, out, _ = run_cli("gap-report", "--n", "6", "--eps", "1e-8", "--mode", "both", "--format", "csv")
    assert code == 0
    rows = {r["mode"]: r for r in csv.DictReader(io.StringIO(out))}
    assert rows["optimistic"]["F_eps"] == "5" and rows["optimistic"]["gap"] == "3"
    assert rows["pessimistic"]["F_eps"] == "-2" and rows["pessimistic"]["gap"] == "4"
    assert rows["optimistic"]["F_exact"] == "2"


# -- 2 -------------------------------------------------------------------------------


def _min_n_direct(eps: Fraction) -> int:
    n = 2
    while Fraction(1, 2 ** (2 ** (n - 1))) > eps:
        n += 1
    return n


@pytest.mark.acceptance(C2)
def test_min_n_matches_direct_comparison_on_log_grid():
    exponents = [300 * (k + 0.5) / 200 for k in range(200)]
    grid = [Fraction(10.0 ** -t) for t in exponents]
    assert all(0 < e < 1 for e in grid) and len(set(grid)) == 200
    mismatches = [(e, min_n_for_eps(e), _min_n_direct(e)) for e in grid if min_n_for_eps(e) != _min_n_direct(e)]
    assert not mismatches
    assert min_n_for_eps(Fraction(1, 10**8)) == 6


# -- 3 -------------------------------------------------------------------------------


@pytest.mark.acceptance(C3)
def test_gap_column_constant_over_sweep(run_cli):
    code, out, _ = run_cli("gap-report", "--auto-n", "--sweep", "--mode", "both", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    eps_seen = {Fraction(r["eps"]) for r in rows}
    assert eps_seen == {Fraction(1, 10**k) for k in range(2, 11)}
    for mode in ("optimistic", "pessimistic"):
        gaps = {r["gap"] for r in rows if r["mode"] == mode}
        assert len(gaps) == 1, (mode, gaps)
    assert {r["gap"] for r in rows if r["mode"] == "optimistic"} == {"3"}
    assert {r["gap"] for r in rows if r["mode"] == "pessimistic"} == {"4"}


# -- 4 -------------------------------------------------------------------------------


def _h_exact(n, z: Fraction) -> Fraction:
    return z + z ** (2 ** (n - 1)) - Fraction(1, 2)


@pytest.fixture(scope="module")
def root_enclosures():
    start = time.perf_counter()
    encl = {n: root_of_h(n) for n in range(2, 13)}
    return encl, time.perf_counter() - start


@pytest.mark.acceptance(C4)
def test_root_enclosures_bracket_and_are_narrow(root_enclosures):
    encl, elapsed = root_enclosures
    for n, e in encl.items():
        lo, hi = e.lo.to_fraction(), e.hi.to_fraction()
        assert _h_exact(n, lo) <= 0 <= _h_exact(n, hi), n
        assert hi - lo <= Fraction(1, 2 ** (2 ** (n - 1) + 32)), n
    assert elapsed < 5.0, f"took {elapsed:.2f}s"


@pytest.mark.acceptance(C4)
def test_root_n2_closed_form(root_enclosures):
    e = root_enclosures[0][2]
    lo, hi = e.lo.to_fraction(), e.hi.to_fraction()
    assert oracles.sqrt3_root_contains(lo, hi)
    with mpmath.workdps(60):
        closed = (mpmath.sqrt(3) - 1) / 2
        assert abs(mpmath.mpf(e.mid.numerator) / e.mid.denominator - closed) <= mpmath.mpf(e.width.numerator) / e.width.denominator


@pytest.mark.acceptance(C4)
def test_root_n3_matches_bisection_oracle(root_enclosures):
    # the default width for n = 3 is 2^-36, so ask for a tighter enclosure here
    e = root_of_h(3, Fraction(1, 2**80))
    assert e.lo.to_fraction() >= root_enclosures[0][3].lo.to_fraction() - root_enclosures[0][3].width
    reference = _frac(oracles.h_root_bisection(3))
    assert abs(e.mid - reference) <= Fraction(1, 10**20)
    # frozen from the oracle
    assert abs(e.mid - Fraction("0.45655263701485254850838933038")) <= Fraction(1, 10**20)


# -- 5 -------------------------------------------------------------------------------


@pytest.mark.acceptance(C5)
@pytest.mark.parametrize("n", [2, 3])
def test_brute_force_matches_analytic_root(n):
    p = InstanceParams(n, *BOX)
    y = brute_force_lower(p, LeaderPoint(Fraction(1), Fraction(3)), grid=1000)
    analytic = _frac(oracles.h_root_bisection(n)) if n == 3 else None
    if n == 2:
        with mpmath.workdps(40):
            analytic = _frac((mpmath.sqrt(3) - 1) / 2)
    assert abs(y.y[0] - analytic) <= Fraction(2, 1000)


# -- 6 -------------------------------------------------------------------------------


def _strict_pattern(n):
    """Active chain with positive alpha, all sign bounds slack, tail at gamma and delta+."""
    rows = [(f"quad_{i}", "0", "+") for i in range(1, n)]
    rows += [(f"nonneg_{i}", "+", "0") for i in range(1, n + 2)]
    rows += [(f"upper_{n + 1}", "0", "+"), (f"lower_{n + 2}", "+", "0"), (f"upper_{n + 2}", "0", "+")]
    return rows


@pytest.mark.acceptance(C6)
@pytest.mark.parametrize("n", range(2, 11))
def test_kkt_certificate(n):
    p = InstanceParams(n, *BOX)
    cert = certify_kkt(p, LeaderPoint(p.x_lo[0], p.x_hi[1]))
    r = cert.stationarity_residual_inf
    assert r.lo.to_fraction() <= 0 <= r.hi.to_fraction()
    assert r.width <= Fraction(1, 2**32)
    assert all(a.certainly_positive() for a in cert.multipliers.alpha)
    assert cert.complementarity_pattern == _strict_pattern(n)
    assert cert.strict and cert.complementarity_ok


@pytest.mark.acceptance(C6)
def test_kkt_n2_closed_form_multiplier():
    p = InstanceParams(2, *BOX)
    cert = certify_kkt(p, LeaderPoint(Fraction(1), Fraction(3)))
    a = cert.multipliers.alpha[0]
    assert oracles.inv_sqrt3_contains(a.lo.to_fraction(), a.hi.to_fraction())


# -- 7 -------------------------------------------------------------------------------


@pytest.mark.acceptance(C7)
@pytest.mark.parametrize("n", range(2, 11))
def test_slater_point_strict(n):
    p = InstanceParams(n, *BOX)
    rep = slater_check(p)
    assert rep.strict
    assert all(isinstance(q, Fraction) and q < 0 for q in rep.quad_residuals)
    # independent recomputation at the lower corner of the box
    y = rep.point.y
    assert y[0] + y[n - 1] == Fraction(1, 2)
    assert all(y[i] ** 2 - y[i + 1] < 0 for i in range(n - 1))
    assert all(v > 0 for v in y[:n + 1])
    assert y[n] < p.x_lo[0] and -p.x_lo[1] < y[n + 1] < p.x_lo[1]


@pytest.mark.acceptance(C7)
def test_slater_cli(run_cli):
    code, out, _ = run_cli("slater-check", "--n", "2", "--n-max", "10")
    assert code == 0
    doc = json.loads(out)
    assert doc["all_strict"] and len(doc["rows"]) == 9


# -- 8 -------------------------------------------------------------------------------


def _random_lps(count, seed):
    rng = random.Random(seed)
    for _ in range(count):
        m, n = rng.randint(1, 6), rng.randint(1, 6)
        M = [[rng.randint(-3, 3) for _ in range(n)] for _ in range(m)]
        f = [rng.randint(-3, 3) for _ in range(m)]
        v = [rng.randint(-3, 3) for _ in range(n)]
        yield v, M, f


@pytest.mark.acceptance(C8)
def test_simplex_matches_vertex_enumeration():
    lps = list(_random_lps(500, seed=2024))
    start = time.perf_counter()
    solutions = [solve_lp(LinearProgram(v, M, f)) for v, M, f in lps]
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"took {elapsed:.2f}s"

    statuses = {}
    for (v, M, f), sol in zip(lps, solutions):
        statuses[sol.status] = statuses.get(sol.status, 0) + 1
        assert sol.status == oracles.lp_status_highs(v, M, f), (v, M, f)
        if sol.status == "optimal":
            assert sol.value == oracles.lp_vertex_optimum(v, M, f), (v, M, f)
            # strong duality, exactly
            z = sol.dual
            assert all(a >= b for a, b in zip(mat_vec(M, sol.x), f))
            assert all(a >= 0 for a in z) and mat_vec(transpose(M), z) == [Fraction(a) for a in v]
            assert dot(v, sol.x) == dot(f, z) == sol.value
        elif sol.status == "infeasible":
            y = sol.farkas
            assert all(a >= 0 for a in y) and all(a == 0 for a in mat_vec(transpose(M), y)) and dot(f, y) > 0
        else:
            assert all(a >= 0 for a in mat_vec(M, sol.ray)) and dot(v, sol.ray) < 0
    assert all(statuses.get(s, 0) >= 20 for s in ("optimal", "infeasible", "unbounded")), statuses


# -- 9 -------------------------------------------------------------------------------


def _optimal_full_rank_lps(count, seed):
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        m, n = rng.randint(2, 6), rng.randint(1, 4)
        M = [[rng.randint(-3, 3) for _ in range(n)] for _ in range(m)]
        if rank_and_pivots(M)[0] < n:
            continue
        lp = LinearProgram([rng.randint(-3, 3) for _ in range(n)], M, [rng.randint(-3, 3) for _ in range(m)])
        sol = solve_lp(lp)
        if sol.status == "optimal":
            out.append((lp, sol, rng.random()))
    return out


@pytest.mark.acceptance(C9)
def test_near_optimality_bound_on_perturbed_vertices():
    rng = random.Random(7)
    cases = _optimal_full_rank_lps(100, seed=11)
    for k, (lp, sol, _) in enumerate(cases):
        eps = Fraction(1, 10 ** (1 + k % 6))
        # the solver returns a basic solution: n linearly independent active rows
        active = [row for row, val, rhs in zip(lp.M, mat_vec(lp.M, sol.x), lp.f) if val == rhs]
        assert rank_and_pivots(active)[0] == len(sol.x)
        scale = max(sum(abs(a) for a in row) for row in lp.M) or 1
        d = [Fraction(rng.randint(-1000, 1000), 1000) for _ in sol.x]
        x_hat = [a + eps * b / scale for a, b in zip(sol.x, d)]
        kappa = kappa_of(lp, method="bases")
        assert not kappa.truncated
        holds, slack = nearly_optimal_bound_check(lp, x_hat, eps, kappa)
        assert holds, (lp, x_hat, slack)


@pytest.mark.acceptance(C9)
@pytest.mark.parametrize(
    "v, M, f, x_of",
    [
        ([1], [[1]], [1], lambda e: [1 - e]),
        ([1, 1], [[1, 0], [0, 1]], [1, 1], lambda e: [1 - e, 1 - e]),
    ],
)
def test_near_optimality_bound_is_tight(v, M, f, x_of):
    lp = LinearProgram(v, M, f)
    for k in range(1, 7):
        eps = Fraction(1, 10**k)
        holds, slack = nearly_optimal_bound_check(lp, x_of(eps), eps)
        assert holds and slack == 0


# -- 10 ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def linear_instances():
    out = []
    for s in range(10):
        inst = random_instance(s)
        out.append((inst, solve_linear_bilevel(inst), compute_kappas(inst)))
    return out


def _assert_bilevel_feasible(inst, x, y):
    assert all(a >= b for a, b in zip(mat_vec(inst.A, x), inst.a))
    rhs = [bi - ci for bi, ci in zip(inst.b, mat_vec(inst.C, x))]
    assert all(a >= b for a, b in zip(mat_vec(inst.D, y), rhs))
    assert dot(inst.d, y) == oracles.follower_value(inst.D, inst.b, inst.C, inst.d, x)


@pytest.mark.acceptance(C10)
def test_fifty_triples_recovered_within_bounds(linear_instances):
    checked = 0
    for inst, opt, kappas in linear_instances:
        for seed in range(5):
            eps = Fraction(1, 10 ** (1 + seed))
            triple = generate_perturbed_triple(inst, eps, seed, optimum=opt, kappa1=kappas["kappa1"])
            rep = repair_near_feasible(inst, triple, kappas)
            _assert_bilevel_feasible(inst, rep.x_star, rep.y_star)
            assert rep.dist_total <= eps * kappas["kappa2"] + eps**2 * kappas["kappa3"]
            assert rep.obj_diff <= eps * kappas["kappa4"] + eps**2 * kappas["kappa5"]
            checked += 1
    assert checked == 50


@pytest.mark.acceptance(C10)
def test_distance_over_eps_bounded_across_decades(linear_instances):
    for inst, opt, kappas in linear_instances:
        ratios = []
        for k in range(1, 6):
            eps = Fraction(1, 10**k)
            triple = generate_perturbed_triple(inst, eps, 3, optimum=opt, kappa1=kappas["kappa1"])
            rep = repair_near_feasible(inst, triple, kappas)
            ratios.append(rep.dist_total / eps)
        ceiling = kappas["kappa2"] + kappas["kappa3"] / 10
        assert max(ratios) <= ceiling, (inst.name, ratios, ceiling)


# -- 11 ------------------------------------------------------------------------------


@pytest.mark.acceptance(C11)
def test_dichotomy_single_run(run_cli, tmp_path):
    out_path = tmp_path / "dichotomy.json"
    argv = ["dichotomy", "--seeds", "2", "--output", str(out_path)]
    try:
        import matplotlib  # noqa: F401

        argv += ["--figure", str(tmp_path / "dichotomy.png")]
    except ImportError:
        pass
    code, _, _ = run_cli(*argv)
    assert code == 0
    doc = json.loads(out_path.read_text())
    assert doc["summary"]["nonconvex_gap_constant"] and doc["summary"]["linear_within_bounds"]
    assert doc["summary"]["nonconvex_gaps"] == {"optimistic": ["3"], "pessimistic": ["4"]}

    rows = doc["rows"]
    nonconvex = [r for r in rows if r["family"] == "nonconvex"]
    linear = [r for r in rows if r["family"] == "linear"]
    assert {Fraction(r["eps"]) for r in nonconvex} == {Fraction(1, 10**k) for k in range(2, 11)}
    # nonconvex error does not shrink with eps; linear error shrinks linearly
    for series in {r["series"] for r in linear}:
        sel = sorted((r for r in linear if r["series"] == series), key=lambda r: Fraction(r["eps"]))
        ratios = [Fraction(r["error_over_eps"]) for r in sel]
        assert all(Fraction(r["error"]) <= Fraction(r["bound"]) for r in sel)
        assert Fraction(sel[0]["error"]) <= Fraction(sel[-1]["error"]) / 10**4
        assert max(ratios) <= Fraction(sel[-1]["bound"]) / Fraction(sel[-1]["eps"])
    if "--figure" in argv:
        assert (tmp_path / "dichotomy.png").stat().st_size > 0
