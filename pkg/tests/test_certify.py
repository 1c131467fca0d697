import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import nnls

from calmness import examples
from calmness.certify import (
    certify, cone_membership, distinct_directions, is_unique_solution, kkt_certificate,
    nurnberger_check, slater_check, strong_uniqueness_check,
)
from calmness.lp_core import Problem, ProblemError, active_set, load_problem, solve_lp
from helpers import random_strong_problem


def test_slater_on_reference_problems():
    for prob in (examples.example1(), examples.example2(), examples.example3(256)):
        ok, w = slater_check(prob, prob.nominal_x)
        assert ok
        assert np.all(prob.A @ w < prob.b)


def test_slater_fails_for_equality_pair():
    prob = Problem(["1", "2"], [[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0], [0.0, 1.0])
    assert not slater_check(prob)[0]


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 4))
def test_cone_membership_matches_nnls(seed, k):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(k, 3))
    v = rng.normal(size=3) if rng.uniform() < 0.5 else rng.uniform(0, 1, size=k) @ G
    ok, lam = cone_membership(v, G)
    _, resid = nnls(G.T, v)
    assert ok == (resid <= 1e-8 * max(1.0, np.linalg.norm(v)))
    if ok:
        assert np.all(lam >= -1e-12)
        assert np.allclose(lam @ G, v, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.1, 10.0))
def test_cone_membership_invariant_under_rescaling(seed, s):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(3, 2))
    v = rng.uniform(0.1, 1.0, size=3) @ G
    ok1, lam1 = cone_membership(v, G)
    ok2, lam2 = cone_membership(v, s * G)
    assert ok1 and ok2
    assert np.allclose((lam2 * s) @ G, v, atol=1e-8)


def test_cone_of_empty_set_is_origin():
    assert cone_membership(np.zeros(2), np.zeros((0, 2)))[0]
    assert not cone_membership(np.ones(2), np.zeros((0, 2)))[0]


def test_kkt_certificate_example1():
    prob = examples.example1()
    kkt = kkt_certificate(prob, np.zeros(2))
    assert kkt.residual <= 1e-12
    lam = dict(zip(kkt.support, kkt.multipliers))
    # -c = lam1 a1 + lam2 a2 with a1 = (-1, 0), a2 = (-1, -1/2)
    assert lam["1"] == pytest.approx(1 / 3) and lam["2"] == pytest.approx(2 / 3)


def test_kkt_fails_at_non_optimal_point():
    prob = examples.example1()
    assert kkt_certificate(prob, np.array([1.0, 0.0])) is None


def test_strong_uniqueness(fixtures_dir):
    assert strong_uniqueness_check(examples.example1(), np.zeros(2))[0]
    assert strong_uniqueness_check(examples.example2(), np.zeros(2))[0]
    prob3 = examples.example3(256)
    assert strong_uniqueness_check(prob3, prob3.nominal_x)[0]
    deg = load_problem(fixtures_dir / "degenerate_ray.json")
    ok, margin = strong_uniqueness_check(deg, deg.nominal_x)
    assert not ok and margin == pytest.approx(0.0, abs=1e-12)


def test_degenerate_ray_is_not_isolated(fixtures_dir):
    """Perturbation oracle: the optimal set is a ray, and an arbitrarily small tilt of c
    along it sends the solution set away from x_bar."""
    deg = load_problem(fixtures_dir / "degenerate_ray.json")
    assert not is_unique_solution(deg, deg.nominal_x)
    for eps in (1e-3, 1e-5, 1e-7):
        assert solve_lp(deg, c=deg.c + np.array([0.0, eps])).status == "unbounded"


def test_strong_uniqueness_keeps_perturbed_solutions_close():
    rng = np.random.default_rng(20)
    for _ in range(10):
        prob = random_strong_problem(rng)
        for _ in range(50):
            db = rng.uniform(-1e-6, 1e-6, size=prob.m)
            dc = rng.uniform(-1e-6, 1e-6, size=prob.p)
            res = solve_lp(prob, c=prob.c + dc, b=prob.b + db)
            assert res.ok and np.linalg.norm(res.x) <= 1e-3


def test_nurnberger():
    assert nurnberger_check(examples.example1(), np.zeros(2))[0]
    assert nurnberger_check(examples.example2(), np.zeros(2))[0]
    prob = Problem(["1", "2"], [[-1.0, 0.0], [0.0, -1.0]], [0.0, 0.0], [1.0, 0.0])
    ok, D = nurnberger_check(prob, np.zeros(2))
    assert not ok and D == ("1",)


def test_nurnberger_fails_on_discretized_circle():
    # -c equals a_{-pi} = a_{pi}, a single active direction
    prob = examples.example3(256)
    ok, D = nurnberger_check(prob, prob.nominal_x)
    assert not ok and D in (("circle:-pi",), ("circle:pi",))


def test_distinct_directions_merge_parallel_rows():
    prob = examples.example3(1024)
    act = active_set(prob, prob.nominal_x)
    groups = distinct_directions(prob.A, act.rows)
    assert len(groups) == 3
    assert sorted(len(g) for g in groups) == [1, 1, 2]


def test_nurnberger_and_slater_imply_nonsingular_bases():
    from calmness.moduli import enumerate_K
    for prob in (examples.example1(), examples.example2()):
        Ks = enumerate_K(prob, np.zeros(2))
        assert all(D.nonsingular for D in Ks if D.size == prob.p)


def test_certify_report_fields():
    rep = certify(examples.example1(), np.zeros(2))
    assert rep.slater and rep.strong_unique and rep.nurnberger and rep.aubin
    assert rep.margin == pytest.approx(1 / 3)
    d = rep.to_dict()
    assert d["aubin"] is True and d["active"] == ["1", "2", "3"]


def test_certify_rejects_infeasible_point():
    with pytest.raises(ProblemError):
        certify(examples.example1(), np.array([-1.0, 0.0]))
