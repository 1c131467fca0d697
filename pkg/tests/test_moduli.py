import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calmness import examples
from calmness.certify import slater_check
from calmness.lp_core import NormSpec, Problem, load_problem
from calmness.moduli import (
    ModulusReport, PreconditionError, C1_directional_exact, C1_sampling, C2_upper_bound,
    C3_upper_bound, check_chain, clm_level_set, compute_report, directional_modulus,
    enumerate_K, enumerate_T, lambda_bar, li_gamma, lip_lower_bound, pattern_realizable,
)
from helpers import lambda_grid_search, random_slater_problems, random_strong_problem

S17, S5 = math.sqrt(17), math.sqrt(5)


def labels(sets):
    return sorted(tuple(sorted(D.labels)) for D in sets)


def test_enumerate_K_and_T_example1():
    prob = examples.example1()
    assert labels(enumerate_T(prob, np.zeros(2))) == [("1", "2"), ("1", "3")]
    assert labels(enumerate_K(prob, np.zeros(2))) == [("1", "2"), ("1", "3")]


def test_enumerate_T_example2():
    prob = examples.example2()
    assert labels(enumerate_T(prob, np.zeros(2))) == [("1", "2"), ("1", "3"), ("2", "4"), ("3", "4")]


def test_enumerate_T_discretized_circle_excludes_parallel_pair():
    prob = examples.example3(512)
    got = labels(enumerate_T(prob, prob.nominal_x))
    assert got == sorted([("4", "circle:-pi"), ("5", "circle:-pi"), ("4", "circle:pi"),
                          ("5", "circle:pi"), ("4", "5")])


def test_zero_cost_admits_empty_index_set():
    prob = Problem(["1", "2"], [[-1.0, 0.0], [0.0, -1.0]], [0.0, 0.0], [0.0, 0.0])
    assert () in [D.labels for D in enumerate_K(prob, np.zeros(2))]


def test_C3_values():
    v, arg, norms = C3_upper_bound(examples.example1(), np.zeros(2))
    assert v == pytest.approx(S17, abs=1e-12) and arg == [("1", "2")]
    v, _, norms = C3_upper_bound(examples.example2(), np.zeros(2))
    assert v == pytest.approx(S17, abs=1e-12)
    assert sorted(norms.values()) == pytest.approx(sorted([S17, S5, S17 / 3, 1.0]), abs=1e-9)
    prob = examples.example3(1024)
    assert C3_upper_bound(prob, prob.nominal_x)[0] == pytest.approx(S5, abs=1e-9)


def test_C3_refuses_without_strong_uniqueness(fixtures_dir):
    deg = load_problem(fixtures_dir / "degenerate_ray.json")
    with pytest.raises(PreconditionError):
        C3_upper_bound(deg, deg.nominal_x)


def test_exact_modulus_examples():
    r = C1_directional_exact(examples.example1(), np.zeros(2))
    assert r.value == pytest.approx(S17, abs=1e-9)
    assert r.D == ("1", "2")
    r = C1_directional_exact(examples.example2(), np.zeros(2))
    assert r.value == pytest.approx(S5, abs=1e-9)


def test_exact_modulus_refuses_non_unique(fixtures_dir):
    deg = load_problem(fixtures_dir / "degenerate_ray.json")
    with pytest.raises(PreconditionError):
        C1_directional_exact(deg, deg.nominal_x)


def test_pattern_realizability():
    G = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert pattern_realizable(G, [True, True])
    assert pattern_realizable(G, [True, False])
    # g and -g can never both attain a positive maximum
    assert not pattern_realizable(np.array([[1.0, 0.0], [-1.0, 0.0]]), [True, True])


def test_directional_modulus_single_gradient():
    v, pat = directional_modulus(np.array([[0.0, 2.0]]), NormSpec())
    assert v == pytest.approx(0.5) and pat == ("0",)


def test_exact_matches_sampling_on_random_problems():
    rng = np.random.default_rng(30)
    for _ in range(10):
        prob = random_strong_problem(rng)
        ex = C1_directional_exact(prob, np.zeros(2)).value
        assert C1_sampling(prob, np.zeros(2)) == pytest.approx(ex, rel=1e-6)


@pytest.mark.parametrize("kind", ["one", "infinity"])
def test_exact_matches_sampling_polyhedral_norms(kind):
    for prob in (examples.example1(kind), examples.example2(kind)):
        ex = C1_directional_exact(prob, np.zeros(2)).value
        assert C1_sampling(prob, np.zeros(2)) == pytest.approx(ex, rel=1e-6)
        assert ex <= C3_upper_bound(prob, np.zeros(2))[0] + 1e-9


def test_lambda_bar_examples():
    for prob in (examples.example1(), examples.example2()):
        gd = lambda_bar(prob, np.zeros(2))
        assert gd.lambda_bar == pytest.approx(1.0, abs=1e-12)
        assert gd.alpha == pytest.approx(1.0, abs=1e-12)


def test_lambda_bar_against_grid_search():
    for prob in [examples.example1(), examples.example2()] + random_slater_problems(5, 31):
        gd = lambda_bar(prob, np.zeros(2))
        assert gd.lambda_bar == pytest.approx(lambda_grid_search(prob, np.zeros(2)), abs=1e-2)
        assert gd.lambda_bar <= prob.norm.dual(prob.c) / gd.alpha + 1e-9


def test_lambda_bar_refuses_without_slater():
    prob = Problem(["1", "2"], [[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0], [1.0, 0.0])
    with pytest.raises(PreconditionError):
        lambda_bar(prob, np.zeros(2))


def test_C2_bounds_exact_modulus():
    for prob in [examples.example1(), examples.example2()] + random_slater_problems(5, 32):
        c2, gd, clmL = C2_upper_bound(prob, np.zeros(2))
        assert c2 >= C1_directional_exact(prob, np.zeros(2)).value - 1e-9
        assert c2 == pytest.approx(max(gd.lambda_bar, 1.0) * clmL)


def test_level_set_modulus_example1():
    # level set {Ax <= 0, <c,x> <= 0}: directional value equals the exact route
    v, _ = clm_level_set(examples.example1(), np.zeros(2))
    assert v == pytest.approx(6.0827625, abs=1e-6)


def test_lip_lower_bound():
    assert lip_lower_bound(examples.example2(), np.zeros(2)) == pytest.approx(S17, abs=1e-9)
    assert lip_lower_bound(examples.example1(), np.zeros(2)) == pytest.approx(S17, abs=1e-9)
    prob3 = examples.example3(256)
    with pytest.raises(PreconditionError, match="nurnberger=False"):
        lip_lower_bound(prob3, prob3.nominal_x)


def test_li_gamma_dominates_C3():
    for prob in (examples.example1(), examples.example2()):
        assert li_gamma(prob) >= C3_upper_bound(prob, np.zeros(2))[0] - 1e-12
    with pytest.raises(PreconditionError):
        li_gamma(examples.example3(4096))


def test_report_roundtrip_and_chain():
    rep = compute_report(examples.example2())
    assert rep.inequality_chain_ok
    assert rep.exact_clm == pytest.approx(S5) and rep.C3 == pytest.approx(S17)
    back = ModulusReport.from_dict(json.loads(rep.to_json()))
    assert back == rep


def test_chain_violation_detected():
    rep = compute_report(examples.example1(), skip=["C2"])
    assert rep.get("C2") is None
    for k in rep.constants:
        if k.name == "C3":
            k.value = 1.0
    assert not check_chain(rep).inequality_chain_ok


def test_table_rounds_to_six_digits():
    rep = compute_report(examples.example1(), sampling=False)
    assert "4.12311" in rep.to_table() and "4.1231056" not in rep.to_table()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_sandwich_of_constants_random(seed):
    prob = random_strong_problem(np.random.default_rng(seed))
    ex = C1_directional_exact(prob, np.zeros(2)).value
    c3 = C3_upper_bound(prob, np.zeros(2))[0]
    assert ex <= c3 + 1e-9
    assert li_gamma(prob) >= c3 - 1e-12
