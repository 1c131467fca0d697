"""Acceptance gate: one PASS/FAIL line per criterion, at the stated tolerances.

Run with pytest (lines are repeated in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""
import io
import json
import math
import sys
import time
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np
import pytest

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

from calmness import examples  # noqa: E402
from calmness.certify import distinct_directions  # noqa: E402
from calmness.cli import main as cli_main  # noqa: E402
from calmness.empirical import estimate_clm, replay_sequence  # noqa: E402
from calmness.geometry import (  # noqa: E402
    inverse_norm, inverse_norm_by_dual, inverse_norm_by_signs, min_dual_norm_point,
)
from calmness.lp_core import NormSpec, active_set, is_singular, load_problem  # noqa: E402
from calmness.moduli import (  # noqa: E402
    C1_directional_exact, C1_sampling, C3_upper_bound, ModulusReport, compute_report,
    enumerate_T, lambda_bar,
)
from helpers import (  # noqa: E402
    lambda_grid_search, random_slater_problems, random_strong_problem, simplex_grid_min,
)

FIX = HERE.parent / "fixtures"
S17, S5 = math.sqrt(17), math.sqrt(5)
RESULTS = []


def record(n, ok, detail):
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def run_cli(*argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = cli_main([str(a) for a in argv])
    return code, buf.getvalue()


def test_criterion_1_example1_exact_modulus():
    t0 = time.perf_counter()
    code, out = run_cli("moduli", FIX / "example1.json")
    elapsed = time.perf_counter() - t0
    rep = ModulusReport.from_dict(json.loads(out))
    prob = load_problem(FIX / "example1.json")
    T = sorted(tuple(D.labels) for D in enumerate_T(prob, np.zeros(2)))
    norms = sorted(inverse_norm(prob.A[list(D.rows)], prob.norm) for D in enumerate_T(prob, np.zeros(2)))
    ok = (code == 0 and abs(rep.exact_clm - S17) <= 1e-6 and abs(rep.C3 - S17) <= 1e-9
          and T == [("1", "2"), ("1", "3")]
          and np.allclose(norms, [S5, S17], rtol=0, atol=1e-9) and elapsed < 1.0)
    record(1, ok, f"exact_clm={rep.exact_clm:.9f} C3={rep.C3:.9f} T={T} "
                  f"norms={[round(v, 10) for v in norms]} runtime={elapsed:.3f}s")


def test_criterion_2_example2_gap():
    code, out = run_cli("moduli", FIX / "example2.json")
    rep = ModulusReport.from_dict(json.loads(out))
    prob = load_problem(FIX / "example2.json")
    norms = sorted(inverse_norm(prob.A[list(D.rows)], prob.norm) for D in enumerate_T(prob, np.zeros(2)))
    want = sorted([S17, S5, S17 / 3, 1.0])
    ok = (abs(rep.exact_clm - S5) <= 1e-6 and abs(rep.C3 - S17) <= 1e-9
          and np.allclose(norms, want, rtol=0, atol=1e-9)
          and rep.lip_lower is not None and abs(rep.lip_lower - S17) <= 1e-9)
    record(2, ok, f"exact_clm={rep.exact_clm:.9f} C3={rep.C3:.9f} "
                  f"norms={[round(v, 10) for v in norms]} lip_lower={rep.lip_lower}")


def test_criterion_3_discretized_circle():
    t0 = time.perf_counter()
    prob = load_problem(FIX / "example3.json")
    x_bar = prob.nominal_x
    c3 = C3_upper_bound(prob, x_bar)[0]
    act = active_set(prob, x_bar)
    n_dirs = len(distinct_directions(prob.A, act.rows))
    pair = [prob.index("circle:-pi"), prob.index("circle:pi")]
    T = [set(D.labels) for D in enumerate_T(prob, x_bar)]
    pair_excluded = is_singular(prob.A[pair]) and {"circle:-pi", "circle:pi"} not in T
    est = estimate_clm(prob, x_bar, seed=42).estimate
    b, x = examples.example3_sequence(prob, 1000)
    ratio = replay_sequence(prob, [b], [x])[0]
    elapsed = time.perf_counter() - t0
    ok = (abs(c3 - S5) <= 1e-3 and n_dirs == 3 and pair_excluded
          and abs(est - S5) / S5 <= 0.05 and abs(ratio - S5) / S5 <= 0.03 and elapsed < 30)
    record(3, ok, f"C3={c3:.9f} directions={n_dirs} pair_excluded={pair_excluded} "
                  f"empirical={est:.6f} replay(n=1000)={ratio:.6f} runtime={elapsed:.1f}s")


def test_criterion_4_oracle_sandwich():
    rng = np.random.default_rng(2024)
    cases = [(examples.example1(), None), (examples.example2(), None)]
    while len(cases) < 22:
        prob = random_strong_problem(rng, n_active=(2, 4), n_inactive=(0, 2))
        cases.append((prob, "random"))
    worst_hi, worst_lo, worst_cross = 0.0, math.inf, 0.0
    ok = True
    for prob, kind in cases:
        x_bar = np.zeros(2)
        exact = C1_directional_exact(prob, x_bar).value
        if kind == "random":
            cross = abs(C1_sampling(prob, x_bar) - exact) / exact
            worst_cross = max(worst_cross, cross)
            ok &= cross <= 0.05
        res = estimate_clm(prob, x_bar)
        hi = max(s.ratio for s in res.samples if s.radius == 1e-4 and np.isfinite(s.ratio)) / exact
        lo = max(res.structured_max.values()) / exact
        worst_hi, worst_lo = max(worst_hi, hi), min(worst_lo, lo)
        ok &= hi <= 1.02 and lo >= 0.98 and prob.m <= 6
    record(4, ok, f"{len(cases)} problems: max sample/exact at 1e-4 = {worst_hi:.6f}, "
                  f"min structured/exact = {worst_lo:.6f}, "
                  f"max |C1_sampling-exact|/exact (random) = {worst_cross:.2e}")


def test_criterion_5_inequality_chain():
    details, ok = [], True
    for name in ("example1", "example2"):
        rep = compute_report(load_problem(FIX / f"{name}.json"))
        chain = (rep.C1_sampling <= rep.exact_clm + 1e-6
                 and rep.exact_clm <= min(rep.C2, rep.C3) + 1e-6
                 and rep.li_gamma >= rep.C3 - 1e-12 and rep.inequality_chain_ok)
        ok &= chain
        details.append(f"{name}: C1s={rep.C1_sampling:.6f} exact={rep.exact_clm:.6f} "
                       f"C2={rep.C2:.6f} C3={rep.C3:.6f} gamma={rep.li_gamma:.6f}")
    record(5, ok, "; ".join(details))


def test_criterion_6_inverse_norm_routes():
    rng = np.random.default_rng(6)
    worst, count = 0.0, 0
    for kind in ("euclidean", "one", "infinity"):
        norm = NormSpec(kind)
        n = 0
        while n < 100:
            p = int(rng.choice([2, 3, 4]))
            A = rng.normal(size=(p, p))
            if abs(np.linalg.det(A)) < 1e-2:
                continue
            a, b = inverse_norm_by_signs(A, norm), inverse_norm_by_dual(A, norm)
            worst = max(worst, abs(a - b) / max(1.0, a))
            n += 1
        count += n
    record(6, worst <= 1e-9, f"{count} matrices, worst relative gap {worst:.2e}")


def test_criterion_7_geometry_oracle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        k = int(rng.integers(1, 5))
        V = rng.normal(size=(k, 2)) + rng.normal(size=2)
        for kind, dual_ord in (("euclidean", 2), ("one", np.inf), ("infinity", 1)):
            d = min_dual_norm_point(V, NormSpec(kind)).distance
            worst = max(worst, abs(d - simplex_grid_min(V, dual_ord)))
    record(7, worst <= 2e-3, f"50 polytopes x 3 norms, worst gap {worst:.2e}")


def test_criterion_8_lambda_bar():
    probs = [examples.example1(), examples.example2()] + random_slater_problems(10, 8)
    worst, bound_ok = 0.0, True
    for prob in probs:
        gd = lambda_bar(prob, np.zeros(2))
        worst = max(worst, abs(gd.lambda_bar - lambda_grid_search(prob, np.zeros(2))))
        bound_ok &= gd.lambda_bar <= prob.norm.dual(prob.c) / gd.alpha + 1e-12
    record(8, worst <= 1e-2 and bound_ok,
           f"{len(probs)} problems, worst |LP - grid| = {worst:.2e}, bound holds: {bound_ok}")


def test_criterion_9_determinism(tmp_path):
    outs = []
    for workers in (1, 4, 1):
        path = tmp_path / f"run{len(outs)}.csv"
        code, _ = run_cli("empirical", FIX / "example2.json", "--seed", "42", "--workers",
                          str(workers), "--format", "csv", "--out", path)
        outs.append(path.read_bytes())
    ok = code == 0 and outs[0] == outs[1] == outs[2]
    record(9, ok, f"3 runs (workers 1, 4, 1), {len(outs[0])} bytes each, identical: {ok}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
