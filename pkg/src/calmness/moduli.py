"""Calmness-modulus constants for the argmin map of a (finite or discretized) LP.

C1  sup over KKT index sets D of limsup 1/d_*(0, subdiff f_D(x)); a lower bound in
    general and the exact modulus for finite T with a unique solution.
C2  max{lambda_bar, 1} * clm of the level-set map; an upper bound under Slater.
C3  max ||A_D^{-1}|| over nonsingular KKT bases; an upper bound for finite T.

For finite T every term inactive at x_bar stays strictly negative nearby, so
f_D(x_bar + eps*u) = eps * g_D(u) with g_D positively homogeneous.  The limsup
then becomes a maximum over the attainment patterns of g_D that can occur
with a positive value, each scored by 1/d_*(0, conv pattern).
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .certify import (
    MAX_DIRECTIONS, MAX_SUBSETS, ActiveSetTooLarge, cone_membership, is_unique_solution,
    nurnberger_check, slater_check, strong_uniqueness_check,
)
from .geometry import SupFunction, inverse_norm, min_dual_norm_point, subdifferential
from .lp_core import (
    TOL_ACTIVE, Problem, ProblemError, active_set, is_singular, linprog,
)

log = logging.getLogger(__name__)

MAX_PATTERNS = 2 ** 16
DEFAULT_RADII = (1e-2, 1e-3, 1e-4)


class PreconditionError(ProblemError):
    """A constant's hypotheses fail at the nominal data."""


@dataclass(frozen=True)
class KKTIndexSet:
    labels: tuple
    rows: tuple
    multipliers: tuple
    nonsingular: bool = False
    minimal: bool = False

    @property
    def size(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class GauvinData:
    alpha: float
    lambda_bar: float
    witness_w: tuple


def _active_rows(problem, x_bar, tol_active):
    act = active_set(problem, x_bar, tol_active)
    if len(act.rows) > MAX_DIRECTIONS:
        raise ActiveSetTooLarge(f"{len(act.rows)} active rows exceed {MAX_DIRECTIONS}")
    return list(act.rows)


def enumerate_K(problem: Problem, x_bar, tol_active: float = TOL_ACTIVE) -> list:
    """Active subsets D, |D| <= p, with -c in cone{a_t : t in D}."""
    rows = _active_rows(problem, x_bar, tol_active)
    found = []
    for size in range(0, min(problem.p, len(rows)) + 1):
        for D in itertools.combinations(rows, size):
            ok, lam = cone_membership(-problem.c, problem.A[list(D)])
            if not ok:
                continue
            nonsing = size == problem.p and not is_singular(problem.A[list(D)])
            found.append((D, tuple(float(v) for v in lam), nonsing))
    out = []
    sets = [set(D) for D, _, _ in found]
    for (D, lam, nonsing), s in zip(found, sets):
        minimal = not any(t < s for t in sets)
        out.append(KKTIndexSet(tuple(problem.labels[i] for i in D), D, lam, nonsing, minimal))
    return out


def enumerate_T(problem: Problem, x_bar, tol_active: float = TOL_ACTIVE) -> list:
    """Members of K with |D| = p and A_D nonsingular."""
    return [D for D in enumerate_K(problem, x_bar, tol_active) if D.nonsingular]


def C3_upper_bound(problem: Problem, x_bar, tol_active: float = TOL_ACTIVE,
                   require_strong: bool = True):
    """max ||A_D^{-1}|| over enumerate_T; returns (value, argmax label sets, all norms).

    The bound needs -c interior to the active cone; ``require_strong`` checks it.
    """
    if require_strong and not strong_uniqueness_check(problem, x_bar, tol_active)[0]:
        raise PreconditionError("-c is not interior to the active cone (strong uniqueness fails)")
    bases = enumerate_T(problem, x_bar, tol_active)
    if not bases:
        raise PreconditionError("no nonsingular KKT basis at x_bar (is -c interior to the active cone?)")
    norms = {D.labels: inverse_norm(problem.A[list(D.rows)], problem.norm) for D in bases}
    best = max(norms.values())
    argmax = sorted(l for l, v in norms.items() if v >= best - 1e-12)
    return best, argmax, norms


# --------------------------------------------------------------------------
# directional engine
# --------------------------------------------------------------------------

def pattern_realizable(G, in_pattern, tol: float = 1e-9) -> bool:
    """Is there u with <g,u> = v > 0 on the pattern and < v strictly off it?

    Homogeneous, so solved as max s with v >= s, off-pattern terms <= v - s,
    ||u||_inf <= 1 and s <= 1.
    """
    k, p = G.shape
    on = np.asarray(in_pattern, bool)
    # vars: u (p), v, s
    c = np.zeros(p + 2)
    c[-1] = -1.0
    rows, rhs = [], []
    for i in np.flatnonzero(~on):
        rows.append(np.concatenate((G[i], [-1.0, 1.0])))
        rhs.append(0.0)
    rows.append(np.concatenate((np.zeros(p), [-1.0, 1.0])))
    rhs.append(0.0)
    for j in range(p):
        e = np.zeros(p + 2)
        e[j] = 1.0
        rows.append(e.copy())
        rhs.append(1.0)
        e[j] = -1.0
        rows.append(e)
        rhs.append(1.0)
    cap = np.zeros(p + 2)
    cap[-1] = 1.0
    rows.append(cap)
    rhs.append(1.0)
    A_eq = np.array([np.concatenate((G[i], [-1.0, 0.0])) for i in np.flatnonzero(on)])
    res = linprog(c, np.array(rows), np.array(rhs), A_eq, np.zeros(len(A_eq)))
    return bool(res.ok and -res.fun > tol)


def directional_modulus(G, norm, labels: Sequence = ()):
    """max over realizable attainment patterns E of u -> max_i <g_i,u> of 1/d_*(0, conv E).

    Returns (value, pattern labels).  Identical gradients are merged first.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    labels = list(labels) or [str(i) for i in range(G.shape[0])]
    uniq, groups = [], []
    for g, l in zip(G, labels):
        for j, h in enumerate(uniq):
            if np.max(np.abs(g - h)) <= 1e-12:
                groups[j].append(l)
                break
        else:
            uniq.append(g)
            groups.append([l])
    U = np.array(uniq)
    k = U.shape[0]
    if 2 ** k > MAX_PATTERNS:
        raise ActiveSetTooLarge(f"{k} distinct gradients give too many attainment patterns")
    scored = []
    for mask in range(1, 2 ** k):
        on = np.array([(mask >> i) & 1 for i in range(k)], bool)
        d = min_dual_norm_point(U[on], norm).distance
        scored.append((math.inf if d <= 1e-14 else 1.0 / d, mask, on))
    scored.sort(key=lambda t: (-t[0], t[1]))
    for score, _, on in scored:
        if pattern_realizable(U, on):
            pat = tuple(l for j in np.flatnonzero(on) for l in groups[j])
            return score, pat
    return 0.0, ()


def _fD_gradients(problem, rows, D):
    G = np.vstack((problem.A[rows], -problem.A[list(D)])) if D else problem.A[rows]
    labels = [problem.labels[i] for i in rows] + [f"-{problem.labels[i]}" for i in D]
    return G, labels


@dataclass
class ExactResult:
    value: float
    D: tuple
    pattern: tuple
    per_D: dict


def C1_directional_exact(problem: Problem, x_bar, tol_active: float = TOL_ACTIVE,
                         check_unique: bool = True) -> ExactResult:
    """Exact calmness modulus for finite T and unique solution (max over D and patterns)."""
    if check_unique and not is_unique_solution(problem, x_bar):
        raise PreconditionError("nominal solution is not unique; exact formula does not apply")
    rows = _active_rows(problem, x_bar, tol_active)
    best = ExactResult(0.0, (), (), {})
    for D in enumerate_K(problem, x_bar, tol_active):
        G, labels = _fD_gradients(problem, rows, D.rows)
        val, pat = directional_modulus(G, problem.norm, labels)
        best.per_D[D.labels] = val
        if val > best.value:
            best.value, best.D, best.pattern = val, D.labels, pat
    return best


def _sample_directions(p, n, rng):
    if p == 1:
        return np.array([[1.0], [-1.0]]), 1.0
    if p == 2:
        th = 2 * np.pi * np.arange(n) / n
        return np.column_stack((np.cos(th), np.sin(th))), 2 * np.pi / n
    U = rng.normal(size=(n, p))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    U = np.vstack((U, np.eye(p), -np.eye(p)))
    spacing = (4 * np.pi / n) ** (1.0 / (p - 1))
    return U, spacing


def _kink_points(f: SupFunction, x_bar, eps, U):
    """Points on the circle x_bar + eps*u where the maximizing term changes (p = 2).

    Between consecutive directions with different maximizers the crossing of
    the two terms is located by root finding, so the attainment test at the
    crossing can use a tight tolerance.
    """
    def x_at(th):
        return x_bar + eps * np.array([math.cos(th), math.sin(th)])

    th = np.arctan2(U[:, 1], U[:, 0])
    top = [int(np.argmax(f.terms(x_bar + eps * u))) for u in U]
    out = []
    n = len(U)
    for k in range(n):
        i, j = top[k], top[(k + 1) % n]
        if i == j:
            continue
        t0, t1 = th[k], th[(k + 1) % n]
        if t1 <= t0:
            t1 += 2 * np.pi
        gi, gj, bi, bj = f.gradients[i], f.gradients[j], f.offsets[i], f.offsets[j]

        def h(t):
            x = x_at(t)
            return (gi @ x + bi) - (gj @ x + bj)

        if h(t0) * h(t1) > 0:
            continue
        out.append(x_at(brentq(h, t0, t1, xtol=1e-15, rtol=4 * np.finfo(float).eps)))
    return out


def C1_sampling(problem: Problem, x_bar, radii: Sequence[float] = DEFAULT_RADII,
                directions_per_radius: int = 720, tol_active: float = TOL_ACTIVE,
                seed: int = 0) -> float:
    """Sampled estimate of C1 from points x_bar + eps*u with f_D > 0.

    For p = 2 the sample also includes every kink of f_D met on the circle,
    located by root finding and tested with a tight attainment tolerance, so
    each value is 1/d_*(0, subdiff f_D(x)) at an actual point x.  For p > 2 the
    attainment tolerance scales with the angular spacing of the samples.
    """
    x_bar = np.asarray(x_bar, float)
    rng = np.random.default_rng(seed)
    U, spacing = _sample_directions(problem.p, directions_per_radius, rng)
    best = 0.0
    Ks = enumerate_K(problem, x_bar, tol_active)
    for D in Ks:
        G = np.vstack((problem.A, -problem.A[list(D.rows)]))
        beta = np.concatenate((-problem.b, problem.b[list(D.rows)]))
        f = SupFunction(G, beta)
        gmax = float(np.max(np.linalg.norm(G, axis=1)))
        for eps in radii:
            if problem.p == 2:
                pts = [x_bar + eps * u for u in U] + _kink_points(f, x_bar, eps, U)
                tol_att = 1e-12 * eps * gmax
            else:
                pts = [x_bar + eps * u for u in U]
                tol_att = eps * spacing * gmax
            for x in pts:
                if f.value(x) <= 0.0:
                    continue
                d = min_dual_norm_point(subdifferential(f, x, tol_att), problem.norm).distance
                if d > 0:
                    best = max(best, 1.0 / d)
    if best == 0.0:
        log.warning("C1 sampling found no point with f_D > 0")
    return best


# --------------------------------------------------------------------------
# level-set route
# --------------------------------------------------------------------------

def lambda_bar(problem: Problem, x_bar, tol_active: float = TOL_ACTIVE) -> GauvinData:
    """lambda_bar = min{-<c,w> : <a_t,w> >= 1 on active t} and alpha = d_*(0, conv active)."""
    rows = list(active_set(problem, x_bar, tol_active).rows)
    if not rows:
        raise PreconditionError("no active constraints at x_bar")
    A = problem.A[rows]
    res = linprog(-problem.c, -A, -np.ones(len(rows)))
    if res.status == "infeasible":
        raise PreconditionError("Slater condition fails (homogenized multiplier LP infeasible)")
    if not res.ok:
        raise PreconditionError(f"multiplier-bound LP is {res.status}; x_bar not optimal?")
    alpha = min_dual_norm_point(A, problem.norm).distance
    return GauvinData(alpha, float(res.fun), tuple(float(v) for v in res.x))


def clm_level_set(problem: Problem, x_bar, tol_active: float = TOL_ACTIVE):
    """Exact calmness modulus of the level-set map for finite T (directional route)."""
    rows = list(active_set(problem, x_bar, tol_active).rows)
    G = np.vstack((problem.c[None, :], problem.A[rows]))
    labels = ["cost"] + [problem.labels[i] for i in rows]
    return directional_modulus(G, problem.norm, labels)


def C2_upper_bound(problem: Problem, x_bar, tol_active: float = TOL_ACTIVE):
    ok, _ = slater_check(problem, x_bar)
    if not ok:
        raise PreconditionError("Slater condition fails")
    gd = lambda_bar(problem, x_bar, tol_active)
    clmL, _ = clm_level_set(problem, x_bar, tol_active)
    return max(gd.lambda_bar, 1.0) * clmL, gd, clmL


def lip_lower_bound(problem: Problem, x_bar, tol_active: float = TOL_ACTIVE) -> float:
    """sup ||A_D^{-1}|| over KKT bases; valid as a Lipschitz-modulus bound only under Aubin."""
    slater, _ = slater_check(problem, x_bar)
    nurn, viol = nurnberger_check(problem, x_bar, tol_active)
    if not (slater and nurn):
        raise PreconditionError(
            f"Aubin property not certified (slater={slater}, nurnberger={nurn}, violating D={viol})")
    return C3_upper_bound(problem, x_bar, tol_active, require_strong=False)[0]


def li_gamma(problem: Problem, max_subsets: int = MAX_SUBSETS) -> float:
    """max ||A_D^{-1}|| over all nonsingular p-subsets of rows."""
    n_sub = math.comb(problem.m, problem.p)
    if n_sub > max_subsets:
        raise PreconditionError(f"{n_sub} row subsets exceed the cap {max_subsets}")
    best = None
    for D in itertools.combinations(range(problem.m), problem.p):
        AD = problem.A[list(D)]
        if is_singular(AD):
            continue
        v = inverse_norm(AD, problem.norm)
        best = v if best is None else max(best, v)
    if best is None:
        raise PreconditionError("no nonsingular p-subset of rows")
    return best


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

@dataclass
class Constant:
    name: str
    value: Optional[float]
    method: str
    witness: str = ""
    status: str = "ok"


@dataclass
class ModulusReport:
    constants: list = field(default_factory=list)
    inequality_chain_ok: bool = True
    chain_violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def get(self, name) -> Optional[float]:
        for k in self.constants:
            if k.name == name:
                return k.value
        return None

    def __getattr__(self, name):
        if name in {"C1", "C2", "C3", "exact_clm", "lip_lower", "li_gamma", "empirical",
                    "C1_sampling"}:
            return self.get(name)
        raise AttributeError(name)

    def to_dict(self) -> dict:
        return {
            "constants": [asdict(k) for k in self.constants],
            "inequality_chain_ok": self.inequality_chain_ok,
            "chain_violations": list(self.chain_violations),
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModulusReport":
        return cls([Constant(**k) for k in d["constants"]], d["inequality_chain_ok"],
                   list(d.get("chain_violations", [])), list(d.get("notes", [])))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "value", "method", "witness", "status"])
        for k in self.constants:
            w.writerow([k.name, "" if k.value is None else repr(k.value), k.method, k.witness, k.status])
        return buf.getvalue()

    def to_table(self) -> str:
        lines = [f"{'constant':<12} {'value':>12}  {'status':<8} method"]
        for k in self.constants:
            v = "-" if k.value is None else f"{k.value:.6g}"
            detail = k.method if k.status == "ok" else k.witness
            lines.append(f"{k.name:<12} {v:>12}  {k.status:<8} {detail}")
        lines.append(f"inequality chain ok: {self.inequality_chain_ok}")
        lines.extend(f"  violation: {v}" for v in self.chain_violations)
        lines.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def _fmt_sets(sets):
    return ";".join("{" + ",".join(s) + "}" for s in sets)


def check_chain(report: ModulusReport, atol: float = 1e-6) -> ModulusReport:
    g = report.get
    viol = []
    exact = g("exact_clm")
    if exact is not None:
        if g("C1_sampling") is not None and g("C1_sampling") > exact + atol:
            viol.append(f"C1_sampling {g('C1_sampling')} > exact {exact}")
        if g("C3") is not None and exact > g("C3") + atol:
            viol.append(f"exact {exact} > C3 {g('C3')}")
        if g("C2") is not None and exact > g("C2") + atol:
            viol.append(f"exact {exact} > C2 {g('C2')}")
        if g("empirical") is not None and g("empirical") > exact * 1.02 + atol:
            viol.append(f"empirical {g('empirical')} > 1.02 * exact {exact}")
    if g("li_gamma") is not None and g("C3") is not None and g("li_gamma") < g("C3") - atol:
        viol.append(f"li_gamma {g('li_gamma')} < C3 {g('C3')}")
    report.chain_violations = viol
    report.inequality_chain_ok = not viol
    return report


def compute_report(problem: Problem, x_bar=None, skip: Sequence[str] = (),
                   tol_active: float = TOL_ACTIVE, sampling: bool = True,
                   radii: Sequence[float] = DEFAULT_RADII, directions: int = 720) -> ModulusReport:
    """Evaluate every constant whose preconditions hold; failures are recorded, not raised."""
    from .lp_core import nominal_solution
    x_bar = nominal_solution(problem) if x_bar is None else np.asarray(x_bar, float)
    rep = ModulusReport()
    skip = {s.lower() for s in skip}
    discretized = problem.origin != "finite"
    if discretized:
        rep.notes.append("discretized semi-infinite problem: values refer to the grid problem")

    def attempt(name, fn):
        if name.lower() in skip:
            rep.constants.append(Constant(name, None, "skipped", status="skipped"))
            return
        try:
            rep.constants.append(fn())
        except (ProblemError, np.linalg.LinAlgError) as exc:
            rep.constants.append(Constant(name, None, "", str(exc), "refused"))

    def exact():
        r = C1_directional_exact(problem, x_bar, tol_active)
        return Constant("exact_clm", r.value, "directional patterns over K (finite T, unique)",
                        f"D={{{','.join(r.D)}}} pattern={{{','.join(r.pattern)}}}")

    def c1():
        r = C1_directional_exact(problem, x_bar, tol_active, check_unique=False)
        method = "directional patterns over K"
        if not is_unique_solution(problem, x_bar):
            method += "; lower bound only (solution not unique)"
        return Constant("C1", r.value, method, f"D={{{','.join(r.D)}}}")

    def c1s():
        v = C1_sampling(problem, x_bar, radii, directions, tol_active)
        return Constant("C1_sampling", v, f"sampling radii={list(radii)} directions={directions}")

    def c2():
        v, gd, clmL = C2_upper_bound(problem, x_bar, tol_active)
        return Constant("C2", v, "max(lambda_bar,1)*clm L",
                        f"lambda_bar={gd.lambda_bar!r} clm_L={clmL!r} alpha={gd.alpha!r}")

    def c3():
        v, arg, _ = C3_upper_bound(problem, x_bar, tol_active)
        return Constant("C3", v, "max ||A_D^-1|| over nonsingular KKT bases", _fmt_sets(arg))

    def lip():
        v = lip_lower_bound(problem, x_bar, tol_active)
        exact_flag = "exact (finite T or p<=3)" if (problem.origin == "finite" or problem.p <= 3) else "lower bound"
        return Constant("lip_lower", v, f"sup ||A_D^-1|| under Aubin; {exact_flag}")

    def gamma():
        return Constant("li_gamma", li_gamma(problem), "max ||A_D^-1|| over all nonsingular p-subsets")

    attempt("C1", c1)
    attempt("exact_clm", exact)
    if sampling:
        attempt("C1_sampling", c1s)
    attempt("C2", c2)
    attempt("C3", c3)
    attempt("lip_lower", lip)
    attempt("li_gamma", gamma)
    return check_chain(rep)
