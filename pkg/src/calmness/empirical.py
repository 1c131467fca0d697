"""Brute-force perturbation oracle for the calmness ratio d(x, S(c,b)) / ||(c,b) - (c',b')||.

Independent of the modulus formulas: it only perturbs the data, re-solves the
LP and measures distances.
"""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .certify import cone_membership, is_unique_solution
from .lp_core import (
    Problem, ProblemError, active_set, feasible, inverse_matrix, is_singular, linprog,
    linprog_rows, nominal_solution,
)

log = logging.getLogger(__name__)

DEFAULT_RADII = (1e-2, 1e-3, 1e-4)
DEFAULT_SAMPLES = 512
MAX_FACE_VERTICES = 32
MAX_VERTEX_SUBSETS = 1 << 16
MAX_SIGN_ACTIVE = 8
TALL_ROWS = 64  # above this many rows, perturbed LPs use constraint generation


class NotOptimalError(ProblemError):
    pass


@dataclass
class PerturbationSample:
    radius: float
    kind: str
    delta_c: np.ndarray
    delta_b: np.ndarray
    solved_x: Optional[np.ndarray]
    ratio: float
    status: str


@dataclass
class EmpiricalResult:
    estimate: float
    per_radius: dict
    structured_max: dict
    samples: list = field(default_factory=list)
    skipped: int = 0
    diagnostic: str = ""
    seed: int = 42

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["radius", "delta", "ratio", "status"])
        for s in self.samples:
            w.writerow([repr(s.radius), s.kind, repr(s.ratio), s.status])
        return buf.getvalue()


class NominalArgmin:
    """S(c_bar, b_bar), either the singleton {x_bar} or the optimal face."""

    def __init__(self, problem: Problem, x_bar=None):
        self.problem = problem
        self.x_bar = nominal_solution(problem) if x_bar is None else np.asarray(x_bar, float)
        self.value = float(problem.c @ self.x_bar)
        self.unique = is_unique_solution(problem, self.x_bar)
        res = linprog(problem.c, problem.A, problem.b)
        # dual basis of the nominal LP, reused as a warm start for perturbed solves
        self.basis = res.basis if res.ok else None
        self.seed_rows = active_set(problem, self.x_bar).rows

    def distance(self, x) -> float:
        x = np.asarray(x, float)
        norm = self.problem.norm
        if self.unique:
            return norm.norm(x - self.x_bar)
        return _distance_to_face(self.problem, self.value, x)


def _distance_to_face(problem: Problem, value: float, x) -> float:
    A = np.vstack((problem.A, problem.c))
    b = np.concatenate((problem.b, [value]))
    p = problem.p
    kind = problem.norm.kind
    if kind == "euclidean":
        y0 = _face_point(problem, value, x)
        cons = {"type": "ineq", "fun": lambda y: b - A @ y, "jac": lambda y: -A}
        res = minimize(lambda y: 0.5 * np.sum((y - x) ** 2), y0, jac=lambda y: y - x,
                       constraints=[cons], method="SLSQP", options={"ftol": 1e-15, "maxiter": 500})
        y = res.x if res.success else y0
        return float(np.linalg.norm(y - x))
    # polyhedral norms: vars (y, s); s bounds |x - y| componentwise
    if kind == "infinity":
        c = np.concatenate((np.zeros(p), [1.0]))
        E = np.ones((p, 1))
    else:
        c = np.concatenate((np.zeros(p), np.ones(p)))
        E = np.eye(p)
    ns = E.shape[1]
    A_ub = np.vstack((
        np.hstack((A, np.zeros((A.shape[0], ns)))),
        np.hstack((-np.eye(p), -E)),
        np.hstack((np.eye(p), -E)),
    ))
    b_ub = np.concatenate((b, -x, x))
    res = linprog(c, A_ub, b_ub)
    if not res.ok:
        raise ProblemError(f"face projection LP {res.status}")
    return float(res.fun)


def _face_point(problem, value, x):
    c = np.zeros(problem.p)
    res = linprog(c, np.vstack((problem.A, problem.c)), np.concatenate((problem.b, [value])))
    return res.x if res.ok else np.asarray(x, float)


def distance_to_nominal_argmin(x, problem: Problem, x_bar=None) -> float:
    return NominalArgmin(problem, x_bar).distance(x)


# --------------------------------------------------------------------------
# perturbed solves
# --------------------------------------------------------------------------

def _dual_nondegenerate(problem, res) -> bool:
    y = res.duals[:problem.m] if res.duals is not None else np.zeros(0)
    pos = np.flatnonzero(y > 1e-12)
    return pos.size == problem.p and not is_singular(problem.A[pos])


def _locally_unique(problem, c, b, x, tol: float = 1e-9) -> bool:
    """No nonzero d with <a_t,d> <= 0 on rows active at x and <c,d> <= 0."""
    scale = 1.0 + float(np.max(np.abs(b)))
    act = np.flatnonzero(problem.A @ x - b >= -tol * scale)
    p = problem.p
    G = np.vstack((problem.A[act], c, np.eye(p), -np.eye(p)))
    h = np.concatenate((np.zeros(act.size + 1), np.ones(2 * p)))
    for i in range(p):
        for s in (1.0, -1.0):
            w = np.zeros(p)
            w[i] = -s
            r = linprog(w, G, h)
            if not r.ok or -r.fun > 1e-9:
                return False
    return True


def farthest_solution(problem: Problem, c, b, target: NominalArgmin):
    """An optimal point of P(c,b) maximizing the distance to the nominal argmin.

    Simplex returns one vertex; when the optimum may be non-unique, up to
    MAX_FACE_VERTICES face vertices are probed with linear objectives.
    """
    if problem.m > TALL_ROWS:
        res = linprog_rows(c, problem.A, b, target.seed_rows)
    else:
        res = linprog(c, problem.A, b, basis=target.basis)
    if not res.ok:
        return None, res.status
    x = res.x
    if _dual_nondegenerate(problem, res) or _locally_unique(problem, c, b, x):
        return x, "optimal"
    v = float(np.asarray(c) @ x)
    Af = np.vstack((problem.A, c))
    bf = np.concatenate((b, [v + 1e-12 * max(1.0, abs(v))]))
    objectives = []
    d = x - target.x_bar
    if np.linalg.norm(d) > 0:
        objectives.append(-d / np.linalg.norm(d))
    for i in range(problem.p):
        e = np.zeros(problem.p)
        e[i] = 1.0
        objectives += [e, -e]
    best, dbest = x, target.distance(x)
    seen = [x]
    seeds = tuple(np.flatnonzero(problem.A @ x - b >= -1e-9 * (1.0 + np.max(np.abs(b))))) + (problem.m,)
    for w in objectives[:MAX_FACE_VERTICES]:
        r = linprog_rows(w, Af, bf, seeds) if problem.m > TALL_ROWS else linprog(w, Af, bf)
        if not r.ok:
            continue
        if any(np.max(np.abs(r.x - s)) <= 1e-12 for s in seen):
            continue
        seen.append(r.x)
        dd = target.distance(r.x)
        if dd > dbest:
            best, dbest = r.x, dd
    return best, "optimal"


def _polytope_vertices(H, h):
    """Vertices of {y : H y <= h} by brute force over p-subsets (small p only)."""
    p = H.shape[1]
    out = []
    for S in itertools.combinations(range(H.shape[0]), p):
        HS = H[list(S)]
        if abs(np.linalg.det(HS)) < 1e-12:
            continue
        y = np.linalg.solve(HS, h[list(S)])
        if np.all(H @ y <= h + 1e-9) and not any(np.max(np.abs(y - z)) < 1e-10 for z in out):
            out.append(y)
    return out


def _basis_vertices_affordable(p: int, n_active: int) -> bool:
    """Brute-force vertex enumeration stays within MAX_VERTEX_SUBSETS p-subsets."""
    if n_active < p:
        return True
    return math.comb(n_active, p) * math.comb(p + n_active, p) <= MAX_VERTEX_SUBSETS


def structured_perturbations(problem: Problem, x_bar, mode: str = "full"):
    """Unit-size (c, b) perturbation directions that probe worst cases.

    Yields (kind, delta_c, delta_b) with max{||dc||_*, ||db||_inf} = 1.
    """
    m, p = problem.m, problem.p
    act = list(active_set(problem, x_bar).rows)
    zc = np.zeros(p)
    bump_rows = range(m) if m <= 64 else act
    for t in bump_rows:
        for s in (1.0, -1.0):
            db = np.zeros(m)
            db[t] = s
            yield f"bump {problem.labels[t]} {s:+g}", zc, db
    if len(act) <= MAX_SIGN_ACTIVE:
        for signs in itertools.product((-1.0, 0.0, 1.0), repeat=len(act)):
            if not any(signs):
                continue
            db = np.zeros(m)
            db[act] = signs
            yield "signs " + "".join("-0+"[int(s) + 1] for s in signs), zc, db
    # vertices of the feasible set of basis-preserving perturbations of each active basis
    bases = itertools.combinations(act, p) if _basis_vertices_affordable(p, len(act)) else ()
    for D in bases:
        AD = problem.A[list(D)]
        if is_singular(AD):
            continue
        Ainv = inverse_matrix(AD)
        rest = [t for t in act if t not in D]
        H = np.vstack((np.eye(p), -np.eye(p)) + ((problem.A[rest] @ Ainv,) if rest else ()))
        h = np.ones(H.shape[0])
        for y in _polytope_vertices(H, h):
            db = np.zeros(m)
            db[rest] = 1.0
            db[list(D)] = y
            yield "basis {" + ",".join(problem.labels[i] for i in D) + "} y=" + \
                ",".join(f"{v:.6g}" for v in y), zc, db
    if mode == "full":
        for i in range(p):
            for s in (1.0, -1.0):
                dc = np.zeros(p)
                dc[i] = s
                dc /= problem.norm.dual(dc)
                yield f"cost e{i} {s:+g}", dc, np.zeros(m)


def _random_perturbation(problem, rng, mode):
    m, p = problem.m, problem.p
    db = rng.uniform(-1.0, 1.0, size=m)
    if mode == "full":
        dc = rng.normal(size=p)
        dc *= rng.uniform() / max(problem.norm.dual(dc), 1e-300)
    else:
        dc = np.zeros(p)
    scale = max(problem.norm.dual(dc), float(np.max(np.abs(db))))
    return dc / scale, db / scale


def _evaluate(problem, target, eps, kind, dc, db):
    c = problem.c + eps * dc
    b = problem.b + eps * db
    denom = problem.parameter_distance(c, b)
    if denom <= 0.0:
        return PerturbationSample(eps, kind, dc, db, None, float("nan"), "zero")
    x, status = farthest_solution(problem, c, b, target)
    if x is None:
        return PerturbationSample(eps, kind, dc, db, None, float("nan"), status)
    return PerturbationSample(eps, kind, dc, db, x, target.distance(x) / denom, status)


def estimate_clm(problem: Problem, x_bar=None, radii: Sequence[float] = DEFAULT_RADII,
                 samples_per_radius: int = DEFAULT_SAMPLES, mode: str = "full",
                 seed: int = 42, workers: int = 1) -> EmpiricalResult:
    """Max observed calmness ratio over structured and random perturbations.

    The estimate is the largest ratio over the two smallest radii.  Random draws
    use one generator per (radius, sample) so results do not depend on ``workers``.
    """
    mode = mode.replace("-", "_")
    if mode not in ("full", "b_only"):
        raise ValueError(f"unknown mode {mode!r}")
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii) or any(a <= b for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be positive and strictly decreasing")
    target = NominalArgmin(problem, x_bar)
    structured = list(structured_perturbations(problem, target.x_bar, mode))
    tasks = []
    for ri, eps in enumerate(radii):
        for kind, dc, db in structured:
            tasks.append((eps, kind, dc, db))
        for si in range(samples_per_radius):
            rng = np.random.default_rng([seed, ri, si])
            dc, db = _random_perturbation(problem, rng, mode)
            tasks.append((eps, f"random {ri}:{si}", dc, db))

    def run(task):
        return _evaluate(problem, target, *task)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(run, tasks))
    else:
        samples = [run(t) for t in tasks]

    per_radius, smax = {}, {}
    skipped = 0
    for s in samples:
        if s.status != "optimal" or not np.isfinite(s.ratio):
            skipped += 1
            continue
        per_radius[s.radius] = max(per_radius.get(s.radius, 0.0), s.ratio)
        if not s.kind.startswith("random"):
            smax[s.radius] = max(smax.get(s.radius, 0.0), s.ratio)
    tail = radii[-2:]
    estimate = max((per_radius.get(r, 0.0) for r in tail), default=0.0)
    diag = ""
    if len(radii) >= 2:
        a, b = per_radius.get(radii[-2], 0.0), per_radius.get(radii[-1], 0.0)
        rel = abs(a - b) / max(abs(b), 1e-300)
        diag = f"last-two-radii relative change {rel:.3e}"
    if not _basis_vertices_affordable(problem.p, len(active_set(problem, target.x_bar).rows)):
        diag = "; ".join(filter(None, [diag, "basis-vertex perturbations skipped (too many subsets)"]))
    if 2 * problem.p + 1 > MAX_FACE_VERTICES:
        # non-unique perturbed optima are only partly explored
        diag = "; ".join(filter(None, [diag, f"face probing capped at {MAX_FACE_VERTICES} objectives"]))
    if skipped:
        log.info("%d perturbed problems skipped (infeasible/unbounded)", skipped)
    return EmpiricalResult(estimate, per_radius, smax, samples, skipped, diag, seed)


# --------------------------------------------------------------------------
# replay
# --------------------------------------------------------------------------

def verify_optimal(problem: Problem, c, b, x, tol: float = 1e-9) -> float:
    """Check x optimal for P(c,b) via feasibility + KKT; returns the KKT residual."""
    c = np.asarray(c, float)
    b = np.asarray(b, float)
    pert = problem.with_data(c=c, b=b)
    scale = max(1.0, float(np.max(np.abs(b))))
    if not feasible(pert, x, tol * scale):
        raise NotOptimalError("supplied point is infeasible for its parameter")
    act = active_set(Problem(pert.labels, pert.A, pert.b, pert.c, pert.norm), x,
                     tol_active=1e-7 * scale, tol_feas=tol * scale)
    ok, lam = cone_membership(-c, problem.A[list(act.rows)], tol=1e-7)
    if not ok:
        G = problem.A[list(act.rows)]
        lam = np.linalg.lstsq(G.T, -c, rcond=None)[0] if len(act.rows) else np.zeros(0)
        resid = problem.norm.dual(c + (lam @ G if len(act.rows) else 0.0))
        raise NotOptimalError(f"supplied point fails KKT (least-squares residual {resid:.3e})")
    G = problem.A[list(act.rows)]
    return problem.norm.dual(c + (lam @ G if len(act.rows) else 0.0))


def replay_sequence(problem: Problem, sequence, points=None, x_bar=None) -> list:
    """Ratios along a prescribed parameter sequence.

    Each entry is a b vector or a (c, b) pair; supplied points are verified as
    optimal, otherwise the farthest computed optimal vertex is used.
    """
    target = NominalArgmin(problem, x_bar)
    out = []
    for k, entry in enumerate(sequence):
        if isinstance(entry, tuple) and len(entry) == 2:
            c, b = np.asarray(entry[0], float), np.asarray(entry[1], float)
        else:
            c, b = problem.c, np.asarray(entry, float)
        denom = problem.parameter_distance(c, b)
        if denom <= 0.0:
            raise ValueError(f"sequence entry {k} equals the nominal parameter")
        if points is not None and points[k] is not None:
            x = np.asarray(points[k], float)
            verify_optimal(problem, c, b, x)
        else:
            x, status = farthest_solution(problem, c, b, target)
            if x is None:
                raise NotOptimalError(f"sequence entry {k}: perturbed problem {status}")
        out.append(target.distance(x) / denom)
    return out
