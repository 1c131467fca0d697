"""Problem data, norms, feasibility queries and a small dense simplex solver.

The parametric problem is

    minimize <c, x>  subject to  <a_t, x> <= b_t,  t in T,

with ``x`` free in R^p.  ``T`` is finite here; discretized semi-infinite
families keep their grid structure in :class:`FamilyBlock` so that active
sets can be snapped to one grid point per contact.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

TOL_FEAS = 1e-9
TOL_ACTIVE = 1e-9
TOL_PIVOT = 1e-9
SINGULAR_RTOL = 1e-12

NORM_KINDS = ("euclidean", "one", "infinity")
_DUAL_KIND = {"euclidean": "euclidean", "one": "infinity", "infinity": "one"}
_ORD = {"euclidean": 2, "one": 1, "infinity": np.inf}
NORM_ALIASES = {"l2": "euclidean", "2": "euclidean", "l1": "one", "1": "one",
                "linf": "infinity", "inf": "infinity", "sup": "infinity", "max": "infinity"}


class ProblemError(ValueError):
    """Malformed problem data."""


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class PivotBreakdown(RuntimeError):
    """The simplex method hit a numerically unusable pivot."""

    def __init__(self, message, basis):
        super().__init__(f"{message} (basis={list(basis)})")
        self.basis = list(basis)


@dataclass(frozen=True)
class NormSpec:
    kind: str = "euclidean"

    def __post_init__(self):
        object.__setattr__(self, "kind", NORM_ALIASES.get(str(self.kind).lower(), self.kind))
        if self.kind not in NORM_KINDS:
            raise ProblemError(f"unknown norm {self.kind!r}; expected one of {NORM_KINDS}")

    @property
    def dual_spec(self) -> "NormSpec":
        return NormSpec(_DUAL_KIND[self.kind])

    def norm(self, x) -> float:
        return float(np.linalg.norm(np.asarray(x, dtype=float), _ORD[self.kind]))

    def dual(self, u) -> float:
        return float(np.linalg.norm(np.asarray(u, dtype=float), _ORD[_DUAL_KIND[self.kind]]))

    def dual_distance(self, u, v) -> float:
        return self.dual(np.asarray(u, dtype=float) - np.asarray(v, dtype=float))


@dataclass(frozen=True)
class FamilyBlock:
    """Rows of a discretized one-parameter family, in increasing parameter order."""

    name: str
    rows: tuple
    params: tuple
    step: float


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Problem:
    labels: tuple
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    norm: NormSpec = field(default_factory=NormSpec)
    families: tuple = ()
    nominal_x: Optional[np.ndarray] = None
    origin: str = "finite"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        c = np.asarray(self.c, dtype=float).ravel()
        if A.shape[0] < 1 or A.size == 0:
            raise ProblemError("problem needs at least one constraint row")
        if A.shape[1] != c.size:
            raise ProblemError(f"rows have length {A.shape[1]} but cost has length {c.size}")
        if b.size != A.shape[0]:
            raise ProblemError(f"{A.shape[0]} rows but {b.size} right-hand sides")
        labels = tuple(str(l) for l in self.labels)
        if len(labels) != A.shape[0]:
            raise ProblemError("one label per row required")
        if len(set(labels)) != len(labels):
            raise ProblemError("row labels must be unique")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ProblemError("non-finite problem data")
        if isinstance(self.norm, str):
            object.__setattr__(self, "norm", NormSpec(self.norm))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "c", _frozen(c))
        if self.nominal_x is not None:
            x = _frozen(np.asarray(self.nominal_x, dtype=float).ravel())
            if x.size != c.size:
                raise ProblemError("nominal_x has wrong dimension")
            object.__setattr__(self, "nominal_x", x)

    @property
    def p(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def rows(self):
        return list(zip(self.labels, self.A))

    def index(self, label) -> int:
        return self.labels.index(str(label))

    def indices(self, labels) -> list:
        return [self.index(l) for l in labels]

    def with_data(self, c=None, b=None) -> "Problem":
        return Problem(
            self.labels, self.A, self.b if b is None else b, self.c if c is None else c,
            self.norm, self.families, self.nominal_x, self.origin,
        )

    def with_norm(self, norm) -> "Problem":
        return Problem(self.labels, self.A, self.b, self.c, norm, self.families,
                       self.nominal_x, self.origin)

    def parameter_distance(self, c, b, c2=None, b2=None) -> float:
        """max{||c - c2||_*, ||b - b2||_inf}; defaults compare against the nominal data."""
        c2 = self.c if c2 is None else c2
        b2 = self.b if b2 is None else b2
        dc = self.norm.dual(np.asarray(c, float) - np.asarray(c2, float))
        db = float(np.max(np.abs(np.asarray(b, float) - np.asarray(b2, float)))) if self.m else 0.0
        return max(dc, db)


@dataclass(frozen=True)
class ActiveSet:
    point: np.ndarray
    indices: tuple
    rows: tuple
    tol_active: float

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class KKTCertificate:
    support: tuple
    multipliers: tuple
    residual: float


def _check_point(problem: Problem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != problem.p:
        raise ProblemError(f"point has dimension {x.size}, problem has p={problem.p}")
    return x


def feasible(problem: Problem, x, tol_feas: float = TOL_FEAS) -> bool:
    x = _check_point(problem, x)
    return bool(np.all(problem.A @ x <= problem.b + tol_feas))


def active_set(problem: Problem, x, tol_active: float = TOL_ACTIVE,
               tol_feas: float = TOL_FEAS) -> ActiveSet:
    """Indices with <a_t, x> = b_t up to ``tol_active``.

    For discretized family rows the tolerance widens to L*h (h the grid step,
    L the observed slope of t -> <a_t,x> - b_t) and each contact is snapped to
    the grid points that are local maxima of the residual.
    """
    x = _check_point(problem, x)
    resid = problem.A @ x - problem.b
    if np.any(resid > tol_feas):
        worst = int(np.argmax(resid))
        raise ProblemError(
            f"point is infeasible: row {problem.labels[worst]} violated by {resid[worst]:.3e}")
    hit = np.abs(resid) <= tol_active
    for fam in problem.families:
        idx = np.asarray(fam.rows, dtype=int)
        hit[idx] = False
        if idx.size == 0:
            continue
        g = resid[idx]
        if idx.size > 1:
            slope = float(np.max(np.abs(np.diff(g)))) / fam.step
        else:
            slope = 0.0
        tol = max(tol_active, slope * fam.step)
        left = np.concatenate(([-np.inf], g[:-1]))
        right = np.concatenate((g[1:], [-np.inf]))
        snap = (np.abs(g) <= tol) & (g >= left) & (g >= right)
        hit[idx[snap]] = True
    rows = tuple(int(i) for i in np.flatnonzero(hit))
    return ActiveSet(_frozen(x), tuple(problem.labels[i] for i in rows), rows, tol_active)


# --------------------------------------------------------------------------
# simplex
# --------------------------------------------------------------------------

@dataclass
class LPResult:
    status: str
    x: Optional[np.ndarray] = None
    fun: float = math.nan
    duals: Optional[np.ndarray] = None
    basis: tuple = ()
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _pivot(T, basis, row, col):
    piv = T[row, col]
    T[row] /= piv
    colv = T[:, col].copy()
    colv[row] = 0.0
    T -= np.outer(colv, T[row])
    basis[row] = col


def _run_simplex(T, basis, ncols_allowed, tol, max_iter):
    """Bland's rule iterations on tableau T (last row = reduced costs)."""
    m = T.shape[0] - 1
    it = 0
    while True:
        r = T[-1, :ncols_allowed]
        cand = np.flatnonzero(r < -tol)
        if cand.size == 0:
            return "optimal", it
        col = int(cand[0])
        colv = T[:m, col]
        pos = np.flatnonzero(colv > tol)
        if pos.size == 0:
            return "unbounded", it
        ratios = T[pos, -1] / colv[pos]
        best = ratios.min()
        ties = pos[ratios <= best + tol * max(1.0, abs(best))]
        row = int(min(ties, key=lambda i: basis[i]))
        if abs(T[row, col]) < 1e-13:
            raise PivotBreakdown("pivot element vanished", basis)
        _pivot(T, basis, row, col)
        it += 1
        if it > max_iter:
            raise PivotBreakdown(f"no convergence after {max_iter} pivots", basis)


def _warm_tableau(g, M, h, basis, tol):
    """Phase-2 tableau for a supplied basis, or None if it is not primal feasible."""
    m, n = M.shape
    basis = [int(j) for j in basis]
    if len(basis) != m or len(set(basis)) != m or any(j < 0 or j >= n for j in basis):
        return None
    B = M[:, basis]
    if is_singular(B):
        return None
    Binv = inverse_matrix(B)
    rhs = Binv @ h
    if np.any(rhs < -tol * (1.0 + float(np.max(np.abs(h))))):
        return None
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = Binv @ M
    T[:m, n:n + m] = Binv
    T[:m, -1] = np.maximum(rhs, 0.0)
    cost = np.concatenate((g, np.zeros(m)))
    T[-1, :n + m] = cost
    T[-1] -= cost[basis] @ T[:m]
    return T, basis


def simplex_standard(g, M, h, tol: float = TOL_PIVOT, max_iter: Optional[int] = None,
                     basis: Optional[Sequence[int]] = None) -> LPResult:
    """Two-phase primal simplex with Bland's rule for min g'y, My = h, y >= 0.

    ``duals`` holds the simplex multipliers pi (optimal for max h'pi, M'pi <= g).
    A feasible starting ``basis`` (column indices) skips phase 1.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    g = np.asarray(g, dtype=float).ravel()
    h = np.asarray(h, dtype=float).ravel()
    m, n = M.shape
    if max_iter is None:
        max_iter = 50 * (m + n) + 100
    warm = None if basis is None else _warm_tableau(g, M, h, basis, tol)
    if warm is not None:
        T, basis = warm
        status, it = _run_simplex(T, basis, n, tol, max_iter)
        if status == "unbounded":
            return LPResult("unbounded", iterations=it, basis=tuple(basis))
        y = np.zeros(n + m)
        y[basis] = T[:m, -1]
        y = np.maximum(y[:n], 0.0)
        return LPResult("optimal", y, float(g @ y), -T[-1, n:n + m], tuple(basis), it)
    sign = np.where(h < 0, -1.0, 1.0)
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = M * sign[:, None]
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = h * sign
    basis = list(range(n, n + m))
    scale = 1.0 + float(np.max(np.abs(h))) if m else 1.0

    # phase 1: minimize the sum of artificials
    T[-1, :] = 0.0
    T[-1, n:n + m] = 1.0
    T[-1] -= T[:m].sum(axis=0)
    _, it1 = _run_simplex(T, basis, n + m, tol, max_iter)
    if -T[-1, -1] > tol * scale * 10:
        return LPResult("infeasible", iterations=it1, basis=tuple(basis))
    for i in range(m):
        if basis[i] >= n:
            cand = np.flatnonzero(np.abs(T[i, :n]) > tol)
            if cand.size:
                _pivot(T, basis, i, int(cand[0]))

    # phase 2
    cost = np.concatenate((g, np.zeros(m)))
    T[-1, :] = 0.0
    T[-1, :n + m] = cost
    cb = cost[basis]
    T[-1] -= cb @ T[:m]
    status, it2 = _run_simplex(T, basis, n, tol, max_iter)
    if status == "unbounded":
        return LPResult("unbounded", iterations=it1 + it2, basis=tuple(basis))
    y = np.zeros(n + m)
    y[basis] = T[:m, -1]
    y = np.maximum(y[:n], 0.0)
    duals = -sign * T[-1, n:n + m]
    return LPResult("optimal", y, float(g @ y), duals, tuple(basis), it1 + it2)


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, tol: float = TOL_PIVOT,
            basis: Optional[Sequence[int]] = None) -> LPResult:
    """min c'x over free x subject to A_ub x <= b_ub and A_eq x = b_eq.

    Solved through its dual in standard form, so the tableau has one row per
    variable; cheap when there are few variables and many constraints.
    ``basis`` is a dual basis from an earlier solve (``LPResult.basis``) used as
    a warm start when it is still dual feasible.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float).ravel()
    A_ub = A_ub.reshape(-1, n)
    A_eq = A_eq.reshape(-1, n)
    M = np.hstack((A_ub.T, A_eq.T, -A_eq.T))
    w = np.concatenate((b_ub, b_eq, -b_eq))
    if M.shape[1] == 0:
        if np.allclose(c, 0):
            return LPResult("optimal", np.zeros(n), 0.0)
        return LPResult("unbounded")
    dual = simplex_standard(w, M, -c, tol=tol, basis=basis)
    if dual.status == "optimal":
        x = dual.duals
        return LPResult("optimal", x, float(c @ x), dual.x, dual.basis, dual.iterations)
    if dual.status == "unbounded":
        return LPResult("infeasible", iterations=dual.iterations)
    # dual infeasible: primal is unbounded when feasible
    feas = simplex_standard(w, M, np.zeros(n), tol=tol)
    if feas.status == "unbounded":
        return LPResult("infeasible", iterations=dual.iterations + feas.iterations)
    return LPResult("unbounded", iterations=dual.iterations + feas.iterations)


def linprog_rows(c, A, b, seed_rows=(), box: Optional[float] = None, batch: int = 32,
                 tol: float = TOL_FEAS) -> LPResult:
    """min c'x s.t. Ax <= b by constraint generation for tall A (m >> p).

    Solves on a working subset of rows inside a box around the origin, adds the
    most violated rows and repeats.  The relaxed optimum that satisfies every
    row is optimal for the full problem; one that stays on the box after all
    rows are satisfied means the full LP is unbounded.
    """
    c = np.asarray(c, float).ravel()
    A = np.atleast_2d(np.asarray(A, float))
    b = np.asarray(b, float).ravel()
    m, p = A.shape
    if box is None:
        box = 1e3 * (1.0 + float(np.max(np.abs(b))))
    work = sorted({int(i) for i in seed_rows})
    eye = np.eye(p)
    B = np.vstack((eye, -eye))
    box_limit = box * 1e9
    it = 0
    for _ in range(m + 10):
        hb = np.full(2 * p, box)
        res = linprog(c, np.vstack((A[work], B)), np.concatenate((b[work], hb)), tol=tol)
        it += res.iterations
        if not res.ok:
            return LPResult(res.status, iterations=it)
        x = res.x
        viol = A @ x - b
        bad = np.flatnonzero(viol > tol * (1.0 + float(np.max(np.abs(b)))))
        if bad.size == 0:
            if np.max(np.abs(x)) >= box * (1.0 - 1e-9):
                if box >= box_limit:
                    return LPResult("unbounded", iterations=it)
                box *= 1e3
                continue
            duals = np.zeros(m)
            duals[work] = res.duals[:len(work)]
            basis = tuple(work[j] for j in res.basis if j < len(work))
            return LPResult("optimal", x, float(c @ x), duals, basis, it)
        add = bad[np.argsort(-viol[bad])[:batch]]
        work = sorted(set(work) | {int(i) for i in add})
    raise PivotBreakdown("constraint generation did not terminate", ())


def solve_lp(problem: Problem, c=None, b=None, basis=None) -> LPResult:
    """Vertex solution of min <c,x> s.t. Ax <= b (defaults to the nominal data)."""
    c = problem.c if c is None else np.asarray(c, float)
    b = problem.b if b is None else np.asarray(b, float)
    res = linprog(c, problem.A, b, basis=basis)
    if res.ok:
        res.basis = tuple(i for i in res.basis if i < problem.m)
    return res


# --------------------------------------------------------------------------
# dense linear algebra
# --------------------------------------------------------------------------

def is_singular(A) -> bool:
    A = np.asarray(A, dtype=float)
    scale = float(np.prod(np.linalg.norm(A, axis=1)))
    if scale == 0.0:
        return True
    return abs(_lu_det(A)) <= SINGULAR_RTOL * scale


def _lu(A):
    A = np.array(A, dtype=float)
    n = A.shape[0]
    perm = np.arange(n)
    swaps = 0
    for k in range(n):
        piv = k + int(np.argmax(np.abs(A[k:, k])))
        if piv != k:
            A[[k, piv]] = A[[piv, k]]
            perm[[k, piv]] = perm[[piv, k]]
            swaps += 1
        if A[k, k] == 0.0:
            continue
        A[k + 1:, k] /= A[k, k]
        A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k, k + 1:])
    return A, perm, swaps


def _lu_det(A) -> float:
    LU, _, swaps = _lu(A)
    return float((-1) ** swaps * np.prod(np.diag(LU)))


def inverse_matrix(A) -> np.ndarray:
    """Inverse by LU with partial pivoting; raises SingularMatrixError."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ProblemError(f"square matrix required, got shape {A.shape}")
    if is_singular(A):
        raise SingularMatrixError("matrix is singular to working precision")
    n = A.shape[0]
    LU, perm, _ = _lu(A)
    inv = np.zeros((n, n))
    for j in range(n):
        e = (perm == j).astype(float)
        y = e.copy()
        for i in range(n):
            y[i] -= LU[i, :i] @ y[:i]
        for i in range(n - 1, -1, -1):
            y[i] = (y[i] - LU[i, i + 1:] @ y[i + 1:]) / LU[i, i]
        inv[:, j] = y
    return inv


def halfspace_distance(a, beta: float, x, norm: NormSpec) -> float:
    """Distance from x to {y : <a,y> <= beta}, i.e. [<a,x> - beta]_+ / ||a||_*."""
    a = np.asarray(a, dtype=float)
    da = norm.dual(a)
    if da == 0.0:
        raise ProblemError("zero normal vector")
    return max(float(a @ np.asarray(x, float)) - beta, 0.0) / da


def vertex_enumeration_lp(problem: Problem, c=None, b=None):
    """Brute-force optimum over all p-row bases (test oracle, tiny problems only)."""
    c = problem.c if c is None else np.asarray(c, float)
    b = problem.b if b is None else np.asarray(b, float)
    best = None
    for D in itertools.combinations(range(problem.m), problem.p):
        AD = problem.A[list(D)]
        if abs(np.linalg.det(AD)) < 1e-12:
            continue
        x = np.linalg.solve(AD, b[list(D)])
        if np.all(problem.A @ x <= b + 1e-9):
            v = float(c @ x)
            if best is None or v < best[1]:
                best = (x, v)
    return best


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------

def problem_from_dict(data: dict) -> Problem:
    """Build a finite Problem from the JSON schema (``families`` handled by semiinf)."""
    if "families" in data and data["families"]:
        from .semiinf import source_from_dict, discretize
        return discretize(source_from_dict(data))
    try:
        p = int(data["p"])
        rows = data["rows"]
        cost = data["cost"]
    except KeyError as exc:
        raise ProblemError(f"missing field {exc.args[0]!r}") from None
    if not rows:
        raise ProblemError("field 'rows' is empty")
    labels, A, b = [], [], []
    for k, row in enumerate(rows):
        try:
            labels.append(str(row.get("label", k + 1)))
            A.append([float(v) for v in row["a"]])
            b.append(float(row["b"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProblemError(f"rows[{k}]: {exc}") from None
        if len(A[-1]) != p:
            raise ProblemError(f"rows[{k}].a has length {len(A[-1])}, expected p={p}")
    if len(cost) != p:
        raise ProblemError(f"cost has length {len(cost)}, expected p={p}")
    return Problem(labels, np.array(A), np.array(b), np.array(cost, float),
                   NormSpec(data.get("norm", "euclidean")), nominal_x=data.get("nominal_x"))


def problem_to_dict(problem: Problem) -> dict:
    out = {
        "p": problem.p,
        "norm": problem.norm.kind,
        "cost": problem.c.tolist(),
        "rows": [{"label": l, "a": a.tolist(), "b": float(bt)}
                 for l, a, bt in zip(problem.labels, problem.A, problem.b)],
    }
    if problem.nominal_x is not None:
        out["nominal_x"] = problem.nominal_x.tolist()
    return out


def load_problem(path) -> Problem:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ProblemError(f"{path}: top level must be an object")
    return problem_from_dict(data)


def nominal_solution(problem: Problem) -> np.ndarray:
    """The stored nominal point, or a simplex vertex solution."""
    if problem.nominal_x is not None:
        return np.array(problem.nominal_x)
    res = solve_lp(problem)
    if not res.ok:
        raise ProblemError(f"nominal problem is {res.status}")
    return res.x


def as_labels(problem: Problem, idx: Sequence[int]) -> tuple:
    return tuple(problem.labels[i] for i in idx)
