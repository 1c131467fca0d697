"""Regularity certificates at a nominal solution: Slater, KKT, strong uniqueness, Nurnberger."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lp_core import (
    TOL_ACTIVE, KKTCertificate, Problem, ProblemError, active_set, feasible, linprog,
    simplex_standard,
)

TOL_KKT = 1e-9
TOL_MARGIN = 1e-9
MAX_DIRECTIONS = 20
MAX_SUBSETS = 2 ** 20


class ActiveSetTooLarge(ProblemError):
    pass


@dataclass
class ConditionReport:
    slater: bool
    slater_witness: Optional[list]
    kkt: Optional[KKTCertificate]
    strong_unique: bool
    margin: float
    nurnberger: bool
    violating_subset: Optional[tuple]
    active: tuple = ()
    notes: list = field(default_factory=list)

    @property
    def aubin(self) -> bool:
        return self.slater and self.nurnberger

    def to_dict(self) -> dict:
        return {
            "slater": self.slater,
            "slater_witness": self.slater_witness,
            "kkt": None if self.kkt is None else {
                "support": list(self.kkt.support),
                "multipliers": list(self.kkt.multipliers),
                "residual": self.kkt.residual,
            },
            "strong_unique": self.strong_unique,
            "margin": self.margin,
            "nurnberger": self.nurnberger,
            "violating_subset": None if self.violating_subset is None else list(self.violating_subset),
            "aubin": self.aubin,
            "active": list(self.active),
            "notes": list(self.notes),
        }


def slater_check(problem: Problem, x_bar=None, tol: float = TOL_MARGIN):
    """max delta s.t. <a_t,x> + delta <= b_t, ||x||_inf <= R; Slater iff delta > tol."""
    p = problem.p
    xb = np.zeros(p) if x_bar is None else np.asarray(x_bar, float)
    R = 1.0 + float(np.max(np.abs(xb))) + float(np.max(np.abs(problem.b)))
    c = np.zeros(p + 1)
    c[-1] = -1.0
    A_ub = np.vstack((
        np.hstack((problem.A, np.ones((problem.m, 1)))),
        np.hstack((np.eye(p), np.zeros((p, 1)))),
        np.hstack((-np.eye(p), np.zeros((p, 1)))),
    ))
    b_ub = np.concatenate((problem.b, np.full(2 * p, R)))
    res = linprog(c, A_ub, b_ub)
    if res.status == "unbounded":
        raise ProblemError(f"Slater auxiliary LP unbounded (R={R})")
    if not res.ok:
        return False, None
    delta = -res.fun
    return bool(delta > tol), res.x[:p]


def cone_membership(v, generators, tol: float = TOL_KKT):
    """Is v in cone(generators)?  Returns (flag, multipliers) with at most p nonzeros."""
    v = np.asarray(v, dtype=float).ravel()
    G = np.asarray(generators, dtype=float).reshape(-1, v.size)
    k = G.shape[0]
    if k == 0 or np.max(np.abs(v)) <= tol:
        flag = bool(np.max(np.abs(v), initial=0.0) <= tol)
        return flag, (np.zeros(k) if flag else None)
    res = simplex_standard(np.zeros(k), G.T, v)
    if not res.ok:
        return False, None
    lam = res.x
    if np.max(np.abs(G.T @ lam - v)) > tol * max(1.0, float(np.max(np.abs(v)))):
        return False, None
    return True, lam


def kkt_certificate(problem: Problem, x_bar, tol_active: float = TOL_ACTIVE,
                    tol: float = TOL_KKT) -> Optional[KKTCertificate]:
    act = active_set(problem, x_bar, tol_active)
    rows = list(act.rows)
    ok, lam = cone_membership(-problem.c, problem.A[rows], tol)
    if not ok:
        return None
    keep = lam > 1e-12 * max(1.0, float(np.max(lam, initial=0.0)))
    support = [i for i, k in zip(rows, keep) if k]
    mult = [float(l) for l, k in zip(lam, keep) if k]
    resid = problem.norm.dual(problem.c + (lam @ problem.A[rows] if rows else 0.0))
    return KKTCertificate(tuple(problem.labels[i] for i in support), tuple(mult), resid)


def strong_uniqueness_check(problem: Problem, x_bar, tol_active: float = TOL_ACTIVE,
                            tol: float = TOL_MARGIN, cap: float = 1.0):
    """Largest delta <= cap with -c +/- delta e_i in the active cone for every i.

    A convex cone containing the cross-polytope around -c has -c in its interior
    and conversely; returns (flag, delta).
    """
    if kkt_certificate(problem, x_bar, tol_active) is None:
        raise ProblemError("x_bar is not optimal (no KKT certificate)")
    act = active_set(problem, x_bar, tol_active)
    G = problem.A[list(act.rows)]
    k, p = G.shape
    if k == 0:
        return False, 0.0
    nb = 2 * p
    # vars: lambda blocks (nb * k), delta, slack; rows: nb * p equalities + delta + slack = cap
    nv = nb * k + 2
    M = np.zeros((nb * p + 1, nv))
    h = np.zeros(nb * p + 1)
    blk = 0
    for i in range(p):
        for s in (1.0, -1.0):
            r0 = blk * p
            M[r0:r0 + p, blk * k:(blk + 1) * k] = G.T
            M[r0 + i, nb * k] = -s
            h[r0:r0 + p] = -problem.c
            blk += 1
    M[-1, nb * k] = 1.0
    M[-1, nb * k + 1] = 1.0
    h[-1] = cap
    g = np.zeros(nv)
    g[nb * k] = -1.0
    res = simplex_standard(g, M, h)
    if not res.ok:
        return False, 0.0
    delta = float(res.x[nb * k])
    scale = max(1.0, problem.norm.dual(problem.c))
    return bool(delta > tol * scale), delta


def distinct_directions(A, rows, atol: float = 1e-6):
    """Group rows whose directions agree within ``atol`` radians; returns lists of rows."""
    groups, dirs = [], []
    for r in rows:
        a = A[r]
        na = np.linalg.norm(a)
        u = a / na if na > 0 else a
        for g, d in zip(groups, dirs):
            if np.linalg.norm(u - d) <= atol:
                g.append(r)
                break
        else:
            groups.append([r])
            dirs.append(u)
    return groups


def nurnberger_check(problem: Problem, x_bar, tol_active: float = TOL_ACTIVE):
    """True iff no active D with |D| < p has -c in cone{a_t : t in D}."""
    act = active_set(problem, x_bar, tol_active)
    groups = distinct_directions(problem.A, act.rows)
    if len(groups) > MAX_DIRECTIONS:
        raise ActiveSetTooLarge(f"{len(groups)} distinct active directions exceed {MAX_DIRECTIONS}")
    reps = [g[0] for g in groups]
    p = problem.p
    for size in range(0, p):
        for D in itertools.combinations(reps, size):
            ok, _ = cone_membership(-problem.c, problem.A[list(D)])
            if ok:
                return False, tuple(problem.labels[i] for i in D)
    return True, None


def is_unique_solution(problem: Problem, x_bar, tol: float = 1e-7) -> bool:
    """Optimal face reduces to x_bar: max/min of each coordinate over the face."""
    x_bar = np.asarray(x_bar, float)
    v = float(problem.c @ x_bar)
    A = np.vstack((problem.A, problem.c))
    b = np.concatenate((problem.b, [v + 1e-12 * max(1.0, abs(v))]))
    for i in range(problem.p):
        for s in (1.0, -1.0):
            e = np.zeros(problem.p)
            e[i] = -s
            res = linprog(e, A, b)
            if res.status == "unbounded":
                return False
            if not res.ok or abs(res.x[i] - x_bar[i]) > tol * max(1.0, abs(x_bar[i])):
                return False
    return True


def certify(problem: Problem, x_bar, tol_active: float = TOL_ACTIVE) -> ConditionReport:
    x_bar = np.asarray(x_bar, float)
    notes = []
    if not feasible(problem, x_bar):
        raise ProblemError("nominal point is infeasible")
    slater, witness = slater_check(problem, x_bar)
    kkt = kkt_certificate(problem, x_bar, tol_active)
    if kkt is None:
        notes.append("x_bar fails the KKT conditions; not optimal")
        strong, margin = False, 0.0
    else:
        strong, margin = strong_uniqueness_check(problem, x_bar, tol_active)
    try:
        nurn, viol = nurnberger_check(problem, x_bar, tol_active)
    except ActiveSetTooLarge as exc:
        nurn, viol = False, None
        notes.append(str(exc))
    act = active_set(problem, x_bar, tol_active)
    return ConditionReport(
        slater=slater,
        slater_witness=None if witness is None else [float(v) for v in witness],
        kkt=kkt,
        strong_unique=strong,
        margin=margin if math.isfinite(margin) else 0.0,
        nurnberger=nurn,
        violating_subset=viol,
        active=act.indices,
        notes=notes,
    )
