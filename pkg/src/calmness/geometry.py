"""Max-of-affine functions, their subdifferentials, and dual-norm distances to polytopes."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lp_core import NormSpec, SingularMatrixError, inverse_matrix, is_singular, linprog

WOLFE_TOL = 1e-11


class ConsistencyError(RuntimeError):
    """Two independent evaluations of the same quantity disagree."""


@dataclass(frozen=True, eq=False)
class SupFunction:
    """x -> max_i (<g_i, x> + beta_i)."""

    gradients: np.ndarray
    offsets: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.gradients, dtype=float))
        beta = np.asarray(self.offsets, dtype=float).ravel()
        if G.shape[0] == 0 or G.shape[0] != beta.size:
            raise ValueError("SupFunction needs one offset per gradient and at least one term")
        object.__setattr__(self, "gradients", G)
        object.__setattr__(self, "offsets", beta)
        labels = tuple(self.labels) or tuple(str(i) for i in range(G.shape[0]))
        object.__setattr__(self, "labels", labels)

    def terms(self, x) -> np.ndarray:
        return self.gradients @ np.asarray(x, dtype=float) + self.offsets

    def value(self, x) -> float:
        return float(self.terms(x).max())

    def attained(self, x, tol_att: Optional[float] = None) -> np.ndarray:
        t = self.terms(x)
        fx = t.max()
        if tol_att is None:
            tol_att = 1e-9 * max(1.0, abs(fx))
        return np.flatnonzero(t >= fx - tol_att)


@dataclass(frozen=True, eq=False)
class Polytope:
    vertices: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if V.shape[0] == 0:
            raise ValueError("empty polytope")
        object.__setattr__(self, "vertices", V)

    def deduplicated(self) -> np.ndarray:
        keep = []
        for v in self.vertices:
            if not any(np.max(np.abs(v - w)) <= 1e-12 for w in keep):
                keep.append(v)
        return np.array(keep)


def subdifferential(f: SupFunction, x, tol_att: Optional[float] = None) -> Polytope:
    """Convex hull of the gradients of the terms attaining the max at x."""
    idx = f.attained(x, tol_att)
    return Polytope(f.gradients[idx], tuple(f.labels[i] for i in idx))


@dataclass
class NearestPoint:
    distance: float
    witness: np.ndarray
    coefficients: np.ndarray


def _affine_minimizer(Q):
    """Coefficients v (sum 1) minimizing ||v @ Q||_2."""
    k = Q.shape[0]
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = Q @ Q.T
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:k]


def wolfe_min_norm_point(P, tol: float = WOLFE_TOL, max_cycles: Optional[int] = None):
    """Wolfe's algorithm for the Euclidean min-norm point of conv(rows of P).

    Returns (point, coefficient vector over the rows of P).
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    k = P.shape[0]
    if max_cycles is None:
        max_cycles = 10 * k + 10
    scale = max(1.0, float(np.max(np.sum(P * P, axis=1))))
    j = int(np.argmin(np.sum(P * P, axis=1)))
    S = [j]
    w = np.array([1.0])
    x = P[j].copy()
    for _ in range(max_cycles):
        dots = P @ x
        i = int(np.argmin(dots))
        if x @ x - dots[i] <= tol * scale or i in S:
            break
        S.append(i)
        w = np.append(w, 0.0)
        while True:
            v = _affine_minimizer(P[S])
            if np.all(v > 1e-14):
                w = v
                break
            shrink = v < w
            theta = np.min(w[shrink] / (w[shrink] - v[shrink])) if np.any(shrink) else 1.0
            theta = min(max(theta, 0.0), 1.0)
            w = theta * v + (1.0 - theta) * w
            keep = w > 1e-14
            if not np.any(keep):
                keep[int(np.argmax(w))] = True
            S = [s for s, kk in zip(S, keep) if kk]
            w = w[keep]
            w = w / w.sum()
        x = w @ P[S]
    coeffs = np.zeros(k)
    coeffs[S] = w
    return x, coeffs


def _polyhedral_min(V, dual_kind):
    """LP for min ||sum l_i v_i||_dual over the simplex, dual norm l1 or linf."""
    k, p = V.shape
    if dual_kind == "infinity":
        # vars (lambda, t): min t, -t <= (V' lambda)_j <= t
        c = np.concatenate((np.zeros(k), [1.0]))
        A_ub = np.vstack((
            np.hstack((V.T, -np.ones((p, 1)))),
            np.hstack((-V.T, -np.ones((p, 1)))),
            np.hstack((-np.eye(k), np.zeros((k, 1)))),
        ))
        b_ub = np.zeros(2 * p + k)
        A_eq = np.concatenate((np.ones(k), [0.0]))[None, :]
    else:
        # vars (lambda, s): min sum s, -s <= V' lambda <= s
        c = np.concatenate((np.zeros(k), np.ones(p)))
        A_ub = np.vstack((
            np.hstack((V.T, -np.eye(p))),
            np.hstack((-V.T, -np.eye(p))),
            np.hstack((-np.eye(k), np.zeros((k, p)))),
        ))
        b_ub = np.zeros(2 * p + k)
        A_eq = np.concatenate((np.ones(k), np.zeros(p)))[None, :]
    res = linprog(c, A_ub, b_ub, A_eq, [1.0])
    if not res.ok:
        raise RuntimeError(f"min dual norm LP ended {res.status}")
    lam = np.maximum(res.x[:k], 0.0)
    lam = lam / lam.sum()
    return lam


def min_dual_norm_point(P, norm: NormSpec) -> NearestPoint:
    """d_*(0, conv P) with witness u = sum l_i v_i and certifying coefficients l."""
    V = P.vertices if isinstance(P, Polytope) else np.atleast_2d(np.asarray(P, dtype=float))
    dual_kind = norm.dual_spec.kind
    if dual_kind == "euclidean":
        _, lam = wolfe_min_norm_point(V)
    else:
        lam = _polyhedral_min(V, dual_kind)
    u = lam @ V
    return NearestPoint(norm.dual(u), u, lam)


def sign_vectors(p: int):
    return (np.array(s, dtype=float) for s in itertools.product((-1.0, 1.0), repeat=p))


def inverse_norm_by_signs(A, norm: NormSpec) -> float:
    """max over y in {-1,1}^p of ||A^{-1} y|| (R^p with ||.||, R^D with sup norm)."""
    Ainv = inverse_matrix(A)
    return max(norm.norm(Ainv @ y) for y in sign_vectors(Ainv.shape[0]))


def inverse_norm_by_dual(A, norm: NormSpec) -> float:
    """1 / min_{||l||_1 = 1} ||A' l||_*, minimizing over each facet of the l1 sphere."""
    A = np.asarray(A, dtype=float)
    if is_singular(A):
        raise SingularMatrixError("matrix is singular to working precision")
    p = A.shape[0]
    best = np.inf
    # facets come in +/- pairs with equal value; fix the first sign
    for s in itertools.product((-1.0, 1.0), repeat=p - 1):
        signs = np.array((1.0,) + s)
        d = min_dual_norm_point(signs[:, None] * A, norm).distance
        best = min(best, d)
    return 1.0 / best


def inverse_norm(A, norm: NormSpec, rtol: float = 1e-6) -> float:
    """||A^{-1}|| from sup-norm to ||.||, computed two ways and cross-checked."""
    a = inverse_norm_by_signs(A, norm)
    b = inverse_norm_by_dual(A, norm)
    if abs(a - b) > rtol * max(1.0, a):
        raise ConsistencyError(f"inverse norm mismatch: sign route {a!r} vs dual route {b!r}")
    return a
