"""Shared builders for randomized test problems."""
import numpy as np

from calmness.certify import slater_check, strong_uniqueness_check
from calmness.lp_core import Problem


def random_strong_problem(rng, p=2, n_active=(2, 4), n_inactive=(0, 2), norm="euclidean"):
    """x_bar = 0 with -c strictly inside the cone of two independent active rows."""
    while True:
        k = int(rng.integers(n_active[0], n_active[1] + 1))
        j = int(rng.integers(n_inactive[0], n_inactive[1] + 1))
        A_act = rng.normal(size=(k, p))
        A_in = rng.normal(size=(j, p))
        lam = rng.uniform(0.2, 1.0, size=p)
        c = -(lam @ A_act[:p])
        A = np.vstack((A_act, A_in))
        b = np.concatenate((np.zeros(k), rng.uniform(0.5, 2.0, size=j)))
        if abs(np.linalg.det(A_act[:p])) < 0.2:
            continue
        labels = [str(i + 1) for i in range(k + j)]
        prob = Problem(labels, A, b, c, nominal_x=np.zeros(p))
        prob = prob.with_norm(norm)
        if not strong_uniqueness_check(prob, np.zeros(p))[0]:
            continue
        if not slater_check(prob, np.zeros(p))[0]:
            continue
        return prob


def simplex_grid_min(V, dual_ord, step=1e-3):
    """min ||sum l_i v_i||_dual with l on a grid of the simplex, at most 4 points in the plane.

    A point of the hull of four planar points lies in the hull of three of them,
    so four-point hulls are covered by gridding each triangle.
    """
    import itertools
    V = np.atleast_2d(V)
    k = V.shape[0]
    n = int(round(1 / step))
    if k == 1:
        return float(np.linalg.norm(V[0], dual_ord))
    if k == 2:
        l = np.linspace(0, 1, n + 1)[:, None]
        return float(np.min(np.linalg.norm(l * V[0] + (1 - l) * V[1], dual_ord, axis=1)))
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = i + j <= n
    l1, l2 = (i[keep] * step)[:, None], (j[keep] * step)[:, None]
    best = np.inf
    for a, b, c in itertools.combinations(range(k), 3):
        pts = l1 * V[a] + l2 * V[b] + (1 - l1 - l2) * V[c]
        best = min(best, float(np.min(np.linalg.norm(pts, dual_ord, axis=1))))
    return best


def lambda_grid_search(prob, x_bar, n_angles=3600, alpha_step=1e-2):
    """min over (alpha, z), ||z|| = 1, <a_t,z> >= alpha > 0 on active t, of -<c,z>/alpha.

    For a fixed direction z the objective decreases in alpha, so the grid over
    alpha is completed by the largest admissible alpha for that z.
    """
    import math
    from calmness.lp_core import active_set
    A = prob.A[list(active_set(prob, x_bar).rows)]
    best = math.inf
    for th in 2 * np.pi * np.arange(n_angles) / n_angles:
        z = np.array([math.cos(th), math.sin(th)])
        z /= prob.norm.norm(z)
        amax = float(np.min(A @ z))
        if amax <= 0:
            continue
        for a in np.append(np.arange(alpha_step, amax, alpha_step), amax):
            best = min(best, float(-prob.c @ z) / a)
    return best


def random_slater_problems(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        prob = random_strong_problem(rng)
        if slater_check(prob, np.zeros(prob.p))[0]:
            out.append(prob)
    return out
