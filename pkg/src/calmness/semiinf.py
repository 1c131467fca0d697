"""Discretization of linear semi-infinite programs with one-parameter index families.

A family contributes rows (a(t), b(t)) for t on a uniform grid over
[t_lo, t_hi], both endpoints included.  Samplers are either named builtins or
polynomial coefficient tables, so JSON sources never execute code.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .lp_core import FamilyBlock, NormSpec, Problem, ProblemError

log = logging.getLogger(__name__)

BUILTIN_SAMPLERS: dict = {
    "circle": lambda t: np.array([math.cos(t), math.sin(t)]),
}

_PI_RE = re.compile(r"^\s*([+-]?\d*\.?\d*(?:[eE][+-]?\d+)?)\s*\*?\s*pi\s*$")


def parse_param(v) -> float:
    """A float, or a string such as "pi", "-pi", "0.5pi", "2*pi"."""
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        m = _PI_RE.match(v)
        if m:
            k = m.group(1)
            k = 1.0 if k in ("", "+") else -1.0 if k == "-" else float(k)
            return k * math.pi
        try:
            return float(v)
        except ValueError:
            pass
    raise ProblemError(f"cannot parse parameter value {v!r}")


def polynomial(coeffs) -> Callable[[float], float]:
    """Coefficients in increasing degree."""
    cf = [float(c) for c in np.atleast_1d(coeffs)]
    return lambda t: float(np.polynomial.polynomial.polyval(t, cf))


@dataclass
class Family:
    name: str
    a: Callable[[float], np.ndarray]
    b: Callable[[float], float]
    t_lo: float
    t_hi: float
    grid: int
    source: dict = field(default_factory=dict)

    def params(self) -> np.ndarray:
        if self.t_lo == self.t_hi:
            return np.array([self.t_lo])
        return np.linspace(self.t_lo, self.t_hi, self.grid)

    def label(self, t: float) -> str:
        for k, name in ((1, "pi"), (-1, "-pi")):
            if t == k * math.pi:
                return f"{self.name}:{name}"
        return f"{self.name}:{t:.12g}"


@dataclass
class SemiInfSource:
    p: int
    cost: np.ndarray
    families: list
    discrete: list = field(default_factory=list)
    norm: str = "euclidean"
    nominal_x: Optional[np.ndarray] = None

    def __post_init__(self):
        self.cost = np.asarray(self.cost, float)
        if self.cost.size != self.p:
            raise ProblemError(f"cost has length {self.cost.size}, expected p={self.p}")
        for fam in self.families:
            _probe(fam, self.p)

    def with_grid(self, grid: int) -> "SemiInfSource":
        fams = [replace(f, grid=int(grid)) for f in self.families]
        return replace(self, families=fams)


def _probe(fam: Family, p: int):
    if fam.t_lo > fam.t_hi:
        raise ProblemError(f"family {fam.name}: range [{fam.t_lo}, {fam.t_hi}] is reversed")
    if fam.t_lo == fam.t_hi:
        log.warning("family %s: degenerate range collapses to one index", fam.name)
    elif fam.grid < 2:
        raise ProblemError(f"family {fam.name}: grid must be >= 2 to include both endpoints")
    for t in (fam.t_lo, 0.5 * (fam.t_lo + fam.t_hi), fam.t_hi):
        with np.errstate(all="ignore"):
            a = np.asarray(fam.a(t), float)
            bt = float(fam.b(t))
        if a.shape != (p,) or not np.all(np.isfinite(a)) or not math.isfinite(bt):
            raise ProblemError(f"family {fam.name}: sampler not finite of length {p} at t={t}")


def _family_from_dict(d: dict, p: int, k: int) -> Family:
    try:
        name = str(d.get("name", f"f{k}"))
        lo, hi = (parse_param(v) for v in d["range"])
        grid = int(d["grid"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemError(f"families[{k}]: {exc}") from None
    sampler = d.get("sampler")
    if sampler is not None:
        if sampler not in BUILTIN_SAMPLERS:
            raise ProblemError(f"families[{k}]: unknown sampler {sampler!r}")
        a = BUILTIN_SAMPLERS[sampler]
    else:
        try:
            polys = [polynomial(cf) for cf in d["a"]]
        except KeyError:
            raise ProblemError(f"families[{k}]: needs 'sampler' or polynomial 'a'") from None
        if len(polys) != p:
            raise ProblemError(f"families[{k}].a has {len(polys)} components, expected p={p}")
        a = lambda t, polys=polys: np.array([f(t) for f in polys])
    b = polynomial(d.get("b", 1.0))
    return Family(name, a, b, lo, hi, grid, dict(d))


def source_from_dict(data: dict) -> SemiInfSource:
    try:
        p = int(data["p"])
        cost = data["cost"]
    except KeyError as exc:
        raise ProblemError(f"missing field {exc.args[0]!r}") from None
    fams = [_family_from_dict(d, p, k) for k, d in enumerate(data.get("families", []))]
    discrete = []
    for k, row in enumerate(data.get("rows", [])):
        try:
            discrete.append((str(row.get("label", k + 1)), [float(v) for v in row["a"]],
                             float(row["b"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProblemError(f"rows[{k}]: {exc}") from None
        if len(discrete[-1][1]) != p:
            raise ProblemError(f"rows[{k}].a has wrong length, expected p={p}")
    nx = data.get("nominal_x")
    return SemiInfSource(p, np.asarray(cost, float), fams, discrete, data.get("norm", "euclidean"),
                         None if nx is None else np.asarray(nx, float))


def discretize(source: SemiInfSource) -> Problem:
    """Finite Problem: family rows in grid order, then the discrete indices."""
    labels, A, b, blocks = [], [], [], []
    for fam in source.families:
        ts = fam.params()
        start = len(labels)
        for t in ts:
            labels.append(fam.label(float(t)))
            A.append(np.asarray(fam.a(float(t)), float))
            b.append(float(fam.b(float(t))))
        step = float(ts[1] - ts[0]) if ts.size > 1 else 0.0
        blocks.append(FamilyBlock(fam.name, tuple(range(start, len(labels))),
                                  tuple(float(t) for t in ts), step))
    for lab, a, bt in source.discrete:
        labels.append(lab)
        A.append(np.asarray(a, float))
        b.append(bt)
    origin = "discretized" if source.families else "finite"
    return Problem(labels, np.array(A), np.array(b), source.cost, NormSpec(source.norm),
                   tuple(blocks), source.nominal_x, origin)


def family_values(problem: Problem, name: str, fn: Callable[[float], float]) -> np.ndarray:
    """Evaluate fn(t) on the grid of one family, e.g. to build a perturbed b."""
    for blk in problem.families:
        if blk.name == name:
            return np.array([fn(t) for t in blk.params])
    raise KeyError(name)


@dataclass
class ConvergenceTable:
    quantity: str
    rows: list  # (grid, value or None, error message or "")
    delta: Optional[float]
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"quantity": self.quantity, "delta": self.delta, "warnings": self.warnings,
                "levels": [{"grid": g, "value": v, "error": e} for g, v, e in self.rows]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["grid", "value", "error"])
        w.writerows([g, "" if v is None else repr(v), e] for g, v, e in self.rows)
        return buf.getvalue()

    def to_table(self) -> str:
        lines = [f"{'grid':>8}  {'value':>12}  error"]
        for g, v, e in self.rows:
            lines.append(f"{g:>8}  {'-' if v is None else format(v, '.6g'):>12}  {e}")
        if self.delta is not None:
            lines.append(f"last-level delta {self.delta:.6g}")
        return "\n".join(lines + self.warnings) + "\n"


QUANTITIES = ("C3", "C1_sampling", "empirical")


def _evaluate(problem: Problem, x_bar, quantity: str, **kw) -> float:
    if quantity == "C3":
        from .moduli import C3_upper_bound
        return C3_upper_bound(problem, x_bar)[0]
    if quantity == "C1_sampling":
        from .moduli import C1_sampling
        return C1_sampling(problem, x_bar, **kw)
    if quantity == "empirical":
        from .empirical import estimate_clm
        return estimate_clm(problem, x_bar, **kw).estimate
    raise ValueError(f"unknown quantity {quantity!r}; choose from {QUANTITIES}")


def refine_and_track(source: SemiInfSource, x_bar, levels: Sequence[int],
                     quantity: str = "C3", stabilize_tol: float = 1e-3, **kw) -> ConvergenceTable:
    """Evaluate a modulus quantity on successively finer grids.

    Per-level failures are recorded in the table.  The Cauchy diagnostic is the
    absolute change over the last two successful levels.
    """
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}; choose from {QUANTITIES}")
    rows = []
    for g in levels:
        try:
            prob = discretize(source.with_grid(g))
            rows.append((int(g), float(_evaluate(prob, x_bar, quantity, **kw)), ""))
        except (ProblemError, ValueError, np.linalg.LinAlgError) as exc:
            rows.append((int(g), None, str(exc)))
    vals = [v for _, v, _ in rows if v is not None]
    delta = abs(vals[-1] - vals[-2]) if len(vals) >= 2 else None
    warnings = []
    if len(vals) >= 3:
        diffs = np.diff(vals)
        if np.any(np.abs(diffs[1:]) > np.abs(diffs[:-1]) + stabilize_tol):
            warnings.append("warning: successive changes are not shrinking")
    if delta is not None and delta > stabilize_tol:
        warnings.append(f"warning: last-level change {delta:.3g} exceeds {stabilize_tol:g}")
    for w in warnings:
        log.warning(w)
    return ConvergenceTable(quantity, rows, delta, warnings)
