"""Command-line front end.

Exit codes: 0 success, 1 input/parse error, 2 precondition failure,
3 inequality-chain violation (internal consistency alarm).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import examples
from .certify import certify
from .empirical import DEFAULT_RADII, DEFAULT_SAMPLES, NotOptimalError, estimate_clm, replay_sequence
from .lp_core import TOL_ACTIVE, Problem, ProblemError, load_problem, nominal_solution
from .moduli import compute_report
from .semiinf import QUANTITIES, refine_and_track, source_from_dict

EXIT_OK, EXIT_PARSE, EXIT_PRECONDITION, EXIT_CHAIN = 0, 1, 2, 3

log = logging.getLogger("calmness")


@dataclass
class RunConfig:
    command: str
    input: str
    norm: Optional[str] = None
    tol_active: float = TOL_ACTIVE
    radii: list = field(default_factory=lambda: list(DEFAULT_RADII))
    samples: int = DEFAULT_SAMPLES
    seed: int = 42
    mode: str = "full"
    workers: int = 1
    format: str = "json"
    levels: list = field(default_factory=list)
    quantity: str = "C3"
    skip: list = field(default_factory=list)
    sequence: Optional[str] = None

    def validate(self):
        if self.tol_active <= 0:
            raise ValueError("tolerances must be positive")
        if any(r <= 0 for r in self.radii) or any(a <= b for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("--radii must be positive and strictly decreasing")
        if self.samples < 0:
            raise ValueError("--samples must be non-negative")


class CliError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


def _load(cfg: RunConfig) -> Problem:
    try:
        prob = load_problem(cfg.input)
    except FileNotFoundError:
        raise CliError(f"{cfg.input}: no such file", EXIT_PARSE) from None
    except ProblemError as exc:
        raise CliError(f"{cfg.input}: {exc}", EXIT_PARSE) from None
    if cfg.norm:
        try:
            prob = prob.with_norm(cfg.norm)
        except (ProblemError, ValueError) as exc:
            raise CliError(str(exc), EXIT_PARSE) from None
    return prob


def _nominal(prob: Problem):
    try:
        return nominal_solution(prob)
    except ProblemError as exc:
        raise CliError(str(exc), EXIT_PRECONDITION) from None


def _kv_table(d: dict) -> str:
    w = max(len(k) for k in d) if d else 0
    return "\n".join(f"{k:<{w}}  {_fmt(v)}" for k, v in d.items()) + "\n"


def _kv_csv(d: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in d.items():
        w.writerow([k, json.dumps(v) if isinstance(v, (list, dict)) else v])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".6g")
    return json.dumps(v) if isinstance(v, (list, dict)) else str(v)


def cmd_certify(cfg: RunConfig):
    prob = _load(cfg)
    x_bar = _nominal(prob)
    try:
        rep = certify(prob, x_bar, cfg.tol_active)
    except ProblemError as exc:
        raise CliError(str(exc), EXIT_PRECONDITION) from None
    d = rep.to_dict()
    d["x_bar"] = x_bar.tolist()
    text = {"json": lambda: json.dumps(d, indent=2) + "\n", "csv": lambda: _kv_csv(d),
            "table": lambda: _kv_table(d)}[cfg.format]()
    code = EXIT_OK if rep.kkt is not None else EXIT_PRECONDITION
    return text, code


def cmd_moduli(cfg: RunConfig):
    prob = _load(cfg)
    x_bar = _nominal(prob)
    rep = compute_report(prob, x_bar, skip=cfg.skip, tol_active=cfg.tol_active)
    text = {"json": rep.to_json, "csv": rep.to_csv, "table": rep.to_table}[cfg.format]()
    if cfg.format == "json" and not text.endswith("\n"):
        text += "\n"
    return text, EXIT_OK if rep.inequality_chain_ok else EXIT_CHAIN


def cmd_empirical(cfg: RunConfig):
    prob = _load(cfg)
    x_bar = _nominal(prob)
    try:
        res = estimate_clm(prob, x_bar, cfg.radii, cfg.samples, cfg.mode, cfg.seed, cfg.workers)
    except ProblemError as exc:
        raise CliError(str(exc), EXIT_PRECONDITION) from None
    if cfg.format == "csv":
        return res.to_csv(), EXIT_OK
    d = {
        "estimate": res.estimate,
        "per_radius": {repr(k): v for k, v in res.per_radius.items()},
        "structured_max": {repr(k): v for k, v in res.structured_max.items()},
        "skipped": res.skipped,
        "diagnostic": res.diagnostic if len(cfg.radii) > 1 else "",
        "seed": cfg.seed,
        "samples": len(res.samples),
        "config": asdict(cfg),
    }
    if cfg.format == "json":
        return json.dumps(d, indent=2) + "\n", EXIT_OK
    d.pop("config")
    return _kv_table(d), EXIT_OK


def cmd_semiinf(cfg: RunConfig):
    try:
        data = json.loads(Path(cfg.input).read_text())
        src = source_from_dict(data)
    except (OSError, json.JSONDecodeError, ProblemError) as exc:
        raise CliError(f"{cfg.input}: {exc}", EXIT_PARSE) from None
    if cfg.norm:
        src.norm = cfg.norm
    levels = cfg.levels or [64, 256, 1024, 4096]
    x_bar = src.nominal_x
    if x_bar is None:
        from .semiinf import discretize
        x_bar = _nominal(discretize(src.with_grid(levels[-1])))
    kw = {}
    if cfg.quantity == "empirical":
        kw = dict(radii=cfg.radii, samples_per_radius=cfg.samples, mode=cfg.mode, seed=cfg.seed)
    table = refine_and_track(src, x_bar, levels, cfg.quantity, **kw)
    text = {"json": lambda: json.dumps(table.to_dict(), indent=2) + "\n",
            "csv": table.to_csv, "table": table.to_table}[cfg.format]()
    return text, EXIT_OK


def load_sequence(path, problem: Problem):
    """Entries as (c, b) pairs plus optional points.

    The file holds either ``{"entries": [{"b": [...], "c": [...], "x": [...]}]}``
    or a named generator ``{"generator": "example1"|"example2"|"example3", "n": [...]}``.
    """
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from None
    seq, pts, names = [], [], []
    if "generator" in data:
        gen = data["generator"]
        for n in data.get("n", []):
            if gen == "example1":
                b, x = examples.example1_sequence(int(n))
            elif gen == "example2":
                b, x = examples.example2_sequence(float(n))
            elif gen == "example3":
                b, x = examples.example3_sequence(problem, int(n))
            else:
                raise CliError(f"{path}: unknown generator {gen!r}", EXIT_PARSE)
            seq.append((problem.c, b))
            pts.append(x)
            names.append(f"{gen} n={n}")
        return seq, pts, names
    try:
        for k, e in enumerate(data["entries"]):
            b = np.asarray(e["b"], float)
            c = np.asarray(e.get("c", problem.c), float)
            if b.shape != (problem.m,) or c.shape != (problem.p,):
                raise CliError(f"{path}: entries[{k}] has wrong dimensions", EXIT_PARSE)
            seq.append((c, b))
            pts.append(None if e.get("x") is None else np.asarray(e["x"], float))
            names.append(str(e.get("name", k)))
    except (KeyError, TypeError) as exc:
        raise CliError(f"{path}: bad sequence file ({exc})", EXIT_PARSE) from None
    return seq, pts, names


def cmd_replay(cfg: RunConfig):
    prob = _load(cfg)
    if not cfg.sequence:
        raise CliError("replay needs --sequence", EXIT_PARSE)
    seq, pts, names = load_sequence(cfg.sequence, prob)
    try:
        ratios = replay_sequence(prob, seq, pts)
    except (NotOptimalError, ProblemError, ValueError) as exc:
        raise CliError(str(exc), EXIT_PRECONDITION) from None
    rows = [{"entry": n, "ratio": r} for n, r in zip(names, ratios)]
    if cfg.format == "json":
        return json.dumps({"ratios": rows}, indent=2) + "\n", EXIT_OK
    if cfg.format == "csv":
        return "entry,ratio\n" + "".join(f"{r['entry']},{r['ratio']!r}\n" for r in rows), EXIT_OK
    return "".join(f"{r['entry']:<20} {r['ratio']:.6g}\n" for r in rows), EXIT_OK


COMMANDS = {"certify": cmd_certify, "moduli": cmd_moduli, "empirical": cmd_empirical,
            "semiinf": cmd_semiinf, "replay": cmd_replay}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calmness",
                                     description="Calmness moduli of the LP argmin map.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("input", help="problem JSON file")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--format", choices=("json", "csv", "table"), default="json")
    common.add_argument("--norm", choices=("euclidean", "l2", "one", "l1", "infinity", "linf"))
    common.add_argument("--tol-active", type=float, default=TOL_ACTIVE)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("certify", parents=[common], help="Slater, KKT, strong uniqueness, Nurnberger")
    m = sub.add_parser("moduli", parents=[common], help="C1, C2, C3, exact modulus, lip, Li gamma")
    m.add_argument("--skip", action="append", default=[], metavar="CONST",
                   help="skip a constant (repeatable), e.g. --skip C2")

    def sampling_args(p):
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--radii", type=float, nargs="+", default=list(DEFAULT_RADII))
        p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
        p.add_argument("--mode", choices=("full", "b-only"), default="full")

    e = sub.add_parser("empirical", parents=[common], help="brute-force perturbation estimate")
    sampling_args(e)
    e.add_argument("--workers", type=int, default=1)
    s = sub.add_parser("semiinf", parents=[common], help="grid refinement table")
    s.add_argument("--levels", type=int, nargs="+", default=[])
    s.add_argument("--quantity", choices=QUANTITIES, default="C3")
    sampling_args(s)
    r = sub.add_parser("replay", parents=[common], help="ratios along a parameter sequence")
    r.add_argument("--sequence", required=True)
    return parser


def _configure_logging():
    level = os.environ.get("CALMNESS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    cfg = RunConfig(
        command=args.command, input=args.input, norm=args.norm, tol_active=args.tol_active,
        format=args.format,
        radii=getattr(args, "radii", list(DEFAULT_RADII)),
        samples=getattr(args, "samples", DEFAULT_SAMPLES),
        seed=getattr(args, "seed", 42),
        mode=getattr(args, "mode", "full").replace("-", "_"),
        workers=getattr(args, "workers", 1),
        levels=getattr(args, "levels", []),
        quantity=getattr(args, "quantity", "C3"),
        skip=getattr(args, "skip", []),
        sequence=getattr(args, "sequence", None),
    )
    try:
        cfg.validate()
        text, code = COMMANDS[cfg.command](cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
