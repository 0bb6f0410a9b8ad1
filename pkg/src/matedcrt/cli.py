"""Command-line entry point: ``matedcrt <subcommand> [options]``.

Exit status is 0 when every configured tolerance is met, 2 when a run
completed with failures, and 1 on an execution error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import MatedCrtError
from .experiments import ExperimentConfig, exit_code, run_experiment
from .graph_core import format_edge_list
from .map_builder import build_adjacency, face_census, load_graph, save_graph
from .walk_gen import WalkParams, generate_walk, load_walk, save_walk

log = logging.getLogger("matedcrt")

_KIND_OF = {
    "resist": "green-loglaw",
    "specdim": "specdim",
    "displace": "displacement",
    "volume": "volume",
    "transfer": "transfer-sweep",
    "appendixa": "appendixA",
}


def _gamma(text: str) -> float:
    """Accept plain floats and ``sqrt(x)`` forms such as ``sqrt(8/3)``."""
    t = text.strip().lower()
    if t.startswith("sqrt(") and t.endswith(")"):
        inner = t[5:-1]
        num, _, den = inner.partition("/")
        return math.sqrt(float(num) / (float(den) if den else 1.0))
    return float(t)


def _int_list(text: str) -> list:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_walk_args(p):
    p.add_argument("--gamma", type=_gamma, help="LQG parameter in (0, 2); 'sqrt(2)' accepted")
    p.add_argument("--window", type=lambda s: int(float(s)), help="half-width n of the time window")
    p.add_argument("--mesh", type=int, help="samples per unit time")
    p.add_argument("--seed", type=int, help="master seed")


def _add_experiment_args(p, kind):
    _add_walk_args(p)
    p.add_argument("--config", type=Path, help="INI file; flags override its values")
    p.add_argument("--samples", type=int)
    p.add_argument("--out", type=Path, default=Path("out"))
    if kind == "green-loglaw":
        p.add_argument("--radii", type=_int_list)
        p.add_argument("--triple", action="store_true", help="run the resistance triple-equivalence sweep instead")
        p.add_argument("--instances", type=int)
        p.add_argument("--walkers", type=int)
    if kind == "specdim":
        p.add_argument("--nmax", dest="n_max", type=int)
        p.add_argument("--trunc", dest="tau", type=float)
        p.add_argument("--fit", type=_int_list, help="fit window lo,hi")
        p.add_argument("--lattice", dest="lattice_width", type=int, help="also run a Z^2 box of this width")
        p.add_argument("--synthetic", action="store_true")
    if kind in ("displacement", "volume"):
        p.add_argument("--rmax", dest="r_max", type=int)
        p.add_argument("--max-seeds", dest="max_seeds", type=int)
    if kind == "displacement":
        p.add_argument("--walkers", type=int)
        p.add_argument("--tmax", dest="times_max", type=int)
    if kind in ("transfer-sweep", "appendixA"):
        p.add_argument("--instances", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="matedcrt", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="sample a correlated walk")
    _add_walk_args(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("build", help="build the map of a walk")
    p.add_argument("--walk", type=Path, help="walk file; otherwise generate from the walk flags")
    _add_walk_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--edges", type=Path, help="also write a text edge list")
    p.add_argument("--census", action="store_true", help="print the face census")

    for name, kind in _KIND_OF.items():
        _add_experiment_args(sub.add_parser(name, help=f"run the {kind} experiment"), kind)

    p = sub.add_parser("report", help="summarise a report.json")
    p.add_argument("report", type=Path)
    return ap


def _config_from(args, kind: str) -> ExperimentConfig:
    base = ExperimentConfig.load(args.config).__dict__ if getattr(args, "config", None) else {}
    values = dict(base)
    values["kind"] = kind
    mapping = {"gamma": "gamma", "window": "window_n", "mesh": "mesh_k", "seed": "seed", "samples": "samples",
               "radii": "radii", "instances": "instances", "walkers": "walkers", "n_max": "n_max", "tau": "tau",
               "lattice_width": "lattice_width", "r_max": "r_max", "max_seeds": "max_seeds", "times_max": "times_max"}
    for flag, key in mapping.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    if getattr(args, "synthetic", False):
        values["synthetic"] = True
    fit = getattr(args, "fit", None)
    if fit:
        values["fit_lo"], values["fit_hi"] = fit
    if getattr(args, "n_max", None) is not None and not fit:
        # default fit window: the top four octaves below n_max
        values["fit_hi"] = args.n_max
        values["fit_lo"] = max(1, args.n_max // 16)
    return ExperimentConfig(**values)


def _walk_params(args) -> WalkParams:
    return WalkParams(args.gamma if args.gamma is not None else math.sqrt(2.0),
                      args.window if args.window is not None else 1000,
                      args.mesh if args.mesh is not None else 1,
                      args.seed if args.seed is not None else 0)


def _summary(report: dict) -> str:
    agg = report.get("aggregate")
    status = "PASS" if report.get("passed") else ("ERROR" if report.get("error") else "FAIL")
    lines = [f"{report['config']['kind']}: {status}"]
    if report.get("error"):
        lines.append(f"  error: {report['error']}")
    if agg:
        lines.append("  " + json.dumps(agg, sort_keys=True, default=str)[:2000])
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.cmd == "gen":
            walk = generate_walk(_walk_params(args))
            save_walk(walk, args.out)
            print(f"wrote {len(walk.samples_l)} samples to {args.out}")
            return 0
        if args.cmd == "build":
            walk = load_walk(args.walk) if args.walk else generate_walk(_walk_params(args))
            g = build_adjacency(walk)
            save_graph(g, args.out)
            if args.edges:
                args.edges.write_text(format_edge_list(g.graph))
            print(f"{g.n_vertices} vertices, {len(g.edges)} edges -> {args.out}")
            if args.census:
                c = face_census(g)
                print(f"faces {c.n_faces}, inner face degrees {dict(sorted(c.inner_degrees.items()))}, "
                      f"euler characteristic {c.euler_characteristic}")
            return 0
        if args.cmd == "report":
            report = json.loads(args.report.read_text())
            print(_summary(report))
            return exit_code(report)
        kind = _KIND_OF[args.cmd]
        if args.cmd == "resist" and args.triple:
            kind = "resistance-triple"
        cfg = _config_from(args, kind)
        report = run_experiment(cfg, args.out)
        print(_summary(report))
        return exit_code(report)
    except (MatedCrtError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
