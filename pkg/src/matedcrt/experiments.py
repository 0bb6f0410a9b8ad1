"""Seeded experiment runs with JSON reports and plot-ready CSV output.

A configuration is a flat INI file: an ``[experiment]`` section with the
fields shared by all kinds, and optionally a section named after the kind
for its own parameters.  Every sample ``s`` derives its seed as
``mix(seed, s)``, so a report can be regenerated from the configuration alone.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import mix
from .errors import ContaminationError, DomainError, MatedCrtError
from .estimators import (
    displacement_fit,
    fit_loglaw,
    geometric_grid,
    spectral_dimension,
    volume_exponent,
)
from .graph_core import MultiGraph, grid_border, grid_graph, random_multigraph
from .map_builder import GRAPH_VERSION, build_adjacency
from .resistance import (
    BoundaryCondition,
    ball_resistance,
    current_flow,
    dirichlet_energy,
    flow_energy,
    harmonic_solve,
    resistance_dense,
)
from .transfer import (
    energy_transfer_bound,
    exact_return_probabilities,
    lazy_equivalence_check,
    midpoint_root_coupling,
    random_path_system,
    reweight_root,
)
from .walk_gen import WALK_VERSION, WalkParams, generate_walk
from .walker import displacement_samples, green_mc, return_prob_exact, write_series_csv

KINDS = ("green-loglaw", "specdim", "displacement", "volume", "resistance-triple", "appendixA", "transfer-sweep")
REPORT_VERSION = 1


@dataclass
class ExperimentConfig:
    kind: str
    gamma: float = math.sqrt(2.0)
    window_n: int = 100_000
    mesh_k: int = 1
    samples: int = 1
    seed: int = 0
    # green-loglaw
    radii: list = field(default_factory=lambda: [8, 16, 32, 64, 128, 256])
    min_r2: float = 0.98
    # specdim
    n_max: int = 4096
    tau: float = 1e-15
    fit_lo: int = 256
    fit_hi: int = 4096
    max_rel_bound: float = 1e-9
    ds_lo: float = 1.7
    ds_hi: float = 2.3
    lattice_width: int = 0
    lattice_lo: float = 1.9
    lattice_hi: float = 2.1
    synthetic: bool = False
    # displacement / volume
    walkers: int = 10_000
    times_max: int = 65_536
    r_max: int = 64
    drop_smallest: int = 2
    vol_lo: float = 3.5
    vol_hi: float = 4.5
    reciprocity_tol: float = 0.25
    max_seeds: int = 0
    # resistance-triple / appendixA / transfer-sweep
    instances: int = 200
    max_vertices: int = 50
    tolerance: float = 1e-8
    min_coverage: float = 0.975
    confidence: float = 0.99
    lazy_steps: int = 50

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise DomainError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        WalkParams(self.gamma, self.window_n, self.mesh_k, self.seed)
        checks = [
            (self.samples >= 1, "samples must be >= 1"),
            (all(int(r) >= 1 for r in self.radii) and len(self.radii) >= 1, "radii must be positive"),
            (0 <= self.min_r2 <= 1, "min_r2 must lie in [0, 1]"),
            (self.n_max >= 1, "n_max must be >= 1"),
            (0 <= self.tau < 1, "tau must lie in [0, 1)"),
            (1 <= self.fit_lo < self.fit_hi <= self.n_max, "need 1 <= fit_lo < fit_hi <= n_max"),
            (self.walkers >= 1, "walkers must be >= 1"),
            (self.times_max >= 4, "times_max must be >= 4"),
            (self.r_max >= 4, "r_max must be >= 4"),
            (self.instances >= 1, "instances must be >= 1"),
            (2 <= self.max_vertices, "max_vertices must be >= 2"),
            (0 < self.confidence < 1, "confidence must lie in (0, 1)"),
            (0 <= self.min_coverage <= 1, "min_coverage must lie in [0, 1]"),
            (self.lazy_steps >= 0, "lazy_steps must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise DomainError(msg)

    # -- INI round trip --

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["experiment"] = {f.name: _fmt(getattr(self, f.name)) for f in fields(self)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        if "experiment" not in cp:
            raise DomainError("config needs an [experiment] section")
        raw = dict(cp["experiment"])
        kind = raw.get("kind")
        if kind and kind in cp:
            raw.update(cp[kind])
        types = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            if key not in types:
                raise DomainError(f"unknown config key {key!r}")
            kwargs[key] = _parse(types[key], value)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_ini(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_ini())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ",".join(str(int(x)) for x in v)
    return str(v)


def _parse(f, value: str):
    default = f.default_factory() if callable(f.default_factory) else f.default
    if f.name == "kind":
        return value
    if isinstance(default, bool):
        if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise DomainError(f"{f.name}: expected a boolean, got {value!r}")
        return value.lower() in ("true", "1", "yes")
    if isinstance(default, list):
        return [int(x) for x in value.split(",") if x.strip()]
    if isinstance(default, int):
        return int(float(value)) if "e" in value.lower() else int(value)
    if isinstance(default, float):
        return float(value)
    return value


# -- running ------------------------------------------------------------------------------------


def sample_seed(master: int, s: int) -> int:
    return mix(master, s)


def _pool_map(fn, items):
    threads = max(1, int(os.environ.get("MCRT_THREADS", "1") or 1))
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(min(threads, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _make_map(cfg: ExperimentConfig, seed: int):
    return build_adjacency(generate_walk(WalkParams(cfg.gamma, cfg.window_n, cfg.mesh_k, seed)))


def _green_sample(cfg: ExperimentConfig, s: int) -> dict:
    seed = sample_seed(cfg.seed, s)
    m = _make_map(cfg, seed)
    c = m.contamination_radius()
    rows = []
    for r in sorted(cfg.radii):
        if r >= c:
            rows.append({"r": r, "status": "contaminated"})
            continue
        value, residual = ball_resistance(m.graph, m.root, r)
        rows.append({"r": r, "status": "ok", "resistance": value, "residual": residual})
    ok = [(x["r"], x["resistance"]) for x in rows if x["status"] == "ok"]
    fit = fit_loglaw(ok).to_dict() if len(ok) >= 2 else None
    return {"sample": s, "seed": seed, "root_degree": int(m.graph.degrees[m.root]), "contamination_radius": c,
            "complete": len(ok) == len(rows), "points": rows, "fit": fit}


def _run_green(cfg, out: Path) -> dict:
    results = _pool_map(lambda s: _green_sample(cfg, s), list(range(cfg.samples)))
    pairs = [(p["r"], p["resistance"]) for res in results for p in res["points"] if p["status"] == "ok"]
    agg = None
    if len({r for r, _ in pairs}) >= 2:
        agg = fit_loglaw(pairs)
    complete = all(res["complete"] for res in results)
    passed = bool(complete and agg is not None and agg.log_fit.r2 >= cfg.min_r2 and agg.log_fit.slope > 0
                  and agg.log_beats_power)
    with open(out / "green_loglaw.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "r", "status", "resistance", "residual"])
        for res in results:
            for p in res["points"]:
                w.writerow([res["sample"], p["r"], p["status"], repr(p.get("resistance", "")), repr(p.get("residual", ""))])
    return {"samples": results, "aggregate": agg.to_dict() if agg else None, "complete": complete, "passed": passed,
            "points_used": len(pairs), "points_requested": cfg.samples * len(cfg.radii)}


def _synthetic_series(n_max: int):
    n = np.arange(1, n_max + 1)
    return n, 1.0 / n


def _specdim_sample(cfg, s: int, out: Path) -> dict:
    seed = sample_seed(cfg.seed, s)
    m = _make_map(cfg, seed)
    rec = {"sample": s, "seed": seed}
    try:
        series = return_prob_exact(m.graph, m.root, cfg.n_max, cfg.tau, forbidden=m.exposed)
    except ContaminationError as exc:
        rec.update(status="contaminated", reason=str(exc), steps_done=2 * exc.partial.n_max)
        return rec
    write_series_csv(series, out / f"specdim_sample{s}.csv")
    rec.update(_series_summary(series, cfg))
    return rec


def _series_summary(series, cfg) -> dict:
    p, b = series.p2n, series.trunc_bound
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = float(np.max(np.where(p[1:] > 0, b[1:] / p[1:], np.inf))) if len(p) > 1 else 0.0
    fit = spectral_dimension(series, (cfg.fit_lo, cfg.fit_hi))
    return {"status": "ok", "d_s": fit.estimate, "fit": fit.to_dict(), "max_abs_bound": float(b[-1]),
            "max_rel_bound": rel, "bound_ok": rel <= cfg.max_rel_bound,
            "monotone": series.monotone_within_bound()}


def _run_specdim(cfg, out: Path) -> dict:
    if cfg.synthetic:
        fit = spectral_dimension(_synthetic_series(cfg.n_max), (cfg.fit_lo, cfg.fit_hi))
        passed = cfg.ds_lo <= fit.estimate <= cfg.ds_hi
        return {"samples": [{"sample": 0, "status": "ok", "d_s": fit.estimate, "fit": fit.to_dict()}],
                "aggregate": {"mean_d_s": fit.estimate}, "complete": True, "passed": bool(passed)}
    results = _pool_map(lambda s: _specdim_sample(cfg, s, out), list(range(cfg.samples)))
    ok = [r for r in results if r["status"] == "ok"]
    mean_ds = float(np.mean([r["d_s"] for r in ok])) if ok else None
    agg = {"mean_d_s": mean_ds, "valid_samples": len(ok)}
    passed = bool(ok and len(ok) == cfg.samples and cfg.ds_lo <= mean_ds <= cfg.ds_hi
                  and all(r["bound_ok"] for r in ok))
    if cfg.lattice_width:
        w = cfg.lattice_width
        g = grid_graph(w)
        root = (w // 2) * w + w // 2
        try:
            series = return_prob_exact(g, root, cfg.n_max, cfg.tau, forbidden=grid_border(w))
            lat = _series_summary(series, cfg)
            write_series_csv(series, out / "specdim_lattice.csv")
            lat_ok = cfg.lattice_lo <= lat["d_s"] <= cfg.lattice_hi and lat["bound_ok"]
        except ContaminationError as exc:
            lat = {"status": "contaminated", "reason": str(exc)}
            lat_ok = False
        agg["lattice"] = lat
        passed = passed and lat_ok
    return {"samples": results, "aggregate": agg, "complete": len(ok) == cfg.samples, "passed": passed}


def _volume_sample(cfg, s: int, with_displacement: bool) -> dict:
    seed = sample_seed(cfg.seed, s)
    m = _make_map(cfg, seed)
    rec = {"sample": s, "seed": seed, "contamination_radius": m.contamination_radius()}
    try:
        v = volume_exponent(m.graph, m.root, cfg.r_max, forbidden=m.exposed, drop_smallest=cfg.drop_smallest)
        rec["volume"] = v.to_dict()
    except ContaminationError as exc:
        rec.update(status="contaminated", reason=str(exc))
        return rec
    if with_displacement:
        times = geometric_grid(cfg.times_max)
        try:
            disp = displacement_samples(m.graph, m.root, times, cfg.walkers, mix(seed, 1), forbidden=m.exposed)
        except ContaminationError as exc:
            rec.update(status="contaminated", reason=str(exc))
            return rec
        fit = displacement_fit(times[cfg.drop_smallest:], disp[:, cfg.drop_smallest:], 200, seed)
        rec["displacement"] = fit.to_dict()
        rec["median_displacement"] = np.median(disp, axis=0).tolist()
        rec["times"] = times.tolist()
    rec["status"] = "ok"
    return rec


def _run_volume(cfg, out: Path, with_displacement: bool) -> dict:
    # contaminated samples are replaced by further seeds, up to max_seeds draws
    budget = max(cfg.max_seeds, cfg.samples)
    results = []
    ok = []
    s = 0
    while len(ok) < cfg.samples and s < budget:
        batch = list(range(s, min(budget, s + cfg.samples - len(ok))))
        for rec in _pool_map(lambda i: _volume_sample(cfg, i, with_displacement), batch):
            results.append(rec)
            if rec["status"] == "ok":
                ok.append(rec)
        s = batch[-1] + 1
    d_hat = float(np.mean([r["volume"]["slope"] for r in ok])) if ok else None
    agg = {"valid_samples": len(ok), "seeds_drawn": s, "volume_slope": d_hat}
    passed = bool(len(ok) >= cfg.samples and cfg.vol_lo <= d_hat <= cfg.vol_hi)
    if with_displacement:
        beta = float(np.mean([r["displacement"]["slope"] for r in ok])) if ok else None
        agg["displacement_slope"] = beta
        agg["product"] = beta * d_hat if ok else None
        passed = passed and abs(beta * d_hat - 1) <= cfg.reciprocity_tol
    with open(out / ("displacement.csv" if with_displacement else "volume.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "status", "volume_slope", "displacement_slope"])
        for r in results:
            w.writerow([r["sample"], r["status"], repr(r.get("volume", {}).get("slope", "")),
                        repr(r.get("displacement", {}).get("slope", ""))])
    return {"samples": results, "aggregate": agg, "complete": len(ok) >= cfg.samples, "passed": passed}


def _triple_instance(cfg, i: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(i,)))
    n = int(rng.integers(3, cfg.max_vertices + 1))
    m = int(rng.integers(n - 1, 3 * n))
    g = random_multigraph(rng, n, m)
    x = int(rng.integers(0, n))
    k = int(rng.integers(1, max(2, n // 4) + 1))
    V = rng.choice(np.setdiff1d(np.arange(n), [x]), size=min(k, n - 1), replace=False)
    pf = harmonic_solve(g, BoundaryCondition(x, V))
    r_dir = 1.0 / dirichlet_energy(g, pf.values)
    r_thom = flow_energy(current_flow(g, pf).values)
    r_dense = resistance_dense(g, x, V)
    est = green_mc(g, x, V, cfg.walkers, mix(cfg.seed, i), cfg.confidence)
    deg = float(g.degrees[x])
    rel = max(abs(r_dir - r_dense), abs(r_thom - r_dense)) / r_dense
    return {"instance": i, "n": n, "edges": g.num_edges, "dirichlet": r_dir, "thomson": r_thom, "dense": r_dense,
            "rel_err": rel, "mc": est.mean / deg, "mc_low": est.ci_low / deg, "mc_high": est.ci_high / deg,
            "covered": bool(est.ci_low / deg <= r_dense <= est.ci_high / deg)}


def _run_triple(cfg, out: Path) -> dict:
    results = _pool_map(lambda i: _triple_instance(cfg, i), list(range(cfg.instances)))
    worst = max(r["rel_err"] for r in results)
    covered = sum(r["covered"] for r in results)
    with open(out / "resistance_triple.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        cols = ["instance", "n", "edges", "dirichlet", "thomson", "dense", "rel_err", "mc", "mc_low", "mc_high", "covered"]
        w.writerow(cols)
        for r in results:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    passed = worst <= cfg.tolerance and covered >= cfg.min_coverage * cfg.instances
    return {"samples": results, "aggregate": {"max_rel_err": worst, "covered": covered},
            "complete": True, "passed": bool(passed)}


def _appendix_instance(cfg, i: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(i,)))
    n = int(rng.integers(2, min(cfg.max_vertices, 20) + 1))
    g = random_multigraph(rng, n, int(rng.integers(n - 1, 2 * n + 1)))
    root = int(rng.integers(0, n))
    steps = int(rng.integers(0, cfg.lazy_steps + 1))
    tv = lazy_equivalence_check(g, root, steps)
    coupling = midpoint_root_coupling(g).matches(reweight_root(g))
    rec = {"instance": i, "n": n, "edges": g.num_edges, "steps": steps, "tv": tv, "coupling_exact": coupling}
    if 2 * g.num_edges <= 64:
        p = exact_return_probabilities(g, root, 2 * 12)[::2]
        rec["monotone_exact"] = all(a >= b for a, b in zip(p, p[1:]))
    return rec


def _run_appendix(cfg, out: Path) -> dict:
    results = _pool_map(lambda i: _appendix_instance(cfg, i), list(range(cfg.instances)))
    worst = max(r["tv"] for r in results)
    mono = [r["monotone_exact"] for r in results if "monotone_exact" in r]
    passed = worst <= 1e-12 and all(r["coupling_exact"] for r in results) and all(mono)
    return {"samples": results, "aggregate": {"max_tv": worst, "coupling_exact": all(r["coupling_exact"] for r in results),
                                              "monotone_checked": len(mono), "monotone_ok": all(mono)},
            "complete": True, "passed": bool(passed)}


def _transfer_instance(cfg, i: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(i,)))
    n1 = int(rng.integers(2, 15))
    n2 = int(rng.integers(2, 25))
    g1 = random_multigraph(rng, n1, int(rng.integers(n1 - 1, 3 * n1)))
    g2 = random_multigraph(rng, n2, int(rng.integers(n2 - 1, 3 * n2)))
    phi = rng.integers(0, n2, n1)
    paths = random_path_system(rng, g1, g2, phi)
    f = rng.normal(size=n2) * rng.exponential(size=n2)
    chk = energy_transfer_bound(g1, g2, phi, paths, f)
    return {"instance": i, "lhs": chk.lhs, "rhs": chk.rhs, "l_max": chk.l_max, "c_max": chk.c_max, "holds": chk.holds}


def _run_transfer(cfg, out: Path) -> dict:
    results = _pool_map(lambda i: _transfer_instance(cfg, i), list(range(cfg.instances)))
    violations = sum(not r["holds"] for r in results)
    return {"samples": results, "aggregate": {"violations": violations}, "complete": True, "passed": violations == 0}


_RUNNERS = {
    "green-loglaw": _run_green,
    "specdim": _run_specdim,
    "displacement": lambda cfg, out: _run_volume(cfg, out, True),
    "volume": lambda cfg, out: _run_volume(cfg, out, False),
    "resistance-triple": _run_triple,
    "appendixA": _run_appendix,
    "transfer-sweep": _run_transfer,
}


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Run ``cfg`` and write ``report.json`` (plus CSV files) into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    try:
        body = _RUNNERS[cfg.kind](cfg, out)
        error = None
    except MatedCrtError as exc:
        body = {"samples": [], "aggregate": None, "complete": False, "passed": False}
        error = f"{type(exc).__name__}: {exc}"
    report = {
        "tool": "matedcrt",
        "tool_version": __version__,
        "report_version": REPORT_VERSION,
        "formats": {"walk": WALK_VERSION, "graph": GRAPH_VERSION},
        "config": asdict(cfg),
        "threads": int(os.environ.get("MCRT_THREADS", "1") or 1),
        "error": error,
        **body,
        "elapsed_seconds": time.time() - t0,
    }
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    (out / "config.ini").write_text(cfg.to_ini())
    return report


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        x = float(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def exit_code(report: dict) -> int:
    if report.get("error"):
        return 1
    return 0 if report.get("passed") else 2
