"""Least-squares fits for scaling exponents and the logarithmic Green law."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ContaminationError, DomainError
from .graph_core import MultiGraph, bfs_distances, multi_source_distances
from .walker import ReturnProbSeries, displacement_samples


@dataclass
class FitResult:
    """Straight-line fit ``y = slope * x + intercept``.

    ``estimate`` is the derived quantity of interest (e.g. ``-2 * slope`` for
    the spectral dimension) and ``estimate_stderr`` its standard error.
    """

    slope: float
    intercept: float
    slope_stderr: float
    r2: float
    window: tuple
    n_points: int
    rss: float
    estimate: float = float("nan")
    estimate_stderr: float = float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def ols(x, y, window=None) -> FitResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("x and y must be 1-d arrays of equal length")
    if len(x) < 2:
        raise DomainError("need at least two points")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DomainError("non-finite input")
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0.0:
        raise DomainError("x values must not all coincide")
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    rss = float(resid @ resid)
    tss = float(((y - ym) ** 2).sum())
    # a constant series is fitted perfectly by a flat line
    r2 = 1.0 if tss <= 1e-300 else min(1.0, max(0.0, 1.0 - rss / tss))
    se = float(np.sqrt(rss / (len(x) - 2) / sxx)) if len(x) > 2 else float("nan")
    if window is None:
        window = (float(x.min()), float(x.max()))
    return FitResult(slope, intercept, se, r2, tuple(window), len(x), rss, slope, se)


def geometric_grid(top: int, bottom: int = 1) -> np.ndarray:
    """Powers of two in ``[bottom, top]``."""
    if bottom < 1 or top < bottom:
        raise DomainError("need 1 <= bottom <= top")
    k0 = int(np.ceil(np.log2(bottom)))
    k1 = int(np.floor(np.log2(top)))
    return 2 ** np.arange(k0, k1 + 1, dtype=np.int64)


def _with_estimate(fit: FitResult, factor: float) -> FitResult:
    fit.estimate = factor * fit.slope
    fit.estimate_stderr = abs(factor) * fit.slope_stderr
    return fit


def spectral_dimension(series, window=None) -> FitResult:
    """``d_s = -2 * slope`` of ``log P(2n)`` against ``log n``.

    ``series`` is a :class:`ReturnProbSeries` or a pair ``(n, p2n)``; the window
    ``(n_lo, n_hi)`` is inclusive and defaults to every ``n >= 1``.
    """
    if isinstance(series, ReturnProbSeries):
        n, p = series.n, series.p2n
    else:
        n, p = (np.asarray(a, dtype=float) for a in series)
    lo, hi = window if window is not None else (1, n.max())
    sel = (n >= lo) & (n <= hi)
    if lo < 1 or sel.sum() < 2:
        raise DomainError(f"window {window} must hold at least two n >= 1")
    if (p[sel] <= 0).any():
        raise DomainError("return probabilities must be positive inside the fit window")
    fit = ols(np.log(n[sel]), np.log(p[sel]), (lo, hi))
    return _with_estimate(fit, -2.0)


def ball_sizes(g: MultiGraph, root: int, radii) -> np.ndarray:
    radii = np.asarray(radii, dtype=np.int64)
    dist, order = bfs_distances(g, root, int(radii.max()))
    counts = np.bincount(dist[order], minlength=int(radii.max()) + 1).cumsum()
    return counts[radii]


def volume_exponent(g: MultiGraph, root: int, r_max: int, forbidden=None, drop_smallest: int = 2) -> FitResult:
    """Slope of ``log #B_r`` against ``log r`` for ``r`` in powers of two up to ``r_max``."""
    radii = geometric_grid(r_max)[drop_smallest:]
    if len(radii) < 2:
        raise DomainError("r_max too small for a fit after dropping the smallest scales")
    if forbidden is not None:
        dist, order = bfs_distances(g, root, int(r_max))
        if forbidden[order].any():
            raise ContaminationError(f"B_{r_max}({root}) reaches window-contaminated vertices")
    sizes = ball_sizes(g, root, radii)
    fit = ols(np.log(radii), np.log(sizes), (int(radii[0]), int(radii[-1])))
    return fit


def _median_slope(logt, disp):
    med = np.median(disp, axis=0)
    if (med <= 0).any():
        return None
    return ols(logt, np.log(med)).slope


def displacement_exponent(g: MultiGraph, root: int, times, walkers: int, seed: int = 0, forbidden=None,
                          bootstrap: int = 200, drop_smallest: int = 0) -> FitResult:
    """Slope of ``log median dist(X_n, root)`` against ``log n``.

    The standard error comes from resampling walkers with replacement.
    """
    times = np.sort(np.asarray(times, dtype=np.int64))[drop_smallest:]
    if len(times) < 2 or times[0] < 1:
        raise DomainError("need at least two positive times")
    disp = displacement_samples(g, root, times, walkers, seed, forbidden)
    return displacement_fit(times, disp, bootstrap, seed)


def displacement_fit(times, disp, bootstrap: int = 200, seed: int = 0) -> FitResult:
    """Median-displacement fit from a ``walkers x times`` matrix of distances."""
    times = np.asarray(times, dtype=float)
    med = np.median(disp, axis=0)
    if (med <= 0).any():
        raise DomainError("median displacement is zero at some fit time")
    logt = np.log(times)
    fit = ols(logt, np.log(med), (int(times[0]), int(times[-1])))
    if bootstrap > 1:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
        slopes = []
        w = disp.shape[0]
        for _ in range(bootstrap):
            s = _median_slope(logt, disp[rng.integers(0, w, w)])
            if s is not None:
                slopes.append(s)
        if len(slopes) > 1:
            fit.slope_stderr = float(np.std(slopes, ddof=1))
    fit.estimate_stderr = fit.slope_stderr
    return fit


@dataclass
class LogLawFit:
    log_fit: FitResult
    power_exponent: float
    power_prefactor: float
    power_rss: float

    @property
    def log_beats_power(self) -> bool:
        return self.log_fit.rss < self.power_rss

    def to_dict(self) -> dict:
        return {
            "log_fit": self.log_fit.to_dict(),
            "power_exponent": self.power_exponent,
            "power_prefactor": self.power_prefactor,
            "power_rss": self.power_rss,
            "log_beats_power": self.log_beats_power,
        }


def fit_loglaw(pairs) -> LogLawFit:
    """Fit ``value = a log r + b`` and the best ``value = c r^e`` with ``|e| <= 10``.

    Both are least-squares fits in value space, so their residual sums compare directly.
    """
    pairs = [(float(r), float(v)) for r, v in pairs]
    if len(pairs) < 2:
        raise DomainError("need at least two (r, value) pairs")
    r = np.array([p[0] for p in pairs])
    v = np.array([p[1] for p in pairs])
    if (r <= 0).any():
        raise DomainError("r must be positive")
    if len(np.unique(r)) < 2:
        raise DomainError("need at least two distinct r")
    fit = ols(np.log(r), v)
    fit.window = (float(r.min()), float(r.max()))
    c, e, rss = _power_fit(r, v)
    return LogLawFit(fit, e, c, rss)


def _power_fit(r, v, e_max: float = 10.0):
    # for a fixed exponent the best prefactor is linear least squares, so only e is searched
    lr = np.log(r) - np.log(r).mean()

    def profile(e):
        x = np.exp(e * lr)
        c = float(x @ v / (x @ x))
        d = c * x - v
        return float(d @ d), c

    grid = np.linspace(-e_max, e_max, 401)
    best = min(grid, key=lambda e: profile(e)[0])
    step = grid[1] - grid[0]
    sol = minimize_scalar(lambda e: profile(e)[0], bounds=(max(-e_max, best - step), min(e_max, best + step)),
                          method="bounded", options={"xatol": 1e-12})
    e = float(sol.x) if profile(sol.x)[0] <= profile(best)[0] else float(best)
    rss, c = profile(e)
    # undo the centring: c * (r / gm)^e = (c * gm^-e) * r^e
    return c * float(np.exp(-e * np.log(r).mean())), e, rss


def write_fit_points(path, x, y, fit: FitResult, xlabel="x", ylabel="y") -> None:
    """Plot-ready columns ``x y fitted residual``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([xlabel, ylabel, "fitted", "residual"])
        for a, b in zip(x.tolist(), y.tolist()):
            f = fit.slope * a + fit.intercept
            w.writerow([repr(a), repr(b), repr(f), repr(b - f)])


def contamination_distance(g: MultiGraph, forbidden) -> np.ndarray:
    """Distance from every vertex to the nearest contaminated vertex."""
    return multi_source_distances(g, np.nonzero(forbidden)[0])
