"""Market index series, price-change distributions, and tail estimation.

The observable is the market index: the mean retail price across middlemen,
sampled once per slow step. Its step-to-step changes get log-binned and the
positive tail fitted two ways: a Hill estimator on the samples above a
cutoff, and a least-squares line through the log-binned density.

Exponent conventions. For a power-law survival tail P(X > x) ~ x^-alpha, the
density falls like x^-(alpha+1). The Hill estimator reports alpha directly.
The log-log regression fits the density, so its |slope| estimates alpha + 1;
:class:`TailFit` carries the raw slope and its |slope| as the exponent, and
conversion between the two conventions is left to the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HILL = "hill"
LOGLOG = "loglog-regression"

DEFAULT_MIN_TAIL = 50
DEFAULT_XMIN_QUANTILE = 0.9
# Hill estimates at these quantiles probe xmin sensitivity; a spread beyond
# DRIFT_TOLERANCE marks the sample as not power-law-like.
DRIFT_QUANTILES = (0.8, 0.9, 0.95)
DRIFT_TOLERANCE = 0.25


class FitRefusedError(ValueError):
    """Too few tail samples to fit; carries the offending count."""

    def __init__(self, n_tail: int, minimum: int):
        super().__init__(f"tail has {n_tail} samples, need at least {minimum}")
        self.n_tail = n_tail
        self.minimum = minimum


@dataclass(frozen=True)
class IndexSeries:
    """Market index sampled at strictly increasing slow steps."""

    steps: tuple
    values: tuple

    def __post_init__(self):
        if len(self.steps) != len(self.values):
            raise ValueError("steps and values must have equal length")
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise ValueError("steps must be strictly increasing")
        if any(v <= 0 for v in self.values):
            raise ValueError("index values must be positive")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class DeltaDistribution:
    """Consecutive index differences, in series order."""

    deltas: tuple

    def positive(self) -> np.ndarray:
        d = np.asarray(self.deltas)
        return d[d > 0]

    def magnitudes(self) -> np.ndarray:
        d = np.asarray(self.deltas)
        return np.abs(d[d != 0])

    def __len__(self):
        return len(self.deltas)


@dataclass(frozen=True)
class Histogram:
    """Log-binned histogram: geometric edges, raw counts, density estimate."""

    edges: tuple
    counts: tuple
    densities: tuple
    bins_per_decade: int

    def centers(self) -> np.ndarray:
        e = np.asarray(self.edges)
        return np.sqrt(e[:-1] * e[1:])

    def widths(self) -> np.ndarray:
        e = np.asarray(self.edges)
        return np.diff(e)


@dataclass(frozen=True)
class TailFit:
    """One tail-estimation result.

    ``exponent`` is the Hill tail index alpha for the hill estimator, and
    |slope| of the fitted log-density line for the regression estimator
    (which targets alpha + 1; see the module docstring).
    """

    estimator: str
    exponent: float
    stderr: float
    xmin: float
    n_tail: int
    slope: float = math.nan           # raw regression slope, loglog only
    drift_ratio: float = math.nan     # max/min Hill estimate across quantiles
    flagged_non_power_law: bool = False


@dataclass(frozen=True)
class AbsorbingDetection:
    """Earliest slow step opening a qualifying window, if one exists."""

    found: bool
    step: int
    longest_run: int


def market_index(prices) -> float:
    """Arithmetic mean of the posted retail prices."""
    prices = np.asarray(prices, dtype=float)
    if prices.size == 0:
        raise ValueError("market index of an empty price collection is undefined")
    return float(prices.mean())


def compute_deltas(series: IndexSeries) -> DeltaDistribution:
    """Consecutive differences of the index series."""
    if len(series) < 2:
        raise ValueError(f"need at least 2 index points, got {len(series)}")
    values = np.asarray(series.values)
    return DeltaDistribution(deltas=tuple(float(d) for d in np.diff(values)))


def log_binned_histogram(values, bins_per_decade: int = 5) -> Histogram:
    """Histogram positive values into geometric bins.

    Edges start at the sample minimum and advance by a factor of
    10^(1/bins_per_decade); the number of bins is chosen so the maximum falls
    inside the last (half-open) bin. Density is count / (bin width * total),
    so density times width sums to one. A single-point sample gets one bin
    half a bin-width either side.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot bin an empty sample")
    if np.any(values <= 0):
        raise ValueError("log binning needs strictly positive values")
    if bins_per_decade < 1:
        raise ValueError(f"bins_per_decade must be >= 1, got {bins_per_decade}")

    lo = float(values.min())
    hi = float(values.max())
    if lo == hi:
        half = 10.0 ** (0.5 / bins_per_decade)
        edges = np.array([lo / half, lo * half])
        counts = np.array([values.size])
    else:
        n_bins = int(math.floor(bins_per_decade * math.log10(hi / lo))) + 1
        edges = lo * 10.0 ** (np.arange(n_bins + 1) / bins_per_decade)
        idx = np.floor(bins_per_decade * np.log10(values / lo)).astype(np.int64)
        idx = np.clip(idx, 0, n_bins - 1)
        counts = np.bincount(idx, minlength=n_bins)

    widths = np.diff(edges)
    densities = counts / (widths * values.size)
    return Histogram(edges=tuple(float(e) for e in edges),
                     counts=tuple(int(c) for c in counts),
                     densities=tuple(float(d) for d in densities),
                     bins_per_decade=bins_per_decade)


def _resolve_xmin(values: np.ndarray, xmin, xmin_quantile: float) -> float:
    if xmin is not None:
        return float(xmin)
    return float(np.quantile(values, xmin_quantile))


def _hill(values: np.ndarray, xmin: float):
    tail = values[values > xmin]
    k = tail.size
    if k == 0:
        return math.nan, 0
    return k / float(np.sum(np.log(tail / xmin))), k


def fit_hill(values, xmin=None, xmin_quantile: float = DEFAULT_XMIN_QUANTILE,
             min_tail: int = DEFAULT_MIN_TAIL) -> TailFit:
    """Hill tail-index estimate on the samples strictly above the cutoff.

    Standard error is alpha / sqrt(k). The drift diagnostic re-estimates at
    the quantiles in DRIFT_QUANTILES; a relative spread beyond
    DRIFT_TOLERANCE flags the sample as non-power-law (Hill drifts with the
    cutoff on, e.g., exponential tails, but is stable on a true power law).
    """
    values = np.asarray(values, dtype=float)
    values = values[values > 0]
    if values.size < min_tail:
        raise FitRefusedError(values.size, min_tail)
    cutoff = _resolve_xmin(values, xmin, xmin_quantile)
    alpha, k = _hill(values, cutoff)
    if k < min_tail:
        raise FitRefusedError(k, min_tail)

    estimates = []
    for quant in DRIFT_QUANTILES:
        est, kq = _hill(values, float(np.quantile(values, quant)))
        if kq >= min_tail:
            estimates.append(est)
    if len(estimates) >= 2:
        drift = max(estimates) / min(estimates)
    else:
        drift = math.nan
    flagged = bool(drift > 1.0 + DRIFT_TOLERANCE) if not math.isnan(drift) else False

    return TailFit(estimator=HILL, exponent=alpha, stderr=alpha / math.sqrt(k),
                   xmin=cutoff, n_tail=k, drift_ratio=drift,
                   flagged_non_power_law=flagged)


def fit_loglog(values, xmin=None, xmin_quantile: float = DEFAULT_XMIN_QUANTILE,
               min_tail: int = DEFAULT_MIN_TAIL,
               bins_per_decade: int = 5) -> TailFit:
    """Least-squares line through log density vs log bin center above the cutoff.

    The fitted |slope| is reported as the exponent; on a power-law density
    x^-(alpha+1) it estimates alpha + 1.
    """
    values = np.asarray(values, dtype=float)
    values = values[values > 0]
    if values.size < min_tail:
        raise FitRefusedError(values.size, min_tail)
    cutoff = _resolve_xmin(values, xmin, xmin_quantile)
    n_tail = int(np.count_nonzero(values > cutoff))
    if n_tail < min_tail:
        raise FitRefusedError(n_tail, min_tail)

    hist = log_binned_histogram(values, bins_per_decade=bins_per_decade)
    centers = hist.centers()
    dens = np.asarray(hist.densities)
    sel = (centers > cutoff) & (dens > 0)
    if int(sel.sum()) < 2:
        raise FitRefusedError(int(sel.sum()), 2)

    x = np.log10(centers[sel])
    y = np.log10(dens[sel])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(1, x.size - 2)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(float(np.sum(resid ** 2)) / dof / sxx) if sxx > 0 else math.nan

    return TailFit(estimator=LOGLOG, exponent=abs(float(slope)), stderr=stderr,
                   xmin=cutoff, n_tail=n_tail, slope=float(slope))


def fit_power_law_tail(values, estimator: str = HILL, xmin=None,
                       xmin_quantile: float = DEFAULT_XMIN_QUANTILE,
                       min_tail: int = DEFAULT_MIN_TAIL):
    """Fit the positive tail with the chosen estimator.

    ``estimator`` is "hill", "loglog-regression", or "both"; "both" returns
    a (hill, loglog) pair.
    """
    if estimator == HILL:
        return fit_hill(values, xmin=xmin, xmin_quantile=xmin_quantile,
                        min_tail=min_tail)
    if estimator == LOGLOG:
        return fit_loglog(values, xmin=xmin, xmin_quantile=xmin_quantile,
                          min_tail=min_tail)
    if estimator == "both":
        return (fit_hill(values, xmin=xmin, xmin_quantile=xmin_quantile,
                         min_tail=min_tail),
                fit_loglog(values, xmin=xmin, xmin_quantile=xmin_quantile,
                           min_tail=min_tail))
    raise ValueError(f"unknown estimator {estimator!r}")


def detect_absorbing_state(records, window: int) -> AbsorbingDetection:
    """Find the earliest slow step opening ``window`` absorbed steps in a row.

    A step qualifies when every user sits on one middleman and no switch
    happened; a window additionally requires the index to stay exactly
    constant across it. Reports the longest qualifying streak either way.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")

    best_run = 0
    run_start = None
    run_len = 0
    run_index = None
    found_step = -1
    found = False

    for i, rec in enumerate(records):
        n_users = sum(rec.user_counts)
        monopoly = n_users > 0 and max(rec.user_counts) == n_users
        quiet = len(rec.switches) == 0
        if monopoly and quiet and (run_len == 0 or rec.index == run_index):
            if run_len == 0:
                run_start = rec.slow_step
                run_index = rec.index
            run_len += 1
        elif monopoly and quiet:
            # still absorbed but the index moved: streak restarts here
            run_start = rec.slow_step
            run_index = rec.index
            run_len = 1
        else:
            run_len = 0
            run_index = None
        best_run = max(best_run, run_len)
        if run_len >= window and not found:
            found = True
            found_step = run_start

    return AbsorbingDetection(found=found, step=found_step if found else -1,
                              longest_run=best_run)
