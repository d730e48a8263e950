"""Fitting and goodness-of-fit helpers shared by the estimators."""

import math

import numpy as np
from scipy import stats as _scipy_stats

from . import _rng


class DegenerateFitError(RuntimeError):
    """Raised when a scaling fit has too little signal to be meaningful."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def wls_line(x, y, weights=None):
    """Weighted least-squares line fit; returns (slope, intercept)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=np.float64)
    sw = w.sum()
    mx = (w * x).sum() / sw
    my = (w * y).sum() / sw
    sxx = (w * (x - mx) ** 2).sum()
    if sxx == 0.0:
        raise DegenerateFitError("all abscissae identical in line fit")
    slope = (w * (x - mx) * (y - my)).sum() / sxx
    return float(slope), float(my - slope * mx)


def loglog_slope(x, y, y_stderr=None):
    """Log-log slope of y against x, weighting points by relative precision.

    Points with nonpositive y are rejected with diagnostics, since they
    carry no log-scale information.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    bad = ~(y > 0.0)
    if bad.any():
        raise DegenerateFitError(
            "nonpositive estimates in log-log fit; increase realizations",
            {"x": x.tolist(), "y": y.tolist()})
    if x.size < 3:
        raise DegenerateFitError("need at least three points for a slope fit")
    w = None
    if y_stderr is not None:
        rel = np.asarray(y_stderr) / y
        rel = np.where(rel <= 0, np.nanmin(rel[rel > 0]) if (rel > 0).any() else 1.0, rel)
        w = 1.0 / rel ** 2
    slope, intercept = wls_line(np.log(x), np.log(y), w)
    return slope, intercept


def bootstrap_slope_ci(sample_matrix, x, n_boot=1000, seed=0, level=0.95):
    """Bootstrap CI for the precision-weighted log-log slope of column means.

    sample_matrix has one row per realization and one column per x value.
    Each resample refits the same weighted estimator as the point estimate
    (weights from the resampled per-column standard errors).  Resamples
    with a nonpositive column mean carry no slope and are dropped; the
    drop count is reported.
    """
    sample_matrix = np.asarray(sample_matrix, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    R = sample_matrix.shape[0]
    rng = np.random.default_rng(_rng.derive_seed(seed, "bootstrap-slope"))
    slopes = []
    dropped = 0
    for _ in range(n_boot):
        idx = rng.integers(0, R, size=R)
        resampled = sample_matrix[idx]
        est = resampled.mean(axis=0)
        if np.any(est <= 0.0):
            dropped += 1
            continue
        se = resampled.std(axis=0, ddof=1) / math.sqrt(R)
        try:
            slope, _ = loglog_slope(x, est, se)
        except DegenerateFitError:
            dropped += 1
            continue
        slopes.append(slope)
    if len(slopes) < max(20, n_boot // 10):
        raise DegenerateFitError(
            f"bootstrap degenerate: only {len(slopes)}/{n_boot} resamples usable")
    lo, hi = np.quantile(slopes, [(1 - level) / 2, 1 - (1 - level) / 2])
    return {"ci_low": float(lo), "ci_high": float(hi),
            "resamples": len(slopes), "dropped": dropped}


def bootstrap_value_ci(values, stat_fn, n_boot=1000, seed=0, level=0.95):
    """Percentile bootstrap CI for an arbitrary statistic of a sample."""
    values = np.asarray(values)
    rng = np.random.default_rng(_rng.derive_seed(seed, "bootstrap-value"))
    n = values.shape[0]
    out = np.empty(n_boot)
    for b in range(n_boot):
        out[b] = stat_fn(values[rng.integers(0, n, size=n)])
    lo, hi = np.quantile(out, [(1 - level) / 2, 1 - (1 - level) / 2])
    return float(lo), float(hi)


def poisson_counts_chi2(counts, mean=None):
    """Chi-square test of integer counts against a Poisson law.

    Bins with expected occupancy below 5 are merged inward from both tails.
    Returns (chi2, dof, p_value, table); dof subtracts one for the
    estimated mean when ``mean`` is None.
    """
    counts = np.asarray(counts, dtype=np.int64)
    n = counts.size
    estimated = mean is None
    lam = counts.mean() if estimated else float(mean)
    kmax = int(counts.max())
    support = np.arange(kmax + 2)
    pmf = _scipy_stats.poisson.pmf(support[:-1], lam)
    pmf = np.append(pmf, max(1.0 - pmf.sum(), 0.0))  # tail mass at k > kmax
    observed = np.bincount(counts, minlength=kmax + 2).astype(np.float64)
    expected = n * pmf
    # merge sparse bins: leading bins forward, trailing bins backward
    obs_bins, exp_bins, labels = [], [], []
    acc_o = acc_e = 0.0
    start = 0
    for k in range(len(expected)):
        acc_o += observed[k]
        acc_e += expected[k]
        if acc_e >= 5.0:
            obs_bins.append(acc_o)
            exp_bins.append(acc_e)
            labels.append((start, k))
            acc_o = acc_e = 0.0
            start = k + 1
    if acc_e > 0.0 or acc_o > 0.0:
        if obs_bins:
            obs_bins[-1] += acc_o
            exp_bins[-1] += acc_e
            labels[-1] = (labels[-1][0], len(expected) - 1)
        else:
            obs_bins, exp_bins, labels = [acc_o], [acc_e], [(0, len(expected) - 1)]
    obs_bins = np.asarray(obs_bins)
    exp_bins = np.asarray(exp_bins)
    dof = len(obs_bins) - 1 - (1 if estimated else 0)
    chi2 = float(np.sum((obs_bins - exp_bins) ** 2 / exp_bins))
    if dof < 1:
        # distribution too concentrated for a calibrated test: treat any
        # excess over chance as a rejection signal via a 1-dof tail
        p = float(_scipy_stats.chi2.sf(chi2, 1)) if chi2 > 0 else 1.0
    else:
        p = float(_scipy_stats.chi2.sf(chi2, dof))
    table = {"bins": labels, "observed": obs_bins.tolist(),
             "expected": exp_bins.tolist(), "mean": float(lam)}
    return chi2, max(dof, 1), p, table


def ks_distance_exponential(values, rate):
    """Kolmogorov-Smirnov distance of a sample to Exponential(rate)."""
    values = np.sort(np.asarray(values, dtype=np.float64))
    n = values.size
    if n == 0:
        raise ValueError("empty sample")
    cdf = 1.0 - np.exp(-rate * values)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def total_variation(counts_a, counts_b):
    """TV distance between two empirical count pmfs given as samples."""
    counts_a = np.asarray(counts_a, dtype=np.int64)
    counts_b = np.asarray(counts_b, dtype=np.int64)
    kmax = int(max(counts_a.max(initial=0), counts_b.max(initial=0)))
    pa = np.bincount(counts_a, minlength=kmax + 1) / counts_a.size
    pb = np.bincount(counts_b, minlength=kmax + 1) / counts_b.size
    return float(0.5 * np.abs(pa - pb).sum())


def binomial_stderr(p_hat, n):
    return math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n)
