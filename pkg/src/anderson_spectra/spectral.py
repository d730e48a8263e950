"""Ensemble-level spectral functions: IDS/DOS, localization, averaging.

Everything here is an estimator over seeded Monte Carlo ensembles built on
the counting kernel in ``tridiag``; estimates carry realization counts and
standard errors so downstream scaling fits can weight points honestly.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _rng, _stats
from .model import sample_block, sample_sites, TridiagonalOperator
from .tridiag import (EigenPair, _sturm_counts, _bisect_ranks,
                      _eigenvectors_batch, _centers, eigenpairs_in_interval,
                      full_spectrum, default_tolerance)


@dataclass(frozen=True)
class IDSEstimate:
    """Monte Carlo integrated density of states on an energy grid."""

    energy_grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n: int
    realizations: int
    seed: int

    def __call__(self, energy):
        return np.interp(energy, self.energy_grid, self.values)


@dataclass(frozen=True)
class DOSEstimate:
    """Smoothed density of states k(E) = dN/dE with a triangular kernel."""

    energy_grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    clipped_mass: float

    def __call__(self, energy):
        return np.interp(energy, self.energy_grid, self.density)


@dataclass(frozen=True)
class LocalizationProfile:
    """Exponential-decay summary of one eigenvector.

    decay_rate is the least-squares decay of log |xi_n| outside
    onset_radius sites from the center (math.inf for an exactly compact
    vector); tail_max the largest tail amplitude; delocalized flags decay
    rates indistinguishable from zero.
    """

    pair: EigenPair
    decay_rate: float
    onset_radius: int
    tail_max: float
    delocalized: bool


@dataclass(frozen=True)
class WronskianDiagnostic:
    """Pairwise eigenvector diagnostic.

    w[k] = xi'_k xi_{k+1} - xi_k xi'_{k+1} for k = 0..N-2 (0-based sites,
    Dirichlet ghosts make the two boundary values vanish), d[k] =
    xi'_c xi_k - xi_c xi'_k anchored at the first pair's center c, and
    step_residuals holds the per-site defect of

        w_k - w_{k-1} = (E - E') xi_k xi'_k

    which is the discrete Green identity for the pair.  total_variation
    sums |w_{k+1} - w_k| including the boundary steps and satisfies the
    Cauchy-Schwarz bound |E - E'| for unit vectors.
    """

    energy_a: float
    energy_b: float
    w: np.ndarray
    d: np.ndarray
    step_residuals: np.ndarray
    total_variation: float


def estimate_ids(dist, n, grid, realizations, seed, coupling=None, chunk=512):
    """Average of the normalized eigenvalue counting function over the grid.

    values[g] = (sum over realizations of #{eigenvalues < grid[g]}) / (n R);
    monotone in the grid by construction.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("need a 1-D grid with at least two energies")
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted ascending")
    if realizations < 1:
        raise ValueError("need at least one realization")
    lam = dist.coupling if coupling is None else float(coupling)
    total = np.zeros(grid.size)
    total_sq = np.zeros(grid.size)
    for r0 in range(0, realizations, chunk):
        r1 = min(realizations, r0 + chunk)
        diag = lam * sample_block(dist, n, seed, r0, r1)
        counts = _sturm_counts(diag, np.broadcast_to(grid, (r1 - r0, grid.size)))
        frac = counts / n
        total += frac.sum(axis=0)
        total_sq += (frac ** 2).sum(axis=0)
    values = total / realizations
    var = np.maximum(total_sq / realizations - values ** 2, 0.0)
    stderr = np.sqrt(var / max(realizations - 1, 1))
    return IDSEstimate(energy_grid=grid, values=values, stderr=stderr,
                       n=int(n), realizations=int(realizations), seed=int(seed))


def estimate_dos(ids, bandwidth):
    """Triangular-kernel smoothed derivative of an IDS estimate.

    The raw centered differences are averaged with weights
    max(0, 1 - |E_i - E_j| / bandwidth), renormalized at the grid edges,
    then clipped at zero; the clipped mass is reported.
    """
    grid = ids.energy_grid
    spacing = np.diff(grid)
    if bandwidth < 2.0 * spacing.max():
        raise ValueError(
            f"bandwidth {bandwidth} below grid resolution {spacing.max():.3g} * 2")
    f = ids.values
    raw = np.empty_like(f)
    raw[1:-1] = (f[2:] - f[:-2]) / (grid[2:] - grid[:-2])
    raw[0] = (f[1] - f[0]) / (grid[1] - grid[0])
    raw[-1] = (f[-1] - f[-2]) / (grid[-1] - grid[-2])
    diff = np.abs(grid[:, None] - grid[None, :])
    weights = np.maximum(0.0, 1.0 - diff / bandwidth)
    smooth = (weights * raw[None, :]).sum(axis=1) / weights.sum(axis=1)
    clipped = float(np.trapezoid(np.maximum(-smooth, 0.0), grid))
    return DOSEstimate(energy_grid=grid, density=np.maximum(smooth, 0.0),
                       bandwidth=float(bandwidth), clipped_mass=clipped)


@dataclass(frozen=True)
class HolderFit:
    """Log-log fit of the worst-case window mass against the window width."""

    gamma_hat: float
    deltas: np.ndarray
    sup_measures: np.ndarray
    sup_stderr: np.ndarray
    window: tuple
    grid_points: int


def estimate_holder_fit(dist, n, window, deltas, realizations, seed,
                        coupling=None, grid_points=200, chunk=256):
    """Fit sup_E N([E - delta, E + delta]) ~ delta^gamma over a window.

    The sup runs over ``grid_points`` energies in ``window``; the measure
    is the Monte Carlo mean of the normalized eigenvalue count.
    """
    deltas = np.sort(np.asarray(deltas, dtype=np.float64))
    if deltas.size < 3:
        raise ValueError("need at least three window widths")
    span = math.log10(deltas[-1] / deltas[0])
    if span < 1.5 - 1e-9:
        raise ValueError(f"window widths span {span:.2f} decades; need >= 1.5")
    lam = dist.coupling if coupling is None else float(coupling)
    e_lo, e_hi = window
    centers = np.linspace(e_lo, e_hi, grid_points)
    # one batched pass over all window endpoints
    edges = np.concatenate([(centers[:, None] - deltas[None, :]).ravel(),
                            (centers[:, None] + deltas[None, :]).ravel()])
    total = np.zeros((grid_points, deltas.size))
    total_sq = np.zeros((grid_points, deltas.size))
    half = edges.size // 2
    for r0 in range(0, realizations, chunk):
        r1 = min(realizations, r0 + chunk)
        diag = lam * sample_block(dist, n, seed, r0, r1)
        counts = _sturm_counts(diag, np.broadcast_to(edges, (r1 - r0, edges.size)))
        mass = (counts[:, half:] - counts[:, :half]).reshape(r1 - r0, grid_points,
                                                             deltas.size) / n
        total += mass.sum(axis=0)
        total_sq += (mass ** 2).sum(axis=0)
    mean_mass = total / realizations
    var = np.maximum(total_sq / realizations - mean_mass ** 2, 0.0)
    se = np.sqrt(var / max(realizations - 1, 1))
    at = np.argmax(mean_mass, axis=0)
    sup = mean_mass[at, np.arange(deltas.size)]
    sup_se = se[at, np.arange(deltas.size)]
    if np.any(sup <= 0.0):
        raise _stats.DegenerateFitError(
            "empty windows at the smallest widths; increase realizations or n",
            {"deltas": deltas.tolist(), "sup": sup.tolist(),
             "realizations": realizations})
    gamma, _ = _stats.loglog_slope(deltas, sup, sup_se)
    if not 0.0 < gamma <= 1.05:
        raise _stats.DegenerateFitError(
            f"fitted window-mass exponent {gamma:.3f} outside (0, 1.05]",
            {"deltas": deltas.tolist(), "sup": sup.tolist()})
    return HolderFit(gamma_hat=float(gamma), deltas=deltas, sup_measures=sup,
                     sup_stderr=sup_se, window=(float(e_lo), float(e_hi)),
                     grid_points=grid_points)


def holder_exponent_of_ids(dist, n, window, deltas, realizations, seed,
                           coupling=None, grid_points=200):
    """Holder exponent of the integrated density of states (the fitted slope)."""
    return estimate_holder_fit(dist, n, window, deltas, realizations, seed,
                               coupling=coupling, grid_points=grid_points).gamma_hat


def localization_profile(pair, onset_radius=None, coupling=None,
                         delocalized_threshold=0.01):
    """Exponential-decay fit of an eigenvector outside its center region.

    onset_radius defaults to round(3 ln N) sites.  A vector that vanishes
    identically outside the onset region gets the +inf sentinel.
    """
    xi = np.asarray(pair.vector)
    n = xi.size
    if n < 50:
        raise ValueError("localization profiles need at least 50 sites")
    if onset_radius is None:
        onset_radius = int(round(3.0 * math.log(n)))
    sites = np.arange(1, n + 1)
    offset = np.abs(sites - pair.center)
    tail = offset > onset_radius
    if not tail.any():
        return LocalizationProfile(pair, math.inf, onset_radius, 0.0, False)
    amp = np.abs(xi[tail])
    tail_max = float(amp.max())
    if tail_max == 0.0:
        return LocalizationProfile(pair, math.inf, onset_radius, 0.0, False)
    keep = amp > 1e-60
    slope, _ = _stats.wls_line(offset[tail][keep], np.log(amp[keep]))
    rate = max(0.0, -slope)
    return LocalizationProfile(pair, float(rate), int(onset_radius), tail_max,
                               rate <= delocalized_threshold)


def box_restriction_residual(pair, box, op):
    """Residual of the box-normalized eigenvector against the box operator.

    Returns (residual, boundary_mass) where residual =
    |(H_box - E) xi_box / |xi_box||, boundary_mass = |xi outside box|.
    By the min-max principle dist(E, Spec H_box) <= residual.
    """
    s, t = box
    sub_op = op.restricted(box)
    xi = np.asarray(pair.vector)
    inside = xi[s - 1:t]
    norm_in = float(np.linalg.norm(inside))
    if norm_in < 1e-6:
        raise ValueError(f"box {box} carries almost none of the eigenvector mass")
    restricted = inside / norm_in
    residual = float(np.linalg.norm(sub_op.apply(restricted) - pair.energy * restricted))
    outside = np.concatenate([xi[:s - 1], xi[t:]])
    boundary_mass = float(np.linalg.norm(outside))
    return residual, boundary_mass


@dataclass(frozen=True)
class SpectralAverage:
    """Monte Carlo estimate of the site-resampled spectral weight in a window."""

    value: float
    stderr: float
    interval: tuple
    site: int
    outer_realizations: int
    inner_samples: int


def _window_weights(diag_rows, interval, site, tol_scale=1e-11, seed=0):
    """Sum of |xi(site)|^2 over eigenvalues in [a, b), per diagonal row."""
    a, b = interval
    R, n = diag_rows.shape
    counts = _sturm_counts(diag_rows, np.broadcast_to(np.array([a, b]), (R, 2)))
    ca, cb = counts[:, 0], counts[:, 1]
    k = cb - ca
    out = np.zeros(R)
    hit = np.nonzero(k > 0)[0]
    if hit.size == 0:
        return out
    rows = np.repeat(hit, k[hit])
    ranks = np.concatenate([np.arange(ca[r] + 1, cb[r] + 1) for r in hit])
    scale = np.max(np.abs(diag_rows), axis=1) + 2.0
    energies = _bisect_ranks(diag_rows, ranks,
                             np.full(rows.size, a), np.full(rows.size, b),
                             tol=tol_scale * scale.max(), rows=rows)
    vecs, _, _ = _eigenvectors_batch(diag_rows, energies, rows=rows, seed=seed)
    weights = vecs[:, site - 1] ** 2
    np.add.at(out, rows, weights)
    return out


def spectral_average(dist, n, site, interval, realizations, seed,
                     coupling=None, inner_samples=8):
    """Estimate of E_{v_site} <delta_site, X_I(H) delta_site>.

    Outer realizations freeze all other sites; the site value is then
    resampled ``inner_samples`` times from its own stream and the spectral
    weight of the site vector inside the window is averaged.
    """
    if not 1 <= site <= n:
        raise ValueError(f"site {site} outside [1, {n}]")
    lam = dist.coupling if coupling is None else float(coupling)
    base = lam * sample_block(dist, n, seed, 0, realizations)
    resample_idx = np.arange(realizations * inner_samples, dtype=np.uint64)
    v_site = lam * sample_sites(dist, seed, resample_idx, np.uint64(site - 1),
                                stream=_rng.STREAM_RESAMPLE)
    diag = np.repeat(base, inner_samples, axis=0)
    diag[:, site - 1] = v_site
    weights = _window_weights(diag, interval, site, seed=seed)
    per_outer = weights.reshape(realizations, inner_samples).mean(axis=1)
    value = float(per_outer.mean())
    stderr = float(per_outer.std(ddof=1) / math.sqrt(realizations)) if realizations > 1 else 0.0
    return SpectralAverage(value=value, stderr=stderr,
                           interval=(float(interval[0]), float(interval[1])),
                           site=int(site), outer_realizations=int(realizations),
                           inner_samples=int(inner_samples))


def wronskian_check(pair_a, pair_b):
    """Discrete Green-identity diagnostic for two eigenpairs of one operator."""
    xi = np.asarray(pair_a.vector)
    eta = np.asarray(pair_b.vector)
    if xi.size != eta.size:
        raise ValueError("eigenvectors live on different chains")
    for v in (xi, eta):
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ValueError("eigenvectors must be unit-normalized")
    e_a, e_b = pair_a.energy, pair_b.energy
    # Wronskian with Dirichlet ghost sites: w_ext[k] over k = -1 .. N-1
    w = eta[:-1] * xi[1:] - xi[:-1] * eta[1:]
    w_ext = np.concatenate([[0.0], w, [0.0]])
    steps = np.diff(w_ext)
    # identity: w_k - w_{k-1} = (E_a - E_b) xi_k eta_k at every site k
    step_residuals = steps - (e_a - e_b) * xi * eta
    total_variation = float(np.abs(steps).sum())
    c = pair_a.center - 1
    d = eta[c] * xi - xi[c] * eta
    return WronskianDiagnostic(energy_a=float(e_a), energy_b=float(e_b),
                               w=w, d=d, step_residuals=step_residuals,
                               total_variation=total_variation)


def lemma6_event_sweep(dist, m, energy, deltas, realizations, seed,
                       coupling=None):
    """Fractions of realizations with a near-kernel eigenpair, per delta.

    The event at width delta: some eigenpair of the m-site operator has
    |E_j - energy| < delta and |xi_1| < delta and |xi_m| < delta.  True
    eigenpairs are a lower-bound surrogate for approximate kernel vectors
    with the same predicted scaling; flagged in the result.
    """
    deltas = np.sort(np.asarray(deltas, dtype=np.float64))
    if np.any(deltas <= 0.0):
        raise ValueError("window widths must be positive")
    lam = dist.coupling if coupling is None else float(coupling)
    d_max = float(deltas[-1])
    diag = lam * sample_block(dist, m, seed, 0, realizations)
    a, b = energy - d_max, energy + d_max
    counts = _sturm_counts(diag, np.broadcast_to(np.array([a, b]), (realizations, 2)))
    k = counts[:, 1] - counts[:, 0]
    hits = np.zeros((realizations, deltas.size), dtype=bool)
    rows_hit = np.nonzero(k > 0)[0]
    if rows_hit.size:
        rows = np.repeat(rows_hit, k[rows_hit])
        ranks = np.concatenate([np.arange(counts[r, 0] + 1, counts[r, 1] + 1)
                                for r in rows_hit])
        scale = float(np.max(np.abs(diag)) + 2.0)
        energies = _bisect_ranks(diag, ranks, np.full(rows.size, a),
                                 np.full(rows.size, b), tol=1e-11 * scale,
                                 rows=rows)
        vecs, e_out, _ = _eigenvectors_batch(diag, energies, rows=rows, seed=seed)
        off = np.abs(e_out - energy)
        b1 = np.abs(vecs[:, 0])
        bm = np.abs(vecs[:, -1])
        for j, delta in enumerate(deltas):
            ok = (off < delta) & (b1 < delta) & (bm < delta)
            np.logical_or.at(hits[:, j], rows, ok)
    return hits


def lemma6_event_probability(dist, m, energy, delta, realizations, seed,
                             coupling=None):
    """Probability of the near-kernel eigenpair event at a single width."""
    if dist.kind != "bernoulli":
        raise ValueError("the near-kernel event experiment targets the Bernoulli law")
    hits = lemma6_event_sweep(dist, m, energy, [delta], realizations, seed,
                              coupling=coupling)
    return float(hits[:, 0].mean())
