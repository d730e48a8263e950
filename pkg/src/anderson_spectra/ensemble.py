"""Seeded Monte Carlo experiments for the spectral scaling laws.

Each experiment consumes an ExperimentConfig, partitions work by
realization index into fixed-size chunks, and merges per-chunk arrays in
chunk order, so results are bit-identical for any worker count.  Summaries
carry estimates with standard errors, weighted log-log slope fits with
bootstrap confidence intervals, and a content hash of the configuration.
"""

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import _rng, _stats
from .model import (SiteDistribution, TridiagonalOperator, sample_block,
                    format_distribution)
from .tridiag import (_sturm_counts, _bisect_ranks, _eigenvectors_batch,
                      _centers, interlacing_check, EigensolverError)
from .spectral import estimate_ids, estimate_dos

CHUNK = 256  # realizations per work unit; fixed so results ignore worker count


class PartitionError(ValueError):
    """Raised when a block partition cannot be fit into the chain."""


@dataclass
class ExperimentConfig:
    """Shared knobs for the ensemble experiments.

    Only the fields an experiment reads are validated by it.  ``e0`` of
    None selects the center of the diagonal's range.  ``block_multiplier``
    and ``buffer_multiplier`` are the K and K1 factors of the log-sized
    block partition.
    """

    dist: SiteDistribution
    n_list: tuple = (100,)
    delta_list: tuple = ()
    e0: float = None
    window_length: float = 20.0
    realizations: int = 1000
    master_seed: int = 0
    block_multiplier: float = 12.0
    buffer_multiplier: float = 1.5
    output_path: str = None
    workers: int = 1
    # secondary knobs
    minami_floor_constant: float = 10.0
    dos_realizations: int = 200
    dos_bandwidth: float = 0.05
    spacing_quantiles: tuple = (0.5, 0.9, 0.99)
    spacing_tolerance: float = 1e-13
    gap_threshold: float = None
    repulsion_bin_width: float = 0.7
    repulsion_min_bin: int = 25
    inner_samples: int = 8
    bootstrap_resamples: int = 1000

    def effective_e0(self):
        return self.dist.diagonal_center() if self.e0 is None else float(self.e0)

    def params_dict(self):
        d = {k: v for k, v in asdict(self).items() if k not in ("dist",)}
        d["dist"] = format_distribution(self.dist)
        d["n_list"] = list(self.n_list)
        d["delta_list"] = [float(x) for x in self.delta_list]
        for k, v in list(d.items()):
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def content_hash(self):
        payload = json.dumps(self.params_dict(), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()

    def require_scaling_deltas(self):
        deltas = np.asarray(self.delta_list, dtype=np.float64)
        if deltas.size < 3 or np.any(deltas <= 0):
            raise ValueError("scaling experiments need >= 3 positive window widths")
        span = math.log10(deltas.max() / deltas.min())
        if span < 1.5 - 1e-9:
            raise ValueError(
                f"window widths span only {span:.2f} decades; need >= 1.5")
        if self.realizations < 100:
            raise ValueError("slope fits need at least 100 realizations")
        return np.sort(deltas)


@dataclass
class EnsembleSummary:
    """Per-point estimates plus fitted slopes and run metadata."""

    experiment: str
    params: dict
    columns: list
    rows: list
    slopes: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {"experiment": self.experiment, "params": self.params,
                "columns": self.columns, "rows": self.rows,
                "slopes": self.slopes, "constants": self.constants,
                "metadata": self.metadata}


def _base_metadata(config):
    return {"master_seed": int(config.master_seed),
            "config_hash": config.content_hash(),
            "realizations": int(config.realizations)}


def _run_chunks(chunk_fn, static_args, realizations, workers=1, progress=None):
    """Evaluate chunk_fn(*static_args, r0, r1) over fixed chunks, in order."""
    tasks = [(r0, min(r0 + CHUNK, realizations))
             for r0 in range(0, realizations, CHUNK)]
    outputs = []
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(chunk_fn, *static_args, r0, r1)
                       for r0, r1 in tasks]
            for i, fut in enumerate(futures):
                outputs.append(fut.result())
                if progress:
                    progress(tasks[i][1], realizations)
    else:
        for r0, r1 in tasks:
            outputs.append(chunk_fn(*static_args, r0, r1))
            if progress:
                progress(r1, realizations)
    return {key: np.concatenate([out[key] for out in outputs], axis=0)
            for key in outputs[0]}


# ---------------------------------------------------------------------------
# window-count experiments (Wegner / Minami / expected count / two eigenvalues)

def _window_counts_chunk(dist, n, e0, deltas, seed, r0, r1):
    diag = dist.coupling * sample_block(dist, n, seed, r0, r1)
    deltas = np.asarray(deltas)
    edges = np.concatenate([e0 - deltas, e0 + deltas])
    counts = _sturm_counts(diag, np.broadcast_to(edges, (r1 - r0, edges.size)))
    k = deltas.size
    return {"counts": (counts[:, k:] - counts[:, :k]).astype(np.int32)}


def _window_counts(config, n, deltas, progress=None):
    return _run_chunks(_window_counts_chunk,
                       (config.dist, n, config.effective_e0(), tuple(deltas),
                        config.master_seed),
                       config.realizations, config.workers, progress)["counts"]


def _slope_entry(deltas, estimates, stderr, sample_matrix, seed, n_boot):
    slope, intercept = _stats.loglog_slope(deltas, estimates, stderr)
    ci = _stats.bootstrap_slope_ci(sample_matrix, deltas, n_boot=n_boot,
                                   seed=seed)
    return {"slope": slope, "intercept": intercept, **ci}


def wegner_probability(config, progress=None):
    """P[some eigenvalue falls in [E0 - delta, E0 + delta]] per (N, delta).

    Fits the window-width slope at each N (the single-eigenvalue scaling
    law predicts exponent 1 away from saturation) and, when several N are
    given, the N-slope at each width.
    """
    if not config.dist.is_holder:
        raise ValueError("the window-hit scaling law targets Holder-regular laws")
    deltas = config.require_scaling_deltas()
    e0 = config.effective_e0()
    rows, slopes = [], {}
    prob_table = {}
    violations = 0
    for n in config.n_list:
        counts = _window_counts(config, n, deltas, progress)
        hits = counts > 0
        # nested windows: a hit at delta must persist at every larger delta
        violations += int(np.sum(hits[:, :-1] & ~hits[:, 1:]))
        probs = hits.mean(axis=0)
        ses = np.array([_stats.binomial_stderr(p, config.realizations) for p in probs])
        prob_table[n] = probs
        for d, p, se in zip(deltas, probs, ses):
            rows.append({"n": int(n), "delta": float(d), "probability": float(p),
                         "stderr": float(se), "realizations": config.realizations})
        slopes[f"delta_slope_n={n}"] = _slope_entry(
            deltas, probs, ses, hits.astype(np.float64),
            _rng.derive_seed(config.master_seed, f"wegner-{n}"),
            config.bootstrap_resamples)
    if len(config.n_list) > 1:
        ns = np.asarray(config.n_list, dtype=np.float64)
        for j, d in enumerate(deltas):
            y = np.array([prob_table[n][j] for n in config.n_list])
            if np.all(y > 0):
                s, b = _stats.loglog_slope(ns, y)
                slopes[f"n_slope_delta={d:.6g}"] = {"slope": s, "intercept": b}
    meta = _base_metadata(config)
    meta["nested_window_violations"] = violations
    meta["e0"] = e0
    return EnsembleSummary(
        experiment="wegner", params=config.params_dict(),
        columns=["n", "delta", "probability", "stderr", "realizations"],
        rows=rows, slopes=slopes, metadata=meta)


def minami_moment(config, progress=None):
    """Second factorial moment E[X (X - 1)] of the window eigenvalue count.

    Requires N >= C1 log(2 + 1/delta); the width slope is the headline
    statistic (2 for an absolutely continuous law, at least 1 + beta
    in general).
    """
    deltas = config.require_scaling_deltas()
    c1 = config.minami_floor_constant
    rows, slopes = [], {}
    for n in config.n_list:
        floor = c1 * math.log(2.0 + 1.0 / deltas.min())
        if n < floor:
            raise ValueError(
                f"n = {n} below the window floor {floor:.1f} "
                f"(= {c1} log(2 + 1/delta_min))")
        counts = _window_counts(config, n, deltas, progress).astype(np.float64)
        pair_counts = counts * (counts - 1.0)
        moments = pair_counts.mean(axis=0)
        ses = pair_counts.std(axis=0, ddof=1) / math.sqrt(config.realizations)
        for d, m, se in zip(deltas, moments, ses):
            rows.append({"n": int(n), "delta": float(d), "moment": float(m),
                         "stderr": float(se), "realizations": config.realizations})
        slopes[f"delta_slope_n={n}"] = _slope_entry(
            deltas, moments, ses, pair_counts,
            _rng.derive_seed(config.master_seed, f"minami-{n}"),
            config.bootstrap_resamples)
    beta = config.dist.holder_exponent
    meta = _base_metadata(config)
    meta["holder_exponent"] = beta
    meta["target_slope"] = None if beta is None else 1.0 + beta - 0.2
    return EnsembleSummary(
        experiment="minami", params=config.params_dict(),
        columns=["n", "delta", "moment", "stderr", "realizations"],
        rows=rows, slopes=slopes, metadata=meta)


def expected_count(config, progress=None):
    """E[#eigenvalues in the window] against the local density prediction.

    The reference N k(E0) |I| uses a density-of-states estimate from an
    independent sub-seeded run, so the two sides never share randomness.
    """
    deltas = np.sort(np.asarray(config.delta_list, dtype=np.float64))
    if deltas.size == 0:
        raise ValueError("need at least one window width")
    e0 = config.effective_e0()
    lo, hi = config.dist.spectral_bounds()
    pad = 4.0 * config.dos_bandwidth
    grid = np.linspace(lo - pad, hi + pad,
                       max(201, int((hi - lo + 2 * pad) / (config.dos_bandwidth / 2.5))))
    dos_seed = _rng.derive_seed(config.master_seed, "independent-dos")
    n_ref = max(config.n_list)
    ids = estimate_ids(config.dist, n_ref, grid, config.dos_realizations, dos_seed)
    dos = estimate_dos(ids, config.dos_bandwidth)
    k_hat = float(dos(e0))
    rows = []
    for n in config.n_list:
        counts = _window_counts(config, n, deltas, progress).astype(np.float64)
        means = counts.mean(axis=0)
        ses = counts.std(axis=0, ddof=1) / math.sqrt(config.realizations)
        for d, m, se in zip(deltas, means, ses):
            ref = n * k_hat * 2.0 * d
            dev = abs(m - ref)
            rows.append({
                "n": int(n), "delta": float(d), "mean_count": float(m),
                "stderr": float(se), "reference": float(ref),
                "relative_deviation": float(dev / ref) if ref > 0 else math.inf,
                "within_10pct_3se": bool(dev <= 0.1 * ref + 3.0 * se),
                "realizations": config.realizations})
    meta = _base_metadata(config)
    meta["e0"] = e0
    return EnsembleSummary(
        experiment="count", params=config.params_dict(),
        columns=["n", "delta", "mean_count", "stderr", "reference",
                 "relative_deviation", "within_10pct_3se", "realizations"],
        rows=rows, constants={"k_hat": k_hat, "dos_seed": dos_seed},
        metadata=meta)


def two_eigenvalue_probability(config, progress=None):
    """P[window holds at least two eigenvalues] with both regime slopes.

    The two-term bound predicts width exponent 2 where the quadratic term
    dominates and 1 + beta where the near-degenerate term does; the width
    list is split at its log midpoint and both halves are fitted.
    """
    deltas = config.require_scaling_deltas()
    rows, slopes = [], {}
    for n in config.n_list:
        counts = _window_counts(config, n, deltas, progress)
        atleast2 = (counts >= 2).astype(np.float64)
        pair_moment = (counts * (counts - 1)).mean(axis=0)
        probs = atleast2.mean(axis=0)
        ses = np.array([_stats.binomial_stderr(p, config.realizations) for p in probs])
        for d, p, se, pm in zip(deltas, probs, ses, pair_moment):
            rows.append({"n": int(n), "delta": float(d), "probability": float(p),
                         "stderr": float(se), "pair_moment": float(pm),
                         "realizations": config.realizations})
        mid = 0.5 * (math.log(deltas[0]) + math.log(deltas[-1]))
        small = np.log(deltas) <= mid
        for name, mask in (("small_delta", small), ("large_delta", ~small)):
            if mask.sum() >= 3 and np.all(probs[mask] > 0):
                slopes[f"{name}_slope_n={n}"] = _slope_entry(
                    deltas[mask], probs[mask], ses[mask], atleast2[:, mask],
                    _rng.derive_seed(config.master_seed, f"twoev-{name}-{n}"),
                    config.bootstrap_resamples)
    meta = _base_metadata(config)
    meta["holder_exponent"] = config.dist.holder_exponent
    return EnsembleSummary(
        experiment="two-ev", params=config.params_dict(),
        columns=["n", "delta", "probability", "stderr", "pair_moment",
                 "realizations"],
        rows=rows, slopes=slopes, metadata=meta)


# ---------------------------------------------------------------------------
# local eigenvalue statistics

@dataclass
class PoissonDiagnostics:
    """Local point-process diagnostics for rescaled in-window eigenvalues."""

    counting_pmf: tuple  # (counts array, probability array)
    gap_cdf: tuple  # (sorted gaps, empirical cdf)
    chi2_p: float
    ks_distance: float
    summary: EnsembleSummary
    rho_hat: float
    intensity_ref: float
    mean_count: float
    nonempty: int


def _points_chunk(dist, n, e0, length, tol, seed, r0, r1):
    diag = dist.coupling * sample_block(dist, n, seed, r0, r1)
    a, b = e0, e0 + length / n
    counts = _sturm_counts(diag, np.broadcast_to(np.array([a, b]), (r1 - r0, 2)))
    k = (counts[:, 1] - counts[:, 0]).astype(np.int32)
    hit_rows = np.nonzero(k > 0)[0]
    if hit_rows.size:
        rows = np.repeat(hit_rows, k[hit_rows])
        ranks = np.concatenate([np.arange(counts[r, 0] + 1, counts[r, 1] + 1)
                                for r in hit_rows])
        energies = _bisect_ranks(diag, ranks, np.full(rows.size, a),
                                 np.full(rows.size, b), tol=tol, rows=rows)
        points = (energies - e0) * n
        owner = rows + r0
    else:
        points = np.empty(0)
        owner = np.empty(0, dtype=np.int64)
    return {"counts": k, "points": points, "owner": owner.astype(np.int64)}


def _cyclic_gaps(counts, points, owner, length):
    """Pooled cyclic inter-point gaps over realizations with >= 2 points.

    Closing the window into a circle (wrap gap included) makes the pooled
    gap law exactly exponential with the count intensity under the Poisson
    null, removing the linear-window truncation bias.
    """
    gaps = []
    order = np.argsort(owner, kind="stable")
    points_sorted_by_owner = points[order]
    owner_sorted = owner[order]
    boundaries = np.searchsorted(owner_sorted, np.unique(owner_sorted))
    split = np.split(points_sorted_by_owner, boundaries[1:])
    for chunk in split:
        if chunk.size >= 2:
            p = np.sort(chunk)
            gaps.append(np.diff(p))
            gaps.append(np.array([length - p[-1] + p[0]]))
    return np.concatenate(gaps) if gaps else np.empty(0)


def _poisson_diagnostics(experiment, config, counts, points, owner, k_hat,
                         extra_meta=None):
    length = config.window_length
    nonempty = int(np.sum(counts > 0))
    if nonempty < 50:
        raise EigensolverError(
            f"only {nonempty} realizations contain points; enlarge the window "
            f"length or the realization count")
    mean_count = float(counts.mean())
    rho_hat = mean_count / length
    chi2, dof, chi2_p, table = _stats.poisson_counts_chi2(counts)
    gaps = _cyclic_gaps(counts, points, owner, length)
    ks = _stats.ks_distance_exponential(gaps, rho_hat) if gaps.size else math.nan
    kmax = int(counts.max())
    pmf = np.bincount(counts, minlength=kmax + 1) / counts.size
    rows = [{"series": "count_pmf", "x": float(k), "value": float(pmf[k]),
             "stderr": _stats.binomial_stderr(pmf[k], counts.size)}
            for k in range(kmax + 1)]
    sorted_gaps = np.sort(gaps)
    ecdf = np.arange(1, sorted_gaps.size + 1) / max(sorted_gaps.size, 1)
    stride = max(1, sorted_gaps.size // 512)
    for g, f in zip(sorted_gaps[::stride], ecdf[::stride]):
        rows.append({"series": "gap_ecdf", "x": float(g), "value": float(f),
                     "stderr": 0.0})
    meta = _base_metadata(config)
    meta.update({"chi2": chi2, "chi2_dof": dof, "chi2_table": table,
                 "gap_count": int(sorted_gaps.size),
                 "rescaled_window": length, "e0": config.effective_e0(),
                 "intensity_vs_dos": (rho_hat / k_hat) if k_hat else None})
    if extra_meta:
        meta.update(extra_meta)
    summary = EnsembleSummary(
        experiment=experiment, params=config.params_dict(),
        columns=["series", "x", "value", "stderr"], rows=rows,
        constants={"rho_hat": rho_hat, "k_hat": k_hat,
                   "chi2_p": chi2_p, "ks_distance": ks,
                   "mean_count": mean_count},
        metadata=meta)
    return PoissonDiagnostics(
        counting_pmf=(np.arange(kmax + 1), pmf),
        gap_cdf=(sorted_gaps, ecdf), chi2_p=float(chi2_p),
        ks_distance=float(ks), summary=summary, rho_hat=float(rho_hat),
        intensity_ref=float(k_hat) if k_hat else math.nan,
        mean_count=mean_count, nonempty=nonempty)


def _reference_density(config, n):
    lo, hi = config.dist.spectral_bounds()
    pad = 4.0 * config.dos_bandwidth
    grid = np.linspace(lo - pad, hi + pad,
                       max(201, int((hi - lo + 2 * pad) / (config.dos_bandwidth / 2.5))))
    ids = estimate_ids(config.dist, n, grid, config.dos_realizations,
                       _rng.derive_seed(config.master_seed, "poisson-dos"))
    return float(estimate_dos(ids, config.dos_bandwidth)(config.effective_e0()))


def poisson_local_statistics(config, progress=None, reference_density=True):
    """Rescaled in-window eigenvalues tested against a Poisson process.

    Counting distribution vs Poisson(rho_hat L) by chi-square; pooled
    cyclic inter-point gaps vs Exponential(rho_hat) by KS distance; the
    intensity is cross-checked against an independent DOS estimate.
    """
    n = int(config.n_list[0])
    if n < 500:
        raise ValueError("local statistics need n >= 500")
    if not 5.0 <= config.window_length <= 50.0:
        raise ValueError("rescaled window length must lie in [5, 50]")
    if config.realizations < 1000:
        raise ValueError("local statistics need at least 1000 realizations")
    e0 = config.effective_e0()
    scale = abs(e0) + max(abs(b) for b in config.dist.spectral_bounds()) + 1.0
    data = _run_chunks(_points_chunk,
                       (config.dist, n, e0, config.window_length, 1e-9 * scale,
                        config.master_seed),
                       config.realizations, config.workers, progress)
    k_hat = _reference_density(config, n) if reference_density else None
    return _poisson_diagnostics("poisson", config, data["counts"],
                                data["points"], data["owner"], k_hat)


# ---------------------------------------------------------------------------
# independent-block surrogate process

@dataclass
class BlockDiagnostics:
    """Poisson diagnostics of the disjoint-block process plus its quality rates."""

    poisson: PoissonDiagnostics
    tv_distance: float
    buffer_hit_rate: float
    discard_rate: float
    partition: dict
    summary: EnsembleSummary


def _block_partition(n, k_mult, k1_mult):
    m = int(round(k_mult * math.log(n)))
    m1 = max(2, int(round(k1_mult * math.log(n))))
    if m < 4 * m1:
        raise PartitionError(f"block size {m} too small against buffer {m1}")
    b = n // (m + m1)
    if b < 2:
        raise PartitionError(
            f"chain of {n} sites cannot hold two (block + buffer) units of "
            f"size {m + m1}")
    unit = n // b
    m_eff = unit - m1
    margin = m1 // 2
    cores = []
    hoods = []
    buffers = np.zeros(n, dtype=bool)
    for alpha in range(b):
        start = alpha * unit + 1
        end = start + m_eff - 1
        cores.append((start, end))
        lo = max(1, start - margin)
        hi = min(n, end + margin)
        hoods.append((lo, hi))
        buf_end = n if alpha == b - 1 else (alpha + 1) * unit
        buffers[end:buf_end] = True  # 0-based slice of sites end+1..buf_end
    return {"m": m, "m1": m1, "blocks": b, "unit": unit, "m_eff": m_eff,
            "margin": margin, "cores": cores, "hoods": hoods,
            "buffer_mask": buffers}


def _block_points_chunk(dist, n, e0, length, tol, hoods, seed, r0, r1):
    diag = dist.coupling * sample_block(dist, n, seed, r0, r1)
    a, b = e0, e0 + length / n
    R = r1 - r0
    block_counts = np.zeros(R, dtype=np.int32)
    discarded = np.zeros(R, dtype=np.int32)
    points_out = []
    owner_out = []
    for lo, hi in hoods:
        sub = diag[:, lo - 1:hi]
        counts = _sturm_counts(sub, np.broadcast_to(np.array([a, b]), (R, 2)))
        k = counts[:, 1] - counts[:, 0]
        discarded += (k >= 2)
        single = np.nonzero(k == 1)[0]
        block_counts += (k == 1)
        if single.size:
            ranks = counts[single, 0] + 1
            energies = _bisect_ranks(sub, ranks, np.full(single.size, a),
                                     np.full(single.size, b), tol=tol,
                                     rows=single)
            points_out.append((energies - e0) * n)
            owner_out.append(single + r0)
    points = np.concatenate(points_out) if points_out else np.empty(0)
    owner = np.concatenate(owner_out) if owner_out else np.empty(0, dtype=np.int64)
    return {"counts": block_counts, "points": points,
            "owner": owner.astype(np.int64), "discarded": discarded}


def _buffer_hits_chunk(dist, n, e0, length, tol, buffer_mask, seed, r0, r1):
    diag = dist.coupling * sample_block(dist, n, seed, r0, r1)
    a, b = e0, e0 + length / n
    R = r1 - r0
    counts = _sturm_counts(diag, np.broadcast_to(np.array([a, b]), (R, 2)))
    k = (counts[:, 1] - counts[:, 0]).astype(np.int32)
    hits = np.zeros(R, dtype=bool)
    hit_rows = np.nonzero(k > 0)[0]
    if hit_rows.size:
        rows = np.repeat(hit_rows, k[hit_rows])
        ranks = np.concatenate([np.arange(counts[r, 0] + 1, counts[r, 1] + 1)
                                for r in hit_rows])
        energies = _bisect_ranks(diag, ranks, np.full(rows.size, a),
                                 np.full(rows.size, b), tol=tol, rows=rows)
        vecs, _, _ = _eigenvectors_batch(diag, energies, rows=rows, seed=seed)
        centers = _centers(vecs)
        in_buffer = buffer_mask[centers - 1]
        np.logical_or.at(hits, rows, in_buffer)
    return {"buffer_hit": hits, "full_counts": k}


def independent_block_process(config, progress=None, reference_density=True):
    """Poisson diagnostics from disjoint log-sized sub-blocks.

    The chain is partitioned into cores of about K log N sites separated
    by K1 log N buffers; each core's slightly enlarged neighborhood
    contributes its in-window eigenvalue when it holds exactly one
    (double occupancy is discarded and reported).  The counting pmf is
    compared with the full-operator pmf in total variation, and the rate
    of full-operator eigenfunctions centered inside buffers is reported.
    """
    if config.block_multiplier < 8.0 * config.buffer_multiplier:
        raise PartitionError(
            f"block multiplier {config.block_multiplier} must be at least 8x "
            f"the buffer multiplier {config.buffer_multiplier}")
    n = int(config.n_list[0])
    part = _block_partition(n, config.block_multiplier, config.buffer_multiplier)
    e0 = config.effective_e0()
    scale = abs(e0) + max(abs(b) for b in config.dist.spectral_bounds()) + 1.0
    tol = 1e-9 * scale
    block = _run_chunks(_block_points_chunk,
                        (config.dist, n, e0, config.window_length, tol,
                         tuple(part["hoods"]), config.master_seed),
                        config.realizations, config.workers, progress)
    full = _run_chunks(_buffer_hits_chunk,
                       (config.dist, n, e0, config.window_length, tol,
                        part["buffer_mask"], config.master_seed),
                       config.realizations, config.workers, progress)
    k_hat = _reference_density(config, n) if reference_density else None
    tv = _stats.total_variation(block["counts"], full["full_counts"])
    buffer_rate = float(full["buffer_hit"].mean())
    discard_rate = float(block["discarded"].sum()
                         / (config.realizations * part["blocks"]))
    diag = _poisson_diagnostics(
        "blocks", config, block["counts"], block["points"], block["owner"],
        k_hat,
        extra_meta={"tv_distance": tv, "buffer_hit_rate": buffer_rate,
                    "discard_rate": discard_rate,
                    "partition": {k: v for k, v in part.items()
                                  if k not in ("buffer_mask",)}})
    summary = diag.summary
    summary.constants.update({"tv_distance": tv,
                              "buffer_hit_rate": buffer_rate,
                              "discard_rate": discard_rate})
    return BlockDiagnostics(poisson=diag, tv_distance=tv,
                            buffer_hit_rate=buffer_rate,
                            discard_rate=discard_rate,
                            partition={k: v for k, v in part.items()
                                       if k != "buffer_mask"},
                            summary=summary)


# ---------------------------------------------------------------------------
# Bernoulli eigenvalue separation

def _full_spectrum_rows(diag, tol_coarse, tol_fine):
    """Per-row sorted full spectra via coarse bisection + targeted refinement.

    Gaps below 4 * tol_coarse after the coarse pass are re-bisected to
    tol_fine so minimal spacings are resolved without paying the fine
    tolerance on every eigenvalue.
    """
    R, n = diag.shape
    lo_row = diag.min(axis=1) - 2.0 - 1e-9
    hi_row = diag.max(axis=1) + 2.0 + 1e-9
    rows = np.repeat(np.arange(R), n)
    ranks = np.tile(np.arange(1, n + 1), R)
    eig = _bisect_ranks(diag, ranks, lo_row[rows], hi_row[rows],
                        tol=tol_coarse, rows=rows).reshape(R, n)
    gaps = np.diff(eig, axis=1)
    need = np.nonzero(gaps < max(8.0 * tol_coarse, 1e-7))
    if need[0].size:
        idx_rows = np.concatenate([need[0], need[0]])
        idx_ranks = np.concatenate([need[1] + 1, need[1] + 2])
        lo = lo_row[idx_rows]
        hi = hi_row[idx_rows]
        refined = _bisect_ranks(diag, idx_ranks, lo, hi, tol=tol_fine,
                                rows=idx_rows)
        eig[idx_rows, idx_ranks - 1] = refined
    return eig


def _min_spacing_chunk(dist, n, tol_rel, seed, r0, r1):
    diag = dist.coupling * sample_block(dist, n, seed, r0, r1)
    scale = float(np.max(np.abs(diag)) + 2.0)
    eig = _full_spectrum_rows(diag, tol_coarse=1e-7 * scale,
                              tol_fine=tol_rel * scale)
    return {"min_gap": np.min(np.diff(eig, axis=1), axis=1)}


def bernoulli_min_spacing(config, progress=None):
    """Distribution of the minimal eigenvalue spacing across realizations.

    Reports, per chain length, quantiles of -log(min spacing) / log N
    (the empirical separation exponent) with bootstrap confidence
    intervals.  Boundedness of the exponent across N is the acceptance
    statistic for the finite-scale separation law.
    """
    if config.dist.kind != "bernoulli":
        raise ValueError("the separation experiment targets the Bernoulli law")
    if config.dist.coupling == 0.0:
        raise ValueError("zero coupling has no disorder; use a nonzero coupling")
    rows = []
    spacing_data = {}
    for n in config.n_list:
        data = _run_chunks(_min_spacing_chunk,
                           (config.dist, int(n), config.spacing_tolerance,
                            config.master_seed),
                           config.realizations, config.workers, progress)
        gaps = data["min_gap"]
        scale = max(abs(b) for b in config.dist.spectral_bounds()) + 2.0
        floor = 4.0 * config.spacing_tolerance * scale
        if np.any(gaps <= floor):
            raise EigensolverError(
                f"minimal spacing at n={n} hit the solver tolerance floor "
                f"{floor:.2e}; refine spacing_tolerance")
        spacing_data[int(n)] = gaps
        neg_log = -np.log(gaps)
        for q in config.spacing_quantiles:
            c_hat = float(np.quantile(neg_log, q) / math.log(n))
            lo, hi = _stats.bootstrap_value_ci(
                neg_log, lambda v, _q=q, _n=n: np.quantile(v, _q) / math.log(_n),
                n_boot=config.bootstrap_resamples,
                seed=_rng.derive_seed(config.master_seed, f"spacing-{n}-{q}"))
            rows.append({"n": int(n), "quantile": float(q), "c_hat": c_hat,
                         "ci_low": lo, "ci_high": hi,
                         "min_spacing_quantile": float(np.quantile(gaps, 1 - q)),
                         "realizations": config.realizations})
    constants = {}
    q_top = max(config.spacing_quantiles)
    tops = {r["n"]: r["c_hat"] for r in rows if r["quantile"] == q_top}
    if len(tops) > 1:
        ns = sorted(tops)
        constants["c_hat_trend_ratio"] = tops[ns[-1]] / tops[ns[0]]
    summary = EnsembleSummary(
        experiment="separation", params=config.params_dict(),
        columns=["n", "quantile", "c_hat", "ci_low", "ci_high",
                 "min_spacing_quantile", "realizations"],
        rows=rows, constants=constants, metadata=_base_metadata(config))
    summary.metadata["all_spacings_positive"] = bool(
        all(np.all(g > 0) for g in spacing_data.values()))
    return summary, spacing_data


# ---------------------------------------------------------------------------
# near-degenerate pair repulsion

@dataclass
class RepulsionResult:
    """Scatter of (gap, center distance) for near-degenerate pairs.

    The lower envelope of center distance against log(1/gap) is fitted
    through per-bin minima; ``slope`` is the fitted envelope rate a in
    distance >= a log(1/gap) - offset.
    """

    gaps: np.ndarray
    center_distance: np.ndarray
    energies: np.ndarray
    slope: float
    offset: float
    ci_low: float
    ci_high: float
    fraction_satisfied: float
    advisory: str
    summary: EnsembleSummary


def _close_pairs_chunk(dist, n, threshold, seed, r0, r1):
    diag = dist.coupling * sample_block(dist, n, seed, r0, r1)
    scale = float(np.max(np.abs(diag)) + 2.0)
    tol_coarse = max(1e-8 * scale, threshold * 0.02)
    tol_fine = min(1e-12 * scale, threshold * 1e-3)
    eig = _full_spectrum_rows(diag, tol_coarse=tol_coarse, tol_fine=tol_fine)
    gaps = np.diff(eig, axis=1)
    cand = np.nonzero(gaps < threshold + 8.0 * tol_coarse)
    out_gap, out_dist, out_e, out_row = [], [], [], []
    if cand[0].size:
        rows2 = np.concatenate([cand[0], cand[0]])
        ranks2 = np.concatenate([cand[1] + 1, cand[1] + 2])
        refined = _bisect_ranks(diag, ranks2,
                                (diag.min(axis=1) - 2.0 - 1e-9)[rows2],
                                (diag.max(axis=1) + 2.0 + 1e-9)[rows2],
                                tol=tol_fine, rows=rows2).reshape(2, -1)
        fine_gap = refined[1] - refined[0]
        keep = np.nonzero(fine_gap < threshold)[0]
        if keep.size:
            pr = cand[0][keep]
            e_lo = refined[0][keep]
            e_hi = refined[1][keep]
            all_rows = np.concatenate([pr, pr])
            all_e = np.concatenate([e_lo, e_hi])
            vecs, _, _ = _eigenvectors_batch(diag, all_e, rows=all_rows,
                                             seed=seed)
            centers = _centers(vecs).reshape(2, -1)
            out_gap = fine_gap[keep]
            out_dist = np.abs(centers[1] - centers[0]).astype(np.float64)
            out_e = 0.5 * (e_lo + e_hi)
            out_row = pr + r0
    return {"gap": np.asarray(out_gap, dtype=np.float64),
            "distance": np.asarray(out_dist, dtype=np.float64),
            "energy": np.asarray(out_e, dtype=np.float64),
            "realization": np.asarray(out_row, dtype=np.int64)}


def repulsion_scatter(config, progress=None):
    """Center-distance scatter of eigenvalue pairs closer than a threshold.

    Near-degenerate pairs must keep their localization centers at least
    a log(1/gap) sites apart; the envelope is fitted through the minimum
    distance per log-gap bin and bootstrapped over pairs.
    """
    if config.dist.kind != "bernoulli":
        raise ValueError("the repulsion experiment targets the Bernoulli law")
    n = int(config.n_list[0])
    threshold = config.gap_threshold
    if threshold is None:
        threshold = float(n) ** -3.0
    data = _run_chunks(_close_pairs_chunk,
                       (config.dist, n, threshold, config.master_seed),
                       config.realizations, config.workers, progress)
    gaps = data["gap"]
    dist_sites = data["distance"]
    meta = _base_metadata(config)
    meta["gap_threshold"] = threshold
    meta["pairs_found"] = int(gaps.size)
    params = config.params_dict()
    if gaps.size < 3:
        summary = EnsembleSummary(
            experiment="repulsion", params=params,
            columns=["gap", "center_distance", "energy"], rows=[],
            metadata=meta)
        return RepulsionResult(
            gaps=gaps, center_distance=dist_sites, energies=data["energy"],
            slope=math.nan, offset=math.nan, ci_low=math.nan,
            ci_high=math.nan, fraction_satisfied=math.nan,
            advisory=(f"only {gaps.size} pairs below the gap threshold "
                      f"{threshold:.2e}; enlarge realizations or the threshold"),
            summary=summary)

    x = np.log(1.0 / gaps)
    y = dist_sites.astype(np.float64)

    def envelope_fit(xv, yv):
        lo = xv.min()
        bins = np.floor((xv - lo) / config.repulsion_bin_width).astype(int)
        bx, by, bw = [], [], []
        for b in np.unique(bins):
            mask = bins == b
            if mask.sum() >= config.repulsion_min_bin:
                bx.append(xv[mask].mean())
                by.append(yv[mask].min())
                bw.append(mask.sum())
        if len(bx) < 3:
            return None
        return _stats.wls_line(np.array(bx), np.array(by), np.sqrt(np.array(bw)))

    fit = envelope_fit(x, y)
    if fit is None:
        slope = offset = ci_lo = ci_hi = math.nan
        fraction = math.nan
        advisory = ("too few populated log-gap bins for an envelope fit; "
                    "enlarge realizations")
    else:
        slope, intercept = fit
        offset = -intercept
        rng = np.random.default_rng(
            _rng.derive_seed(config.master_seed, "repulsion-boot"))
        boots = []
        for _ in range(config.bootstrap_resamples):
            idx = rng.integers(0, x.size, size=x.size)
            f = envelope_fit(x[idx], y[idx])
            if f is not None:
                boots.append(f[0])
        if len(boots) >= 100:
            ci_lo, ci_hi = np.quantile(boots, [0.025, 0.975])
        else:
            ci_lo = ci_hi = math.nan
        fraction = float(np.mean(y >= slope * x - offset - 1e-9))
        advisory = ""
    rows = [{"gap": float(g), "center_distance": float(d), "energy": float(e)}
            for g, d, e in zip(gaps, dist_sites, data["energy"])]
    summary = EnsembleSummary(
        experiment="repulsion", params=params,
        columns=["gap", "center_distance", "energy"], rows=rows,
        slopes={"envelope": {"slope": float(slope), "offset": float(offset),
                             "ci_low": float(ci_lo), "ci_high": float(ci_hi)}},
        constants={"fraction_satisfied": float(fraction),
                   "pairs": int(gaps.size)},
        metadata=meta)
    return RepulsionResult(gaps=gaps, center_distance=dist_sites,
                           energies=data["energy"], slope=float(slope),
                           offset=float(offset), ci_low=float(ci_lo),
                           ci_high=float(ci_hi),
                           fraction_satisfied=float(fraction),
                           advisory=advisory, summary=summary)


# ---------------------------------------------------------------------------
# interlacing property run

@dataclass
class InterlacingResult:
    passes: int
    failures: list
    summary: EnsembleSummary


def interlacing_property_run(config, progress=None):
    """Monte Carlo property run of the rank-one count interlacing bound.

    Random (operator, site, raised value, interval) instances over mixed
    site laws; the experiment fails if any instance violates
    count_I(T) <= count_I(T with the site raised) + 1.
    """
    rng = np.random.default_rng(_rng.derive_seed(config.master_seed, "interlace"))
    law_pool = [SiteDistribution.uniform(0.0, 1.0),
                SiteDistribution.uniform(-2.0, 2.0),
                SiteDistribution.cantor(40),
                SiteDistribution.bernoulli(0.5)]
    failures = []
    total = config.realizations
    for i in range(total):
        dist = law_pool[int(rng.integers(0, len(law_pool)))]
        lam = float(rng.uniform(0.5, 3.0))
        n = int(rng.integers(5, 81))
        diag = lam * sample_block(dist, n, config.master_seed, i, i + 1)[0]
        op = TridiagonalOperator(diag)
        site = int(rng.integers(1, n + 1))
        tau = float(diag[site - 1] + rng.exponential(2.0))
        lo, hi = op.bounds()
        center = float(rng.uniform(lo, hi))
        width = float(rng.exponential(1.0)) + 1e-6
        ok = interlacing_check(op, site, tau, (center - width / 2, center + width / 2))
        if not ok:
            failures.append({"dist": format_distribution(dist), "coupling": lam,
                             "n": n, "site": site, "tau": tau,
                             "interval": [center - width / 2, center + width / 2],
                             "realization": i})
        if progress and (i + 1) % 1000 == 0:
            progress(i + 1, total)
    passes = total - len(failures)
    summary = EnsembleSummary(
        experiment="interlace", params=config.params_dict(),
        columns=["instances", "passes", "failures"],
        rows=[{"instances": total, "passes": passes,
               "failures": len(failures)}],
        constants={"pass_rate": passes / total},
        metadata={**_base_metadata(config), "failures": failures})
    return InterlacingResult(passes=passes, failures=failures, summary=summary)
