"""Exact-count spectral kernel for symmetric tridiagonal operators.

Eigenvalue counting uses the signed Sturm pivot recursion

    q_1 = d_1 - mu,    q_i = d_i - mu - 1 / q_{i-1}

whose number of negative pivots equals the number of eigenvalues strictly
below mu.  Counting is integer-exact off the spectrum, which makes
bisection brackets certificates rather than heuristics.  All kernels are
vectorized over batches of (diagonal, shift) pairs; experiments at
ensemble scale call the private batch entry points directly.
"""

import math
from dataclasses import dataclass

import numpy as np

from .model import TridiagonalOperator
from . import _rng

# Zero Sturm pivots are replaced by +PIVOT_EPS * (max|d| + 2) so that an
# exact eigenvalue hit keeps the strictly-below count (the eigenvalue at mu
# is not counted).
PIVOT_EPS = 2.0 ** -50

_MAX_BISECT_ITERATIONS = 200


class EigensolverError(RuntimeError):
    """Raised on non-convergence or internal count inconsistencies."""


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalue with unit eigenvector, residual norm, and localization center.

    ``center`` is the 1-based site index of the largest |component|
    (smallest index on ties).
    """

    energy: float
    vector: np.ndarray
    residual: float
    center: int


@dataclass(frozen=True)
class SpectrumSlice:
    """Sorted eigenvalues inside a half-open energy interval [a, b)."""

    interval: tuple
    eigenvalues: np.ndarray

    @property
    def count(self):
        return int(self.eigenvalues.size)


def _sturm_counts(diag, shifts, rows=None):
    """Eigenvalues strictly below each shift, vectorized.

    diag : (n,) or (R, n) float array of diagonals.
    shifts : array of shifts.  Supported layouts:
      * diag (n,), shifts any shape          -> counts with shifts' shape
      * diag (R, n), shifts (R,)             -> (R,)
      * diag (R, n), shifts (R, G)           -> (R, G)
      * diag (R, n), rows (B,), shifts (B,)  -> (B,)  (row lookup per entry)
    """
    diag = np.asarray(diag, dtype=np.float64)
    shifts = np.asarray(shifts, dtype=np.float64)
    n = diag.shape[-1]
    if rows is not None:
        rows = np.asarray(rows)
        scale = np.max(np.abs(diag), axis=-1)[rows] + 2.0
    elif diag.ndim == 2:
        scale = np.max(np.abs(diag), axis=-1) + 2.0
        if shifts.ndim == 2:
            scale = scale[:, None]
    else:
        scale = np.max(np.abs(diag)) + 2.0
    eps = PIVOT_EPS * scale

    counts = np.zeros(shifts.shape, dtype=np.int64)
    q = np.zeros(shifts.shape, dtype=np.float64)
    inv_prev = 0.0
    for i in range(n):
        if rows is not None:
            d = diag[rows, i]
        elif diag.ndim == 2:
            d = diag[:, i] if shifts.ndim == 1 else diag[:, i:i + 1]
        else:
            d = diag[i]
        if i == 0:
            q = d - shifts
        else:
            q = d - shifts - inv_prev
        q = np.where(q == 0.0, eps, q)
        counts += q < 0.0
        if i < n - 1:
            with np.errstate(divide="ignore"):
                inv_prev = 1.0 / q
    return counts


def sturm_count(op, shift):
    """Number of eigenvalues of ``op`` strictly below ``shift``."""
    return int(_sturm_counts(op.diagonal, np.float64(shift)))


def count_in_interval(op, interval):
    """Number of eigenvalues in the half-open interval [a, b)."""
    a, b = interval
    if a > b:
        raise ValueError(f"interval endpoints out of order: {interval}")
    counts = _sturm_counts(op.diagonal, np.array([a, b], dtype=np.float64))
    return int(counts[1] - counts[0])


def _bisect_ranks(diag, ranks, lo, hi, tol, rows=None):
    """Bisect for the eigenvalues of given 1-based ranks.

    Bracket invariant: count(lo) < rank <= count(hi).  Entries converge
    either to width <= tol or to adjacent floats (ulp stall), whichever
    comes first.  Returns bracket midpoints.
    """
    ranks = np.asarray(ranks, dtype=np.int64)
    lo = np.array(lo, dtype=np.float64, copy=True)
    hi = np.array(hi, dtype=np.float64, copy=True)
    if lo.size == 0:
        return lo
    for _ in range(_MAX_BISECT_ITERATIONS):
        mid = 0.5 * (lo + hi)
        stalled = (mid <= lo) | (mid >= hi)
        active = (hi - lo > tol) & ~stalled
        if not active.any():
            break
        c = _sturm_counts(diag, mid, rows=rows if rows is None else rows)
        go_down = c >= ranks
        hi = np.where(active & go_down, mid, hi)
        lo = np.where(active & ~go_down, mid, lo)
    return 0.5 * (lo + hi)


def default_tolerance(op_or_scale):
    scale = op_or_scale.inf_norm() if hasattr(op_or_scale, "inf_norm") else float(op_or_scale)
    return 1e-12 * scale


def eigenvalues_in_interval(op, interval, tol=None):
    """All eigenvalues in [a, b), each bracketed by bisection to width <= tol."""
    a, b = float(interval[0]), float(interval[1])
    if a > b:
        raise ValueError(f"interval endpoints out of order: {interval}")
    if tol is None:
        tol = default_tolerance(op)
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    diag = op.diagonal
    ca, cb = _sturm_counts(diag, np.array([a, b]))
    k = int(cb - ca)
    if k == 0:
        return SpectrumSlice((a, b), np.empty(0))
    ranks = np.arange(int(ca) + 1, int(cb) + 1)
    eig = _bisect_ranks(diag, ranks, np.full(k, a), np.full(k, b), tol)
    return SpectrumSlice((a, b), eig)


def full_spectrum(op, tol=None):
    """All N eigenvalues, sorted ascending."""
    lo, hi = op.bounds()
    margin = 1e-9 * (abs(lo) + abs(hi) + 1.0)
    sl = eigenvalues_in_interval(op, (lo - margin, hi + margin), tol)
    if sl.count != op.n:
        raise EigensolverError(
            f"internal count mismatch: found {sl.count} of {op.n} eigenvalues")
    return sl.eigenvalues


def min_spacing(op, tol=None):
    """Smallest gap between consecutive eigenvalues.

    Raises when the observed gap is within 4x of the bisection tolerance,
    since the gap is then indistinguishable from solver error.
    """
    if op.n < 2:
        raise ValueError("need at least two eigenvalues for a spacing")
    if tol is None:
        tol = 1e-13 * op.inf_norm()
    spectrum = full_spectrum(op, tol)
    gap = float(np.min(np.diff(spectrum)))
    if gap <= 4.0 * tol:
        raise EigensolverError(
            f"minimal spacing {gap:.3e} is at the solver tolerance floor "
            f"({tol:.3e}); refine tol")
    return gap


def _solve_shifted(diag, shifts, rhs, rows=None):
    """Solve (T - shift I) x = rhs for a batch, with partial pivoting.

    diag : (n,) or (R, n); rows optionally maps batch entries to diag rows.
    shifts : (B,); rhs : (B, n).  Returns (B, n).
    Tridiagonal LU with row swaps (dgttrf-style), vectorized over B.
    """
    diag = np.asarray(diag, dtype=np.float64)
    if rows is not None:
        dd = diag[np.asarray(rows)] - np.asarray(shifts)[:, None]
    elif diag.ndim == 2:
        dd = diag - np.asarray(shifts)[:, None]
    else:
        dd = diag[None, :] - np.asarray(shifts)[:, None]
    B, n = dd.shape
    x = np.array(rhs, dtype=np.float64, copy=True).reshape(B, n)
    if n == 1:
        piv = np.where(dd[:, 0] == 0.0, PIVOT_EPS, dd[:, 0])
        return x / piv

    du = np.ones((B, n - 1))
    du2 = np.zeros((B, max(n - 2, 0)))
    dd = dd.copy()
    tiny = PIVOT_EPS * (np.max(np.abs(dd), axis=1, keepdims=False) + 2.0)
    for i in range(n - 1):
        piv = dd[:, i]
        swap = np.abs(piv) < 1.0  # sub-diagonal entry is exactly 1
        u_i = du[:, i]
        d2 = dd[:, i + 1]
        u2 = du[:, i + 1] if i + 1 < n - 1 else np.zeros(B)
        # no-swap update
        safe_piv = np.where(piv == 0.0, np.where(swap, 1.0, tiny), piv)
        m_ns = 1.0 / safe_piv
        dd_ns = d2 - m_ns * u_i
        x_ns = x[:, i + 1] - m_ns * x[:, i]
        # swap update: rows i and i+1 exchanged, then eliminate
        m_sw = piv  # old pivot divided by the sub-diagonal 1
        dd_sw = u_i - m_sw * d2
        du_sw = -m_sw * u2
        x_sw_i = x[:, i + 1]
        x_sw_i1 = x[:, i] - m_sw * x[:, i + 1]
        dd[:, i] = np.where(swap, 1.0, piv)
        du[:, i] = np.where(swap, d2, u_i)
        if i < n - 2:
            du2[:, i] = np.where(swap, u2, 0.0)
        dd[:, i + 1] = np.where(swap, dd_sw, dd_ns)
        if i + 1 < n - 1:
            du[:, i + 1] = np.where(swap, du_sw, u2)
        xi = x[:, i].copy()
        x[:, i] = np.where(swap, x_sw_i, xi)
        x[:, i + 1] = np.where(swap, x_sw_i1, x_ns)
    dd = np.where(dd == 0.0, tiny[:, None], dd)
    # back substitution with the fill-in superdiagonal
    x[:, n - 1] /= dd[:, n - 1]
    x[:, n - 2] = (x[:, n - 2] - du[:, n - 2] * x[:, n - 1]) / dd[:, n - 2]
    for i in range(n - 3, -1, -1):
        x[:, i] = (x[:, i] - du[:, i] * x[:, i + 1] - du2[:, i] * x[:, i + 2]) / dd[:, i]
    return x


def _centers(vectors):
    """1-based argmax of |components|, smallest index on ties.

    Components within one part in 1e9 of the maximum count as tied, so the
    tie-break is stable under rounding (symmetric eigenvectors produce
    exact ties only in exact arithmetic).
    """
    mag = np.abs(vectors)
    peak = mag.max(axis=-1, keepdims=True)
    return np.argmax(mag >= peak * (1.0 - 1e-9), axis=-1) + 1


def _eigenvectors_batch(diag, energies, rows=None, seed=0, iterations=3,
                        cluster_tol=None):
    """Inverse-iteration eigenvectors for a batch of (row, energy) pairs.

    Entries of one row whose energies are closer than cluster_tol are
    orthogonalized against each other (Gram-Schmidt, in energy order).
    Returns (vectors (B, n), residuals (B,)).
    """
    diag = np.asarray(diag, dtype=np.float64)
    energies = np.asarray(energies, dtype=np.float64)
    B = energies.size
    n = diag.shape[-1]
    if rows is not None:
        rows = np.asarray(rows)
        dmat = diag[rows]
    elif diag.ndim == 2:
        dmat = diag
        rows = np.arange(B)
    else:
        dmat = np.broadcast_to(diag, (B, n))
        rows = np.zeros(B, dtype=np.int64)
    scale = np.max(np.abs(dmat), axis=1) + 2.0
    if cluster_tol is None:
        cluster_tol = 1e-10 * scale
    else:
        cluster_tol = np.full(B, cluster_tol)

    # identify near-degenerate clusters within each row
    order = np.lexsort((energies, rows))
    cluster_mate = np.full(B, -1)
    for pos in range(1, B):
        i, j = order[pos - 1], order[pos]
        if rows[i] == rows[j] and abs(energies[j] - energies[i]) < cluster_tol[j]:
            cluster_mate[j] = i

    rng = np.random.default_rng(_rng.derive_seed(seed, "inverse-iteration"))
    x = rng.standard_normal((B, n))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    for _ in range(iterations):
        x = _solve_shifted(dmat, energies, x)
        for pos in np.nonzero(cluster_mate >= 0)[0]:
            mate = cluster_mate[pos]
            x[pos] -= np.dot(x[pos], x[mate]) * x[mate]
        x /= np.linalg.norm(x, axis=1, keepdims=True)
    # one Rayleigh-quotient polish of the reported energies
    hx = dmat * x
    hx[:, :-1] += x[:, 1:]
    hx[:, 1:] += x[:, :-1]
    energies_out = np.einsum("bi,bi->b", x, hx)
    res = np.linalg.norm(hx - energies_out[:, None] * x, axis=1)
    return x, energies_out, res


def eigenvector(op, energy, seed=0, orthogonal_to=(), max_iterations=4):
    """Eigenpair at an energy known to be within tolerance of an eigenvalue.

    Inverse iteration from a seeded random start; near-degenerate requests
    pass previously found vectors in ``orthogonal_to`` to keep the new
    vector orthogonal.  Raises EigensolverError (carrying the best residual)
    if the residual contract 1e-8 * (max|d| + 2) is not met.
    """
    diag = op.diagonal
    n = op.n
    scale = op.inf_norm()
    rng = np.random.default_rng(_rng.derive_seed(seed, f"eigvec-{energy!r}"))
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    best = None
    e_out = float(energy)
    for _ in range(max_iterations):
        x = _solve_shifted(diag, np.array([energy]), x[None, :])[0]
        for prev in orthogonal_to:
            v = prev.vector if isinstance(prev, EigenPair) else np.asarray(prev)
            x -= np.dot(x, v) * v
        nrm = np.linalg.norm(x)
        if nrm == 0.0 or not np.isfinite(nrm):
            raise EigensolverError("inverse iteration collapsed to zero vector")
        x /= nrm
        hx = op.apply(x)
        e_out = float(np.dot(x, hx))
        res = float(np.linalg.norm(hx - e_out * x))
        if best is None or res < best[0]:
            best = (res, x.copy(), e_out)
        if res <= 1e-10 * scale:
            break
    res, x, e_out = best
    if res > 1e-8 * scale:
        raise EigensolverError(
            f"inverse iteration did not converge: best residual {res:.3e} "
            f"exceeds {1e-8 * scale:.3e}")
    return EigenPair(energy=e_out, vector=x, residual=res, center=int(_centers(x[None, :])[0]))


def eigenpairs_in_interval(op, interval, tol=None, seed=0):
    """Eigenpairs for every eigenvalue in [a, b), orthogonalized in clusters."""
    sl = eigenvalues_in_interval(op, interval, tol)
    if sl.count == 0:
        return []
    vecs, energies, res = _eigenvectors_batch(op.diagonal[None, :],
                                              sl.eigenvalues,
                                              rows=np.zeros(sl.count, dtype=np.int64),
                                              seed=seed)
    centers = _centers(vecs)
    return [EigenPair(float(energies[i]), vecs[i], float(res[i]), int(centers[i]))
            for i in range(sl.count)]


def interlacing_check(op, site, tau, interval):
    """Rank-one monotonicity of interval counts.

    Raising one diagonal entry to tau >= d_site can push at most one
    eigenvalue out of any interval:
    count_I(T) <= count_I(T with site -> tau) + 1.  Returns that truth value.
    """
    if not 1 <= site <= op.n:
        raise ValueError(f"site {site} outside [1, {op.n}]")
    old = op.diagonal[site - 1]
    if tau < old:
        raise ValueError(f"tau = {tau} must be >= current diagonal value {old}")
    modified = op.diagonal.copy()
    modified[site - 1] = tau
    a, b = interval
    shifts = np.array([a, b])
    c_orig = _sturm_counts(op.diagonal, shifts)
    c_mod = _sturm_counts(modified, shifts)
    return int(c_orig[1] - c_orig[0]) <= int(c_mod[1] - c_mod[0]) + 1
