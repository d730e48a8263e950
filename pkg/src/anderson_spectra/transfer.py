"""SL(2,R) transfer-matrix cocycle kernels.

A single step at energy E over site value v is the unimodular matrix

    A(E, v) = [[E - v, -1],
               [1,      0]]

and the n-step product applied to (x_1, x_0) advances the eigenvalue
recursion x_{k+1} = (E - v_k) x_k - x_{k-1}.  Dirichlet eigenvalues of the
n-site operator are exactly the zeros of the (1,1) entry of the product,
which is the characteristic polynomial evaluated at E.

Two renormalization schemes are used:

* vector cocycle: track w = M_k e1 with a max-abs rescale and an exact log
  ledger (hot path: log-norms, characteristic polynomial, Lyapunov);
* QR cocycle: track M_k = exp(ledger) * Q * R with Q a rotation and R upper
  triangular, which keeps the determinant observable over long products
  (matrix norms, direction ratios).

Log-norms of vectors are read out in the max-abs norm, matching the
rescaling; operator norms use the exact largest singular value of the
2x2 triangular factor.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _rng
from .model import PotentialSample, sample_block, sample_sites


@dataclass(frozen=True)
class Transfer2x2:
    """One unimodular transfer factor (entries row-major a, b, c, d)."""

    a: float
    b: float
    c: float
    d: float

    def det(self):
        return self.a * self.d - self.b * self.c

    def as_array(self):
        return np.array([[self.a, self.b], [self.c, self.d]])

    def __matmul__(self, other):
        if isinstance(other, Transfer2x2):
            return Transfer2x2(
                self.a * other.a + self.b * other.c,
                self.a * other.b + self.b * other.d,
                self.c * other.a + self.d * other.c,
                self.c * other.b + self.d * other.d,
            )
        return self.as_array() @ np.asarray(other)


def one_step(energy, v):
    """Transfer factor ((E - v, -1), (1, 0)); determinant exactly 1."""
    return Transfer2x2(float(energy) - float(v), -1.0, 1.0, 0.0)


@dataclass(frozen=True)
class CocycleState:
    """Running product M_n = exp(log_scale) * rotation @ upper.

    ``upper`` is the 2x2 upper-triangular factor scaled to unit max-abs
    entry, ``rotation`` a pure rotation (det +1), so the determinant stays
    observable however long the product grows.  ``direction`` is the unit
    2-vector M_n e1 / |M_n e1|_2, which depends only on v_1 .. v_n.
    """

    rotation: np.ndarray
    upper: np.ndarray  # (r11, r12, r22)
    log_scale: float
    direction: np.ndarray
    step: int

    @property
    def current(self):
        """Scaled product rotation @ upper as a Transfer2x2 (unit max-abs)."""
        r11, r12, r22 = self.upper
        q = self.rotation
        return Transfer2x2(q[0, 0] * r11, q[0, 0] * r12 + q[0, 1] * r22,
                           q[1, 0] * r11, q[1, 0] * r12 + q[1, 1] * r22)

    def log_det(self):
        """log |det M_n|; exactly 0 for an exact product."""
        r11, r12, r22 = self.upper
        return 2.0 * self.log_scale + math.log(abs(r11 * r22))

    def log_operator_norm(self):
        r11, r12, r22 = self.upper
        return self.log_scale + math.log(_sigma_max(r11, r12, r22))


def initial_state():
    return CocycleState(rotation=np.eye(2), upper=np.array([1.0, 0.0, 1.0]),
                        log_scale=0.0, direction=np.array([1.0, 0.0]), step=0)


def _sigma_max(r11, r12, r22):
    """Largest singular value of [[r11, r12], [0, r22]] (closed form)."""
    s = r11 * r11 + r12 * r12 + r22 * r22
    disc = np.sqrt(np.maximum(s * s - 4.0 * (r11 * r22) ** 2, 0.0))
    return np.sqrt(0.5 * (s + disc))


def propagate(state, energy, v):
    """Left-multiply by one_step(energy, v), re-orthogonalize, re-scale."""
    ev = float(energy) - float(v)
    q = state.rotation
    # B = A @ Q with A = ((ev, -1), (1, 0))
    b00 = ev * q[0, 0] - q[1, 0]
    b01 = ev * q[0, 1] - q[1, 1]
    b10 = q[0, 0]
    b11 = q[0, 1]
    r = math.hypot(b00, b10)
    c, s = b00 / r, b10 / r
    # G^T B is upper triangular; new rotation is G
    t11 = c * b00 + s * b10
    t12 = c * b01 + s * b11
    t22 = -s * b01 + c * b11
    r11, r12, r22 = state.upper
    n11 = t11 * r11
    n12 = t11 * r12 + t12 * r22
    n22 = t22 * r22
    scale = max(abs(n11), abs(n12), abs(n22))
    w0, w1 = state.direction
    d0 = ev * w0 - w1
    d1 = w0
    dn = math.hypot(d0, d1)
    return CocycleState(
        rotation=np.array([[c, -s], [s, c]]),
        upper=np.array([n11 / scale, n12 / scale, n22 / scale]),
        log_scale=state.log_scale + math.log(scale),
        direction=np.array([d0 / dn, d1 / dn]),
        step=state.step + 1,
    )


def _diagonal_of(potential, coupling):
    values = potential.values if isinstance(potential, PotentialSample) else np.asarray(potential)
    return float(coupling) * np.asarray(values, dtype=np.float64)


def _vector_cocycle(diag, energy, renorm_every=1, with_derivative=False):
    """Run w = M_n e1 over one or many potentials (leading batch axis).

    Returns (w0, w1, ledger) and, when requested, the energy derivative
    (u0, u1) carried through the same rescaling ledger.
    """
    diag = np.asarray(diag, dtype=np.float64)
    batched = diag.ndim == 2
    shape = (diag.shape[0],) if batched else ()
    w0 = np.ones(shape)
    w1 = np.zeros(shape)
    ledger = np.zeros(shape)
    u0 = np.zeros(shape)
    u1 = np.zeros(shape)
    n = diag.shape[-1]
    for i in range(n):
        ev = energy - (diag[:, i] if batched else diag[i])
        w0, w1, u0, u1 = ev * w0 - w1, w0, (ev * u0 - u1) + w0, u0
        if (i + 1) % renorm_every == 0 or i == n - 1:
            s = np.maximum(np.abs(w0), np.abs(w1))
            s = np.where(s == 0.0, 1.0, s)
            w0 = w0 / s
            w1 = w1 / s
            if with_derivative:
                u0 = u0 / s
                u1 = u1 / s
            ledger = ledger + np.log(s)
    return w0, w1, u0, u1, ledger


def log_norm(potential, coupling, energy, renorm_every=1):
    """log of the max-abs norm of M_N(E) e1; overflow-safe for huge N.

    The empty product gives 0.  Rescaling happens every ``renorm_every``
    steps with an exact log correction, so the result is invariant (to
    rounding) under the rescale interval.
    """
    diag = _diagonal_of(potential, coupling)
    if diag.size == 0:
        return 0.0
    w0, w1, _, _, ledger = _vector_cocycle(diag, float(energy), renorm_every)
    return float(ledger + np.log(np.maximum(np.abs(w0), np.abs(w1))))


def log_norm_batch(diag_rows, energy, renorm_every=8):
    """Batched log |M_N e1| over rows of site-value diagonals."""
    w0, w1, _, _, ledger = _vector_cocycle(diag_rows, float(energy), renorm_every)
    return ledger + np.log(np.maximum(np.abs(w0), np.abs(w1)))


def char_poly_value(potential, coupling, energy):
    """Signed log-magnitude of the (1,1) entry of M_N(E).

    The entry is the characteristic polynomial of the Dirichlet operator
    evaluated at E, so its sign changes enumerate the spectrum.  Returns
    (sign, log_magnitude) with sign 0 and log -inf at an exact zero.
    """
    diag = _diagonal_of(potential, coupling)
    if diag.size == 0:
        return 1, 0.0
    w0, w1, _, _, ledger = _vector_cocycle(diag, float(energy))
    if w0 == 0.0:
        return 0, float("-inf")
    return int(np.sign(w0)), float(ledger + np.log(np.abs(w0)))


def log_norm_derivative(potential, coupling, energy):
    """d/dE of log |M_N(E) e1| (max-abs norm).

    Computed by the product-rule sum over prefix/suffix factors, carried
    forward as a tangent vector under the same rescaling ledger:
    u_{k+1} = A u_k + (dA/dE) w_k with dA/dE picking the top component.
    """
    diag = _diagonal_of(potential, coupling)
    if diag.size == 0:
        return 0.0
    w0, w1, u0, u1, _ = _vector_cocycle(diag, float(energy), with_derivative=True)
    if max(abs(w0), abs(w1)) == 0.0:
        raise ArithmeticError("vanishing cocycle norm (measure-zero input)")
    if abs(w0) >= abs(w1):
        return float(u0 / w0)
    return float(u1 / w1)


def lyapunov_exponent(dist, energy, steps, replicas=8, seed=0, coupling=None,
                      chunk=65536):
    """Monte Carlo Lyapunov exponent estimate (gamma_hat, stderr).

    Averages log |M_steps e1| / steps over independent replicas.  Site
    values stream in chunks through the counter-based sampler, so memory
    stays flat for steps up to 10**6 and beyond.
    """
    if steps < 1000:
        raise ValueError("need at least 1000 steps for a stable estimate")
    lam = dist.coupling if coupling is None else float(coupling)
    w0 = np.ones(replicas)
    w1 = np.zeros(replicas)
    ledger = np.zeros(replicas)
    done = 0
    while done < steps:
        m = min(chunk, steps - done)
        # sites done .. done+m-1 for every replica
        idx = np.arange(replicas, dtype=np.uint64)[:, None]
        sites = np.arange(done, done + m, dtype=np.uint64)[None, :]
        block = lam * sample_sites(dist, seed, idx, sites)
        for i in range(m):
            ev = energy - block[:, i]
            w0, w1 = ev * w0 - w1, w0
            if (i & 7) == 7:
                s = np.maximum(np.abs(w0), np.abs(w1))
                w0 /= s
                w1 /= s
                ledger += np.log(s)
        done += m
    s = np.maximum(np.abs(w0), np.abs(w1))
    per_step = (ledger + np.log(s)) / steps
    gamma = float(np.mean(per_step))
    stderr = float(np.std(per_step, ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    return gamma, stderr


def large_deviation_fraction(dist, energy, n, threshold_fraction, realizations,
                             seed=0, coupling=None, gamma=None):
    """Fraction of realizations with log |M_n e1| above a fraction of gamma*n.

    gamma defaults to an internal Lyapunov run on a derived sub-seed, so
    the estimate stays deterministic in (dist, energy, n, seed).
    """
    if not 0.0 < threshold_fraction < 1.0:
        raise ValueError("threshold fraction must be in (0, 1)")
    lam = dist.coupling if coupling is None else float(coupling)
    if gamma is None:
        gamma, _ = lyapunov_exponent(dist, energy, steps=max(20000, 4 * n),
                                     replicas=8,
                                     seed=_rng.derive_seed(seed, "ldt-gamma"),
                                     coupling=lam)
    values = np.empty(realizations)
    step = max(1, (1 << 22) // max(n, 1))
    for r0 in range(0, realizations, step):
        r1 = min(realizations, r0 + step)
        block = lam * sample_block(dist, n, seed, r0, r1)
        values[r0:r1] = log_norm_batch(block, energy)
    return float(np.mean(values > threshold_fraction * gamma * n))


def direction_ratio_samples(dist, energy, length, realizations, seed=0,
                            direction=(1.0, 0.0), coupling=None):
    """Samples of |M_l|_op / |M_l zeta|_2 over independent products.

    Computed from the shared QR ledger, so the ratio is overflow-safe; it
    is clipped at its exact lower bound 1.
    """
    if length < 1:
        raise ValueError("product length must be >= 1")
    zeta = np.asarray(direction, dtype=np.float64)
    zeta = zeta / np.linalg.norm(zeta)
    lam = dist.coupling if coupling is None else float(coupling)
    out = np.empty(realizations)
    chunk = max(1, (1 << 22) // max(length, 1))
    for r0 in range(0, realizations, chunk):
        r1 = min(realizations, r0 + chunk)
        block = lam * sample_block(dist, length, seed, r0, r1)
        B = r1 - r0
        q00 = np.ones(B)
        q01 = np.zeros(B)
        q10 = np.zeros(B)
        q11 = np.ones(B)
        r11 = np.ones(B)
        r12 = np.zeros(B)
        r22 = np.ones(B)
        for i in range(length):
            ev = energy - block[:, i]
            b00 = ev * q00 - q10
            b01 = ev * q01 - q11
            b10 = q00
            b11 = q01
            r = np.hypot(b00, b10)
            c, s = b00 / r, b10 / r
            t11 = c * b00 + s * b10
            t12 = c * b01 + s * b11
            t22 = -s * b01 + c * b11
            r11, r12, r22 = t11 * r11, t11 * r12 + t12 * r22, t22 * r22
            scale = np.maximum(np.abs(r11), np.maximum(np.abs(r12), np.abs(r22)))
            r11 /= scale
            r12 /= scale
            r22 /= scale
            q00, q01, q10, q11 = c, -s, s, c
        num = _sigma_max(r11, r12, r22)
        rz0 = r11 * zeta[0] + r12 * zeta[1]
        rz1 = r22 * zeta[1]
        den = np.hypot(rz0, rz1)
        out[r0:r1] = np.maximum(num / den, 1.0)
    return out
