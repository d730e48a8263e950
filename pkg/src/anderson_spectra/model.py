"""Site distributions, reproducible potential sampling, and operator assembly.

The lattice Hamiltonian acts on sites 1..N as

    (H x)_n = x_{n+1} + x_{n-1} + coupling * v_n * x_n

with Dirichlet truncation (x_0 = x_{N+1} = 0), so the finite operator is a
symmetric tridiagonal matrix with unit off-diagonals and diagonal
coupling * v_n.  The v_n are IID draws from one of three single-site laws:

* ``uniform(a, b)``   -- absolutely continuous, Holder exponent 1,
* ``cantor(depth)``   -- the middle-thirds Cantor measure truncated at
                         ``depth`` ternary digits, Holder exponent ln2/ln3,
* ``bernoulli(p)``    -- atoms at 0 and 1, not Holder regular.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _rng

CANTOR_EXPONENT = math.log(2.0) / math.log(3.0)


class DistributionFormatError(ValueError):
    """Raised for malformed distribution specification strings."""


@dataclass(frozen=True)
class SiteDistribution:
    """Tagged description of the single-site law with its coupling.

    ``kind`` is one of ``"uniform"``, ``"cantor"``, ``"bernoulli"``.  The
    coupling multiplies sampled values on the operator diagonal and
    defaults to 1.  A degenerate uniform law (``low == high``) is allowed
    and models zero disorder.
    """

    kind: str
    low: float = 0.0
    high: float = 1.0
    depth: int = 40
    p: float = 0.5
    coupling: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "cantor", "bernoulli"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if not math.isfinite(self.coupling):
            raise ValueError("coupling must be finite")
        if self.kind == "uniform":
            if not (math.isfinite(self.low) and math.isfinite(self.high)):
                raise ValueError("uniform bounds must be finite")
            if self.low > self.high:
                raise ValueError(f"uniform bounds must satisfy a <= b, got ({self.low}, {self.high})")
        elif self.kind == "cantor":
            if int(self.depth) != self.depth or self.depth < 1:
                raise ValueError(f"cantor depth must be a positive integer, got {self.depth}")
        elif self.kind == "bernoulli":
            if not 0.0 <= self.p <= 1.0:
                raise ValueError(f"bernoulli probability out of range [0, 1]: {self.p}")

    @classmethod
    def uniform(cls, low, high, coupling=1.0):
        return cls(kind="uniform", low=float(low), high=float(high), coupling=float(coupling))

    @classmethod
    def cantor(cls, depth=40, coupling=1.0):
        return cls(kind="cantor", depth=int(depth), coupling=float(coupling))

    @classmethod
    def bernoulli(cls, p, coupling=1.0):
        return cls(kind="bernoulli", p=float(p), coupling=float(coupling))

    @property
    def support(self):
        """Closed interval containing all samples (pre-coupling)."""
        if self.kind == "uniform":
            return (self.low, self.high)
        return (0.0, 1.0)

    @property
    def holder_exponent(self):
        """Declared Holder exponent of the law, or None for Bernoulli."""
        if self.kind == "uniform":
            return 1.0
        if self.kind == "cantor":
            return CANTOR_EXPONENT
        return None

    @property
    def is_holder(self):
        return self.kind != "bernoulli"

    def with_coupling(self, coupling):
        return replace(self, coupling=float(coupling))

    def diagonal_center(self):
        """Center of the diagonal's range, coupling included."""
        lo, hi = self.support
        return 0.5 * (lo + hi) * self.coupling

    def spectral_bounds(self):
        """Interval guaranteed to contain the spectrum of any assembled operator."""
        lo, hi = self.support
        vals = (lo * self.coupling, hi * self.coupling)
        return (min(vals) - 2.0, max(vals) + 2.0)


@dataclass(frozen=True)
class PotentialSample:
    """One realization of N IID site values (pre-coupling)."""

    values: np.ndarray
    master_seed: int
    realization_index: int

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class TridiagonalOperator:
    """Dirichlet restriction to N sites: diagonal entries, unit off-diagonals."""

    diagonal: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diagonal, dtype=np.float64)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("diagonal must be a 1-D array with at least one entry")
        object.__setattr__(self, "diagonal", d)

    @property
    def n(self):
        return self.diagonal.size

    def inf_norm(self):
        """Row-sum norm bound max |d_i| + 2."""
        return float(np.max(np.abs(self.diagonal))) + 2.0

    def bounds(self):
        """Interval [min d - 2, max d + 2] containing the whole spectrum."""
        return (float(self.diagonal.min()) - 2.0, float(self.diagonal.max()) + 2.0)

    def apply(self, x):
        """Matrix-vector product H x (supports a batch in the leading axis)."""
        x = np.asarray(x, dtype=np.float64)
        y = self.diagonal * x
        y[..., :-1] += x[..., 1:]
        y[..., 1:] += x[..., :-1]
        return y

    def dense(self):
        h = np.diag(self.diagonal)
        idx = np.arange(self.n - 1)
        h[idx, idx + 1] = 1.0
        h[idx + 1, idx] = 1.0
        return h

    def restricted(self, box):
        """Sub-operator on the 1-based inclusive site range box = (s, t)."""
        s, t = box
        if not (1 <= s <= t <= self.n):
            raise ValueError(f"box {box} not contained in [1, {self.n}]")
        return TridiagonalOperator(self.diagonal[s - 1:t].copy())


def sample_sites(dist, master_seed, index, site, stream=_rng.STREAM_VALUES):
    """Site values at explicit (realization index, site) positions.

    index and site follow numpy broadcasting.  This is the primitive every
    sampler reduces to: site i of realization r is a pure function of
    (master_seed, r, i), independent of evaluation order, chunking, or the
    total chain length.
    """
    index = np.asarray(index, dtype=np.uint64)
    site = np.asarray(site, dtype=np.uint64)
    if dist.kind == "uniform":
        u = _rng.uniform01(master_seed, stream, index, site)
        return dist.low + (dist.high - dist.low) * u
    if dist.kind == "bernoulli":
        u = _rng.uniform01(master_seed, stream, index, site)
        return (u < dist.p).astype(np.float64)
    # Cantor: depth fair bits b_k -> sum 2 b_k 3^-k via a Horner loop, so the
    # law is exactly self-similar at every scale >= 3^-depth.
    depth = int(dist.depth)
    nwords = (depth + 63) // 64
    wordlist = [
        _rng.words(master_seed, _rng.STREAM_EXTRA_WORDS + j, index, site)
        for j in range(nwords)
    ]
    value = np.zeros(np.broadcast_shapes(index.shape, site.shape), dtype=np.float64)
    for k in range(depth, 0, -1):
        w = wordlist[(k - 1) // 64]
        bit = ((w >> np.uint64((k - 1) % 64)) & np.uint64(1)).astype(np.float64)
        value = (value + 2.0 * bit) / 3.0
    return value


def sample_block(dist, n, master_seed, first_index, last_index, stream=_rng.STREAM_VALUES):
    """Site values for realizations first_index..last_index-1, shape (count, n)."""
    if n < 1:
        raise ValueError("need at least one site")
    idx = np.arange(first_index, last_index, dtype=np.uint64)[:, None]
    sites = np.arange(n, dtype=np.uint64)[None, :]
    return sample_sites(dist, master_seed, idx, sites, stream)


def sample_potential(dist, n, master_seed, realization_index):
    """Draw one potential realization.

    Deterministic in all four arguments; site i's value is a pure function
    of (master_seed, realization_index, i), independent of evaluation
    order and of n.
    """
    values = sample_block(dist, n, master_seed, realization_index, realization_index + 1)[0]
    return PotentialSample(values=values, master_seed=int(master_seed),
                           realization_index=int(realization_index))


def assemble_operator(potential, coupling=1.0):
    """Dirichlet operator with diagonal coupling * v_n."""
    values = potential.values if isinstance(potential, PotentialSample) else np.asarray(potential)
    return TridiagonalOperator(float(coupling) * np.asarray(values, dtype=np.float64))


def operator_from(dist, n, master_seed, realization_index):
    """Convenience: sample a potential and assemble it with dist.coupling."""
    return assemble_operator(sample_potential(dist, n, master_seed, realization_index),
                             dist.coupling)


def _cantor_cdf(x):
    """Cantor function (devil's staircase), vectorized, values in [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(x.shape)
    out[x >= 1.0] = 1.0
    active = (x > 0.0) & (x < 1.0)
    rem = x[active].copy()
    acc = np.zeros(rem.shape)
    weight = 0.5
    live = np.ones(rem.shape, dtype=bool)
    for _ in range(80):
        if not live.any() or weight < 1e-18:
            break
        t = 3.0 * rem
        lower = live & (t < 1.0)
        upper = live & (t > 2.0)
        middle = live & ~lower & ~upper
        rem = np.where(lower, t, np.where(upper, t - 2.0, rem))
        acc = acc + weight * (upper | middle)
        live = live & ~middle
        weight *= 0.5
    out[active] = acc
    return out


def cdf(dist, x):
    """Cumulative distribution function of the (pre-coupling) site law.

    Right-continuous and nondecreasing; accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if dist.kind == "uniform":
        if dist.high == dist.low:  # point mass
            out = (x >= dist.low).astype(np.float64)
        else:
            out = np.clip((x - dist.low) / (dist.high - dist.low), 0.0, 1.0)
    elif dist.kind == "bernoulli":
        out = np.where(x < 0.0, 0.0, np.where(x < 1.0, 1.0 - dist.p, 1.0))
    else:
        out = _cantor_cdf(x)
    return float(out[0]) if scalar else out


def holder_certificate(dist, interval_count=3000):
    """Empirical Holder exponent from an aligned dyadic/triadic interval scan.

    Scans grid-aligned intervals of the law's support at successively finer
    scales (dyadic for uniform, triadic for Cantor), computes
    log mu(I) / log |I| with lengths normalized by the support width, and
    returns (beta_hat, worst_constant) where beta_hat is the minimum ratio
    and worst_constant = max mu(I) / |I|^beta_hat over the scanned set.
    """
    if dist.kind == "bernoulli":
        raise ValueError("bernoulli site law is not Holder regular")
    lo, hi = dist.support
    width = hi - lo
    if width <= 0.0:
        raise ValueError("degenerate (zero-width) law has no Holder exponent")
    base = 2 if dist.kind == "uniform" else 3
    ratios = []
    masses = []
    lengths = []
    scanned = 0
    k = 1
    while scanned + base ** k <= interval_count or k == 1:
        m = base ** k
        edges = lo + width * np.arange(m + 1) / m
        mass = np.diff(cdf(dist, edges))
        keep = mass > 1e-13
        ell = np.full(m, 1.0 / m)  # length normalized by support width
        ratios.extend(np.log(mass[keep]) / np.log(ell[keep]))
        masses.extend(mass[keep])
        lengths.extend(ell[keep])
        scanned += m
        k += 1
        if base ** k > 10 ** 7:
            break
    beta_hat = float(min(ratios))
    masses = np.asarray(masses)
    lengths = np.asarray(lengths)
    worst_constant = float(np.max(masses / lengths ** beta_hat))
    return beta_hat, worst_constant


def parse_distribution(text):
    """Parse a distribution spec: ``uniform:a,b`` | ``cantor:depth`` |
    ``bernoulli:p``, each optionally suffixed ``@lambda=x``.

    Malformed strings raise DistributionFormatError with the character
    position of the offending token.
    """
    if not isinstance(text, str) or not text.strip():
        raise DistributionFormatError("empty distribution specification")
    spec = text.strip()
    coupling = 1.0
    at = spec.find("@")
    if at >= 0:
        suffix = spec[at + 1:]
        if not suffix.startswith("lambda="):
            raise DistributionFormatError(
                f"expected 'lambda=' after '@' at position {at + 1} in {text!r}")
        try:
            coupling = float(suffix[len("lambda="):])
        except ValueError:
            raise DistributionFormatError(
                f"bad coupling value at position {at + 1 + len('lambda=')} in {text!r}") from None
        spec = spec[:at]
    colon = spec.find(":")
    if colon < 0:
        raise DistributionFormatError(
            f"missing ':' separating kind and parameters in {text!r}")
    kind, args = spec[:colon], spec[colon + 1:]
    argpos = colon + 1

    def _float(token, pos):
        try:
            return float(token)
        except ValueError:
            raise DistributionFormatError(
                f"bad number {token!r} at position {pos} in {text!r}") from None

    try:
        if kind == "uniform":
            parts = args.split(",")
            if len(parts) != 2:
                raise DistributionFormatError(
                    f"uniform takes two parameters 'a,b' at position {argpos} in {text!r}")
            a = _float(parts[0], argpos)
            b = _float(parts[1], argpos + len(parts[0]) + 1)
            return SiteDistribution.uniform(a, b, coupling)
        if kind == "cantor":
            try:
                depth = int(args)
            except ValueError:
                raise DistributionFormatError(
                    f"bad depth {args!r} at position {argpos} in {text!r}") from None
            return SiteDistribution.cantor(depth, coupling)
        if kind == "bernoulli":
            p = _float(args, argpos)
            return SiteDistribution.bernoulli(p, coupling)
    except ValueError as exc:
        if isinstance(exc, DistributionFormatError):
            raise
        raise DistributionFormatError(
            f"{exc} (at position {argpos} in {text!r})") from None
    raise DistributionFormatError(
        f"unknown distribution kind {kind!r} at position 0 in {text!r}")


def format_distribution(dist):
    """Inverse of parse_distribution (round-trips bit-exactly via repr)."""
    if dist.kind == "uniform":
        body = f"uniform:{dist.low!r},{dist.high!r}"
    elif dist.kind == "cantor":
        body = f"cantor:{dist.depth}"
    else:
        body = f"bernoulli:{dist.p!r}"
    if dist.coupling != 1.0:
        body += f"@lambda={dist.coupling!r}"
    return body
