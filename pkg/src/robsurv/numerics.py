"""Special functions and seeded random variate generation.

Thin, validated wrappers around :mod:`scipy.special` and
:class:`numpy.random.Generator`, plus the pieces scipy does not provide:
a log-space upper incomplete gamma for deep tails and a lower-truncated
gamma sampler that survives tail underflow.
"""

from __future__ import annotations

import numpy as np
from scipy import special

__all__ = [
    "DomainError",
    "make_rng",
    "spawn_rngs",
    "log_gamma",
    "digamma",
    "trigamma",
    "upper_incomplete_gamma_regularized",
    "log_upper_incomplete_gamma_regularized",
    "gamma_quantile",
    "sample_gamma",
    "log_sample_gamma",
    "sample_beta",
    "sample_normal",
    "sample_uniform",
    "sample_truncated_gamma_lower",
    "log_sample_truncated_gamma_lower",
]

# Below this tail mass the inverse-CDF route loses all precision.
TAIL_UNDERFLOW = 1e-300


class DomainError(ValueError):
    """Raised when a numerical routine is called outside its domain."""


def make_rng(seed: int, stream_id=0) -> np.random.Generator:
    """Return a PCG64 generator for ``(seed, stream_id)``.

    Streams with the same seed and different ids are derived through
    :class:`numpy.random.SeedSequence` spawn keys, so they are independent
    and each one is reproducible on its own. ``stream_id`` may be an int
    or a tuple of ints (a hierarchical key, e.g. replication then chain).
    """
    seed = int(seed)
    key = tuple(int(k) for k in np.atleast_1d(stream_id))
    if seed < 0 or any(k < 0 for k in key):
        raise DomainError("seed and stream_id must be non-negative")
    ss = np.random.SeedSequence(seed, spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    return [make_rng(seed, k) for k in range(count)]


def _positive(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be finite and > 0")
    return arr


def _unwrap(arr):
    return arr.item() if np.ndim(arr) == 0 else arr


def log_gamma(x):
    """ln Gamma(x) for x > 0."""
    return _unwrap(special.gammaln(_positive(x)))


def digamma(x):
    return _unwrap(special.digamma(_positive(x)))


def trigamma(x):
    return _unwrap(special.zeta(2.0, _positive(x)))


def upper_incomplete_gamma_regularized(a, x):
    """Q(a, x) = Gamma(a, x) / Gamma(a)."""
    a = _positive(a, "a")
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0):
        raise DomainError("x must be >= 0")
    return _unwrap(special.gammaincc(a, x))


def _log_gcf(a, x, max_iter=500, eps=1e-16):
    # Modified Lentz evaluation of the Legendre continued fraction,
    # Gamma(a, x) = exp(-x) x^a / (x + 1 - a - 1(1-a)/(x + 3 - a - ...)).
    tiny = 1e-300
    b = x + 1.0 - a
    c = np.full_like(b, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, max_iter + 1):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = b + an / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        if np.all(np.abs(delta - 1.0) < eps):
            break
    return -x + a * np.log(x) - special.gammaln(a) + np.log(h)


def log_upper_incomplete_gamma_regularized(a, x):
    """ln Q(a, x), finite even where Q itself underflows.

    Uses ``log(gammaincc)`` while the tail mass is representable and the
    continued fraction in log space beyond that.
    """
    a, x = np.broadcast_arrays(_positive(a, "a"), np.asarray(x, dtype=float))
    if np.any(np.isnan(x)) or np.any(x < 0):
        raise DomainError("x must be >= 0")
    with np.errstate(divide="ignore"):
        out = np.log(special.gammaincc(a, x))
    deep = (out < np.log(TAIL_UNDERFLOW)) | ~np.isfinite(out)
    deep &= np.isfinite(x) & (x > a + 1.0)
    if np.any(deep):
        out = np.array(out, dtype=float, copy=True)
        out[deep] = _log_gcf(a[deep], x[deep])
    out = np.where(np.isinf(x), -np.inf, out)
    return _unwrap(out)


def gamma_quantile(a, p):
    """x such that the regularized lower incomplete gamma P(a, x) = p."""
    a = _positive(a, "a")
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0) | ~(p < 1)):
        raise DomainError("p must lie in (0, 1)")
    return _unwrap(special.gammaincinv(a, p))


def sample_gamma(rng: np.random.Generator, shape, rate, size=None):
    """Gamma(shape, rate) draws (rate parameterization)."""
    shape = _positive(shape, "shape")
    rate = _positive(rate, "rate")
    return rng.gamma(shape, 1.0 / rate, size=size)


def log_sample_gamma(rng: np.random.Generator, shape, size=None):
    """log of Gamma(shape, 1) draws, accurate for tiny shapes.

    For shape < 1 the boost ``G(a) = G(a + 1) U^(1/a)`` is applied in log
    space, so the result stays finite where the draw itself would round
    to zero.
    """
    shape = np.asarray(shape, dtype=float)
    if size is None:
        size = shape.shape
    shape = np.broadcast_to(shape, size)
    small = shape < 1.0
    g = rng.gamma(np.where(small, shape + 1.0, shape), size=size)
    out = np.log(g)
    if np.any(small):
        u = rng.random(size=size)
        with np.errstate(divide="ignore"):
            boost = np.log(u) / np.where(small, shape, 1.0)
        out = np.where(small, out + boost, out)
    return _unwrap(out)


def sample_beta(rng: np.random.Generator, a, b, size=None):
    return rng.beta(_positive(a, "a"), _positive(b, "b"), size=size)


def sample_normal(rng: np.random.Generator, mean, sd, size=None):
    mean = np.asarray(mean, dtype=float)
    if not np.all(np.isfinite(mean)):
        raise DomainError("mean must be finite")
    return rng.normal(mean, _positive(sd, "sd"), size=size)


def sample_uniform(rng: np.random.Generator, lo, hi, size=None):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(hi <= lo):
        raise DomainError("need finite lo < hi")
    return rng.uniform(lo, hi, size=size)


def _tail_rejection(rng, a, x0):
    # Shifted-exponential envelope for Gamma(a, 1) restricted to (x0, inf);
    # valid because x0 > a - 1 whenever the tail mass has underflowed.
    out = np.empty_like(x0)
    todo = np.arange(x0.size)
    rate = np.where(a > 1.0, 1.0 - (a - 1.0) / x0, 1.0)
    while todo.size:
        r = rate[todo]
        x = x0[todo] + rng.exponential(size=todo.size) / r
        log_acc = (a[todo] - 1.0) * np.log(x / x0[todo]) - (1.0 - r) * (x - x0[todo])
        ok = np.log(rng.random(size=todo.size)) < log_acc
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def sample_truncated_gamma_lower(rng: np.random.Generator, shape, rate, lower):
    """Draw from Gamma(shape, rate) conditioned on exceeding ``lower``.

    Inverse CDF on the upper tail by default; when the tail mass drops
    below 1e-300 a shifted-exponential rejection sampler takes over.
    Broadcasts over array arguments.
    """
    shape, rate, lower = np.broadcast_arrays(
        _positive(shape, "shape"), _positive(rate, "rate"), np.asarray(lower, dtype=float)
    )
    if np.any(np.isnan(lower)) or np.any(lower < 0):
        raise DomainError("lower must be >= 0")
    x0 = rate * lower
    q = special.gammaincc(shape, x0)
    u = rng.random(size=shape.shape)
    deep = q < TAIL_UNDERFLOW
    with np.errstate(divide="ignore", invalid="ignore"):
        g = special.gammainccinv(shape, u * q)
    if np.any(deep):
        g = np.array(g, copy=True)
        g[deep] = _tail_rejection(rng, shape[deep], x0[deep])
    # Guard against rounding onto the boundary.
    g = np.where(g > x0, g, np.nextafter(x0, np.inf))
    return _unwrap(g / rate)


def log_sample_truncated_gamma_lower(rng: np.random.Generator, shape, log_lower):
    """log of a Gamma(shape, 1) draw conditioned on exceeding exp(log_lower).

    Works entirely from the log bound, so bounds beyond the double range
    are handled: there the conditional excess is exponential to within
    rounding and ``log(x0 + e)`` is returned as ``log_x0 + log1p(e / x0)``.
    """
    shape, log_lower = np.broadcast_arrays(
        np.asarray(shape, dtype=float), np.asarray(log_lower, dtype=float)
    )
    out = np.empty(shape.shape)
    huge = log_lower > 600.0
    ordinary = ~huge
    if np.any(ordinary):
        lower = np.exp(log_lower[ordinary])
        g = sample_truncated_gamma_lower(rng, shape[ordinary], 1.0, lower)
        out[ordinary] = np.log(g)
    if np.any(huge):
        lx = log_lower[huge]
        e = rng.exponential(size=lx.size)
        out[huge] = lx + np.log1p(e * np.exp(-lx))
    return _unwrap(out)
