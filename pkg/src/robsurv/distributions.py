"""Generalized gamma family, the DLH slab and the spike-and-slab local prior.

The generalized gamma (GG) density used throughout is

    p(t | alpha, gamma, theta) = gamma alpha^alpha / Gamma(alpha)
                                 * theta^alpha t^(alpha gamma - 1)
                                 * exp(-alpha theta t^gamma),

so that ``alpha * theta * T**gamma ~ Gamma(alpha, 1)``. The doubly
log-adjusted heavy-tailed (DLH) density on lambda > 0 is

    c / (1 + lambda) / (1 + L1) / (1 + L2)^(1 + c),
    L1 = log(1 + lambda), L2 = log(1 + L1),

with closed-form CDF ``1 - (1 + L2)^(-c)``.

Most functions come in a plain version and a ``*_log`` version taking
log-scale arguments; the latter are what the sampler uses, since DLH draws
routinely leave the double range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .numerics import (
    DomainError,
    log_sample_gamma,
    log_upper_incomplete_gamma_regularized,
)

__all__ = [
    "GGParams",
    "DlhParams",
    "LocalPriorMixture",
    "gg_log_density",
    "gg_log_density_log",
    "gg_sample",
    "gg_log_sample",
    "gg_mean",
    "gg_reliability",
    "gg_log_reliability_log",
    "gg_hazard",
    "dlh_log_density",
    "dlh_log_density_log",
    "dlh_cdf",
    "dlh_quantile",
    "dlh_sample_direct",
    "dlh_log_sample_direct",
    "dlh_augmentation_conditionals",
    "dlh_augmentation_conditionals_log",
    "gig_log_density_unnormalized",
    "LOG_LAMBDA_MAX",
]

# Saturation point for log-scale DLH draws. Beyond this the slab mass is
# < 1e-300 for any c >= 1 and nothing downstream can tell the difference.
LOG_LAMBDA_MAX = 1e250


def _unwrap(arr):
    return arr.item() if np.ndim(arr) == 0 else arr


def _check_positive(name, value):
    v = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise DomainError(f"{name} must be finite and > 0")
    return v


@dataclass(frozen=True)
class GGParams:
    """Shape ``alpha``, power ``gamma`` and rate-like scale ``theta``."""

    alpha: float
    gamma: float
    theta: float

    def __post_init__(self):
        for name in ("alpha", "gamma", "theta"):
            _check_positive(name, getattr(self, name))

    def logpdf(self, t):
        return gg_log_density(t, self.alpha, self.gamma, self.theta)

    def mean(self):
        return gg_mean(self.alpha, self.gamma, self.theta)

    def reliability(self, t):
        return gg_reliability(t, self.alpha, self.gamma, self.theta)

    def hazard(self, t):
        return gg_hazard(t, self.alpha, self.gamma, self.theta)

    def sample(self, rng, size=None):
        return gg_sample(rng, self.alpha, self.gamma, self.theta, size=size)


@dataclass(frozen=True)
class DlhParams:
    c: float = 1.0

    def __post_init__(self):
        _check_positive("c", self.c)


@dataclass(frozen=True)
class LocalPriorMixture:
    """(1 - s) * point mass at 1 + s * DLH(c)."""

    s: float
    dlh: DlhParams = DlhParams()

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise DomainError("s must lie in (0, 1)")

    def sample(self, rng, size=None):
        """Return ``(z, lam)``; ``lam`` is exactly 1 wherever ``z == 0``."""
        z = (rng.random(size=size) < self.s).astype(np.int8)
        lam = np.where(z == 1, dlh_sample_direct(rng, self.dlh.c, size=size), 1.0)
        return z, _unwrap(lam)


# ---------------------------------------------------------------- GG family

def gg_log_density_log(log_t, alpha, gamma, log_theta):
    """GG log density with time and scale given on the log scale."""
    log_t = np.asarray(log_t, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    with np.errstate(over="ignore"):
        scaled = np.exp(log_theta + gamma * log_t)
    out = (
        np.log(gamma)
        + special.xlogy(alpha, alpha)
        - special.gammaln(alpha)
        + alpha * log_theta
        + (alpha * gamma - 1.0) * log_t
        - alpha * scaled
    )
    return _unwrap(out)


def gg_log_density(t, alpha, gamma, theta):
    """Log of the GG density, evaluated entirely in log space."""
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("t must be > 0")
    return gg_log_density_log(np.log(t), alpha, gamma, np.log(theta))


def gg_log_sample(rng, alpha, gamma, log_theta, size=None):
    """log T for T ~ GG(alpha, gamma, exp(log_theta))."""
    alpha, gamma, log_theta = np.broadcast_arrays(
        np.asarray(alpha, float), np.asarray(gamma, float), np.asarray(log_theta, float)
    )
    if size is None:
        size = alpha.shape
    log_g = log_sample_gamma(rng, np.broadcast_to(alpha, size), size=size)
    return (log_g - np.log(alpha) - log_theta) / gamma


def gg_sample(rng, alpha, gamma, theta, size=None):
    """Draw T = (g / (alpha theta))^(1/gamma) with g ~ Gamma(alpha, 1)."""
    for name, v in (("alpha", alpha), ("gamma", gamma), ("theta", theta)):
        _check_positive(name, v)
    shape = np.broadcast_shapes(np.shape(alpha), np.shape(gamma), np.shape(theta))
    if size is None:
        size = shape
    g = rng.gamma(np.broadcast_to(alpha, size), size=size)
    return _unwrap((g / (np.asarray(alpha) * np.asarray(theta))) ** (1.0 / np.asarray(gamma)))


def gg_mean(alpha, gamma, theta):
    """E[T] = (alpha theta)^(-1/gamma) Gamma(alpha + 1/gamma) / Gamma(alpha)."""
    alpha = np.asarray(alpha, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    log_m = (
        -np.log(alpha * theta) / gamma
        + special.gammaln(alpha + 1.0 / gamma)
        - special.gammaln(alpha)
    )
    return _unwrap(np.exp(log_m))


def gg_log_reliability_log(log_t, alpha, gamma, log_theta):
    """ln R(t) = ln Q(alpha, alpha theta t^gamma), log-scale inputs."""
    with np.errstate(over="ignore"):
        x = np.exp(np.log(alpha) + log_theta + gamma * np.asarray(log_t, float))
    return log_upper_incomplete_gamma_regularized(alpha, x)


def gg_reliability(t, alpha, gamma, theta):
    """Survival function Q(alpha, alpha theta t^gamma).

    Values below 1e-300 are clamped to 0.
    """
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("t must be > 0")
    x = alpha * np.asarray(theta, float) * t ** np.asarray(gamma, float)
    r = special.gammaincc(alpha, x)
    return _unwrap(np.where(r < 1e-300, 0.0, r))


def gg_hazard(t, alpha, gamma, theta):
    """Density over reliability.

    Raises
    ------
    OverflowError
        If the reliability has underflowed, so the ratio is not representable.
    """
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("t must be > 0")
    r = gg_reliability(t, alpha, gamma, theta)
    if np.any(np.asarray(r) <= 0):
        raise OverflowError("reliability underflow; hazard not representable")
    return _unwrap(np.exp(gg_log_density(t, alpha, gamma, theta)) / r)


# ---------------------------------------------------------------------- DLH

def _log1pexp(x):
    return np.logaddexp(0.0, x)


def dlh_log_density_log(log_lam, c):
    """DLH log density at lambda = exp(log_lam), stable for huge lambda."""
    log_lam = np.asarray(log_lam, dtype=float)
    l0 = _log1pexp(log_lam)  # log(1 + lambda)
    l1 = np.log1p(l0)
    l2 = np.log1p(l1)
    return _unwrap(np.log(c) - l0 - l1 - (1.0 + c) * l2)


def dlh_log_density(lam, c):
    lam = np.asarray(lam, dtype=float)
    if np.any(~(lam > 0)):
        raise DomainError("lambda must be > 0")
    _check_positive("c", c)
    l0 = np.log1p(lam)
    l1 = np.log1p(l0)
    l2 = np.log1p(l1)
    return _unwrap(np.log(c) - l0 - l1 - (1.0 + c) * l2)


def dlh_cdf(lam, c):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("lambda must be >= 0")
    _check_positive("c", c)
    l2 = np.log1p(np.log1p(lam))
    return _unwrap(-np.expm1(-c * np.log1p(l2)))


def dlh_quantile(p, c, return_flag=False):
    """Closed-form inverse of :func:`dlh_cdf`.

    Saturates at the largest finite double when the quantile overflows; with
    ``return_flag=True`` the overflow mask is returned alongside.
    """
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0) | ~(p < 1)):
        raise DomainError("p must lie in (0, 1)")
    _check_positive("c", c)
    # (1 - p)^(-1/c) - 1 = log(1 + log(1 + lambda)) ... unwrapped outward.
    a = np.expm1(-np.log1p(-p) / c)
    with np.errstate(over="ignore"):
        lam = np.expm1(np.expm1(a))
    overflow = ~np.isfinite(lam)
    lam = np.where(overflow, np.finfo(float).max, lam)
    if return_flag:
        return _unwrap(lam), _unwrap(overflow)
    return _unwrap(lam)


def _beta_to_log_lambda(b):
    # lambda = exp(exp(b / (1 - b)) - 1) - 1, computed as log(lambda).
    with np.errstate(divide="ignore", over="ignore"):
        a = b / (1.0 - b)
        m = np.expm1(a)  # log(1 + lambda)
        log_lam = np.where(m > 30.0, m + np.log1p(-np.exp(-m)), np.log(np.expm1(m)))
    return np.clip(log_lam, -np.inf, LOG_LAMBDA_MAX)


def dlh_log_sample_direct(rng, c, size=None):
    """log of DLH draws via b ~ Beta(1, c); saturates at LOG_LAMBDA_MAX."""
    b = rng.beta(1.0, c, size=size)
    b = np.asarray(b, dtype=float)
    # b == 1 is a probability-zero rounding event; redraw.
    bad = b >= 1.0
    while np.any(bad):
        b[bad] = rng.beta(1.0, c, size=int(bad.sum()))
        bad = b >= 1.0
    return _unwrap(_beta_to_log_lambda(b))


def dlh_sample_direct(rng, c, size=None):
    """DLH draws: exp(exp(b / (1 - b)) - 1) - 1 with b ~ Beta(1, c).

    Draws past the double range saturate at the largest finite value.
    """
    _check_positive("c", c)
    b = np.asarray(rng.beta(1.0, c, size=size), dtype=float)
    bad = b >= 1.0
    while np.any(bad):
        b[bad] = rng.beta(1.0, c, size=int(bad.sum()))
        bad = b >= 1.0
    with np.errstate(over="ignore"):
        lam = np.expm1(np.expm1(b / (1.0 - b)))
    lam = np.where(np.isfinite(lam), lam, np.finfo(float).max)
    return _unwrap(lam)


def dlh_augmentation_conditionals_log(rng, log_eta, c):
    """Draw the (u, v, w) augmentation given eta = exp(log_eta).

    u ~ Ga(1 + c, 1 + log(1 + log(1 + eta)))
    v ~ Ga(1 + u, 1 + log(1 + eta))
    w ~ Ga(1 + v, 1 + 1 / eta)
    """
    log_eta = np.asarray(log_eta, dtype=float)
    size = log_eta.shape
    l0 = _log1pexp(log_eta)
    l1 = np.log1p(l0)
    u = rng.gamma(1.0 + c, size=size) / (1.0 + l1)
    v = rng.gamma(1.0 + u, size=size) / (1.0 + l0)
    w = rng.gamma(1.0 + v, size=size) / (1.0 + np.exp(-log_eta))
    return _unwrap(u), _unwrap(v), _unwrap(w)


def dlh_augmentation_conditionals(rng, eta, c):
    eta = np.asarray(eta, dtype=float)
    if np.any(~(eta > 0)):
        raise DomainError("eta must be > 0")
    _check_positive("c", c)
    return dlh_augmentation_conditionals_log(rng, np.log(eta), c)


# ---------------------------------------------------------------------- GIG

def gig_log_density_unnormalized(x, a0, b0, c0):
    """(c0 - 1) log x - a0 x - b0 / x."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("x must be > 0")
    return _unwrap((c0 - 1.0) * np.log(x) - a0 * x - b0 / x)
