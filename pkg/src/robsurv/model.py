"""Data containers, parameterizations and log full conditionals.

Convention: theta_i = exp(x_i' beta) / lambda_i in the GG density, so the
mean survival time *decreases* with x' beta. Local scales are represented
through ``lambda_i = eta_tilde_i ** (gamma * z_i)``, which is exactly 1 on
the spike (``z_i == 0``).

All times and local scales are carried on the log scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace

import numpy as np
from scipy import special

from .distributions import (
    dlh_log_density_log,
    gg_log_density_log,
    gg_log_reliability_log,
)
from .numerics import DomainError

__all__ = [
    "DataFormatError",
    "SurvivalDataset",
    "GlobalParams",
    "ReparamView",
    "LatentState",
    "Hyperparams",
    "load_csv",
    "log_complete_conditional_alpha",
    "log_conditional_alpha_from_stats",
    "alpha_sufficient_stat",
    "log_complete_conditional_beta",
    "log_complete_conditional_gamma_tilde",
    "gamma_tilde_conditional",
    "log_bernoulli_weight_z",
    "log_z_weights",
    "log_z_odds",
    "log_observed_likelihood",
    "log_observed_likelihood_terms",
]


class DataFormatError(ValueError):
    """Malformed survival data; message names the row or column at fault."""


@dataclass
class SurvivalDataset:
    """Observed times ``y``, event indicators ``delta`` (1 = event) and ``X``.

    When ``delta[i] == 0``, ``y[i]`` is the censoring time.
    """

    y: np.ndarray
    delta: np.ndarray
    X: np.ndarray
    log_y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        self._set(np.log(np.where(y > 0, y, np.nan)) if y.size else y, y)

    def _set(self, log_y, y):
        delta = np.asarray(self.delta)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if y.ndim != 1 or delta.ndim != 1 or X.ndim != 2:
            raise DataFormatError("y and delta must be 1-d and X 2-d")
        if not (len(y) == len(delta) == X.shape[0]):
            raise DataFormatError(
                f"length mismatch: y={len(y)}, delta={len(delta)}, X rows={X.shape[0]}"
            )
        if np.any(~np.isfinite(log_y)):
            bad = int(np.flatnonzero(~np.isfinite(log_y))[0])
            raise DataFormatError(f"observation {bad}: times must be positive and finite")
        if not np.all((delta == 0) | (delta == 1)):
            raise DataFormatError("delta must contain only 0 and 1")
        if not np.all(np.isfinite(X)):
            raise DataFormatError("X contains non-finite values")
        if len(y) and np.linalg.matrix_rank(X) < X.shape[1]:
            raise DataFormatError("X does not have full column rank")
        self.y = y
        self.delta = delta.astype(np.int8)
        self.X = X
        self.log_y = np.asarray(log_y, dtype=float)

    @classmethod
    def from_log_times(cls, log_y, delta, X):
        """Build from log times; useful when times overflow a double."""
        obj = cls.__new__(cls)
        obj.delta = delta
        obj.X = X
        log_y = np.asarray(log_y, dtype=float)
        with np.errstate(over="ignore"):
            y = np.exp(log_y)
        obj._set(log_y, y)
        return obj

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def censored(self):
        return self.delta == 0

    def subset(self, index):
        index = np.asarray(index)
        return SurvivalDataset.from_log_times(
            self.log_y[index], self.delta[index], self.X[index]
        )


def load_csv(path, add_intercept=False):
    """Read a ``time,status,x1..xp`` CSV into a :class:`SurvivalDataset`.

    Raises :class:`DataFormatError` naming the row (1-based, header = row 1)
    or the missing column.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        for col in ("time", "status"):
            if col not in header:
                raise DataFormatError(f"{path}: missing required column '{col}'")
        i_time = header.index("time")
        i_status = header.index("status")
        cov_cols = [k for k, h in enumerate(header) if k not in (i_time, i_status)]
        times, status, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: row {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                t = float(row[i_time])
                st = row[i_status].strip()
                if st not in ("0", "1"):
                    raise ValueError(f"status must be 0 or 1, got {st!r}")
                x = [float(row[k]) for k in cov_cols]
            except ValueError as exc:
                raise DataFormatError(f"{path}: row {lineno}: {exc}") from None
            if not (t > 0 and np.isfinite(t)):
                raise DataFormatError(f"{path}: row {lineno}: time must be positive")
            if not all(np.isfinite(x)):
                raise DataFormatError(f"{path}: row {lineno}: non-finite covariate")
            times.append(t)
            status.append(int(st))
            rows.append(x)
    X = np.asarray(rows, dtype=float).reshape(len(rows), len(cov_cols))
    if add_intercept:
        X = np.column_stack([np.ones(len(rows)), X])
    if X.shape[1] == 0:
        raise DataFormatError(f"{path}: no covariate columns and no intercept")
    return SurvivalDataset(np.asarray(times), np.asarray(status), X)


@dataclass
class GlobalParams:
    alpha: float
    beta: np.ndarray
    gamma: float
    s: float = 0.1

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if not (self.alpha > 0 and self.gamma > 0):
            raise DomainError("alpha and gamma must be > 0")
        if not 0.0 < self.s < 1.0:
            raise DomainError("s must lie in (0, 1)")

    def copy(self):
        return GlobalParams(self.alpha, self.beta.copy(), self.gamma, self.s)

    def reparam(self):
        return ReparamView.from_params(self)


@dataclass(frozen=True)
class ReparamView:
    """Sampler coordinates: alpha*gamma^2, beta/gamma and gamma/(1+gamma)."""

    alpha_tilde: float
    beta_tilde: np.ndarray
    gamma_tilde: float

    @classmethod
    def from_params(cls, params):
        g = params.gamma
        return cls(params.alpha * g * g, params.beta / g, g / (1.0 + g))

    @property
    def gamma(self):
        return self.gamma_tilde / (1.0 - self.gamma_tilde)

    def to_params(self, s=0.1):
        g = self.gamma
        return GlobalParams(self.alpha_tilde / (g * g), g * self.beta_tilde, g, s)


@dataclass
class LatentState:
    """Per-observation latent variables.

    ``log_t`` holds the complete-data log times (equal to ``log y`` for
    events). ``uvw`` keeps the last augmentation draw for each observation;
    it is only refreshed where ``z == 1``.
    """

    z: np.ndarray
    log_eta_tilde: np.ndarray
    uvw: np.ndarray
    log_t: np.ndarray

    @classmethod
    def initial(cls, data, censor_factor=1.1):
        n = data.n
        log_t = data.log_y.copy()
        log_t[data.censored] += np.log(censor_factor)
        return cls(
            z=np.zeros(n, dtype=np.int8),
            log_eta_tilde=np.zeros(n),
            uvw=np.ones((n, 3)),
            log_t=log_t,
        )

    def copy(self):
        return LatentState(
            self.z.copy(), self.log_eta_tilde.copy(), self.uvw.copy(), self.log_t.copy()
        )

    def log_lambda(self, gamma):
        """log lambda_i = gamma z_i log eta_tilde_i; exactly 0 on the spike."""
        return np.where(self.z == 1, gamma * self.log_eta_tilde, 0.0)

    @property
    def t(self):
        with np.errstate(over="ignore"):
            return np.exp(self.log_t)

    @property
    def eta_tilde(self):
        with np.errstate(over="ignore"):
            return np.exp(self.log_eta_tilde)


@dataclass
class Hyperparams:
    """Prior constants.

    beta ~ N(b_beta, A_beta^-1); alpha ~ GIG(a_alpha, b_alpha, c_alpha);
    gamma ~ GIG(a_gamma, b_gamma, c_gamma); s ~ Beta(a_s, b_s); DLH tail c.
    """

    b_beta: np.ndarray
    A_beta: np.ndarray
    a_alpha: float = 0.01
    b_alpha: float = 0.01
    c_alpha: float = 1.0
    a_gamma: float = 0.01
    b_gamma: float = 0.01
    c_gamma: float = 1.0
    a_s: float = 1.0
    b_s: float = 9.0
    c_dlh: float = 1.0

    def __post_init__(self):
        self.b_beta = np.asarray(self.b_beta, dtype=float).ravel()
        A = np.atleast_2d(np.asarray(self.A_beta, dtype=float))
        if A.shape != (self.b_beta.size, self.b_beta.size):
            raise DomainError("A_beta must be p x p with p = len(b_beta)")
        if not np.allclose(A, A.T):
            raise DomainError("A_beta must be symmetric")
        try:
            np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            raise DomainError("A_beta must be positive definite") from None
        self.A_beta = A
        for name in ("a_alpha", "b_alpha", "c_alpha", "a_gamma", "b_gamma",
                     "c_gamma", "a_s", "b_s", "c_dlh"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0")

    @classmethod
    def default(cls, p, **overrides):
        kw = dict(b_beta=np.zeros(p), A_beta=0.01 * np.eye(p))
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self):
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else float(v)
        return out

    @classmethod
    def from_dict(cls, d, p=None):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DomainError(f"unknown hyperparameter(s): {sorted(unknown)}")
        if p is not None:
            d.setdefault("b_beta", np.zeros(p))
            d.setdefault("A_beta", 0.01 * np.eye(p))
        return cls(**d)


# ------------------------------------------------------------- conditionals

def _residual_log(state, params, data):
    """log(t_i^gamma / eta_tilde_i^(z_i gamma)) per observation."""
    return params.gamma * state.log_t - state.log_lambda(params.gamma)


def alpha_sufficient_stat(state, params, data):
    """sum_i { x_i'b + log r_i - exp(x_i'b) r_i }, r_i = t_i^g / eta_i^(z_i g)."""
    lin = data.X @ params.beta + _residual_log(state, params, data)
    with np.errstate(over="ignore"):
        return float(np.sum(lin - np.exp(lin)) if lin.size else 0.0)


def log_conditional_alpha_from_stats(alpha, stat, n, hyper):
    """Value and first two derivatives of the alpha conditional in alpha."""
    if not alpha > 0:
        return -np.inf, np.nan, np.nan
    la = np.log(alpha)
    with np.errstate(over="ignore"):
        ia = np.float64(1.0) / alpha
        value = (
            (hyper.c_alpha - 1.0) * la
            - hyper.a_alpha * alpha
            - hyper.b_alpha * ia
            + n * (alpha * la - special.gammaln(alpha))
            + alpha * stat
        )
        d1 = (
            (hyper.c_alpha - 1.0) * ia
            - hyper.a_alpha
            + hyper.b_alpha * ia * ia
            + n * (la + 1.0 - special.digamma(alpha))
            + stat
        )
        d2 = (
            -(hyper.c_alpha - 1.0) * ia * ia
            - 2.0 * hyper.b_alpha * ia * ia * ia
            + n * (ia - special.zeta(2.0, alpha))
        )
    return float(value), float(d1), float(d2)


def log_complete_conditional_alpha(alpha_tilde, state, params, data, hyper, stat=None):
    """Log alpha-conditional as a function of alpha_tilde = alpha gamma^2.

    Returns ``(value, d1, d2)`` with derivatives taken in alpha_tilde; gamma
    and beta are held at ``params``.
    """
    if not alpha_tilde > 0:
        return -np.inf, np.nan, np.nan
    if stat is None:
        stat = alpha_sufficient_stat(state, params, data)
    g2 = params.gamma**2
    v, d1, d2 = log_conditional_alpha_from_stats(alpha_tilde / g2, stat, data.n, hyper)
    return v, d1 / g2, d2 / (g2 * g2)


def log_complete_conditional_beta(beta_tilde, state, params, data, hyper, resid_log=None):
    """Log beta-conditional at beta = gamma * beta_tilde.

    Returns ``(value, gradient, hessian)`` in beta_tilde coordinates.
    """
    g = params.gamma
    alpha = params.alpha
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    if resid_log is None:
        resid_log = _residual_log(state, params, data)
    X = data.X
    xb = g * (X @ beta_tilde)
    with np.errstate(over="ignore"):
        mu = np.exp(xb + resid_log)
    dev = g * beta_tilde - hyper.b_beta
    Adev = hyper.A_beta @ dev
    value = -0.5 * dev @ Adev + alpha * np.sum(xb - mu)
    grad = -g * Adev + alpha * g * (X.T @ (1.0 - mu))
    hess = -(g * g) * hyper.A_beta - alpha * g * g * (X.T * mu) @ X
    return float(value), grad, hess


def gamma_tilde_conditional(state, params, data, hyper, alpha_fixed=False):
    """Return a vectorized ``f(gamma_tilde)`` for the gamma_tilde conditional.

    Everything that does not depend on the evaluation point is computed once,
    so a grid and a pair of MH points can share the set-up.
    """
    g_now = params.gamma
    a_tilde = params.alpha * g_now**2
    b_tilde = np.asarray(params.beta, dtype=float) / g_now
    n, p = data.n, data.p
    c = hyper.c_dlh
    Ab = hyper.A_beta @ b_tilde
    q2 = float(b_tilde @ Ab)
    q1 = float(hyper.b_beta @ Ab)
    q0 = float(hyper.b_beta @ hyper.A_beta @ hyper.b_beta)
    slab = state.z == 1
    le = state.log_eta_tilde[slab]
    le_sum = float(le.sum())
    if n:
        u = data.X @ b_tilde + state.log_t - np.where(slab, state.log_eta_tilde, 0.0)
        u_sum = float(u.sum())

    def f(gamma_tilde):
        gt = np.asarray(gamma_tilde, dtype=float)
        scalar = gt.ndim == 0
        gt = np.atleast_1d(gt)
        out = np.full(gt.shape, -np.inf)
        inside = (gt > 0) & (gt < 1)
        if not inside.any():
            return float(out[0]) if scalar else out
        gi = gt[inside]
        g = gi / (1.0 - gi)
        lg = np.log(g)
        if alpha_fixed:
            alpha = np.full_like(g, params.alpha)
            val = p * lg
        else:
            alpha = a_tilde / (g * g)
            val = (p - 2.0) * lg + (
                (hyper.c_alpha - 1.0) * np.log(alpha)
                - hyper.a_alpha * alpha
                - hyper.b_alpha / alpha
            )
        val = val - 0.5 * (q2 * g * g - 2.0 * q1 * g + q0)
        val = val + (hyper.c_gamma - 1.0) * lg - hyper.a_gamma * g - hyper.b_gamma / g
        if le.size:
            # Jacobian of eta = eta_tilde^gamma times the DLH density
            le_pow = np.multiply.outer(g, le)
            jac = le.size * lg + (g - 1.0) * le_sum
            val = val + jac + np.sum(dlh_log_density_log(le_pow, c), axis=1)
        if n:
            with np.errstate(over="ignore"):
                expo = np.exp(np.multiply.outer(g, u)).sum(axis=1)
            val = val + n * (lg + special.xlogy(alpha, alpha) - special.gammaln(alpha))
            val = val + alpha * (g * u_sum - expo)
        val = val - 2.0 * np.log1p(-gi)
        val[np.isnan(val)] = -np.inf
        out[inside] = val
        return float(out[0]) if scalar else out

    return f


def log_complete_conditional_gamma_tilde(gamma_tilde, state, params, data, hyper,
                                         alpha_fixed=False):
    """Log density (up to a constant) of gamma_tilde = gamma / (1 + gamma).

    alpha_tilde = alpha gamma^2 and beta_tilde = beta / gamma are held at
    their current values (taken from ``params``). With ``alpha_fixed`` the
    shape alpha itself is frozen (Weibull variants), so the alpha prior and
    the alpha_tilde Jacobian drop out. Vectorized over ``gamma_tilde``.
    """
    f = gamma_tilde_conditional(state, params, data, hyper, alpha_fixed)
    return f(gamma_tilde)


def log_z_weights(state, params, data, hyper):
    """Unnormalized log weights for z_i = 0 (column 0) and z_i = 1 (column 1).

    Evaluated at the current eta_tilde; the spike branch uses eta = eta_tilde
    and the slab branch eta = eta_tilde^gamma with its Jacobian.
    """
    g, alpha, s, c = params.gamma, params.alpha, params.s, hyper.c_dlh
    le = state.log_eta_tilde
    xb = data.X @ params.beta
    log_x = np.log(alpha) + g * state.log_t  # log(alpha t^gamma)
    out = np.empty((data.n, 2))
    for z in (0, 1):
        log_b = xb - z * g * le
        with np.errstate(over="ignore"):
            bx = np.exp(log_b + log_x)
        log_pga = alpha * log_b + (alpha - 1.0) * log_x - bx - special.gammaln(alpha)
        if z == 0:
            w = np.log1p(-s) + dlh_log_density_log(le, c) + log_pga
        else:
            w = np.log(s) + np.log(g) + (g - 1.0) * le + dlh_log_density_log(g * le, c) + log_pga
        out[:, z] = w
    return out


def log_z_odds(state, params, data, hyper):
    """log P(z_i = 1 | rest) - log P(z_i = 0 | rest), overflow-safe.

    Same quantity as the column difference of :func:`log_z_weights`, but the
    two exp terms are differenced before they can overflow, so a gross
    outlier whose spike-branch likelihood underflows still gets odds of +inf
    rather than nan.
    """
    g, alpha, s, c = params.gamma, params.alpha, params.s, hyper.c_dlh
    le = state.log_eta_tilde
    shift = g * le  # log lambda on the slab
    e0 = data.X @ params.beta + np.log(alpha) + g * state.log_t
    with np.errstate(over="ignore", invalid="ignore"):
        d_exp = np.exp(e0) * np.expm1(-shift)
    d_exp = np.where(shift == 0.0, 0.0, d_exp)
    odds = (
        np.log(s) - np.log1p(-s)
        + np.log(g) + (g - 1.0) * le + dlh_log_density_log(shift, c) - dlh_log_density_log(le, c)
        - alpha * shift
        - d_exp
    )
    return odds


def log_bernoulli_weight_z(i, z_candidate, state, params, data, hyper):
    """Log unnormalized weight of z_i = z_candidate."""
    if z_candidate not in (0, 1):
        raise DomainError("z_candidate must be 0 or 1")
    sub = LatentState(
        state.z[i:i + 1], state.log_eta_tilde[i:i + 1], state.uvw[i:i + 1], state.log_t[i:i + 1]
    )
    # a single row need not have full column rank, so skip dataset validation
    one = SimpleNamespace(X=data.X[i:i + 1], n=1)
    return float(log_z_weights(sub, params, one, hyper)[0, z_candidate])


def log_observed_likelihood_terms(alpha, beta, gamma, data, log_lam):
    """Per-observation log likelihood: density for events, reliability otherwise."""
    log_theta = data.X @ np.asarray(beta, dtype=float) - np.asarray(log_lam, dtype=float)
    out = np.empty(data.n)
    ev = data.delta == 1
    if np.any(ev):
        out[ev] = gg_log_density_log(data.log_y[ev], alpha, gamma, log_theta[ev])
    if np.any(~ev):
        out[~ev] = gg_log_reliability_log(data.log_y[~ev], alpha, gamma, log_theta[~ev])
    return out


def log_observed_likelihood(params, data, lam=None, log_lam=None):
    """Sum of event log densities and censored log reliabilities."""
    if log_lam is None:
        if lam is None:
            log_lam = np.zeros(data.n)
        else:
            lam = np.asarray(lam, dtype=float)
            if np.any(~(lam > 0)):
                raise DomainError("lambda must be > 0")
            log_lam = np.log(lam)
    terms = log_observed_likelihood_terms(params.alpha, params.beta, params.gamma, data, log_lam)
    return float(np.sum(terms))
