"""Gibbs / independent Metropolis-Hastings sampler for the robust GG AFT model.

One sweep updates, in order: censored times, outlier indicators z, local
scales eta_tilde (through the (u, v, w) augmentation), the outlier
probability s, then alpha_tilde, beta_tilde and gamma_tilde by independent
MH. alpha_tilde and beta_tilde proposals are gamma / normal densities whose
log-derivatives match the target at the current proposal centre; the
gamma_tilde proposal is a piecewise-linear interpolant of the conditional
on a regular grid.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import special

from .distributions import (
    LOG_LAMBDA_MAX,
    dlh_augmentation_conditionals_log,
    dlh_log_sample_direct,
)
from .model import (
    GlobalParams,
    Hyperparams,
    LatentState,
    SurvivalDataset,
    alpha_sufficient_stat,
    log_complete_conditional_alpha,
    log_complete_conditional_beta,
    gamma_tilde_conditional,
    log_conditional_alpha_from_stats,
    log_z_odds,
)
from .numerics import log_sample_gamma, log_sample_truncated_gamma_lower, make_rng

logger = logging.getLogger(__name__)

__all__ = [
    "MODELS",
    "ModelVariant",
    "McmcConfig",
    "ProposalState",
    "ChainState",
    "GammaFit",
    "NormalFit",
    "impute_censored_times",
    "update_z",
    "update_eta",
    "update_s",
    "fit_gamma_proposal",
    "fit_normal_proposal",
    "mh_log_ratio",
    "mh_step_independent",
    "PiecewiseLinearProposal",
    "update_gamma_tilde_piecewise",
    "update_alpha_tilde",
    "update_beta_tilde",
    "gibbs_sweep",
    "initial_state",
    "run_chain",
]


class ModelVariant(NamedTuple):
    robust: bool
    fix_alpha: bool
    fix_gamma: bool


MODELS = {
    "rgg": ModelVariant(True, False, False),
    "rga": ModelVariant(True, False, True),
    "rwb": ModelVariant(True, True, False),
    "gg": ModelVariant(False, False, False),
    "ga": ModelVariant(False, False, True),
    "wb": ModelVariant(False, True, False),
}


@dataclass
class McmcConfig:
    """Run lengths, seed and sampler options.

    Each scan the derivative-matching proposal fits are iterated up to
    ``proposal_iterations`` times, stopping early once the fit stops moving.
    Iterated to convergence, the proposal is a function of the other blocks
    only, so refreshing it after burn-in keeps a valid MH kernel. Setting
    ``adapt_after_burnin=False`` freezes the proposals once burn-in ends.

    The beta_tilde proposal is a multivariate t with ``beta_proposal_df``
    degrees of freedom and the derivative-matched centre and scale; its
    tails dominate the log-concave target, which keeps the independence
    sampler from sticking in the target's linear tail. ``None`` gives the
    plain normal proposal.
    """

    n_iter: int = 4000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0
    grid_size: int = 100
    model: str = "rgg"
    init: GlobalParams | None = None
    proposal_iterations: int = 50
    adapt_after_burnin: bool = True
    stream_id: int | tuple = 0
    beta_proposal_df: float | None = 10.0

    def __post_init__(self):
        if self.n_iter < 1 or self.thin < 1:
            raise ValueError("n_iter and thin must be >= 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {sorted(MODELS)}")
        if self.proposal_iterations < 1:
            raise ValueError("proposal_iterations must be >= 1")
        if self.beta_proposal_df is not None and not self.beta_proposal_df > 0:
            raise ValueError("beta_proposal_df must be > 0 or None")

    @property
    def variant(self):
        return MODELS[self.model]

    @property
    def n_saved(self):
        return (self.n_iter - self.burn_in) // self.thin

    def to_dict(self):
        d = asdict(self)
        if self.init is not None:
            d["init"] = {
                "alpha": self.init.alpha,
                "beta": np.asarray(self.init.beta).tolist(),
                "gamma": self.init.gamma,
                "s": self.init.s,
            }
        return d


@dataclass
class ProposalState:
    """Tuning parameters of the alpha_tilde and beta_tilde proposals.

    ``prec_chol`` is the lower Cholesky factor of Psi^{-1}.
    """

    A: float
    B: float
    mu: np.ndarray
    Psi: np.ndarray
    prec_chol: np.ndarray
    alpha_history: deque = field(default_factory=lambda: deque(maxlen=50))


@dataclass
class ChainState:
    params: GlobalParams
    latent: LatentState
    proposals: ProposalState | None = None


@dataclass
class Diagnostics:
    attempts: dict = field(default_factory=lambda: {"alpha": 0, "beta": 0, "gamma": 0})
    accepts: dict = field(default_factory=lambda: {"alpha": 0, "beta": 0, "gamma": 0})
    flags: dict = field(default_factory=dict)

    def flag(self, name):
        self.flags[name] = self.flags.get(name, 0) + 1

    def record(self, block, accepted):
        self.attempts[block] += 1
        self.accepts[block] += int(accepted)

    def rates(self):
        return {
            k: (self.accepts[k] / self.attempts[k] if self.attempts[k] else None)
            for k in self.attempts
        }


# --------------------------------------------------------- exact conditionals

def impute_censored_times(rng, state, params, data):
    """Redraw log t_i for censored observations from the truncated GG.

    Uses g = alpha theta_i t^gamma ~ Gamma(alpha, 1) truncated to
    g > alpha theta_i C_i^gamma, with theta_i = exp(x_i'beta) / lambda_i.
    """
    cens = data.censored
    if not np.any(cens):
        return state.log_t
    a, g = params.alpha, params.gamma
    log_scale = np.log(a) + data.X[cens] @ params.beta - state.log_lambda(g)[cens]
    log_c = data.log_y[cens]
    log_g = log_sample_truncated_gamma_lower(rng, np.full(log_c.shape, a), log_scale + g * log_c)
    log_t = (log_g - log_scale) / g
    log_t = np.maximum(log_t, np.nextafter(log_c, np.inf))
    state.log_t[cens] = log_t
    return state.log_t


def update_z(rng, state, params, data, hyper):
    """Draw each z_i from its two normalized Bernoulli weights."""
    odds = log_z_odds(state, params, data, hyper)
    p1 = special.expit(odds)
    u = rng.random(data.n)
    new = (u < p1).astype(np.int8)
    # nan odds (both branches impossible) keep the current indicator
    state.z = np.where(np.isnan(p1), state.z, new).astype(np.int8)
    return state.z


def update_eta(rng, state, params, data, hyper):
    """Redraw eta_tilde (and the augmentation triple where z_i = 1).

    On the spike, eta_tilde does not enter the likelihood and is drawn
    straight from the DLH prior; the (u, v, w) triple would be discarded
    there, so it is only drawn for z_i = 1.
    """
    g, a, c = params.gamma, params.alpha, hyper.c_dlh
    slab = state.z == 1
    n_slab = int(slab.sum())
    n_spike = data.n - n_slab
    if n_spike:
        state.log_eta_tilde[~slab] = dlh_log_sample_direct(rng, c, size=n_spike)
    if n_slab:
        log_eta = g * state.log_eta_tilde[slab]
        u, v, w = dlh_augmentation_conditionals_log(rng, log_eta, c)
        state.uvw[slab] = np.column_stack([u, v, w])
        # 1/eta ~ Ga(v + alpha, w + alpha exp(x'beta) t^gamma)
        lin = np.log(a) + data.X[slab] @ params.beta + g * state.log_t[slab]
        log_rate = np.logaddexp(np.log(w), lin)
        log_e = log_sample_gamma(rng, v + a) - log_rate
        state.log_eta_tilde[slab] = np.clip(-log_e / g, -LOG_LAMBDA_MAX, LOG_LAMBDA_MAX)
    return state.log_eta_tilde, state.uvw


def update_s(rng, state, hyper):
    """Conjugate Beta(a_s + sum z, b_s + n - sum z) draw."""
    k = int(np.sum(state.z))
    n = state.z.size
    return float(rng.beta(hyper.a_s + k, hyper.b_s + n - k))


# ----------------------------------------------------------- proposal fitting

class GammaFit(NamedTuple):
    A: float
    B: float
    ok: bool


class NormalFit(NamedTuple):
    mu: np.ndarray
    Psi: np.ndarray
    prec_chol: np.ndarray
    ok: bool


def fit_gamma_proposal(x0, target):
    """Ga(A, B) whose log-density slope and curvature match ``target`` at x0.

    ``target(x)`` returns ``(value, d1, d2)``. Solving
    (A - 1)/x0 - B = d1 and -(A - 1)/x0^2 = d2 gives A = 1 - d2 x0^2 and
    B = (A - 1)/x0 - d1. ``ok`` is False when the match is not a proper
    gamma (d2 >= 0 or B <= 0).
    """
    if not x0 > 0:
        raise ValueError("x0 must be > 0")
    _, d1, d2 = target(x0)
    if not (np.isfinite(d1) and np.isfinite(d2)) or d2 >= 0:
        return GammaFit(np.nan, np.nan, False)
    A = 1.0 - d2 * x0 * x0
    B = (A - 1.0) / x0 - d1
    if not (B > 0 and np.isfinite(B)):
        return GammaFit(A, B, False)
    return GammaFit(float(A), float(B), True)


def fit_normal_proposal(mu0, target):
    """Normal whose log-density gradient and Hessian match ``target`` at mu0.

    ``target(x)`` returns ``(value, gradient, hessian)``; the solution is
    the Newton step mu = mu0 + Psi g with Psi = -H^{-1}. If -H is not
    positive definite its diagonal is inflated by 1e-8 * trace until the
    Cholesky factorization succeeds, and ``ok`` is False.
    """
    mu0 = np.asarray(mu0, dtype=float)
    _, grad, hess = target(mu0)
    prec = -np.asarray(hess, dtype=float)
    prec = 0.5 * (prec + prec.T)
    ok = True
    jitter = 1e-8 * max(abs(np.trace(prec)), 1.0)
    for _ in range(60):
        try:
            L = np.linalg.cholesky(prec)
            break
        except np.linalg.LinAlgError:
            ok = False
            prec = prec + jitter * np.eye(prec.shape[0])
            jitter *= 10.0
    else:
        raise np.linalg.LinAlgError("could not regularize proposal precision")
    step = np.linalg.solve(L.T, np.linalg.solve(L, grad))
    L_inv = np.linalg.inv(L)
    Psi = L_inv.T @ L_inv
    return NormalFit(mu0 + step, Psi, L, ok and bool(np.all(np.isfinite(step))))


# ------------------------------------------------------------------ MH steps

def mh_log_ratio(current, proposal, log_target, log_proposal_density):
    """log{ f(x') q(x) / (f(x) q(x')) } for an independent proposal q."""
    return (
        log_target(proposal) - log_target(current)
        + log_proposal_density(current) - log_proposal_density(proposal)
    )


def mh_step_independent(rng, current, proposal, log_target, log_proposal_density):
    """Accept ``proposal`` with probability min(1, f(x')q(x) / f(x)q(x')).

    Returns ``(value, accepted, flagged)``; a non-finite log ratio is a
    rejection and sets ``flagged``.
    """
    r = mh_log_ratio(current, proposal, log_target, log_proposal_density)
    if not np.isfinite(r):
        # +inf only arises when the current point has zero target density
        return (proposal, True, True) if r == np.inf else (current, False, True)
    if r >= 0 or np.log(rng.random()) < r:
        return proposal, True, False
    return current, False, False


def _gamma_logpdf(x, A, B):
    if not x > 0:
        return -np.inf
    return A * np.log(B) - special.gammaln(A) + (A - 1.0) * np.log(x) - B * x


FIT_RTOL = 1e-10


def _refresh_alpha_proposal(prop, target, diag, iterations):
    for _ in range(iterations):
        c_old = prop.A / prop.B
        fit = fit_gamma_proposal(c_old, target)
        if fit.ok:
            prop.A, prop.B = fit.A, fit.B
            if abs(fit.A / fit.B - c_old) <= FIT_RTOL * c_old:
                break
            continue
        diag.flag("alpha_proposal_safeguard")
        hist = np.asarray(prop.alpha_history)
        if hist.size >= 2 and np.var(hist) > 0:
            m, v = hist.mean(), hist.var()
            prop.A, prop.B = m * m / v, m / v
        else:
            prop.A, prop.B = 1.0, 1.0 / c_old
        break


def update_alpha_tilde(rng, state, hyper, data, diag, adapt, iterations=1):
    """Independent MH step on alpha_tilde = alpha gamma^2 (beta, gamma fixed)."""
    params, prop = state.params, state.proposals
    g2 = params.gamma**2
    stat = alpha_sufficient_stat(state.latent, params, data)
    n = data.n

    def target(at):
        v, d1, d2 = log_conditional_alpha_from_stats(at / g2, stat, n, hyper)
        return v, d1 / g2, d2 / (g2 * g2)

    if adapt:
        _refresh_alpha_proposal(prop, target, diag, iterations)
    current = params.alpha * g2
    proposal = float(rng.gamma(prop.A, 1.0 / prop.B))
    value, accepted, flagged = mh_step_independent(
        rng, current, proposal,
        lambda x: target(x)[0],
        lambda x: _gamma_logpdf(x, prop.A, prop.B),
    )
    if flagged:
        diag.flag("alpha_nonfinite_ratio")
    diag.record("alpha", accepted)
    if accepted:
        prop.alpha_history.append(value)
    params.alpha = value / g2
    return value


def _normal_logpdf_unnorm(x, mu, prec_chol):
    r = prec_chol.T @ (x - mu)
    return -0.5 * float(r @ r)


def _t_logpdf_unnorm(x, mu, prec_chol, df):
    r = prec_chol.T @ (x - mu)
    return -0.5 * (df + mu.size) * float(np.log1p((r @ r) / df))


def _refresh_beta_proposal(prop, target, diag, iterations):
    # Newton steps to the conditional mode. Iteration stops once the step
    # is below 1e-6 proposal standard deviations; quadratic convergence
    # puts the centre within rounding of the fixed point by then, and the
    # curvature from that last evaluation is used for the scale.
    mu = prop.mu
    for _ in range(iterations):
        _, grad, hess = target(mu)
        prec = -0.5 * (hess + hess.T)
        try:
            L = np.linalg.cholesky(prec)
        except np.linalg.LinAlgError:
            L = None
        if L is None:
            fit = fit_normal_proposal(mu, target)
            diag.flag("beta_proposal_regularized")
            if not np.isfinite(fit.mu).all():
                diag.flag("beta_proposal_nonfinite")
                return
            mu, L = fit.mu, fit.prec_chol
            continue
        r = np.linalg.solve(L, grad)
        step = np.linalg.solve(L.T, r)
        if not np.isfinite(step).all():
            diag.flag("beta_proposal_nonfinite")
            return
        mu = mu + step
        if float(r @ r) < 1e-12:
            break
    if L is None:
        return
    L_inv = np.linalg.inv(L)
    prop.mu, prop.Psi, prop.prec_chol = mu, L_inv.T @ L_inv, L


def update_beta_tilde(rng, state, hyper, data, diag, adapt, iterations=1, df=None):
    """Independent MH step on beta_tilde = beta / gamma (alpha, gamma fixed).

    The proposal is normal, or multivariate t when ``df`` is given.
    """
    params, prop = state.params, state.proposals
    g = params.gamma
    resid = g * state.latent.log_t - state.latent.log_lambda(g)

    def target(bt):
        return log_complete_conditional_beta(bt, state.latent, params, data, hyper, resid)

    if adapt:
        _refresh_beta_proposal(prop, target, diag, iterations)
    current = params.beta / g
    z = rng.standard_normal(current.size)
    if df is not None:
        z = z * np.sqrt(df / rng.chisquare(df))
        log_q = lambda x: _t_logpdf_unnorm(x, prop.mu, prop.prec_chol, df)
    else:
        log_q = lambda x: _normal_logpdf_unnorm(x, prop.mu, prop.prec_chol)
    proposal = prop.mu + np.linalg.solve(prop.prec_chol.T, z)
    value, accepted, flagged = mh_step_independent(
        rng, current, proposal, lambda x: target(x)[0], log_q
    )
    if flagged:
        diag.flag("beta_nonfinite_ratio")
    diag.record("beta", accepted)
    params.beta = g * value
    return value


class PiecewiseLinearProposal:
    """Normalized piecewise-linear density on (0, 1) through grid nodes.

    Node values are given on the log scale at g / G for g = 1..G-1; the
    density is linear between neighbouring nodes and flat on the two end
    cells (0, 1/G) and ((G-1)/G, 1).
    """

    def __init__(self, log_nodes):
        log_nodes = np.asarray(log_nodes, dtype=float)
        G = log_nodes.size + 1
        self.G = G
        self.h = 1.0 / G
        finite = np.isfinite(log_nodes)
        if not np.any(finite):
            raise FloatingPointError("conditional is -inf at every grid node")
        top = log_nodes[finite].max()
        ln = np.where(finite, log_nodes - top, -np.inf)
        # values at knots 0..G; the end knots copy their neighbours
        self.log_knots = np.concatenate([[ln[0]], ln, [ln[-1]]])
        la, lb = self.log_knots[:-1], self.log_knots[1:]
        with np.errstate(divide="ignore"):
            self.log_mass = np.logaddexp(la, lb) + np.log(0.5 * self.h)
        m = self.log_mass.max()
        w = np.exp(self.log_mass - m)
        self._cum = np.cumsum(w)
        self.log_norm = m + np.log(self._cum[-1])
        self._cum /= self._cum[-1]

    def sample(self, rng):
        k = int(np.searchsorted(self._cum, rng.random(), side="right"))
        k = min(k, self.G - 1)
        la, lb = self.log_knots[k], self.log_knots[k + 1]
        m = max(la, lb)
        a, b = np.exp(la - m), np.exp(lb - m)
        F = rng.random()
        frac = (a + b) * F / (a + np.sqrt(a * a + (b * b - a * a) * F))
        x = (k + frac) * self.h
        # keep strictly inside (0, 1)
        return float(min(max(x, np.nextafter(0.0, 1.0)), np.nextafter(1.0, 0.0)))

    def logpdf(self, x):
        if not 0.0 < x < 1.0:
            return -np.inf
        k = min(int(x * self.G), self.G - 1)
        frac = x * self.G - k
        la, lb = self.log_knots[k], self.log_knots[k + 1]
        with np.errstate(divide="ignore"):
            lj = np.logaddexp(np.log1p(-frac) + la, np.log(frac) + lb)
        return float(lj - self.log_norm)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        mass = np.exp(self.log_mass - self.log_norm)
        cum = np.concatenate([[0.0], np.cumsum(mass)])
        k = np.minimum((x * self.G).astype(int), self.G - 1)
        f = x * self.G - k
        ja = np.exp(self.log_knots[k] - self.log_norm)
        jb = np.exp(self.log_knots[k + 1] - self.log_norm)
        part = self.h * (ja * f + 0.5 * (jb - ja) * f * f)
        return cum[k] + part


def update_gamma_tilde_piecewise(rng, state, hyper, data, G, diag, alpha_fixed=False):
    """Independent MH on gamma_tilde with a piecewise-linear proposal.

    alpha_tilde and beta_tilde are held fixed, so alpha and beta move with
    gamma (unless ``alpha_fixed``, which freezes alpha itself).
    """
    params = state.params
    latent = state.latent

    target = gamma_tilde_conditional(latent, params, data, hyper, alpha_fixed)

    nodes = np.arange(1, G) / G
    try:
        prop = PiecewiseLinearProposal(target(nodes))
    except FloatingPointError:
        diag.flag("gamma_grid_all_neginf")
        diag.record("gamma", False)
        return params.gamma / (1.0 + params.gamma)
    current = params.gamma / (1.0 + params.gamma)
    proposal = prop.sample(rng)
    f_cur, f_prop = target(np.array([current, proposal]))
    cache = {current: f_cur, proposal: f_prop}
    value, accepted, flagged = mh_step_independent(
        rng, current, proposal, cache.__getitem__, prop.logpdf
    )
    if flagged:
        diag.flag("gamma_nonfinite_ratio")
    diag.record("gamma", accepted)
    if accepted:
        g_old = params.gamma
        g_new = value / (1.0 - value)
        if not alpha_fixed:
            params.alpha = params.alpha * g_old**2 / g_new**2
        params.beta = params.beta / g_old * g_new
        params.gamma = g_new
    return value


# ------------------------------------------------------------------- driver

def _screened_least_squares(X, y, k=5.0, rounds=5):
    """Least squares refitted after dropping points beyond k robust SDs.

    Returns ``(coef, residuals, flagged)``.
    """
    n, p = X.shape
    keep = np.ones(n, dtype=bool)
    coef = np.linalg.lstsq(X, y, rcond=None)[0]
    for _ in range(rounds):
        r = y - X @ coef
        med = np.median(r[keep])
        mad = 1.4826 * np.median(np.abs(r[keep] - med))
        if not mad > 0:
            break
        new = np.abs(r - med) <= k * mad
        if new.sum() <= p or np.linalg.matrix_rank(X[new]) < p or np.array_equal(new, keep):
            break
        keep = new
        coef = np.linalg.lstsq(X[keep], y[keep], rcond=None)[0]
    return coef, y - X @ coef, ~keep


def initial_state(data, hyper, config):
    """Chain start.

    alpha = gamma = 1 and beta at its conditional mode given a screened
    least-squares fit of log t. For robust models, points the screen flags
    start on the slab with eta_tilde matching their residual; everything
    else starts on the spike.
    """
    variant = config.variant
    latent = LatentState.initial(data)
    if data.n > data.p:
        coef, resid, flagged = _screened_least_squares(data.X, latent.log_t)
    else:
        coef, resid, flagged = np.zeros(data.p), np.zeros(data.n), np.zeros(data.n, bool)
    if variant.robust and flagged.any():
        latent.z[flagged] = 1
        latent.log_eta_tilde[flagged] = np.clip(resid[flagged], -LOG_LAMBDA_MAX, LOG_LAMBDA_MAX)
    if config.init is not None:
        params = config.init.copy()
    else:
        # mean time decreases in x'beta under this parameterization
        params = GlobalParams(1.0, -coef, 1.0, hyper.a_s / (hyper.a_s + hyper.b_s))
    if variant.fix_gamma:
        params.beta = params.beta / params.gamma
        params.gamma = 1.0
    if variant.fix_alpha:
        params.alpha = 1.0
    state = ChainState(params, latent)
    at = params.alpha * params.gamma**2
    p = data.p
    state.proposals = ProposalState(
        A=1.0, B=1.0 / at, mu=params.beta / params.gamma, Psi=np.eye(p), prec_chol=np.eye(p)
    )
    diag = Diagnostics()
    if not variant.fix_alpha:
        update_alpha_tilde_proposal_only(state, hyper, data, diag, iterations=20)
    _fit_beta_only(state, hyper, data, diag, iterations=50)
    if config.init is None and np.all(np.isfinite(state.proposals.mu)):
        # an independence sampler started deep in the heavy (linear) tail of
        # the beta conditional can stick for thousands of scans
        params.beta = state.proposals.mu * params.gamma
    return state


def update_alpha_tilde_proposal_only(state, hyper, data, diag, iterations):
    params, prop = state.params, state.proposals
    g2 = params.gamma**2
    stat = alpha_sufficient_stat(state.latent, params, data)

    def target(at):
        v, d1, d2 = log_conditional_alpha_from_stats(at / g2, stat, data.n, hyper)
        return v, d1 / g2, d2 / (g2 * g2)

    _refresh_alpha_proposal(prop, target, diag, iterations)


def _fit_beta_only(state, hyper, data, diag, iterations):
    params, prop = state.params, state.proposals
    g = params.gamma
    resid = g * state.latent.log_t - state.latent.log_lambda(g)

    def target(bt):
        return log_complete_conditional_beta(bt, state.latent, params, data, hyper, resid)

    _refresh_beta_proposal(prop, target, diag, iterations)


def gibbs_sweep(rng, state, data, hyper, config, diag, adapt=True):
    """One full scan over all blocks, in place; returns ``state``."""
    variant = config.variant
    params, latent = state.params, state.latent
    impute_censored_times(rng, latent, params, data)
    if variant.robust:
        update_z(rng, latent, params, data, hyper)
        update_eta(rng, latent, params, data, hyper)
        params.s = update_s(rng, latent, hyper)
    it = config.proposal_iterations
    if not variant.fix_alpha:
        update_alpha_tilde(rng, state, hyper, data, diag, adapt, it)
    update_beta_tilde(rng, state, hyper, data, diag, adapt, it, config.beta_proposal_df)
    if not variant.fix_gamma:
        update_gamma_tilde_piecewise(
            rng, state, hyper, data, config.grid_size, diag, alpha_fixed=variant.fix_alpha
        )
    return state


def run_chain(data: SurvivalDataset, hyper: Hyperparams, config: McmcConfig,
              rng: np.random.Generator | None = None,
              callback: Callable | None = None):
    """Burn in, then sample with thinning; returns :class:`PosteriorDraws`."""
    from .posterior import PosteriorDraws

    if data.n and not np.any(data.delta == 1):
        logger.warning("no uncensored events; posterior is driven by the priors")
    if rng is None:
        rng = make_rng(config.seed, config.stream_id)
    variant = config.variant
    state = initial_state(data, hyper, config)
    diag = Diagnostics()
    K = config.n_saved
    n, p = data.n, data.p
    alpha = np.empty(K)
    beta = np.empty((K, p))
    gamma = np.empty(K)
    s = np.empty(K)
    z = np.empty((K, n), dtype=np.int8)
    log_lam = np.empty((K, n))
    k = 0
    started = time.perf_counter()
    for it in range(config.n_iter):
        adapt = it < config.burn_in or config.adapt_after_burnin
        gibbs_sweep(rng, state, data, hyper, config, diag, adapt=adapt)
        if it >= config.burn_in and (it - config.burn_in + 1) % config.thin == 0 and k < K:
            prm, lat = state.params, state.latent
            alpha[k] = prm.alpha
            beta[k] = prm.beta
            gamma[k] = prm.gamma
            s[k] = prm.s if variant.robust else np.nan
            z[k] = lat.z
            log_lam[k] = lat.log_lambda(prm.gamma)
            k += 1
        if callback is not None:
            callback(it, state)
    elapsed = time.perf_counter() - started
    manifest = {
        "model": config.model,
        "config": config.to_dict(),
        "hyperparameters": hyper.to_dict(),
        "acceptance": diag.rates(),
        "flags": dict(diag.flags),
        "elapsed_seconds": elapsed,
        "notes": [
            "augmentation (u, v, w) drawn only for z_i = 1; spike-branch draws "
            "would be discarded unused"
        ],
    }
    return PosteriorDraws(
        alpha=alpha, beta=beta, gamma=gamma, s=s, z=z, log_lambda=log_lam,
        model=config.model, acceptance=diag.rates(), manifest=manifest,
    )
