"""Posterior summaries: quantiles, outlier probabilities, regression curves,
DIC and effective sample size, plus draw-file persistence."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .distributions import dlh_log_density_log, gg_log_density_log, gg_log_reliability_log
from .model import SurvivalDataset, log_observed_likelihood_terms

__all__ = [
    "UnsupportedOperationError",
    "PosteriorDraws",
    "summarize",
    "outlier_probabilities",
    "regression_draws",
    "regression_curve",
    "regression_grid",
    "dic",
    "effective_sample_size",
    "mc_standard_error",
    "write_rows_csv",
]


class UnsupportedOperationError(TypeError):
    """Requested summary does not exist for this model variant."""


@dataclass
class PosteriorDraws:
    """Saved draws of (alpha, beta, gamma, s) and per-observation (z, lambda).

    ``log_lambda`` is exactly 0 wherever ``z`` is 0. For non-robust models
    ``s`` is NaN and ``z`` is all zeros.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    s: np.ndarray
    z: np.ndarray
    log_lambda: np.ndarray
    model: str = "rgg"
    acceptance: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)
    chain: np.ndarray | None = None

    def __post_init__(self):
        k = len(self.alpha)
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float)).reshape(k, -1)
        for name in ("gamma", "s", "z", "log_lambda"):
            if len(getattr(self, name)) != k:
                raise ValueError(f"row count mismatch in {name}")
        if np.any(self.log_lambda[self.z == 0] != 0.0):
            raise ValueError("lambda must equal 1 wherever z = 0")

    def __len__(self):
        return len(self.alpha)

    @property
    def robust(self):
        return self.model.startswith("r")

    @property
    def p(self):
        return self.beta.shape[1]

    @property
    def n(self):
        return self.z.shape[1]

    @property
    def lam(self):
        with np.errstate(over="ignore"):
            return np.exp(self.log_lambda)

    def scalar_columns(self, mean_parameterization=False):
        """Ordered mapping of scalar parameter names to draw columns."""
        sign = -1.0 if mean_parameterization else 1.0
        cols = {"alpha": self.alpha}
        for j in range(self.p):
            cols[f"beta_{j}"] = sign * self.beta[:, j]
        cols["gamma"] = self.gamma
        cols["s"] = self.s
        return cols

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        chain = np.concatenate([np.full(len(d), k) for k, d in enumerate(parts)])
        first = parts[0]
        return cls(
            alpha=np.concatenate([d.alpha for d in parts]),
            beta=np.concatenate([d.beta for d in parts]),
            gamma=np.concatenate([d.gamma for d in parts]),
            s=np.concatenate([d.s for d in parts]),
            z=np.concatenate([d.z for d in parts]),
            log_lambda=np.concatenate([d.log_lambda for d in parts]),
            model=first.model,
            acceptance={f"chain_{k}": d.acceptance for k, d in enumerate(parts)},
            manifest={f"chain_{k}": d.manifest for k, d in enumerate(parts)},
            chain=chain,
        )

    def to_csv(self, path):
        """One row per saved draw: alpha, beta_*, gamma, s, z_*, lambda_*."""
        path = Path(path)
        header = ["alpha"] + [f"beta_{j}" for j in range(self.p)] + ["gamma", "s"]
        header += [f"z_{i}" for i in range(self.n)] + [f"lambda_{i}" for i in range(self.n)]
        if self.chain is not None:
            header = ["chain"] + header
        lam = self.lam
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(self)):
                row = [repr(float(self.alpha[k]))]
                row += [repr(float(b)) for b in self.beta[k]]
                row += [repr(float(self.gamma[k])), repr(float(self.s[k]))]
                row += [str(int(v)) for v in self.z[k]]
                row += [repr(float(v)) for v in lam[k]]
                if self.chain is not None:
                    row = [str(int(self.chain[k]))] + row
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, model=None):
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
        idx = {h: k for k, h in enumerate(header)}
        for col in ("alpha", "gamma", "s"):
            if col not in idx:
                raise ValueError(f"{path}: missing column {col!r}")
        betas = sorted((h for h in header if h.startswith("beta_")), key=lambda h: int(h[5:]))
        zs = sorted((h for h in header if h.startswith("z_")), key=lambda h: int(h[2:]))
        lams = sorted((h for h in header if h.startswith("lambda_")), key=lambda h: int(h[7:]))
        z = arr[:, [idx[h] for h in zs]].astype(np.int8)
        with np.errstate(divide="ignore"):
            log_lam = np.log(arr[:, [idx[h] for h in lams]])
        log_lam[z == 0] = 0.0
        s = arr[:, idx["s"]]
        if model is None:
            manifest_path = path.with_name("manifest.json")
            if manifest_path.exists():
                model = json.loads(manifest_path.read_text()).get("model", "rgg")
            else:
                model = "gg" if np.all(np.isnan(s)) else "rgg"
        return cls(
            alpha=arr[:, idx["alpha"]],
            beta=arr[:, [idx[h] for h in betas]],
            gamma=arr[:, idx["gamma"]],
            s=s,
            z=z,
            log_lambda=log_lam,
            model=model,
            chain=arr[:, idx["chain"]].astype(int) if "chain" in idx else None,
        )


# ----------------------------------------------------------------- summaries

def summarize(draws, probs=(0.025, 0.5, 0.975), include_lambda=True,
              mean_parameterization=False):
    """Per-parameter rows with mean, median and requested quantiles.

    Quantiles use linear interpolation between order statistics.
    """
    probs = [float(q) for q in probs]
    if len(draws) == 0:
        raise ValueError("no draws to summarize")
    cols = dict(draws.scalar_columns(mean_parameterization))
    if include_lambda and draws.robust:
        lam = draws.lam
        for i in range(draws.n):
            cols[f"lambda_{i}"] = lam[:, i]
    rows = []
    for name, x in cols.items():
        x = np.asarray(x, dtype=float)
        row = {"parameter": name}
        if np.all(np.isnan(x)):
            row.update(mean=np.nan, median=np.nan, **{_qname(q): np.nan for q in probs})
        else:
            row["mean"] = float(np.mean(x))
            row["median"] = float(np.median(x))
            for q, v in zip(probs, np.quantile(x, probs)):
                row[_qname(q)] = float(v)
        rows.append(row)
    return rows


def _qname(q):
    return f"q{100 * q:g}"


def outlier_probabilities(draws):
    """Posterior P(z_i = 1) per observation."""
    if not draws.robust:
        raise UnsupportedOperationError(
            f"model {draws.model!r} has no outlier indicators"
        )
    return draws.z.mean(axis=0)


def regression_draws(draws, x):
    """Per-draw E[t | x, lambda = 1] = (alpha e^{x'b})^{-1/g} G(alpha + 1/g)/G(alpha)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (draws.p,):
        raise ValueError(f"x must have length {draws.p}")
    a, g = draws.alpha, draws.gamma
    log_m = (
        -(np.log(a) + draws.beta @ x) / g
        + special.gammaln(a + 1.0 / g)
        - special.gammaln(a)
    )
    with np.errstate(over="ignore"):
        return np.exp(log_m)


def regression_curve(draws, x, probs=(0.025, 0.5, 0.975)):
    """Mean, sd and quantiles of the regression function at covariate ``x``."""
    r = regression_draws(draws, x)
    out = {"mean": float(np.mean(r)), "sd": float(np.std(r, ddof=1)) if len(r) > 1 else 0.0}
    for q, v in zip(probs, np.quantile(r, probs)):
        out[_qname(q)] = float(v)
    return out


def regression_grid(draws, X_grid, probs=(0.025, 0.5, 0.975)):
    """Quantiles of the regression function over rows of ``X_grid``."""
    X_grid = np.atleast_2d(np.asarray(X_grid, dtype=float))
    return np.array([np.quantile(regression_draws(draws, x), probs) for x in X_grid])


# ----------------------------------------------------------------------- DIC

def _marginal_loglik_terms(alpha, beta, gamma, s, data, c, n_grid=400):
    # Integrate the local scale out of each observation on a log-lambda grid.
    grid = np.linspace(-30.0, 300.0, n_grid)
    w = np.full(n_grid, grid[1] - grid[0])
    w[[0, -1]] *= 0.5
    log_prior = dlh_log_density_log(grid, c) + grid  # density in log-lambda
    log_theta = (data.X @ beta)[:, None] - grid[None, :]
    lt = data.log_y[:, None]
    ev = (data.delta == 1)
    terms = np.empty((data.n, n_grid))
    if np.any(ev):
        terms[ev] = gg_log_density_log(lt[ev], alpha, gamma, log_theta[ev])
    if np.any(~ev):
        terms[~ev] = gg_log_reliability_log(
            np.broadcast_to(lt[~ev], log_theta[~ev].shape), alpha, gamma, log_theta[~ev]
        )
    slab = special.logsumexp(terms + log_prior[None, :] + np.log(w)[None, :], axis=1)
    spike = log_observed_likelihood_terms(alpha, beta, gamma, data, np.zeros(data.n))
    return np.logaddexp(np.log1p(-s) + spike, np.log(s) + slab)


def dic(draws, data: SurvivalDataset, marginal=False, c_dlh=1.0, max_draws=200):
    """Deviance information criterion; returns ``(dic, p_d)``.

    Default is the conditional DIC, D = -2 log L(alpha, beta, gamma, lambda)
    with events contributing densities and censored points reliabilities;
    the plug-in uses posterior means of alpha, beta, gamma and lambda (the
    lambda mean is formed in log space). ``marginal=True`` integrates lambda
    out under the spike-and-slab prior instead, on at most ``max_draws``
    evenly spaced draws, with s plugged in at its posterior mean.
    """
    K = len(draws)
    if marginal:
        if not draws.robust:
            marginal = False
    if not marginal:
        dev = np.array([
            -2.0 * np.sum(log_observed_likelihood_terms(
                draws.alpha[k], draws.beta[k], draws.gamma[k], data, draws.log_lambda[k]))
            for k in range(K)
        ])
        log_lam_bar = special.logsumexp(draws.log_lambda, axis=0) - np.log(K)
        d_bar_theta = -2.0 * np.sum(log_observed_likelihood_terms(
            draws.alpha.mean(), draws.beta.mean(axis=0), draws.gamma.mean(), data, log_lam_bar))
    else:
        idx = np.unique(np.linspace(0, K - 1, min(K, max_draws)).astype(int))
        dev = np.array([
            -2.0 * np.sum(_marginal_loglik_terms(
                draws.alpha[k], draws.beta[k], draws.gamma[k], draws.s[k], data, c_dlh))
            for k in idx
        ])
        d_bar_theta = -2.0 * np.sum(_marginal_loglik_terms(
            draws.alpha.mean(), draws.beta.mean(axis=0), draws.gamma.mean(),
            float(np.mean(draws.s)), data, c_dlh))
    d_bar = float(np.mean(dev))
    p_d = d_bar - float(d_bar_theta)
    return d_bar + p_d, p_d


# ----------------------------------------------------------------------- ESS

def _autocovariance(x):
    n = x.size
    x = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n] / n
    return acov


def effective_sample_size(x):
    """Geyer initial-monotone-sequence ESS of a single chain.

    A constant column has ESS 1 by convention.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 10:
        raise ValueError("need at least 10 draws")
    if np.all(x == x[0]):
        return 1.0
    acov = _autocovariance(x)
    rho = acov / acov[0]
    # pair sums Gamma_k = rho_{2k} + rho_{2k+1}
    n_pairs = (n - 1) // 2
    pairs = rho[0:2 * n_pairs:2] + rho[1:2 * n_pairs:2]
    positive = np.flatnonzero(pairs <= 0)
    m = positive[0] if positive.size else n_pairs
    pairs = pairs[:m]
    if pairs.size:
        pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(max(n, 10)))
    return float(n / tau)


def mc_standard_error(x):
    """Monte Carlo standard error of the mean of ``x`` (ESS-based)."""
    x = np.asarray(x, dtype=float)
    ess = effective_sample_size(x)
    return float(np.std(x, ddof=1) / np.sqrt(ess))


def write_rows_csv(rows, path, columns=None):
    """Write dict rows; floats use round-trip repr."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)
