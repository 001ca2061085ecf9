"""scikit-learn style wrapper around the MCMC fitter."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.metrics import r2_score
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted, check_X_y

from .model import DataFormatError, Hyperparams, SurvivalDataset
from .posterior import PosteriorDraws, dic, outlier_probabilities, regression_draws
from .sampler import MODELS, McmcConfig, run_chain

__all__ = ["RobustAFTRegressor", "check_survival_targets"]


def check_survival_targets(y, event=None):
    """Validate positive times and a 0/1 event vector (all events if None)."""
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise DataFormatError("survival times must be positive and finite")
    if event is None:
        event = np.ones(y.shape[0], dtype=np.int8)
    else:
        event = np.asarray(event).ravel()
        check_consistent_length(y, event)
        if not np.all((event == 0) | (event == 1)):
            raise DataFormatError("event indicators must be 0 or 1")
        event = event.astype(np.int8)
    return y, event


class RobustAFTRegressor(RegressorMixin, BaseEstimator):
    """Bayesian generalized-gamma AFT regression with optional outlier slab.

    ``model`` is one of rgg, rga, rwb (robust) or gg, ga, wb. ``fit`` takes
    survival times ``y`` and optional event indicators (1 = observed,
    0 = right-censored). ``predict`` returns the posterior mean of
    E[t | x] for a regular (non-outlying) observation.

    Fitted attributes: ``draws_``, ``coef_`` and ``intercept_`` (posterior
    means of -beta / gamma, the effect on log survival time, so a positive
    coefficient lengthens survival),
    ``alpha_``, ``gamma_``, ``acceptance_`` and, for robust models,
    ``outlier_proba_``.
    """

    def __init__(self, model="rgg", n_iter=4000, burn_in=2000, thin=1, grid_size=100,
                 fit_intercept=True, prior_precision=0.01, c_dlh=1.0, a_s=1.0, b_s=9.0,
                 n_chains=1, random_state=0):
        self.model = model
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.grid_size = grid_size
        self.fit_intercept = fit_intercept
        self.prior_precision = prior_precision
        self.c_dlh = c_dlh
        self.a_s = a_s
        self.b_s = b_s
        self.n_chains = n_chains
        self.random_state = random_state

    def _design(self, X):
        if self.fit_intercept:
            return np.column_stack([np.ones(X.shape[0]), X])
        return X

    def _seed(self):
        if self.random_state is None:
            return int(np.random.SeedSequence().entropy % (2**63))
        if isinstance(self.random_state, (int, np.integer)) and self.random_state >= 0:
            return int(self.random_state)
        raise ValueError("random_state must be a non-negative int or None")

    def fit(self, X, y, event=None):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {sorted(MODELS)}")
        if int(self.n_chains) < 1:
            raise ValueError("n_chains must be >= 1")
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        y, event = check_survival_targets(y, event)
        self.n_features_in_ = X.shape[1]
        data = SurvivalDataset(y, event, self._design(X))
        hyper = Hyperparams.default(
            data.p, A_beta=self.prior_precision * np.eye(data.p),
            c_dlh=self.c_dlh, a_s=self.a_s, b_s=self.b_s,
        )
        seed = self._seed()
        chains = []
        for k in range(int(self.n_chains)):
            cfg = McmcConfig(n_iter=self.n_iter, burn_in=self.burn_in, thin=self.thin,
                             seed=seed, grid_size=self.grid_size, model=self.model,
                             stream_id=k)
            chains.append(run_chain(data, hyper, cfg))
        draws = chains[0] if len(chains) == 1 else PosteriorDraws.concatenate(chains)
        self.draws_ = draws
        self.data_ = data
        self.hyper_ = hyper
        # log t = -x'beta / gamma + noise, so report the log-time scale
        coef = -(draws.beta / draws.gamma[:, None]).mean(axis=0)
        if self.fit_intercept:
            self.intercept_, self.coef_ = float(coef[0]), coef[1:]
        else:
            self.intercept_, self.coef_ = 0.0, coef
        self.alpha_ = float(draws.alpha.mean())
        self.gamma_ = float(draws.gamma.mean())
        self.acceptance_ = draws.acceptance
        if draws.robust:
            self.outlier_proba_ = outlier_probabilities(draws)
        return self

    def _regression_matrix(self, X):
        check_is_fitted(self, "draws_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but the model was fitted with {self.n_features_in_}"
            )
        Z = self._design(X)
        return np.column_stack([regression_draws(self.draws_, z) for z in Z])

    def predict(self, X):
        """Posterior mean of E[t | x] for each row of ``X``."""
        return self._regression_matrix(X).mean(axis=0)

    def predict_interval(self, X, level=0.95):
        """Equal-tailed credible interval for E[t | x]; returns ``(lower, upper)``."""
        if not 0 < level < 1:
            raise ValueError("level must lie in (0, 1)")
        R = self._regression_matrix(X)
        lo, hi = np.quantile(R, [(1 - level) / 2, (1 + level) / 2], axis=0)
        return lo, hi

    def dic(self, marginal=False):
        check_is_fitted(self, "draws_")
        return dic(self.draws_, self.data_, marginal=marginal, c_dlh=self.c_dlh)

    def score(self, X, y, sample_weight=None, event=None):
        """R^2 of predicted means against observed times, events only."""
        y, event = check_survival_targets(y, event)
        keep = event == 1
        X = check_array(X, dtype=float)
        w = None if sample_weight is None else np.asarray(sample_weight)[keep]
        return r2_score(y[keep], self.predict(X[keep]), sample_weight=w)
