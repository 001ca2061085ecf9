import math

import numpy as np
import pytest
from scipy import special

from robsurv.distributions import gg_mean, gg_sample
from robsurv.model import GlobalParams, Hyperparams, SurvivalDataset, log_observed_likelihood
from robsurv.numerics import make_rng
from robsurv.posterior import (
    PosteriorDraws,
    UnsupportedOperationError,
    dic,
    effective_sample_size,
    mc_standard_error,
    outlier_probabilities,
    regression_curve,
    regression_draws,
    regression_grid,
    summarize,
)


def make_draws(K=50, n=4, p=2, model="rgg", seed=0, gamma_one=False):
    rng = make_rng(seed)
    z = (rng.random((K, n)) < 0.3).astype(np.int8) if model.startswith("r") else np.zeros((K, n), np.int8)
    log_lam = np.where(z == 1, rng.normal(2.0, 1.0, (K, n)), 0.0)
    return PosteriorDraws(
        alpha=rng.gamma(4.0, 0.5, K), beta=rng.normal(size=(K, p)),
        gamma=np.ones(K) if gamma_one else rng.gamma(8.0, 0.125, K),
        s=rng.beta(1, 9, K) if model.startswith("r") else np.full(K, np.nan),
        z=z, log_lambda=log_lam, model=model,
    )


def test_draws_validate_spike():
    d = make_draws()
    bad = d.log_lambda.copy()
    bad[d.z == 0] = 0.5
    with pytest.raises(ValueError):
        PosteriorDraws(d.alpha, d.beta, d.gamma, d.s, d.z, bad)
    with pytest.raises(ValueError):
        PosteriorDraws(d.alpha, d.beta, d.gamma[:-1], d.s, d.z, d.log_lambda)


def test_summarize_constant_column():
    K = 30
    d = PosteriorDraws(np.full(K, 2.0), np.ones((K, 1)), np.ones(K), np.full(K, 0.1),
                       np.zeros((K, 2), np.int8), np.zeros((K, 2)))
    row = summarize(d)[0]
    assert row["parameter"] == "alpha"
    assert row["mean"] == row["median"] == row["q2.5"] == row["q97.5"] == 2.0


def test_summarize_quantiles_sort_oracle():
    d = make_draws(K=101)
    rows = {r["parameter"]: r for r in summarize(d, probs=(0.0, 0.25, 0.5, 1.0))}
    x = np.sort(d.alpha)
    assert rows["alpha"]["q0"] == x[0]
    assert rows["alpha"]["q25"] == x[25]
    assert rows["alpha"]["q50"] == x[50] == rows["alpha"]["median"]
    assert rows["alpha"]["q100"] == x[-1]
    assert {"lambda_0", "lambda_3", "s", "beta_1"} <= set(rows)
    assert set(summarize(d)[0]) == {"parameter", "mean", "median", "q2.5", "q50", "q97.5"}


def test_summarize_mean_parameterization_flips_beta():
    d = make_draws()
    a = {r["parameter"]: r for r in summarize(d)}
    b = {r["parameter"]: r for r in summarize(d, mean_parameterization=True)}
    assert b["beta_0"]["mean"] == -a["beta_0"]["mean"]
    assert b["alpha"]["mean"] == a["alpha"]["mean"]


def test_outlier_probabilities():
    d = make_draws(K=4)
    d.z[:] = 0
    d.log_lambda[:] = 0.0
    np.testing.assert_array_equal(outlier_probabilities(d), 0.0)
    d.z[::2, 1] = 1
    np.testing.assert_array_equal(outlier_probabilities(d)[1], 0.5)
    with pytest.raises(UnsupportedOperationError):
        outlier_probabilities(make_draws(model="gg"))


def test_outlier_probabilities_concatenation_consistency():
    a, b = make_draws(K=30, seed=1), make_draws(K=70, seed=2)
    m = PosteriorDraws.concatenate([a, b])
    np.testing.assert_allclose(
        outlier_probabilities(m), (30 * outlier_probabilities(a) + 70 * outlier_probabilities(b)) / 100,
        rtol=1e-15)
    np.testing.assert_array_equal(m.chain, [0] * 30 + [1] * 70)


def test_regression_closed_forms():
    d = make_draws(gamma_one=True)
    d.alpha[:] = 1.0
    x = np.array([1.0, 0.5])
    np.testing.assert_allclose(regression_draws(d, x), np.exp(-d.beta @ x), rtol=1e-12)
    # gamma = 1: E[t] = 1 / theta for any alpha
    g = make_draws(gamma_one=True, seed=3)
    np.testing.assert_allclose(regression_draws(g, x), np.exp(-g.beta @ x), rtol=1e-12)
    one = make_draws(K=1)
    c = regression_curve(one, x)
    r = regression_draws(one, x)[0]
    assert c["mean"] == c["q2.5"] == c["q97.5"] == pytest.approx(r) and c["sd"] == 0.0
    with pytest.raises(ValueError):
        regression_draws(d, np.ones(3))


def test_regression_matches_simulation():
    d = make_draws(K=3, seed=4)
    x = np.array([1.0, -0.3])
    r = regression_draws(d, x)
    for k in range(3):
        th = math.exp(d.beta[k] @ x)
        assert r[k] == pytest.approx(gg_mean(d.alpha[k], d.gamma[k], th), rel=1e-12)
        t = gg_sample(make_rng(k), d.alpha[k], d.gamma[k], th, size=10**5)
        assert abs(t.mean() - r[k]) < 3 * t.std() / math.sqrt(t.size)


def test_regression_grid_shape():
    d = make_draws()
    out = regression_grid(d, np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]]))
    assert out.shape == (3, 3)
    assert np.all(out[:, 0] <= out[:, 1]) and np.all(out[:, 1] <= out[:, 2])


def _data(seed=5, n=20):
    rng = make_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = rng.gamma(3.0, 1 / 3.0, n)
    delta = (rng.random(n) < 0.8).astype(int)
    return SurvivalDataset(y, delta, X)


def test_dic_degenerate_chain():
    data = _data()
    K, n = 10, data.n
    d = PosteriorDraws(np.full(K, 2.0), np.tile([0.1, -0.2], (K, 1)), np.full(K, 1.3), np.full(K, 0.1),
                       np.zeros((K, n), np.int8), np.zeros((K, n)))
    val, pd = dic(d, data)
    dev = -2 * log_observed_likelihood(GlobalParams(2.0, [0.1, -0.2], 1.3), data)
    assert pd == pytest.approx(0.0, abs=1e-9)
    assert val == pytest.approx(dev, rel=1e-12)


def test_dic_permutation_invariant():
    data = _data()
    d = make_draws(K=40, n=data.n, seed=6)
    perm = make_rng(7).permutation(40)
    e = PosteriorDraws(d.alpha[perm], d.beta[perm], d.gamma[perm], d.s[perm], d.z[perm],
                       d.log_lambda[perm], model=d.model)
    a, b = dic(d, data), dic(e, data)
    assert a[0] == pytest.approx(b[0], rel=1e-12) and a[1] == pytest.approx(b[1], rel=1e-12)


def test_dic_additivity_on_duplicated_data():
    data = _data()
    dup = SurvivalDataset(np.r_[data.y, data.y], np.r_[data.delta, data.delta], np.r_[data.X, data.X])
    d = make_draws(K=30, n=data.n, model="gg", seed=8)
    d2 = PosteriorDraws(d.alpha, d.beta, d.gamma, d.s, np.zeros((30, 2 * data.n), np.int8),
                        np.zeros((30, 2 * data.n)), model="gg")
    a, b = dic(d, data), dic(d2, dup)
    assert b[0] == pytest.approx(2 * a[0], rel=1e-12)
    assert b[1] == pytest.approx(2 * a[1], rel=1e-12)


def test_dic_lambda_mean_in_log_space():
    data = _data(n=5)
    K = 20
    d = make_draws(K=K, n=5, seed=9)
    d.log_lambda[:] = np.where(d.z == 1, 800.0, 0.0)  # lambda beyond the double range
    val, pd = dic(d, data)
    assert np.isfinite(val) and np.isfinite(pd)


def test_dic_marginal_variant_runs():
    data = _data(n=8)
    d = make_draws(K=10, n=8, seed=10)
    val, pd = dic(d, data, marginal=True)
    assert np.isfinite(val) and np.isfinite(pd)


def test_ess_iid_and_ar1():
    rng = make_rng(11)
    n = 10**4
    assert effective_sample_size(rng.normal(size=n)) == pytest.approx(n, rel=0.1)
    rho = 0.9
    x = np.empty(n)
    x[0] = rng.normal() / math.sqrt(1 - rho**2)
    e = rng.normal(size=n)
    for k in range(1, n):
        x[k] = rho * x[k - 1] + e[k]
    assert effective_sample_size(x) == pytest.approx(n * (1 - rho) / (1 + rho), rel=0.2)
    assert effective_sample_size(np.full(50, 3.0)) == 1.0
    with pytest.raises(ValueError):
        effective_sample_size(np.arange(5.0))


def test_mcse_iid():
    x = make_rng(12).normal(size=4000)
    assert mc_standard_error(x) == pytest.approx(1 / math.sqrt(4000), rel=0.1)


def test_csv_roundtrip(tmp_path):
    d = make_draws(K=12, n=3, p=2)
    path = tmp_path / "draws.csv"
    d.to_csv(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:5] == ["alpha", "beta_0", "beta_1", "gamma", "s"]
    assert header[5:8] == ["z_0", "z_1", "z_2"] and header[8:11] == ["lambda_0", "lambda_1", "lambda_2"]
    back = PosteriorDraws.from_csv(path, model="rgg")
    np.testing.assert_array_equal(back.alpha, d.alpha)
    np.testing.assert_array_equal(back.beta, d.beta)
    np.testing.assert_array_equal(back.z, d.z)
    np.testing.assert_allclose(back.log_lambda, d.log_lambda, rtol=1e-15, atol=0)
