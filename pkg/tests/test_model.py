import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from conftest import random_problem
from robsurv.distributions import dlh_log_density, gg_log_density, gg_reliability, gg_sample
from robsurv.model import (
    DataFormatError,
    GlobalParams,
    Hyperparams,
    LatentState,
    ReparamView,
    SurvivalDataset,
    gamma_tilde_conditional,
    load_csv,
    log_bernoulli_weight_z,
    log_complete_conditional_alpha,
    log_complete_conditional_beta,
    log_complete_conditional_gamma_tilde,
    log_observed_likelihood,
    log_z_odds,
    log_z_weights,
)
from robsurv.numerics import DomainError, make_rng


# ------------------------------------------------------------- containers

def test_dataset_validation():
    X = np.ones((3, 1))
    with pytest.raises(DataFormatError):
        SurvivalDataset([1.0, -1.0, 2.0], [1, 1, 1], X)
    with pytest.raises(DataFormatError):
        SurvivalDataset([1.0, 1.0], [1, 1, 1], X)
    with pytest.raises(DataFormatError):
        SurvivalDataset([1.0, 1.0, 2.0], [1, 2, 1], X)
    with pytest.raises(DataFormatError):
        SurvivalDataset([1.0, 1.0, 2.0], [1, 1, 1], np.column_stack([X, X]))


def test_dataset_from_log_times_handles_overflow():
    d = SurvivalDataset.from_log_times([0.0, 1000.0], [1, 1], np.ones((2, 1)))
    assert d.log_y[1] == 1000.0 and np.isinf(d.y[1])
    sub = d.subset([1])
    assert sub.n == 1 and sub.log_y[0] == 1000.0


def test_load_csv(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("time,status,x1,x2\n1.5,1,0.1,2\n2.0,0,0.3,-1\n0.7,1,1.0,0.5\n")
    d = load_csv(f, add_intercept=True)
    assert d.n == 3 and d.p == 3
    np.testing.assert_array_equal(d.delta, [1, 0, 1])
    np.testing.assert_array_equal(d.X[:, 0], 1.0)


@pytest.mark.parametrize("body,needle", [
    ("time,x1\n1,2\n", "status"),
    ("status,x1\n1,2\n", "time"),
    ("time,status,x1\n1,1,2\n-3,1,2\n", "row 3"),
    ("time,status,x1\n1,1,2\n3,2,2\n", "row 3"),
    ("time,status,x1\n1,1,2\n3,1\n", "row 3"),
    ("time,status,x1\n1,1,abc\n", "row 2"),
    ("", "empty"),
])
def test_load_csv_errors_name_the_problem(tmp_path, body, needle):
    f = tmp_path / "bad.csv"
    f.write_text(body)
    with pytest.raises(DataFormatError, match=needle):
        load_csv(f)


def test_hyperparams_validation_and_roundtrip():
    h = Hyperparams.default(2, a_s=2.0)
    h2 = Hyperparams.from_dict(h.to_dict())
    np.testing.assert_array_equal(h2.A_beta, h.A_beta)
    assert h2.a_s == 2.0
    with pytest.raises(DomainError):
        Hyperparams.from_dict({"bogus": 1.0}, p=2)
    with pytest.raises(DomainError):
        Hyperparams.default(2, A_beta=np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(DomainError):
        Hyperparams.default(2, c_dlh=0.0)


def test_global_params_validation():
    with pytest.raises(DomainError):
        GlobalParams(-1.0, [0.0], 1.0)
    with pytest.raises(DomainError):
        GlobalParams(1.0, [0.0], 1.0, s=1.0)


def test_reparam_roundtrip_random_draws():
    rng = make_rng(1)
    for _ in range(1000):
        p = GlobalParams(rng.gamma(2.0) + 1e-3, rng.normal(size=3), rng.gamma(2.0) + 1e-3, 0.2)
        back = ReparamView.from_params(p).to_params(0.2)
        assert back.alpha == pytest.approx(p.alpha, rel=1e-12)
        assert back.gamma == pytest.approx(p.gamma, rel=1e-12)
        np.testing.assert_allclose(back.beta, p.beta, rtol=1e-12, atol=1e-15)
        assert 0 < ReparamView.from_params(p).gamma_tilde < 1


def test_lambda_is_exactly_one_on_spike(problem):
    _, latent, params, _ = problem
    ll = latent.log_lambda(params.gamma)
    assert np.all(ll[latent.z == 0] == 0.0)
    assert np.all(ll[latent.z == 1] == params.gamma * latent.log_eta_tilde[latent.z == 1])


# ----------------------------------------------------------- conditionals

@pytest.mark.parametrize("seed", range(5))
def test_alpha_derivatives(seed):
    data, latent, params, hyper = random_problem(seed)
    at = params.alpha * params.gamma**2
    f = lambda x: log_complete_conditional_alpha(x, latent, params, data, hyper)
    v, d1, d2 = f(at)
    h = 1e-5 * at
    assert (f(at + h)[0] - f(at - h)[0]) / (2 * h) == pytest.approx(d1, rel=1e-5, abs=1e-6)
    assert (f(at + h)[1] - f(at - h)[1]) / (2 * h) == pytest.approx(d2, rel=1e-5, abs=1e-6)


def test_alpha_conditional_independent_formula(problem):
    data, latent, params, hyper = problem
    # direct product over observations of the alpha-dependent factors
    a = 1.7
    g = params.gamma
    r = np.exp(data.X @ params.beta + g * latent.log_t - latent.log_lambda(g))
    direct = (
        (hyper.c_alpha - 1) * math.log(a) - hyper.a_alpha * a - hyper.b_alpha / a
        + np.sum(a * math.log(a) - math.lgamma(a) + a * np.log(r) - a * r)
    )
    p2 = GlobalParams(params.alpha, params.beta, g, params.s)
    v, _, _ = log_complete_conditional_alpha(a * g * g, latent, p2, data, hyper)
    assert v == pytest.approx(direct, rel=1e-12)


def test_alpha_conditional_without_data_is_gig_prior():
    hyper = Hyperparams.default(1, a_alpha=2.0, b_alpha=3.0, c_alpha=2.5)
    empty = SurvivalDataset(np.empty(0), np.empty(0, int), np.empty((0, 1)))
    latent = LatentState(np.empty(0, np.int8), np.empty(0), np.empty((0, 3)), np.empty(0))
    params = GlobalParams(1.0, [0.0], 1.0)
    mode = ((2.5 - 1) + math.sqrt((2.5 - 1) ** 2 + 4 * 2.0 * 3.0)) / (2 * 2.0)
    _, d1, d2 = log_complete_conditional_alpha(mode, latent, params, empty, hyper)
    assert abs(d1) < 1e-12 and d2 < 0
    assert log_complete_conditional_alpha(0.0, latent, params, empty, hyper)[0] == -np.inf


def test_alpha_conditional_is_proper(problem):
    data, latent, params, hyper = problem
    f = lambda x: log_complete_conditional_alpha(x, latent, params, data, hyper)[0]
    mid = f(params.alpha * params.gamma**2)
    assert f(1e-8) < mid - 50 and f(1e6) < mid - 50


@pytest.mark.parametrize("seed", range(5))
def test_beta_gradient_and_hessian(seed):
    data, latent, params, hyper = random_problem(seed)
    bt = params.beta / params.gamma + 0.1
    v, g, H = log_complete_conditional_beta(bt, latent, params, data, hyper)
    h = 1e-5
    for j in range(bt.size):
        e = np.zeros_like(bt)
        e[j] = h
        fp = log_complete_conditional_beta(bt + e, latent, params, data, hyper)
        fm = log_complete_conditional_beta(bt - e, latent, params, data, hyper)
        assert (fp[0] - fm[0]) / (2 * h) == pytest.approx(g[j], rel=1e-5, abs=1e-6)
        np.testing.assert_allclose((fp[1] - fm[1]) / (2 * h), H[:, j], rtol=1e-5, atol=1e-6)
    assert np.all(np.linalg.eigvalsh(H) < 0)


def test_beta_prior_dominant_limit(problem):
    data, latent, params, hyper = problem
    strong = Hyperparams.default(data.p, b_beta=hyper.b_beta, A_beta=1e10 * np.eye(data.p))
    mode = hyper.b_beta / params.gamma
    _, g, H = log_complete_conditional_beta(mode, latent, params, data, strong)
    step = np.linalg.solve(-H, g)
    assert np.max(np.abs(step)) < 1e-6


def test_beta_likelihood_invariant_under_time_rescaling(problem):
    data, latent, params, hyper = problem
    k = 3.7
    g = params.gamma
    bt = params.beta / g
    lat2 = latent.copy()
    lat2.log_t = latent.log_t + math.log(k)
    bt2 = bt.copy()
    bt2[0] -= math.log(k)  # intercept shift of -gamma log k in beta
    flat = Hyperparams.default(data.p, A_beta=1e-300 * np.eye(data.p))
    v1 = log_complete_conditional_beta(bt, latent, params, data, flat)[0]
    v2 = log_complete_conditional_beta(bt2, lat2, params, data, flat)[0]
    # the alpha * sum x'beta term moves by a constant -n alpha gamma log k
    assert v2 - v1 == pytest.approx(-data.n * params.alpha * g * math.log(k), rel=1e-10)


def _gamma_tilde_reference(gt, latent, params, data, hyper):
    """Term-by-term evaluation of the gamma_tilde conditional."""
    g = gt / (1 - gt)
    at = params.alpha * params.gamma**2
    bt = params.beta / params.gamma
    a = at / g**2
    b = g * bt
    val = 0.0
    # alpha prior at alpha_tilde / g^2, with Jacobian g^-2 of alpha in alpha_tilde
    val += (hyper.c_alpha - 1) * math.log(a) - hyper.a_alpha * a - hyper.b_alpha / a - 2 * math.log(g)
    dev = b - hyper.b_beta
    val += -0.5 * dev @ hyper.A_beta @ dev + data.p * math.log(g)
    val += (hyper.c_gamma - 1) * math.log(g) - hyper.a_gamma * g - hyper.b_gamma / g
    for i in range(data.n):
        t = math.exp(latent.log_t[i])
        lam = 1.0
        if latent.z[i] == 1:
            et = math.exp(latent.log_eta_tilde[i])
            lam = et**g
            val += math.log(g) + (g - 1) * math.log(et) + dlh_log_density(lam, hyper.c_dlh)
        val += gg_log_density(t, a, g, math.exp(data.X[i] @ b) / lam) + math.log(t)
    return val - 2 * math.log(1 - gt)


@pytest.mark.parametrize("seed", range(3))
def test_gamma_tilde_matches_independent_reimplementation(seed):
    data, latent, params, hyper = random_problem(seed)
    grid = np.array([0.2, 0.5, 0.8])
    ours = log_complete_conditional_gamma_tilde(grid, latent, params, data, hyper)
    ref = np.array([_gamma_tilde_reference(x, latent, params, data, hyper) for x in grid])
    # equal up to one additive constant
    np.testing.assert_allclose(ours - ours[0], ref - ref[0], rtol=1e-9, atol=1e-9)


def test_gamma_tilde_boundaries_and_scalar(problem):
    data, latent, params, hyper = problem
    f = gamma_tilde_conditional(latent, params, data, hyper)
    np.testing.assert_array_equal(f(np.array([0.0, 1.0, -0.5])), -np.inf)
    assert isinstance(f(0.4), float)


def test_gamma_tilde_jacobian_by_quadrature():
    # no data: the gamma_tilde density must integrate like the gamma prior
    hyper = Hyperparams.default(1, a_gamma=1.5, b_gamma=0.8, c_gamma=2.2,
                                a_alpha=1.0, b_alpha=1.0, c_alpha=2.0)
    empty = SurvivalDataset(np.empty(0), np.empty(0, int), np.empty((0, 1)))
    latent = LatentState(np.empty(0, np.int8), np.empty(0), np.empty((0, 3)), np.empty(0))
    params = GlobalParams(1.3, [0.4], 1.0)
    f = gamma_tilde_conditional(latent, params, empty, hyper, alpha_fixed=True)
    lhs, _ = integrate.quad(lambda x: math.exp(f(x)), 0, 1, epsabs=1e-13, epsrel=1e-11, limit=200)

    def prior_gamma(g):
        # p_gamma(gamma): beta prior at gamma * beta_tilde with gamma^p Jacobian, GIG on gamma
        b = g * 0.4
        return math.exp(math.log(g) - 0.5 * 0.01 * b * b
                        + (2.2 - 1) * math.log(g) - 1.5 * g - 0.8 / g)

    rhs, _ = integrate.quad(prior_gamma, 0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_z_weight_closed_forms(problem):
    data, latent, params, hyper = problem
    lat = latent.copy()
    lat.log_eta_tilde[:] = 0.0  # eta_tilde = 1
    odds = log_z_odds(lat, params, data, hyper)
    s, g = params.s, params.gamma
    expect = math.log(s * g / (1 - s))
    np.testing.assert_allclose(odds, expect, rtol=1e-12)
    p1 = GlobalParams(params.alpha, params.beta, 1.0, params.s)
    np.testing.assert_allclose(special.expit(log_z_odds(lat, p1, data, hyper)), s, rtol=1e-12)
    tiny = GlobalParams(params.alpha, params.beta, g, 1e-300)
    assert np.all(special.expit(log_z_odds(latent, tiny, data, hyper)) < 1e-250)


def test_z_odds_match_weight_difference(problem):
    data, latent, params, hyper = problem
    w = log_z_weights(latent, params, data, hyper)
    np.testing.assert_allclose(log_z_odds(latent, params, data, hyper), w[:, 1] - w[:, 0],
                               rtol=1e-9, atol=1e-9)
    i = 3
    assert log_bernoulli_weight_z(i, 1, latent, params, data, hyper) == pytest.approx(w[i, 1])
    with pytest.raises(DomainError):
        log_bernoulli_weight_z(i, 2, latent, params, data, hyper)


def test_z_odds_survive_gross_outlier(problem):
    data, latent, params, hyper = problem
    lat = latent.copy()
    lat.log_t[0] = 500.0
    lat.log_eta_tilde[0] = 500.0 / params.gamma * params.gamma
    odds = log_z_odds(lat, params, data, hyper)
    assert not np.any(np.isnan(odds))
    assert odds[0] > 50


def test_observed_likelihood_cases():
    X = np.ones((1, 1))
    one = SurvivalDataset([2.0], [0], X)
    assert log_observed_likelihood(GlobalParams(1.0, [0.0], 1.0), one) == pytest.approx(-2.0)
    data, latent, params, hyper = random_problem(4, censor=False)
    direct = sum(gg_log_density(data.y[i], params.alpha, params.gamma, math.exp(data.X[i] @ params.beta))
                 for i in range(data.n))
    assert log_observed_likelihood(params, data) == pytest.approx(direct, rel=1e-12)
    lam = np.full(data.n, 2.0)
    direct = sum(gg_log_density(data.y[i], params.alpha, params.gamma,
                                math.exp(data.X[i] @ params.beta) / 2.0) for i in range(data.n))
    assert log_observed_likelihood(params, data, lam=lam) == pytest.approx(direct, rel=1e-12)
    with pytest.raises(DomainError):
        log_observed_likelihood(params, data, lam=np.zeros(data.n))


def test_observed_likelihood_censored_simulation_oracle():
    a, g, th, y = 2.5, 1.4, 0.6, 1.9
    one = SurvivalDataset([y], [0], np.ones((1, 1)))
    ll = log_observed_likelihood(GlobalParams(a, [math.log(th)], g), one)
    x = gg_sample(make_rng(3), a, g, th, size=10**6) > y
    se = x.std() / math.sqrt(x.size)
    assert abs(math.exp(ll) - x.mean()) < 3 * se
    assert math.exp(ll) == pytest.approx(gg_reliability(y, a, g, th), rel=1e-12)


def test_single_event_likelihood_integrates_to_one():
    a, g, b = 3.0, 1.6, 0.4

    def dens(t):
        d = SurvivalDataset([t], [1], np.ones((1, 1)))
        return math.exp(log_observed_likelihood(GlobalParams(a, [b], g), d))

    total, _ = integrate.quad(dens, 0, np.inf, epsabs=1e-11, limit=200)
    assert total == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_beta_hessian_negative_definite_property(seed):
    data, latent, params, hyper = random_problem(seed)
    _, _, H = log_complete_conditional_beta(params.beta / params.gamma, latent, params, data, hyper)
    assert np.all(np.linalg.eigvalsh(0.5 * (H + H.T)) < 0)
