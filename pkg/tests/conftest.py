import numpy as np
import pytest

from robsurv.model import GlobalParams, Hyperparams, LatentState, SurvivalDataset
from robsurv.numerics import make_rng


def random_problem(seed, n=12, p=3, censor=True, slab=True):
    """A small dataset with a random, internally consistent latent state."""
    rng = make_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    beta = rng.normal(scale=0.5, size=p)
    alpha = float(rng.uniform(0.5, 4.0))
    gamma = float(rng.uniform(0.5, 2.5))
    t = rng.gamma(alpha, size=n) ** (1 / gamma) * np.exp(-X @ beta / gamma)
    delta = (rng.random(n) > 0.25).astype(int) if censor else np.ones(n, int)
    y = np.where(delta == 1, t, 0.7 * t)
    data = SurvivalDataset(y, delta, X)
    z = (rng.random(n) < 0.3).astype(np.int8) if slab else np.zeros(n, np.int8)
    latent = LatentState(z, rng.normal(scale=1.5, size=n), np.ones((n, 3)), np.log(t))
    params = GlobalParams(alpha, beta, gamma, float(rng.uniform(0.05, 0.5)))
    hyper = Hyperparams(
        b_beta=rng.normal(size=p), A_beta=np.diag(rng.uniform(0.1, 2.0, p)),
        a_alpha=0.3, b_alpha=0.2, c_alpha=1.5, a_gamma=0.4, b_gamma=0.3, c_gamma=2.0,
        a_s=1.0, b_s=4.0, c_dlh=1.3,
    )
    return data, latent, params, hyper


@pytest.fixture
def problem():
    return random_problem(0)


# ------------------------------------------------------- acceptance report

N_CRITERIA = 12


def pytest_configure(config):
    config.acceptance_results = {}


@pytest.fixture
def acceptance(request):
    """``record(k, ok, detail)`` stores the verdict for criterion ``k``."""
    results = request.config.acceptance_results

    def record(k, ok, detail):
        results[k] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "acceptance_results", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        if k in results:
            ok, detail = results[k]
            terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {k:2d}: NO VERDICT (deselected or errored)")
