import numpy as np
import pytest

from blockgel.blocking import make_scheme, regime_scheme
from blockgel.errors import ConfigurationError
from blockgel.models import model_logistic, model_mean
from blockgel.outer import estimate
from blockgel.simlab import (
    McDesign,
    Var1Config,
    design_dimension,
    gen_logistic,
    gen_var1,
    gmm_twostep,
    logistic_theta0,
    make_rng,
    run_design,
    var1_innovation_cov,
)
from oracles import sigmoid_mp


def test_design_dimension():
    assert design_dimension(10, 500) == 22
    assert design_dimension(5, 500) == 11
    assert design_dimension(10, 2000) == int(np.floor(10 * 2000 ** (2 / 15)))


def test_innovation_cov_is_pd():
    for psi in (0.0, 0.3, 0.9):
        for p in (1, 2, 10, 30):
            assert np.all(np.linalg.eigvalsh(var1_innovation_cov(psi, p)) > 0)


def test_var1_iid_covariance():
    x = gen_var1(Var1Config(psi=0.0, p=4, n=20000, seed=1)).values
    target = np.eye(4) + 0.5 * (np.eye(4, k=1) + np.eye(4, k=-1))
    assert np.max(np.abs(np.cov(x.T) - target)) < 0.05


def test_var1_autocorrelation():
    x = gen_var1(Var1Config(psi=0.5, p=3, n=20000, seed=2)).values
    for j in range(3):
        rho = np.corrcoef(x[1:, j], x[:-1, j])[0, 1]
        assert abs(rho - 0.5) < 0.05


def test_seeding_is_reproducible():
    a = gen_var1(Var1Config(psi=0.3, p=2, n=50, seed=9)).values
    b = gen_var1(Var1Config(psi=0.3, p=2, n=50, seed=9)).values
    c = gen_var1(Var1Config(psi=0.3, p=2, n=50, seed=10)).values
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert make_rng(1).standard_normal() == make_rng(1).standard_normal()


def test_logistic_intercept_only_rate():
    cfg = Var1Config(psi=0.1, p=2, n=10000, seed=3)
    y = gen_logistic(cfg, theta0=np.zeros(2)).values[:, 0]
    assert abs(y.mean() - sigmoid_mp(1.0)) < 0.02


def test_logistic_moments_hold_at_truth():
    n = 10000
    data = gen_logistic(Var1Config(psi=0.1, p=3, n=n, seed=4))
    g = model_logistic(3).moments(data.values, logistic_theta0(3))
    assert np.max(np.abs(g.mean(axis=0))) < 4 * np.sqrt(1 / n)


def test_theta0_pattern():
    np.testing.assert_array_equal(logistic_theta0(5), [0.8, 0.2, 0, 0, 0])


def test_gmm_equals_gel_when_just_identified():
    data = gen_var1(Var1Config(psi=0.3, p=3, n=400, seed=5))
    scheme = regime_scheme("ii", 400)
    g = gmm_twostep(data, model_mean(3), scheme)
    e = estimate(data, model_mean(3), scheme, "EL")
    np.testing.assert_allclose(g.theta_hat, e.theta_hat, atol=1e-8)
    assert g.link_kind == "GMM"


def test_gmm_overidentified_is_consistent():
    data = gen_logistic(Var1Config(psi=0.1, p=2, n=3000, seed=6))
    g = gmm_twostep(data, model_logistic(2), make_scheme(3000, 1, 1))
    assert np.max(np.abs(g.theta_hat - logistic_theta0(2))) < 0.3


@pytest.mark.parametrize(
    "raw, msg",
    [
        ({"estimators": ["EL", "XX"]}, "estimators"),
        ({"regimes": ["vii"]}, "regimes"),
        ({"psis": [1.2]}, "psis"),
        ({"reps": 0}, "reps"),
        ({"ns": [5]}, "ns"),
        ({"model_kind": "probit"}, "model_kind"),
        ({"colour": "blue"}, "unknown field"),
    ],
)
def test_design_validation(raw, msg):
    with pytest.raises(ConfigurationError, match=msg):
        McDesign.from_mapping(raw)


def _tiny_design(**kw):
    base = dict(model_kind="mean", estimators=("EL", "CU", "GMM"), regimes=("i", "iv"), psis=(0.3,),
                ns=(200,), c_dim=3.0, reps=3, base_seed=11)
    base.update(kw)
    return McDesign(**base)


def test_run_design_is_deterministic_and_worker_independent():
    d = _tiny_design()
    a = run_design(d, workers=1)
    b = run_design(d, workers=1)
    c = run_design(d, workers=2)
    assert a.long_csv() == b.long_csv() == c.long_csv()
    assert a.table_csv() == c.table_csv()
    assert a.manifest() == c.manifest()


def test_run_design_table_layout():
    res = run_design(_tiny_design(reps=2))
    lines = res.table_csv().strip().splitlines()
    assert lines[0].startswith("regime,estimator,n=200;psi=")
    assert len(lines) == 1 + 2 * 3
    assert res.median("EL", "i", 200, 0.3) == res.median("GMM", "i", 200, 0.3)
    assert len(res.errors("EL", "iv", 200, 0.3)) == 2


def test_manifest_records_rng():
    m = run_design(_tiny_design(reps=1)).manifest()
    assert "Philox" in m["rng"] and m["burn_in"] == 200
    assert m["design"]["base_seed"] == 11


@pytest.mark.slow
def test_errors_decrease_with_n():
    d = _tiny_design(estimators=("EL", "ET", "CU", "GMM"), regimes=("i", "iii", "iv"), ns=(500, 2000),
                     c_dim=10.0, reps=20, base_seed=100)
    res = run_design(d)
    for regime in d.regimes:
        for est in d.estimators:
            small = res.median(est, regime, 500, 0.3)
            large = res.median(est, regime, 2000, 0.3)
            assert large <= 1.1 * small, (regime, est, small, large)


@pytest.mark.slow
def test_logistic_gmm_worse_than_el():
    d = McDesign(model_kind="logistic", estimators=("EL", "GMM"), regimes=("i",), psis=(0.1,), ns=(500,),
                 c_dim=5.0, reps=30, base_seed=20240101)
    res = run_design(d)
    assert res.median("GMM", "i", 500, 0.1) > res.median("EL", "i", 500, 0.1)
