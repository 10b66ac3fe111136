import numpy as np
import pytest

from blockgel.blocking import make_scheme, regime_scheme
from blockgel.data import Dataset
from blockgel.errors import ConfigurationError, EstimationError
from blockgel.models import MomentModel, model_logistic, model_mean
from blockgel.outer import estimate, profile_objective
from blockgel.penalty import (
    ScadPenalty,
    default_tau_grid,
    estimate_penalized,
    scad_derivative,
    scad_value,
    select_tau,
)
from blockgel.simlab import Var1Config, gen_logistic, gen_var1, logistic_theta0


def test_scad_derivative_example():
    assert float(scad_derivative(ScadPenalty(1.0), 2.0)) == pytest.approx(1.7 / 2.7, abs=1e-12)
    assert float(scad_derivative(ScadPenalty(1.0), 2.0)) == pytest.approx(0.62963, abs=1e-5)


def test_scad_derivative_matches_fd():
    pen = ScadPenalty(0.7)
    u = np.random.default_rng(0).uniform(0.01, 4.0, 100)
    # keep away from the kinks at tau and a*tau
    u = u[(np.abs(u - 0.7) > 1e-3) & (np.abs(u - 3.7 * 0.7) > 1e-3)]
    h = 1e-7
    fd = (scad_value(pen, u + h) - scad_value(pen, u - h)) / (2 * h)
    d = scad_derivative(pen, u)
    assert np.max(np.abs(fd - d) / np.maximum(np.abs(d), 1e-3)) < 1e-6


def test_scad_shape():
    pen = ScadPenalty(1.0, 3.7)
    assert scad_value(pen, 0.0) == 0.0
    assert scad_value(pen, 0.5) == pytest.approx(0.5)
    assert scad_value(pen, 10.0) == pytest.approx(0.5 * 4.7)
    assert scad_value(pen, -2.0) == scad_value(pen, 2.0)
    # continuous at both knots
    for knot in (1.0, 3.7):
        assert scad_value(pen, knot - 1e-10) == pytest.approx(scad_value(pen, knot + 1e-10), abs=1e-9)


@pytest.mark.parametrize("tau, a", [(0.0, 3.7), (-1.0, 3.7), (1.0, 2.0)])
def test_invalid_penalty(tau, a):
    with pytest.raises(ConfigurationError):
        ScadPenalty(tau, a)


def test_large_tau_zeroes_mean_model():
    data = gen_var1(Var1Config(psi=0.0, p=3, n=400, seed=1))
    model, scheme = model_mean(3), make_scheme(400, 1, 1)
    fit = estimate(data, model, scheme, "EL")
    res = estimate_penalized(data, model, scheme, "EL", ScadPenalty(1.0), initial=fit)
    np.testing.assert_array_equal(res.theta_hat, 0.0)
    assert res.active_set == () and res.s_hat == 0
    # the penalised objective at zero beats the unpenalised point
    at_hat = fit.profile_objective + float(np.sum(scad_value(ScadPenalty(1.0), fit.theta_hat)))
    assert res.penalized_objective <= at_hat


@pytest.fixture(scope="module")
def logistic6():
    cfg = Var1Config(psi=0.1, p=6, n=1000, seed=3)
    data = gen_logistic(cfg)
    return data, model_logistic(6), regime_scheme("i", 1000)


def test_small_tau_keeps_everything(logistic6):
    data, model, scheme = logistic6
    fit = estimate(data, model, scheme, "EL")
    res = estimate_penalized(data, model, scheme, "EL", ScadPenalty(1e-6), initial=fit)
    assert res.s_hat == 6
    np.testing.assert_allclose(res.theta_hat, fit.theta_hat, atol=1e-4)


def test_kkt_on_active_set(logistic6):
    data, model, scheme = logistic6
    res = estimate_penalized(data, model, scheme, "EL", ScadPenalty(0.08))
    assert res.base.converged
    assert res.base.gradient_norm < 1e-5
    assert 0 in res.active_set


def test_path_monotone_in_tau(logistic6):
    data, model, scheme = logistic6
    fit = estimate(data, model, scheme, "EL")
    grid = np.logspace(-3, 0, 10)
    sizes = [estimate_penalized(data, model, scheme, "EL", ScadPenalty(t), initial=fit).s_hat for t in grid]
    assert all(a >= b for a, b in zip(sizes, sizes[1:])), sizes
    assert sizes[0] == 6 and sizes[-1] == 0


def test_select_tau_recovers_strong_signal(logistic6):
    data, model, scheme = logistic6
    res = select_tau(data, model, scheme, "EL")
    assert 0 in res.active_set
    assert len(res.path) == 12
    crit = [pt.criterion for pt in res.path]
    assert res.tau_selected == res.path[int(np.argmin(crit))].tau


def test_default_grid():
    g = default_tau_grid(6, 2000)
    assert len(g) == 12
    scale = np.sqrt(np.log(6) / 2000)
    assert g[0] == pytest.approx(0.1 * scale) and g[-1] == pytest.approx(30 * scale)
    assert np.all(np.diff(g) > 0)


def test_all_grid_points_failing():
    model = MomentModel(r=1, p=1, evaluate=lambda x, t: np.exp(x - t) + 1.0, d=1, name="positive")
    data = Dataset(np.linspace(0, 1, 30))

    class Fake:
        theta_hat = np.array([0.0])

    with pytest.raises(EstimationError, match="tau="):
        select_tau(data, model, make_scheme(30, 1, 1), "EL", grid=[0.1, 0.2], initial=Fake())


def test_warns_when_support_exceeds_r():
    rng = np.random.default_rng(2)
    x = rng.normal(loc=[1.0, 2.0, 3.0], size=(200, 3))
    # third coordinate does not enter the moments, so r = 2 < p = 3
    model = MomentModel(r=2, p=3, evaluate=lambda x, t: (x - t)[:, :2] + 0.0 * t[2], d=3, name="under")
    fit = estimate(Dataset(x), model_mean(3), make_scheme(200, 1, 1), "CU")
    with pytest.warns(RuntimeWarning, match="exceeds r"):
        res = estimate_penalized(Dataset(x), model, make_scheme(200, 1, 1), "CU", ScadPenalty(1e-8), initial=fit)
    assert res.s_hat == 3


@pytest.mark.slow
def test_penalised_beats_unpenalised_on_sparse_design():
    errs_el, errs_pel = [], []
    theta0 = logistic_theta0(6)
    for seed in range(20):
        data = gen_logistic(Var1Config(psi=0.1, p=6, n=500, seed=seed))
        model, scheme = model_logistic(6), regime_scheme("i", 500)
        fit = estimate(data, model, scheme, "EL")
        pen = select_tau(data, model, scheme, "EL", initial=fit)
        errs_el.append(np.sum((fit.theta_hat - theta0) ** 2))
        errs_pel.append(np.sum((pen.theta_hat - theta0) ** 2))
    assert np.median(errs_pel) < np.median(errs_el)
