import numpy as np
import pytest

from blockgel.errors import ConfigurationError
from blockgel.links import LinkKind, make_link


@pytest.mark.parametrize(
    "kind, v, expected",
    [
        ("EL", 0.5, (np.log(1.5), 1 / 1.5, -1 / 1.5**2)),
        ("ET", 0.5, (-np.exp(0.5), -np.exp(0.5), -np.exp(0.5))),
        ("CU", 0.5, (-0.625, -1.5, -1.0)),
    ],
)
def test_link_values(kind, v, expected):
    link = make_link(kind)
    got = (float(link.rho(np.array([v]))[0]), float(link.rho_v(np.array([v]))[0]),
           float(link.rho_vv(np.array([v]))[0]))
    np.testing.assert_allclose(got, expected, rtol=1e-14)


@pytest.mark.parametrize("kind", ["EL", "ET", "CU"])
def test_derivatives_match_finite_differences(kind):
    link = make_link(kind)
    v = np.linspace(-0.9, 2.0, 100) if kind == "EL" else np.linspace(-3, 3, 100)
    h = 1e-5
    d1 = (link.rho(v + h) - link.rho(v - h)) / (2 * h)
    d2 = (link.rho_v(v + h) - link.rho_v(v - h)) / (2 * h)
    assert np.max(np.abs(d1 - link.rho_v(v)) / np.maximum(np.abs(link.rho_v(v)), 1.0)) < 1e-6
    assert np.max(np.abs(d2 - link.rho_vv(v)) / np.maximum(np.abs(link.rho_vv(v)), 1.0)) < 1e-6


@pytest.mark.parametrize("kind", ["EL", "ET", "CU"])
def test_wilks_factor_is_minus_two(kind):
    assert make_link(kind).wilks_factor == pytest.approx(-2.0)


def test_el_domain():
    link = make_link("el")
    assert link.kind is LinkKind.EL
    assert link.bounded
    assert np.all(link.in_domain(np.array([-0.5, 3.0]), 0.01))
    assert not np.any(link.in_domain(np.array([-0.995]), 0.01))
    assert not make_link("CU").bounded


def test_unknown_link():
    with pytest.raises(ConfigurationError):
        make_link("XYZ")


def test_passthrough():
    link = make_link("ET")
    assert make_link(link) is link
