import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gelab.activations import ACTIVATION_KINDS, custom_activation, gauss_moments, get_activation
from gelab._errors import InvalidActivationError

# reference values from 30-digit adaptive quadrature
TANH_MU1 = 0.60570550960215883
TANH_MU2 = 0.16557574108374166
ERF_MU1 = 0.62368624295261052
ERF_MU2 = 0.1717348306656445
SINE_MU2 = 0.25387579091014435


def test_tanh_mu0_exactly_zero():
    assert gauss_moments("tanh", 101).mu0 == 0.0


def test_linear_moments_exact():
    assert gauss_moments("linear").as_tuple() == (0.0, 1.0, 0.0)


def test_sine_mu1_matches_closed_form():
    c = gauss_moments("sine")
    assert abs(c.mu1 - math.exp(-0.5)) <= 1e-10
    assert abs(c.mu2 - SINE_MU2) <= 1e-10


@pytest.mark.parametrize("kind,mu1,mu2", [("tanh", TANH_MU1, TANH_MU2), ("erf-scaled", ERF_MU1, ERF_MU2)])
def test_moments_match_reference_quadrature(kind, mu1, mu2):
    c = gauss_moments(kind)
    assert abs(c.mu1 - mu1) <= 1e-10
    assert abs(c.mu2 - mu2) <= 1e-9


@pytest.mark.parametrize("kind", ACTIVATION_KINDS)
def test_second_moment_decomposition(kind):
    act = get_activation(kind)
    z, w = np.polynomial.hermite_e.hermegauss(101)
    w = w / w.sum()
    second = float(w @ act.eval(z) ** 2)
    c = gauss_moments(kind)
    assert c.mu2 >= 0
    assert abs(c.mu0**2 + c.mu1**2 + c.mu2**2 - second) <= 1e-12


@pytest.mark.parametrize("order", [2, 1, 100])
def test_bad_order_rejected(order):
    with pytest.raises(ValueError):
        gauss_moments("tanh", order)


def test_unknown_activation():
    with pytest.raises(InvalidActivationError):
        get_activation("relu")


def test_nonfinite_at_node_rejected():
    act = get_activation("linear")
    bad = type(act)("bad", lambda x: np.where(np.abs(x) > 5, np.inf, x), act.d1, act.d2, act.d3)
    with pytest.raises(InvalidActivationError):
        gauss_moments(bad)


@pytest.mark.parametrize("kind", ACTIVATION_KINDS)
def test_builtin_derivatives_match_finite_differences(kind):
    act = get_activation(kind)
    x = np.linspace(-4, 4, 81)
    h = 1e-5
    for f, df in ((act.eval, act.d1), (act.d1, act.d2), (act.d2, act.d3)):
        fd = (f(x + h) - f(x - h)) / (2 * h)
        assert np.max(np.abs(fd - df(x))) <= 1e-6 * max(1.0, np.max(np.abs(df(x))))


@given(st.floats(-20, 20, allow_nan=False))
def test_builtins_are_odd(x):
    for kind in ACTIVATION_KINDS:
        act = get_activation(kind)
        assert act.eval(-x) == -act.eval(x)


def test_custom_activation_accepts_odd_map():
    act = custom_activation(lambda x: np.arctan(x))
    assert abs(act.d1(np.array([0.0]))[0] - 1.0) < 1e-8
    assert gauss_moments(act).mu0 == 0.0


def test_custom_activation_rejects_even_map():
    with pytest.raises(InvalidActivationError):
        custom_activation(np.cosh)


def test_custom_activation_rejects_unbounded_derivative():
    with pytest.raises(InvalidActivationError):
        custom_activation(np.cbrt)
