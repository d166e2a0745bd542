"""Odd activation functions and their Gaussian-equivalence constants."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import erf

from ._errors import InvalidActivationError

__all__ = [
    "Activation",
    "GaussEquivConstants",
    "get_activation",
    "custom_activation",
    "gauss_moments",
    "ACTIVATION_KINDS",
]

ACTIVATION_KINDS = ("tanh", "erf-scaled", "sine", "linear")

# grid used to vet custom activations
_CHECK_GRID = np.concatenate([np.linspace(-12.0, 12.0, 4801), [-1e-9, 1e-9]])
_DERIV_BOUND = 1e8


@dataclass(frozen=True)
class Activation:
    """Scalar activation with its first three derivatives.

    All callables are vectorised over numpy arrays.
    """

    kind: str
    eval: Callable
    d1: Callable
    d2: Callable
    d3: Callable

    def __call__(self, x):
        return self.eval(x)


@dataclass(frozen=True)
class GaussEquivConstants:
    """Moments ``(mu0, mu1, mu2)`` matching an activation under a standard normal.

    ``mu0 = E s(z)``, ``mu1 = E z s(z)`` and
    ``mu2 = sqrt(E s(z)^2 - mu0^2 - mu1^2)``.
    """

    mu0: float
    mu1: float
    mu2: float

    def as_tuple(self):
        return (self.mu0, self.mu1, self.mu2)


def _tanh_d1(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _tanh_d2(x):
    t = np.tanh(x)
    return -2.0 * t * (1.0 - t * t)


def _tanh_d3(x):
    t = np.tanh(x)
    return (6.0 * t * t - 2.0) * (1.0 - t * t)


_ERF_SCALE = np.sqrt(np.pi) / 2.0  # unit slope at the origin


def _erf_eval(x):
    return erf(_ERF_SCALE * np.asarray(x, dtype=float))


def _erf_d1(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-np.pi * x * x / 4.0)


def _erf_d2(x):
    x = np.asarray(x, dtype=float)
    return -(np.pi * x / 2.0) * np.exp(-np.pi * x * x / 4.0)


def _erf_d3(x):
    x = np.asarray(x, dtype=float)
    return (np.pi**2 * x * x / 4.0 - np.pi / 2.0) * np.exp(-np.pi * x * x / 4.0)


def _identity(x):
    return np.asarray(x, dtype=float)


def _ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


def _zeros(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _neg_sin(x):
    return -np.sin(x)


def _neg_cos(x):
    return -np.cos(x)


_BUILTIN = {
    "tanh": Activation("tanh", np.tanh, _tanh_d1, _tanh_d2, _tanh_d3),
    "erf-scaled": Activation("erf-scaled", _erf_eval, _erf_d1, _erf_d2, _erf_d3),
    "sine": Activation("sine", np.sin, np.cos, _neg_sin, _neg_cos),
    "linear": Activation("linear", _identity, _ones, _zeros, _zeros),
}


def get_activation(kind):
    """Look up a built-in activation by name.

    ``erf-scaled`` is ``erf(sqrt(pi) x / 2)``, which has unit slope at zero.
    """
    if isinstance(kind, Activation):
        return kind
    try:
        return _BUILTIN[kind]
    except KeyError:
        raise InvalidActivationError(
            f"unknown activation {kind!r}; expected one of {ACTIVATION_KINDS}"
        ) from None


def _central_diff(f, h):
    return lambda x: (f(np.asarray(x, dtype=float) + h) - f(np.asarray(x, dtype=float) - h)) / (2 * h)


def _slope(f, h):
    x = _CHECK_GRID
    return float(np.max(np.abs(np.asarray(f(x + h), dtype=float) - np.asarray(f(x - h), dtype=float)))) / (2 * h)


def custom_activation(
    fn: Callable,
    d1: Optional[Callable] = None,
    d2: Optional[Callable] = None,
    d3: Optional[Callable] = None,
) -> Activation:
    """Wrap a user map as an :class:`Activation` after vetting it.

    Missing derivatives are filled in with central differences. The map must
    be finite and odd on a test grid, and its derivatives must stay bounded
    there; anything else raises :class:`InvalidActivationError`.
    """
    d1 = d1 or _central_diff(fn, 1e-5)
    d2 = d2 or _central_diff(d1, 1e-4)
    d3 = d3 or _central_diff(d2, 1e-3)
    act = Activation("custom", fn, d1, d2, d3)

    with np.errstate(all="ignore"):
        vals = np.asarray(fn(_CHECK_GRID), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise InvalidActivationError("activation is not finite on the test grid")
        mirrored = np.asarray(fn(-_CHECK_GRID), dtype=float)
        scale = max(1.0, float(np.max(np.abs(vals))))
        if np.max(np.abs(vals + mirrored)) > 1e-12 * scale:
            raise InvalidActivationError("activation is not odd on the test grid")
        # fixed-step differences hide cusps, so compare slopes at two scales
        for name, f in (("d1", fn), ("d2", d1)):
            if _slope(f, 1e-6) > 10.0 * _slope(f, 1e-3) + 10.0:
                raise InvalidActivationError(f"derivative {name} is unbounded near a grid point")
        for name, deriv in (("d1", d1), ("d2", d2), ("d3", d3)):
            dv = np.asarray(deriv(_CHECK_GRID), dtype=float)
            if not np.all(np.isfinite(dv)) or np.max(np.abs(dv)) > _DERIV_BOUND:
                raise InvalidActivationError(f"derivative {name} is unbounded on the test grid")
    return act


def gauss_moments(activation, order=101):
    """Gaussian-equivalence constants by Gauss-Hermite quadrature.

    Parameters
    ----------
    activation : Activation or str
        Activation (or built-in name) to integrate.
    order : int
        Number of probabilists' Hermite nodes; must be odd and at least 3 so
        the node set is symmetric about zero.

    Returns
    -------
    GaussEquivConstants
    """
    act = get_activation(activation)
    order = int(order)
    if order < 3 or order % 2 == 0:
        raise ValueError(f"order must be an odd integer >= 3, got {order}")

    x, w = hermegauss(order)
    w = w / np.sqrt(2.0 * np.pi)
    with np.errstate(all="ignore"):
        s = np.asarray(act.eval(x), dtype=float)
    if not np.all(np.isfinite(s)):
        raise InvalidActivationError("activation is non-finite at a quadrature node")

    # fold the symmetric node set so odd parts cancel exactly
    half = order // 2
    lo, hi = slice(0, half), slice(order - 1, order - 1 - half, -1)
    even = s[lo] + s[hi]
    mu0 = float((np.sum(w[lo] * even) + w[half] * s[half]) / np.sum(w))
    # the rule integrates z^2 exactly in theory; dividing by its computed value
    # removes the last-ulp drift (linear activation gives exactly 1)
    second_moment_z = np.sum(w * x * x)
    mu1 = float(np.sum(w * x * s) / second_moment_z)
    second = float(np.sum(w * s * s) / second_moment_z)
    mu2 = float(np.sqrt(max(0.0, second - mu0 * mu0 - mu1 * mu1)))
    return GaussEquivConstants(mu0, mu1, mu2)
