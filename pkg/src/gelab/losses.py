"""Convex losses and the ridge regularizer, with derivatives up to third order."""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._errors import ContractViolation

__all__ = ["Loss", "SquaredLoss", "LogisticLoss", "Ridge", "get_loss", "LOSS_KINDS"]

LOSS_KINDS = ("squared", "logistic")


class Loss:
    """Base class. Derivatives are with respect to the first argument ``x``."""

    kind = None

    def value(self, x, y):
        raise NotImplementedError

    def d1(self, x, y):
        raise NotImplementedError

    def d2(self, x, y):
        raise NotImplementedError

    def d3(self, x, y):
        raise NotImplementedError

    def d1_bound(self, y):
        """Uniform bound on ``|d1(., y)|``, or ``None`` if unbounded."""
        return None

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))


class SquaredLoss(Loss):
    """``(x - y)^2 / 2``."""

    kind = "squared"

    def value(self, x, y):
        r = np.asarray(x, dtype=float) - y
        return 0.5 * r * r

    def d1(self, x, y):
        return np.asarray(x, dtype=float) - y

    def d2(self, x, y):
        return np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    def d3(self, x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


class LogisticLoss(Loss):
    """``log(1 + exp(-y x))``."""

    kind = "logistic"

    def value(self, x, y):
        return np.logaddexp(0.0, -np.asarray(y, dtype=float) * np.asarray(x, dtype=float))

    def d1(self, x, y):
        y = np.asarray(y, dtype=float)
        return -y * expit(-y * np.asarray(x, dtype=float))

    def d2(self, x, y):
        y = np.asarray(y, dtype=float)
        s = expit(y * np.asarray(x, dtype=float))
        return y * y * s * (1.0 - s)

    def d3(self, x, y):
        y = np.asarray(y, dtype=float)
        s = expit(y * np.asarray(x, dtype=float))
        return y**3 * s * (1.0 - s) * (1.0 - 2.0 * s)

    def d1_bound(self, y):
        return float(np.abs(y))


_LOSSES = {"squared": SquaredLoss, "logistic": LogisticLoss}


def get_loss(kind):
    if isinstance(kind, Loss):
        return kind
    try:
        return _LOSSES[kind]()
    except KeyError:
        raise ContractViolation(f"unknown loss {kind!r}; expected one of {LOSS_KINDS}") from None


@dataclass(frozen=True)
class Ridge:
    """Separable ridge penalty ``lam * x^2 / 2`` (``lam``-strongly convex)."""

    lam: float = 0.1
    kind: str = "ridge"

    def __post_init__(self):
        if not self.lam > 0:
            raise ContractViolation(f"ridge strength must be positive, got {self.lam!r}")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.lam * x * x

    def d1(self, x):
        return self.lam * np.asarray(x, dtype=float)

    def d2(self, x):
        return np.full(np.shape(x), self.lam, dtype=float)

    def d3(self, x):
        return np.zeros(np.shape(x), dtype=float)
