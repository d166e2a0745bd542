"""scikit-learn compatible wrappers around the feature maps and the tilted ERM solver."""

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._errors import SolverError
from ._random import rng_for
from .activations import gauss_moments, get_activation
from .erm import SolverOptions, TiltParams, solve, tau_star
from .losses import Ridge, get_loss
from .models import sample_feature_matrix, sign, surrogate_covariance

__all__ = ["RandomFeatureMap", "GaussianEquivalentMap", "TiltedERM"]


class _FeatureMapBase(TransformerMixin, BaseEstimator):
    def __init__(self, n_features=100, activation="tanh", random_state=0, quad_order=101):
        self.n_features = n_features
        self.activation = activation
        self.random_state = random_state
        self.quad_order = quad_order

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        self.features_ = sample_feature_matrix(X.shape[1], self.n_features, self.random_state)
        self.consts_ = gauss_moments(self.activation, self.quad_order)
        return self

    def _check(self, X):
        check_is_fitted(self, "features_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return X


class RandomFeatureMap(_FeatureMapBase):
    """Random-feature transform ``x -> s(F' x)`` with ``F`` of i.i.d. ``N(0, 1/d)`` entries.

    Parameters
    ----------
    n_features : int
        Number of random features ``p``.
    activation : str
        Built-in odd activation name.
    random_state : int
        Seed for the feature matrix.
    quad_order : int
        Gauss-Hermite order used for ``consts_``.

    Attributes
    ----------
    features_ : ndarray of shape (n_features_in_, n_features)
    consts_ : GaussEquivConstants
    """

    def transform(self, X):
        X = self._check(X)
        return get_activation(self.activation).eval(X @ self.features_)


class GaussianEquivalentMap(_FeatureMapBase):
    """Linear-plus-noise surrogate ``x -> mu0 + mu1 F' x + mu2 z`` of :class:`RandomFeatureMap`.

    With the same ``random_state`` both maps share ``features_``. The noise ``z``
    is drawn from a stream fixed by ``random_state``, so repeated calls on inputs
    of the same size return identical output.
    """

    def transform(self, X):
        X = self._check(X)
        Z = rng_for(self.random_state, "surrogate-transform").standard_normal((X.shape[0], self.n_features))
        c = self.consts_
        return c.mu0 + c.mu1 * (X @ self.features_) + c.mu2 * Z


class TiltedERM(BaseEstimator):
    """Ridge-regularized ERM on regressor rows, with optional tilt terms.

    Minimizes ``sum_t loss(x_t . w / sqrt(p); y_t) + lam |w|^2 / 2`` plus
    ``tau1 w' Sigma w + tau2 sqrt(p) mu1 xi' F w`` when tilts are set, where
    ``Sigma = mu1^2 F'F + mu2^2 I`` is built from ``features`` and ``activation``.

    Parameters
    ----------
    loss : {"logistic", "squared"}
    lam : float
        Ridge strength, must be positive.
    tau1, tau2 : float
        Tilt strengths; nonzero values need ``features`` (and ``teacher_direction`` for ``tau2``).
    features : ndarray of shape (d, p), optional
    teacher_direction : ndarray of shape (d,), optional
    activation : str
        Used for the Gaussian-equivalence constants entering the tilts.
    tol, max_iter : solver controls.

    Attributes
    ----------
    coef_ : ndarray of shape (p,)
    objective_value_ : float
    training_error_ : float
        ``objective_value_ / p`` (untilted fits only, else nan).
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, loss="logistic", lam=0.1, tau1=0.0, tau2=0.0, features=None, teacher_direction=None,
                 activation="tanh", tol=None, max_iter=200):
        self.loss = loss
        self.lam = lam
        self.tau1 = tau1
        self.tau2 = tau2
        self.features = features
        self.teacher_direction = teacher_direction
        self.activation = activation
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        get_loss(self.loss)
        p = X.shape[1]
        self.n_features_in_ = p
        sigma = F = xi = None
        mu1 = 0.0
        tilt = TiltParams()
        if self.tau1 or self.tau2:
            if self.features is None:
                raise ValueError("tilted fits need the feature matrix")
            F = np.asarray(self.features, dtype=float)
            consts = gauss_moments(self.activation)
            sigma = surrogate_covariance(F, consts)
            mu1 = consts.mu1
            xi = None if self.teacher_direction is None else np.asarray(self.teacher_direction, dtype=float)
            ts = tau_star(self.lam, consts.mu1, consts.mu2, p / F.shape[0])
            tilt = TiltParams(self.tau1, self.tau2, ts)
        res = solve(X, y, self.loss, Ridge(self.lam), tilt, sigma, F, xi, mu1,
                    SolverOptions(tol=self.tol, max_iter=self.max_iter))
        if not np.all(np.isfinite(res.w_star)):
            raise SolverError("solver produced non-finite coefficients")
        self.coef_ = np.array(res.w_star)
        self.objective_value_ = res.value
        self.training_error_ = res.value / p if tilt.is_zero else float("nan")
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        return self

    def decision_function(self, X):
        """Margins ``X w / sqrt(p)``."""
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return X @ self.coef_ / math.sqrt(self.n_features_in_)

    def predict(self, X):
        """Signed labels for the logistic loss, raw margins for the squared loss."""
        m = self.decision_function(X)
        return sign(m) if get_loss(self.loss).kind == "logistic" else m
