"""Regularized ERM with the two tilt terms, solved by damped Newton.

The objective, for regressor rows ``r_t`` and ``p = R.shape[1]``, is::

    sum_t loss(r_t . w / sqrt(p); y_t) + sum_j h(w_j)
        + tau1 * w' Sigma w + tau2 * sqrt(p) * mu1 * xi' F w
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import linalg

from ._errors import ContractViolation
from .losses import Ridge, get_loss

__all__ = [
    "TiltParams",
    "SolverOptions",
    "SolveResult",
    "TiltedObjective",
    "tau_star",
    "objective_value",
    "objective_gradient",
    "objective_hessian",
    "solve",
    "training_error",
]


def tau_star(lam, mu1, mu2, eta):
    """Largest ``|tau1|`` for which the tilted objective stays ``lam/2``-strongly convex
    whenever ``||F|| <= 1 + 2 sqrt(eta)``."""
    if not lam > 0 or not eta > 0:
        raise ContractViolation(f"need lam > 0 and eta > 0, got lam={lam!r}, eta={eta!r}")
    return (lam / 4.0) / (mu1**2 * (1.0 + 2.0 * math.sqrt(eta)) ** 2 + mu2**2)


@dataclass(frozen=True)
class TiltParams:
    tau1: float = 0.0
    tau2: float = 0.0
    tau_star: float = math.inf

    def __post_init__(self):
        if not self.tau_star > 0:
            raise ContractViolation(f"tau_star must be positive, got {self.tau_star!r}")
        if abs(self.tau1) > self.tau_star:
            raise ContractViolation(f"|tau1|={abs(self.tau1)!r} exceeds tau_star={self.tau_star!r}")
        if abs(self.tau2) > 1.0:
            raise ContractViolation(f"|tau2|={abs(self.tau2)!r} exceeds 1")

    @property
    def is_zero(self):
        return self.tau1 == 0.0 and self.tau2 == 0.0


@dataclass(frozen=True)
class SolverOptions:
    """Newton options; ``tol=None`` means ``1e-10 * max(1, n)``."""

    tol: float = None
    max_iter: int = 200
    line_search_beta: float = 0.5
    line_search_c: float = 1e-4
    max_backtracks: int = 60

    def tolerance(self, n):
        return self.tol if self.tol is not None else 1e-10 * max(1, n)


@dataclass(frozen=True)
class SolveResult:
    w_star: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    tilt: TiltParams = field(default_factory=TiltParams)
    history: tuple = ()
    gd_fallbacks: int = 0
    hessian_condition: float = float("nan")


class TiltedObjective:
    """The tilted training objective on a fixed regressor matrix.

    ``sigma`` is needed when ``tilt.tau1 != 0``; ``F``, ``xi`` and ``mu1`` when
    ``tilt.tau2 != 0``.
    """

    def __init__(self, R, y, loss, reg, tilt=None, sigma=None, F=None, xi=None, mu1=0.0):
        R = np.asarray(R, dtype=float)
        y = np.asarray(y, dtype=float)
        if R.ndim != 2:
            raise ContractViolation("R must be a 2-D array")
        if y.shape != (R.shape[0],):
            raise ContractViolation(f"y has shape {y.shape}, expected ({R.shape[0]},)")
        self.R, self.y = R, y
        self.n, self.p = R.shape
        self.loss = get_loss(loss)
        self.reg = reg if reg is not None else Ridge()
        self.tilt = tilt if tilt is not None else TiltParams()
        self._sqrt_p = math.sqrt(self.p) if self.p else 1.0

        self.sigma = None
        if self.tilt.tau1 != 0.0:
            if sigma is None:
                raise ContractViolation("tau1 != 0 needs the covariance matrix sigma")
            sigma = np.asarray(sigma, dtype=float)
            if sigma.shape != (self.p, self.p):
                raise ContractViolation(f"sigma has shape {sigma.shape}, expected {(self.p, self.p)}")
            self.sigma = sigma

        self.linear = None
        if self.tilt.tau2 != 0.0:
            if F is None or xi is None:
                raise ContractViolation("tau2 != 0 needs F and xi")
            F = np.asarray(F, dtype=float)
            xi = np.asarray(xi, dtype=float)
            if F.shape[1] != self.p or xi.shape != (F.shape[0],):
                raise ContractViolation(f"F {F.shape} / xi {xi.shape} inconsistent with p={self.p}")
            self.linear = self._sqrt_p * mu1 * (F.T @ xi)

    def _check(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.p,):
            raise ContractViolation(f"w has shape {w.shape}, expected ({self.p},)")
        return w

    def margins(self, w):
        return self.R @ w / self._sqrt_p

    def value(self, w):
        w = self._check(w)
        f = float(np.sum(self.loss.value(self.margins(w), self.y))) + float(np.sum(self.reg.value(w)))
        if self.sigma is not None:
            f += self.tilt.tau1 * float(w @ self.sigma @ w)
        if self.linear is not None:
            f += self.tilt.tau2 * float(self.linear @ w)
        return f

    def gradient(self, w):
        w = self._check(w)
        g = self.R.T @ self.loss.d1(self.margins(w), self.y) / self._sqrt_p + self.reg.d1(w)
        if self.sigma is not None:
            g += 2.0 * self.tilt.tau1 * (self.sigma @ w)
        if self.linear is not None:
            g += self.tilt.tau2 * self.linear
        return g

    def hessian(self, w):
        w = self._check(w)
        curv = self.loss.d2(self.margins(w), self.y)
        H = (self.R.T * curv) @ self.R / self.p if self.n else np.zeros((self.p, self.p))
        H[np.diag_indices_from(H)] += self.reg.d2(w)
        if self.sigma is not None:
            H += 2.0 * self.tilt.tau1 * self.sigma
        return 0.5 * (H + H.T)


def objective_value(w, R, y, loss, reg, tilt=None, sigma=None, F=None, xi=None, mu1=0.0):
    return TiltedObjective(R, y, loss, reg, tilt, sigma, F, xi, mu1).value(w)


def objective_gradient(w, R, y, loss, reg, tilt=None, sigma=None, F=None, xi=None, mu1=0.0):
    return TiltedObjective(R, y, loss, reg, tilt, sigma, F, xi, mu1).gradient(w)


def objective_hessian(w, R, y, loss, reg, tilt=None, sigma=None, F=None, xi=None, mu1=0.0):
    return TiltedObjective(R, y, loss, reg, tilt, sigma, F, xi, mu1).hessian(w)


def _newton_direction(H, g):
    """Return ``(direction, condition_estimate, used_fallback)``."""
    p = H.shape[0]
    jitter = 0.0
    for attempt in range(2):
        try:
            c, low = linalg.cho_factor(H + jitter * np.eye(p), check_finite=True)
        except (linalg.LinAlgError, ValueError):
            jitter = 1e-10 * max(np.trace(H), 1e-300) / p
            continue
        diag = np.abs(np.diag(c))
        cond = float((diag.max() / diag.min()) ** 2) if p else 1.0
        return -linalg.cho_solve((c, low), g), cond, False
    return -g, float("inf"), True


def minimize_smooth(objective, w0, tol, max_iter=200, beta=0.5, c=1e-4, max_backtracks=60):
    """Damped Newton with Armijo backtracking on an object exposing
    ``value``, ``gradient`` and ``hessian``.

    Returns ``(w, f, grad_norm, iterations, converged, history, fallbacks, cond)``.
    """
    w = np.array(w0, dtype=float)
    f = objective.value(w)
    history = [f]
    fallbacks = 0
    cond = float("nan")
    converged = False
    it = 0
    g = objective.gradient(w)
    gnorm = float(np.linalg.norm(g))
    while True:
        if gnorm <= tol:
            converged = True
            break
        if it >= max_iter:
            break
        direction, cond, fell_back = _newton_direction(objective.hessian(w), g)
        fallbacks += fell_back
        slope = float(g @ direction)
        if slope >= 0:
            # not a descent direction (indefinite Hessian); use steepest descent
            direction, slope = -g, -float(g @ g)
            fallbacks += 1
        t = 1.0
        accepted = False
        roundoff = 16 * np.finfo(float).eps * max(1.0, abs(f))
        if -slope <= roundoff:
            # predicted decrease is below the resolution of f, so Armijo cannot
            # tell steps apart; judge the full step by the gradient instead
            w_new = w + direction
            g_new = objective.gradient(w_new)
            if np.linalg.norm(g_new) < gnorm:
                w, f, g = w_new, objective.value(w_new), g_new
                gnorm = float(np.linalg.norm(g))
                history.append(f)
                it += 1
                continue
            break
        for _ in range(max_backtracks):
            w_new = w + t * direction
            f_new = objective.value(w_new)
            if f_new <= f + c * t * slope:
                accepted = True
                break
            t *= beta
        if not accepted:
            # Armijo cannot resolve decreases below roundoff; take the full
            # step only if it still shrinks the gradient and keeps f level
            w_new = w + direction
            f_new = objective.value(w_new)
            g_new = objective.gradient(w_new)
            if np.linalg.norm(g_new) < gnorm and f_new <= f + 8 * np.finfo(float).eps * max(1.0, abs(f)):
                w, f, g = w_new, f_new, g_new
                gnorm = float(np.linalg.norm(g))
                history.append(f)
                it += 1
                continue
            break
        w, f = w_new, f_new
        g = objective.gradient(w)
        gnorm = float(np.linalg.norm(g))
        history.append(f)
        it += 1
    return w, f, gnorm, it, converged, tuple(history), fallbacks, cond


def solve(R, y, loss, reg, tilt=None, sigma=None, F=None, xi=None, mu1=0.0, opts=None, w0=None):
    """Minimize the tilted objective starting from ``w0`` (zero by default).

    Never reports convergence unless the gradient norm reached the tolerance.
    """
    obj = TiltedObjective(R, y, loss, reg, tilt, sigma, F, xi, mu1)
    opts = opts or SolverOptions()
    start = np.zeros(obj.p) if w0 is None else obj._check(w0)
    w, f, gnorm, it, ok, hist, fb, cond = minimize_smooth(
        obj,
        start,
        opts.tolerance(obj.n),
        opts.max_iter,
        opts.line_search_beta,
        opts.line_search_c,
        opts.max_backtracks,
    )
    w.setflags(write=False)
    return SolveResult(
        w_star=w,
        value=obj.value(w),
        grad_norm=gnorm,
        iterations=it,
        converged=ok,
        tilt=obj.tilt,
        history=hist,
        gd_fallbacks=fb,
        hessian_condition=cond,
    )


def training_error(result, p):
    """Optimal value divided by ``p``; only meaningful for an untilted solve."""
    if not result.tilt.is_zero:
        raise ContractViolation("training_error requires an untilted solve (tau1 = tau2 = 0)")
    return result.value / p
