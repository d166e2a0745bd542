"""Leave-one-out analysis along the kernel-to-surrogate interpolation path.

Path point ``k`` (``0 <= k <= n``) uses the surrogate rows ``B`` for samples
``1..k`` and the kernel rows ``A`` for samples ``k+1..n``, so point 0 is the
kernel problem and point ``n`` the surrogate problem. The leave-one-out problem
at ``k`` (``1 <= k <= n``) drops sample ``k`` from that mix: rows ``< k`` come
from ``B`` and rows ``> k`` from ``A``. Indices are 1-based throughout this
module, matching the path description; an off-by-one here silently corrupts
every audit.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import linalg

from ._errors import ContractViolation, SolverError
from .erm import SolverOptions, TiltParams, TiltedObjective, minimize_smooth, solve
from .losses import Ridge, SquaredLoss, get_loss

__all__ = [
    "PathSetup",
    "LeaveOneOutSolution",
    "SurrogateHessian",
    "MoreauPoint",
    "prox",
    "moreau",
    "moreau_point",
    "leave_one_out_solve",
    "surrogate_hessian",
    "gamma",
    "psi_surrogate",
    "minimize_quadratic_surrogate",
    "quad_solution_identity_check",
    "solve_path_point",
    "interpolation_value",
]

_PROX_TOL = 1e-12


# ---------------------------------------------------------------- prox / Moreau


def prox(loss, y, z, gamma):
    """Proximal point ``argmin_x loss(x; y) + (x - z)^2 / (2 gamma)``.

    ``gamma = 0`` returns ``z``. For losses with bounded slope the root of
    ``x - z + gamma * loss'(x)`` is bracketed in ``[z - gamma L, z + gamma L]`` and
    found by safeguarded Newton.
    """
    loss = get_loss(loss)
    z, gamma, y = float(z), float(gamma), float(y)
    if gamma < 0:
        raise ContractViolation(f"gamma must be non-negative, got {gamma!r}")
    if gamma == 0.0:
        return z
    if isinstance(loss, SquaredLoss):
        return (z + gamma * y) / (1.0 + gamma)

    def resid(x):
        return x - z + gamma * float(loss.d1(x, y))

    bound = loss.d1_bound(y)
    if bound is not None:
        if bound == 0.0:
            return z
        lo, hi = z - gamma * bound, z + gamma * bound
    else:
        width = max(1.0, abs(z)) * gamma
        lo, hi = z - width, z + width
        for _ in range(200):
            if resid(lo) <= 0 <= resid(hi):
                break
            width *= 2
            lo, hi = z - width, z + width
        else:
            raise SolverError("could not bracket the proximal point")

    x = z
    for _ in range(200):
        g = resid(x)
        if g == 0.0:
            return x
        if g > 0:
            hi = x
        else:
            lo = x
        slope = 1.0 + gamma * float(loss.d2(x, y))
        x_new = x - g / slope
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-2 * _PROX_TOL * max(1.0, abs(x)) or hi - lo <= _PROX_TOL:
            return x_new
        x = x_new
    raise SolverError(f"proximal iteration did not converge (y={y}, z={z}, gamma={gamma})")


def moreau(loss, y, x, gamma):
    """Moreau envelope ``min_z loss(z; y) + (x - z)^2 / (2 gamma)``; ``gamma = 0`` gives ``loss(x; y)``."""
    loss = get_loss(loss)
    if gamma == 0.0:
        return float(loss.value(float(x), y))
    px = prox(loss, y, x, gamma)
    return float(loss.value(px, y)) + (float(x) - px) ** 2 / (2.0 * gamma)


@dataclass(frozen=True)
class MoreauPoint:
    x: float
    gamma: float
    envelope: float
    prox: float


def moreau_point(loss, y, x, gamma):
    px = prox(loss, y, x, gamma)
    return MoreauPoint(float(x), float(gamma), moreau(loss, y, x, gamma), px)


# ---------------------------------------------------------------- path problems


@dataclass(frozen=True)
class PathSetup:
    """Everything needed to pose path and leave-one-out problems on one dataset."""

    dataset: object
    loss: object = "logistic"
    reg: Ridge = field(default_factory=Ridge)
    tilt: TiltParams = field(default_factory=TiltParams)
    sigma: np.ndarray = None
    F: np.ndarray = None
    xi: np.ndarray = None
    mu1: float = 0.0
    opts: SolverOptions = field(default_factory=SolverOptions)

    @property
    def n(self):
        return self.dataset.n

    @property
    def p(self):
        return self.dataset.p

    def mixed_rows(self, k):
        if not 0 <= k <= self.n:
            raise ContractViolation(f"path index must lie in [0, {self.n}], got {k}")
        ds = self.dataset
        return np.vstack([ds.B[:k], ds.A[k:]]), np.asarray(ds.y)

    def loo_rows(self, k):
        if not 1 <= k <= self.n:
            raise ContractViolation(f"leave-one-out index must lie in [1, {self.n}], got {k}")
        ds = self.dataset
        R = np.vstack([ds.B[: k - 1], ds.A[k:]])
        y = np.concatenate([ds.y[: k - 1], ds.y[k:]])
        return R, y

    def objective(self, R, y):
        return TiltedObjective(R, y, self.loss, self.reg, self.tilt, self.sigma, self.F, self.xi, self.mu1)

    def _solve(self, R, y, w0=None):
        return solve(R, y, self.loss, self.reg, self.tilt, self.sigma, self.F, self.xi, self.mu1, self.opts, w0)


def solve_path_point(k, setup, w0=None):
    """Solve the mixed problem at path index ``k``; returns the raw :class:`SolveResult`."""
    return setup._solve(*setup.mixed_rows(k), w0=w0)


def interpolation_value(k, setup, w0=None):
    """Optimal value at path index ``k`` (0 is the kernel problem, ``n`` the surrogate)."""
    res = solve_path_point(k, setup, w0)
    if not res.converged:
        raise SolverError(f"path point {k} did not converge (grad norm {res.grad_norm:.3e})")
    return res.value


@dataclass(frozen=True)
class LeaveOneOutSolution:
    k: int
    phi_minus_k: float
    w_minus_k: np.ndarray
    result: object = None


def leave_one_out_solve(k, setup, w0=None):
    """Solve the problem with sample ``k`` removed (rows ``< k`` from B, ``> k`` from A)."""
    res = setup._solve(*setup.loo_rows(k), w0=w0)
    if not res.converged:
        raise SolverError(f"leave-one-out problem {k} did not converge (grad norm {res.grad_norm:.3e})")
    return LeaveOneOutSolution(k=k, phi_minus_k=res.value, w_minus_k=res.w_star, result=res)


# ---------------------------------------------------------------- quadratic surrogate


@dataclass(frozen=True)
class SurrogateHessian:
    H: np.ndarray
    factor: tuple
    jitter: float = 0.0

    def solve(self, v):
        return linalg.cho_solve(self.factor, v)

    @property
    def condition(self):
        diag = np.abs(np.diag(self.factor[0]))
        return float((diag.max() / diag.min()) ** 2) if diag.size else 1.0


def _factorize(H):
    p = H.shape[0]
    try:
        return SurrogateHessian(H, linalg.cho_factor(H), 0.0)
    except linalg.LinAlgError:
        pass
    jitter = 1e-10 * abs(np.trace(H)) / max(p, 1)
    try:
        return SurrogateHessian(H, linalg.cho_factor(H + jitter * np.eye(p)), jitter)
    except linalg.LinAlgError as exc:
        raise SolverError("surrogate Hessian is not positive definite") from exc


def surrogate_hessian(loo, setup):
    """Hessian of the leave-one-out objective at its minimizer, factorized."""
    k, w = loo.k, np.asarray(loo.w_minus_k)
    ds, p = setup.dataset, setup.p
    loss = get_loss(setup.loss)
    sqrt_p = math.sqrt(p)
    H = np.zeros((p, p))
    for rows, labels in ((ds.B[: k - 1], ds.y[: k - 1]), (ds.A[k:], ds.y[k:])):
        if rows.shape[0]:
            curv = loss.d2(rows @ w / sqrt_p, labels)
            H += (rows.T * curv) @ rows / p
    H[np.diag_indices_from(H)] += setup.reg.d2(w)
    if setup.tilt.tau1 != 0.0:
        H += 2.0 * setup.tilt.tau1 * np.asarray(setup.sigma)
    return _factorize(0.5 * (H + H.T))


def gamma(r, H, p):
    """``r' H^{-1} r / p``."""
    r = np.asarray(r, dtype=float)
    return max(0.0, float(r @ H.solve(r)) / p)


def psi_surrogate(k, r, loo, H, loss, y_k, p):
    """Quadratic-surrogate optimum through the Moreau envelope of sample ``k``'s loss."""
    if loo.k != k:
        raise ContractViolation(f"leave-one-out solution is for k={loo.k}, not {k}")
    r = np.asarray(r, dtype=float)
    x = float(r @ loo.w_minus_k) / math.sqrt(p)
    return loo.phi_minus_k + moreau(loss, y_k, x, gamma(r, H, p))


class _QuadSurrogate:
    def __init__(self, r, loo, H, loss, y_k, p):
        self.r = np.asarray(r, dtype=float)
        self.w0 = np.asarray(loo.w_minus_k)
        self.phi = loo.phi_minus_k
        self.H = H.H
        self.loss = get_loss(loss)
        self.y = y_k
        self.sp = math.sqrt(p)

    def value(self, w):
        d = w - self.w0
        return self.phi + 0.5 * float(d @ self.H @ d) + float(self.loss.value(self.r @ w / self.sp, self.y))

    def gradient(self, w):
        m = self.r @ w / self.sp
        return self.H @ (w - self.w0) + float(self.loss.d1(m, self.y)) * self.r / self.sp

    def hessian(self, w):
        m = self.r @ w / self.sp
        return self.H + float(self.loss.d2(m, self.y)) * np.outer(self.r, self.r) / self.sp**2


def minimize_quadratic_surrogate(r, loo, H, loss, y_k, p, tol=1e-12):
    """Directly minimize ``Phi_loo + (w - w_loo)' H (w - w_loo) / 2 + loss(r.w / sqrt p; y_k)`` over ``w``.

    Returns ``(w_tilde, value)``.
    """
    obj = _QuadSurrogate(r, loo, H, loss, y_k, p)
    w, f, gnorm, *_ = minimize_smooth(obj, obj.w0.copy(), tol=tol, max_iter=100)
    if gnorm > max(tol, 1e-9):
        raise SolverError(f"quadratic surrogate did not converge (grad norm {gnorm:.3e})")
    return w, f


def quad_solution_identity_check(k, r, loo, H, loss, y_k, p):
    """Residuals of the closed-form description of the surrogate minimizer.

    Returns ``(vector_residual, scalar_residual)`` where the first compares the
    direct minimizer with ``w_loo - loss'(r.w / sqrt p) H^{-1} r / sqrt p`` and the
    second compares ``r.w / sqrt p`` with the proximal point.
    """
    if loo.k != k:
        raise ContractViolation(f"leave-one-out solution is for k={loo.k}, not {k}")
    r = np.asarray(r, dtype=float)
    loss = get_loss(loss)
    sp = math.sqrt(p)
    w_t, _ = minimize_quadratic_surrogate(r, loo, H, loss, y_k, p)
    m = float(r @ w_t) / sp
    predicted = loo.w_minus_k - float(loss.d1(m, y_k)) * H.solve(r) / sp
    res_vec = float(np.linalg.norm(w_t - predicted))
    res_scalar = abs(m - prox(loss, y_k, float(r @ loo.w_minus_k) / sp, gamma(r, H, p)))
    return res_vec, res_scalar
