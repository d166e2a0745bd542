"""Feature-matrix admissibility, covariance/CLT gap estimators, and smooth test functions."""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.integrate import quad

from ._errors import ContractViolation
from ._random import rng_for
from .activations import gauss_moments, get_activation

__all__ = [
    "AdmissibilityReport",
    "admissibility_check",
    "spectral_norm",
    "covariance_gap",
    "clt_gap",
    "product_tanh",
    "mollifier_normalization",
    "mollifier_eval",
    "mollifier_derivative",
    "mollifier_cdf",
    "window_eval",
    "window_derivative",
    "smoothed_indicator_eval",
    "smoothed_indicator_derivative",
    "SmoothTestFn",
]


# ---------------------------------------------------------------- admissibility

_GRAM_BLOCK = 512


@dataclass(frozen=True)
class AdmissibilityReport:
    """Near-orthonormality and spectral-norm checks on ``[xi, F]``.

    ``kappa_p = sqrt(p) * a1_margin`` is only an empirical proxy for the
    incoherence constant; it has no unique finite-``p`` definition.
    """

    a1_margin: float
    a1_threshold: float
    a2_norm: float
    a2_threshold: float
    pass_a1: bool
    pass_a2: bool
    kappa_p: float

    @property
    def passed(self):
        return self.pass_a1 and self.pass_a2

    def to_dict(self):
        return {
            "a1_margin": self.a1_margin, "a1_threshold": self.a1_threshold,
            "a2_norm": self.a2_norm, "a2_threshold": self.a2_threshold,
            "pass_a1": self.pass_a1, "pass_a2": self.pass_a2, "kappa_p": self.kappa_p,
        }


def admissibility_check(F, xi, eta=None):
    """Exact margins ``max_{0<=i<=j<=p} |f_i.f_j - delta_ij|`` (with ``f_0 = xi``) and ``||F||``.

    ``eta`` defaults to ``p / d``.
    """
    F = np.asarray(F, dtype=float)
    xi = np.asarray(xi, dtype=float)
    d, p = F.shape
    if xi.shape != (d,):
        raise ContractViolation(f"xi must have length {d}")
    if abs(np.linalg.norm(xi) - 1.0) > 1e-12:
        raise ContractViolation("xi must have unit norm")
    V = np.column_stack([xi, F])
    margin = 0.0
    # blockwise Gram so large p does not need a (p+1)^2 array
    for start in range(0, p + 1, _GRAM_BLOCK):
        block = V[:, start:start + _GRAM_BLOCK].T @ V
        block[np.arange(block.shape[0]), start + np.arange(block.shape[0])] -= 1.0
        margin = max(margin, float(np.max(np.abs(block))))
    a1_thr = math.log(p) ** 2 / math.sqrt(p) if p > 1 else 0.0
    eta = p / d if eta is None else float(eta)
    norm = float(np.linalg.norm(F, 2)) if p else 0.0
    a2_thr = 1.0 + 2.0 * math.sqrt(eta)
    return AdmissibilityReport(
        a1_margin=margin, a1_threshold=a1_thr, a2_norm=norm, a2_threshold=a2_thr,
        pass_a1=margin <= a1_thr, pass_a2=norm <= a2_thr, kappa_p=math.sqrt(p) * margin,
    )


# ---------------------------------------------------------------- gap estimators


def spectral_norm(M, tol=1e-10, max_iter=10_000, seed=0):
    """Largest ``|eigenvalue|`` of a symmetric matrix by power iteration."""
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + M.T)
    if M.size == 0:
        return 0.0
    v = rng_for(seed, "power-iteration").standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        u = M @ v
        new = float(np.linalg.norm(u))
        if new == 0.0:
            return 0.0
        # apply twice so a +/- eigenvalue pair cannot make the iterate oscillate
        u2 = M @ (u / new)
        new2 = float(np.linalg.norm(u2))
        v = u2 / new2
        est_new = math.sqrt(new * new2)
        if abs(est_new - est) <= tol * max(est_new, 1e-300):
            return est_new
        est = est_new
    return est


def _latent_chunks(seed, n_mc, d, n_chunks):
    sizes = [n_mc // n_chunks + (1 if j < n_mc % n_chunks else 0) for j in range(n_chunks)]
    for j, m in enumerate(sizes):
        yield j, rng_for(seed, "diag-latent", j).standard_normal((m, d))


def covariance_gap(F, activation, consts, n_mc, seed, n_chunks=10, halves=False):
    """Estimate ``||Sigma_a - Sigma_b||`` where ``Sigma_a = E[a a']`` for kernel rows.

    ``Sigma_a`` is estimated by Monte Carlo over fresh latent inputs, using the
    exactly known ``E[g g'] = F'F`` (``g = F'c``) as a control variate so the
    sampling noise sits well below the gap itself. The band is a delete-one-chunk
    jackknife standard error. Returns ``(gap, band)``, or with ``halves=True`` the
    pair of gaps estimated separately on the first and second half of the chunks.
    """
    F = np.asarray(F, dtype=float)
    d, p = F.shape
    n_mc = int(n_mc)
    if n_mc < 10 * p:
        raise ContractViolation(f"n_mc must be at least 10 p = {10 * p}, got {n_mc}")
    act = get_activation(activation)
    mu0, mu1, mu2 = consts.mu0, consts.mu1, consts.mu2
    sums, counts = [], []
    for _, C in _latent_chunks(seed, n_mc, d, n_chunks):
        G = C @ F
        A = act.eval(G)
        sums.append(A.T @ A - mu1**2 * (G.T @ G))
        counts.append(C.shape[0])
    total, m = sum(sums), sum(counts)
    # Sigma_b = mu0^2 11' + mu1^2 F'F + mu2^2 I, and the control variate adds mu1^2 F'F back
    shift = mu0**2 * np.ones((p, p)) + mu2**2 * np.eye(p)

    def gap_of(S, count):
        return spectral_norm(S / count - shift)

    if halves:
        k = len(sums) // 2
        first, second = sum(sums[:k]), sum(sums[k:])
        return gap_of(first, sum(counts[:k])), gap_of(second, sum(counts[k:]))
    gap = gap_of(total, m)
    loo = np.array([gap_of(total - s, m - c) for s, c in zip(sums, counts)])
    k = len(sums)
    band = math.sqrt((k - 1) / k * float(np.sum((loo - loo.mean()) ** 2)))
    return gap, band


def product_tanh(x, s):
    """Bounded smooth two-argument test function ``tanh(x) tanh(s)``."""
    return np.tanh(x) * np.tanh(s)


def clt_gap(F, xi, beta, test_fn, n_mc, seed, activation="tanh", consts=None, quad_order=41, n_chunks=10):
    """Estimate ``|E phi(a.beta/sqrt p; c.xi) - E phi(b.beta/sqrt p; c.xi)|``.

    Both sides share the latent samples ``c``. Given ``c``, the surrogate margin is
    Gaussian in the independent noise, so that side is integrated exactly by
    Gauss-Hermite quadrature. Returns ``(gap, band)`` with ``band`` the Monte
    Carlo standard error of the coupled difference.
    """
    F = np.asarray(F, dtype=float)
    xi = np.asarray(xi, dtype=float)
    beta = np.asarray(beta, dtype=float)
    d, p = F.shape
    act = get_activation(activation)
    if consts is None:
        consts = gauss_moments(act)
    sp = math.sqrt(p)
    nodes, weights = hermegauss(int(quad_order))
    weights = weights / weights.sum()
    noise_scale = consts.mu2 * float(np.linalg.norm(beta)) / sp
    offset = consts.mu0 * float(beta.sum()) / sp
    diffs = []
    for _, C in _latent_chunks(seed, int(n_mc), d, n_chunks):
        G = C @ F
        s = C @ xi
        xa = act.eval(G) @ beta / sp
        mb = offset + consts.mu1 * (G @ beta) / sp
        fb = test_fn(mb[:, None] + noise_scale * nodes[None, :], s[:, None]) @ weights
        diffs.append(test_fn(xa, s) - fb)
    diffs = np.concatenate(diffs)
    return abs(float(diffs.mean())), float(diffs.std(ddof=1) / math.sqrt(diffs.size))


# ---------------------------------------------------------------- smoothing


def _bump_scalar(t):
    return math.exp(-1.0 / (1.0 - t * t)) if abs(t) < 1.0 else 0.0


def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def mollifier_normalization():
    """``kappa`` making the standard bump integrate to one."""
    # split at 0 so each piece has a single flat endpoint
    half, _ = quad(_bump_scalar, -1.0, 0.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return 1.0 / (2.0 * half)


def mollifier_eval(x, delta=1.0):
    """Scaled mollifier ``zeta(x / delta) / delta``, supported on ``(-delta, delta)``."""
    if not delta > 0:
        raise ContractViolation("delta must be positive")
    return mollifier_normalization() * _bump(np.asarray(x, dtype=float) / delta) / delta


def mollifier_derivative(x, delta=1.0):
    if not delta > 0:
        raise ContractViolation("delta must be positive")
    t = np.asarray(x, dtype=float) / delta
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    ti = t[inside]
    out[inside] = -2.0 * ti / (1.0 - ti**2) ** 2 * np.exp(-1.0 / (1.0 - ti**2))
    return mollifier_normalization() * out / delta**2


@lru_cache(maxsize=65536)
def _cdf_scalar(u):
    if u <= -1.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    if u > 0.0:
        return 1.0 - _cdf_scalar(-u)
    val, _ = quad(_bump_scalar, -1.0, u, epsabs=1e-15, epsrel=1e-13, limit=200)
    return mollifier_normalization() * val


def mollifier_cdf(u):
    """``int_{-inf}^u zeta``, computed by adaptive quadrature on the support."""
    u = np.asarray(u, dtype=float)
    return np.vectorize(_cdf_scalar, otypes=[float])(u) if u.ndim else _cdf_scalar(float(u))


def window_eval(x, T, delta):
    """Smooth window: indicator of ``[-T - delta/2, T + delta/2]`` convolved with ``zeta_{delta/2}``.

    Equals 1 on ``[-T, T]`` and 0 outside ``(-T - delta, T + delta)``.
    """
    if not delta > 0 or T < 0:
        raise ContractViolation("need delta > 0 and T >= 0")
    x = np.asarray(x, dtype=float)
    h = delta / 2.0
    out = np.asarray(mollifier_cdf((x + T) / h + 1.0) - mollifier_cdf((x - T) / h - 1.0), dtype=float)
    # the plateau and the support edge are exact by construction; pin them
    # so rounding in the arguments cannot leak a few ulps across
    out = np.where(np.abs(x) <= T, 1.0, out)
    out = np.where(np.abs(x) >= T + delta, 0.0, out)
    return out if out.ndim else float(out)


def window_derivative(x, T, delta):
    x = np.asarray(x, dtype=float)
    h = delta / 2.0
    edge = T + h
    return mollifier_eval(x + edge, h) - mollifier_eval(x - edge, h)


def smoothed_indicator_eval(x, c, eps):
    """Smoothed ``1{|x - c| >= 3 eps / 2}`` (mollified at scale ``eps / 2``).

    Sandwiched between ``1{|x - c| >= 2 eps}`` and ``1{|x - c| >= eps}``.
    """
    if not eps > 0:
        raise ContractViolation("eps must be positive")
    return 1.0 - window_eval(np.asarray(x, dtype=float) - c, eps, eps)


def smoothed_indicator_derivative(x, c, eps):
    return -window_derivative(np.asarray(x, dtype=float) - c, eps, eps)


@dataclass(frozen=True)
class SmoothTestFn:
    """Named handle for one of the three smoothing constructions.

    ``params`` is ``(delta,)`` for ``mollifier``, ``(T, delta)`` for ``window`` and
    ``(c, eps)`` for ``smoothed_indicator``.
    """

    kind: str
    params: tuple

    def __call__(self, x):
        if self.kind == "mollifier":
            return mollifier_eval(x, *self.params)
        if self.kind == "window":
            return window_eval(x, *self.params)
        if self.kind == "smoothed_indicator":
            return smoothed_indicator_eval(x, *self.params)
        raise ContractViolation(f"unknown smooth test function {self.kind!r}")

    def derivative(self, x):
        if self.kind == "mollifier":
            return mollifier_derivative(x, *self.params)
        if self.kind == "window":
            return window_derivative(x, *self.params)
        return smoothed_indicator_derivative(x, *self.params)
