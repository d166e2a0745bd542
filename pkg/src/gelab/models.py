"""Teacher-student data for the kernel (random-feature) model and its Gaussian surrogate."""

from dataclasses import dataclass, field

import numpy as np

from ._errors import ContractViolation, DomainError
from ._random import rng_for
from .activations import GaussEquivConstants, get_activation

__all__ = [
    "TeacherConfig",
    "Dataset",
    "OUTPUT_FUNCTIONS",
    "sample_feature_matrix",
    "sample_teacher",
    "generate_dataset",
    "kernel_regressors",
    "surrogate_regressors",
    "surrogate_covariance",
    "sign",
]


def sign(x):
    """Sign with the convention ``sign(0) = +1``."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def _identity(x):
    return np.asarray(x, dtype=float)


OUTPUT_FUNCTIONS = {
    "sign": sign,
    "identity": _identity,
    "tanh": np.tanh,
}


def _resolve_output(fn):
    if callable(fn):
        return fn
    try:
        return OUTPUT_FUNCTIONS[fn]
    except KeyError:
        raise ContractViolation(
            f"unknown output function {fn!r}; expected one of {tuple(OUTPUT_FUNCTIONS)}"
        ) from None


def _frozen(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TeacherConfig:
    """Hidden teacher direction plus the label and post-processing maps.

    ``theta_teach`` and ``theta_out`` may be names from :data:`OUTPUT_FUNCTIONS`
    or arbitrary vectorised callables.
    """

    xi: np.ndarray
    theta_teach: object = "sign"
    theta_out: object = "sign"

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        if xi.ndim != 1:
            raise ContractViolation("xi must be a vector")
        if abs(np.linalg.norm(xi) - 1.0) > 1e-12:
            raise ContractViolation(f"teacher vector must have unit norm, got {np.linalg.norm(xi)!r}")
        object.__setattr__(self, "xi", _frozen(xi))
        _resolve_output(self.theta_teach)
        _resolve_output(self.theta_out)

    @property
    def teach_fn(self):
        return _resolve_output(self.theta_teach)

    @property
    def out_fn(self):
        return _resolve_output(self.theta_out)

    def labels(self, C):
        return self.teach_fn(np.asarray(C) @ self.xi)


@dataclass(frozen=True)
class Dataset:
    """Coupled training data: both regressor matrices share the latent inputs ``C``."""

    C: np.ndarray
    y: np.ndarray
    A: np.ndarray
    B: np.ndarray
    Z: np.ndarray
    seed: int = field(default=0)

    def __post_init__(self):
        for name in ("C", "y", "A", "B", "Z"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n(self):
        return self.C.shape[0]

    @property
    def p(self):
        return self.A.shape[1]


def sample_feature_matrix(d, p, seed):
    """Draw a ``d x p`` feature matrix with i.i.d. ``N(0, 1/d)`` entries.

    Deterministic in ``seed``. ``p = 0`` gives an empty ``(d, 0)`` array.
    """
    d, p = int(d), int(p)
    if d < 1 or p < 0:
        raise ContractViolation(f"need d >= 1 and p >= 0, got d={d}, p={p}")
    rng = rng_for(seed, "features")
    return rng.standard_normal((d, p)) / np.sqrt(d)


def sample_teacher(d, seed, theta_teach="sign", theta_out="sign"):
    """Teacher with a uniformly random unit direction in ``R^d``."""
    g = rng_for(seed, "teacher").standard_normal(int(d))
    return TeacherConfig(g / np.linalg.norm(g), theta_teach, theta_out)


def kernel_regressors(C, F, activation):
    """Rows ``s(F^T c_t)`` for each latent input row of ``C``."""
    act = get_activation(activation)
    return np.asarray(act.eval(np.asarray(C) @ F), dtype=float)


def surrogate_regressors(C, Z, F, consts):
    """Rows ``mu0 + mu1 F^T c_t + mu2 z_t``."""
    return consts.mu0 + consts.mu1 * (np.asarray(C) @ F) + consts.mu2 * np.asarray(Z)


def generate_dataset(F, teacher, consts, activation, n, seed):
    """Sample ``n`` coupled training points for both models.

    The kernel rows ``A`` and surrogate rows ``B`` are built from the same latent
    matrix ``C``; ``Z`` is the independent surrogate noise.
    """
    F = np.asarray(F, dtype=float)
    d, p = F.shape
    if teacher.xi.shape[0] != d:
        raise ContractViolation(f"teacher has dimension {teacher.xi.shape[0]}, features have d={d}")
    n = int(n)
    C = rng_for(seed, "latent").standard_normal((n, d))
    Z = rng_for(seed, "surrogate-noise").standard_normal((n, p))
    A = kernel_regressors(C, F, activation)
    B = surrogate_regressors(C, Z, F, consts)
    return Dataset(C=C, y=teacher.labels(C), A=A, B=B, Z=Z, seed=int(seed))


def surrogate_covariance(F, consts):
    """Population covariance ``mu1^2 F^T F + mu2^2 I`` of the surrogate regressors."""
    F = np.asarray(F, dtype=float)
    if not isinstance(consts, GaussEquivConstants):
        raise DomainError("consts must be GaussEquivConstants")
    sigma = consts.mu1**2 * (F.T @ F)
    sigma[np.diag_indices_from(sigma)] += consts.mu2**2
    return 0.5 * (sigma + sigma.T)
