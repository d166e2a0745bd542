"""Coupled kernel/surrogate experiments: trials, generalization errors, tilt derivatives, sweeps."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import logging
import math

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from ._errors import ContractViolation, DomainError, SolverError
from ._random import derive_seed, rng_for
from .activations import gauss_moments, get_activation
from .erm import TiltParams, solve, tau_star, training_error
from .loo import PathSetup, gamma, leave_one_out_solve, psi_surrogate, solve_path_point, surrogate_hessian
from .losses import Ridge
from .models import (
    generate_dataset,
    kernel_regressors,
    sample_feature_matrix,
    sample_teacher,
    surrogate_covariance,
    surrogate_regressors,
)

__all__ = [
    "TrialResult",
    "DerivativeEstimate",
    "UniversalityReport",
    "PathAudit",
    "TrialInstance",
    "build_instance",
    "trial_seed",
    "rho_pi_from_solution",
    "gaussian_gen_error_closed",
    "generalization_error_mc",
    "run_trial",
    "derivative_quotients",
    "derivative_estimates",
    "sweep_p",
    "lindeberg_path_audit",
    "SWEEP_COLUMNS",
    "PATH_COLUMNS",
]

log = logging.getLogger(__name__)

SWEEP_COLUMNS = (
    "p", "seed", "e_train_A", "e_train_B", "e_gen_A", "e_gen_B",
    "rho_A", "pi_A", "rho_B", "pi_B", "converged_A", "converged_B",
)
PATH_COLUMNS = ("k", "phi_k", "delta_to_prev", "psi_b", "psi_a", "gamma_b", "gamma_a")

_SMOOTH_OUTPUTS = {"identity", "tanh"}
_MC_CHUNK = 8192


def trial_seed(master_seed, p, trial_index):
    """Seed for trial ``trial_index`` at width ``p``; independent of execution order."""
    return derive_seed(master_seed, "trial", int(p), int(trial_index))


# ---------------------------------------------------------------- generalization error


def rho_pi_from_solution(w, sigma, F, xi, mu1, p):
    """Second moment of the student margin and its covariance with the teacher margin."""
    w = np.asarray(w, dtype=float)
    rho = float(w @ sigma @ w) / p
    pi = float(mu1 * (xi @ (F @ w))) / math.sqrt(p)
    return rho, pi


def _output_name(fn):
    return fn if isinstance(fn, str) else None


def gaussian_gen_error_closed(rho, pi, theta_teach="sign", theta_out="sign", quad_order=61,
                              n_mc=1_000_000, seed=0):
    """``E[theta_teach(z1) - theta_out(pi z1 + sqrt(rho - pi^2) z2)]^2`` for independent
    standard normals ``z1, z2``.

    Uses the orthant-probability formula for sign/sign, tensor Gauss-Hermite
    quadrature when both maps are smooth named functions, and seeded Monte
    Carlo otherwise.
    """
    rho, pi = float(rho), float(pi)
    if rho < pi * pi:
        if pi * pi - rho > 1e-12 * max(1.0, rho):
            raise DomainError(f"need rho >= pi^2, got rho={rho!r}, pi={pi!r}")
        rho = pi * pi  # roundoff only
    resid = math.sqrt(max(0.0, rho - pi * pi))
    from .models import OUTPUT_FUNCTIONS

    teach_name, out_name = _output_name(theta_teach), _output_name(theta_out)
    teach = OUTPUT_FUNCTIONS[theta_teach] if teach_name else theta_teach
    out = OUTPUT_FUNCTIONS[theta_out] if out_name else theta_out

    if teach_name == "sign" and out_name == "sign":
        if rho == 0.0:
            return 2.0  # student outputs sign(0) = +1 always
        ratio = min(1.0, max(-1.0, pi / math.sqrt(rho)))
        return 2.0 - (4.0 / math.pi) * math.asin(ratio)

    if teach_name in _SMOOTH_OUTPUTS and out_name in _SMOOTH_OUTPUTS:
        x, w = hermegauss(int(quad_order))
        w = w / w.sum()
        z1, z2 = np.meshgrid(x, x, indexing="ij")
        vals = (teach(z1) - out(pi * z1 + resid * z2)) ** 2
        return float(w @ vals @ w)

    rng = rng_for(seed, "closed-form-mc")
    z1 = rng.standard_normal(int(n_mc))
    z2 = rng.standard_normal(int(n_mc))
    return float(np.mean((teach(z1) - out(pi * z1 + resid * z2)) ** 2))


def generalization_error_mc(w, F, xi, model, consts, activation, teacher, n_fresh=100_000, seed=0):
    """Monte Carlo test error on fresh samples; returns ``(estimate, standard_error)``.

    Fresh latent inputs depend only on ``seed``, so evaluating both models with the
    same seed couples their test sets.
    """
    if int(n_fresh) < 1000:
        raise ContractViolation(f"n_fresh must be at least 1000, got {n_fresh}")
    if model not in ("kernel", "surrogate"):
        raise ContractViolation(f"model must be 'kernel' or 'surrogate', got {model!r}")
    w = np.asarray(w, dtype=float)
    F = np.asarray(F, dtype=float)
    d, p = F.shape
    sqrt_p = math.sqrt(p)
    errs = []
    remaining, chunk = int(n_fresh), 0
    while remaining > 0:
        m = min(_MC_CHUNK, remaining)
        C = rng_for(seed, "fresh-latent", chunk).standard_normal((m, d))
        if model == "kernel":
            R = kernel_regressors(C, F, activation)
        else:
            Z = rng_for(seed, "fresh-noise", chunk).standard_normal((m, p))
            R = surrogate_regressors(C, Z, F, consts)
        y_new = teacher.teach_fn(C @ teacher.xi)
        errs.append((y_new - teacher.out_fn(R @ w / sqrt_p)) ** 2)
        remaining -= m
        chunk += 1
    errs = np.concatenate(errs)
    return float(errs.mean()), float(errs.std(ddof=1) / math.sqrt(errs.size))


# ---------------------------------------------------------------- trials


@dataclass(frozen=True)
class TrialInstance:
    """One coupled problem instance built from a config and trial seed."""

    config: object
    p: int
    seed: int
    consts: object
    F: np.ndarray
    teacher: object
    dataset: object
    sigma: np.ndarray

    @property
    def tau_star(self):
        return tau_star(self.config.lam, self.consts.mu1, self.consts.mu2, self.p / self.config.d)

    def regressors(self, model):
        return self.dataset.A if model == "kernel" else self.dataset.B

    def solve(self, model, tau1=0.0, tau2=0.0, w0=None):
        tilt = TiltParams(tau1, tau2, self.tau_star) if (tau1 or tau2) else TiltParams()
        return solve(
            self.regressors(model), self.dataset.y, self.config.loss, Ridge(self.config.lam), tilt,
            self.sigma, self.F, self.teacher.xi, self.consts.mu1, self.config.solver_options, w0,
        )

    def path_setup(self, tilt=None):
        return PathSetup(
            dataset=self.dataset, loss=self.config.loss, reg=Ridge(self.config.lam),
            tilt=tilt or TiltParams(), sigma=self.sigma, F=self.F, xi=self.teacher.xi,
            mu1=self.consts.mu1, opts=self.config.solver_options,
        )


def build_instance(config, p, seed):
    consts = gauss_moments(config.activation, config.quad_order)
    F = sample_feature_matrix(config.d, p, seed)
    teacher = sample_teacher(config.d, seed, config.teacher, config.output)
    ds = generate_dataset(F, teacher, consts, config.activation, config.n, seed)
    return TrialInstance(config, int(p), int(seed), consts, F, teacher, ds, surrogate_covariance(F, consts))


@dataclass(frozen=True)
class TrialResult:
    p: int
    d: int
    n: int
    seed: int
    e_train_A: float
    e_train_B: float
    e_gen_A: float
    e_gen_B: float
    rho_A: float
    pi_A: float
    rho_B: float
    pi_B: float
    converged_A: bool
    converged_B: bool
    se_gen_A: float = float("nan")
    se_gen_B: float = float("nan")
    iterations_A: int = 0
    iterations_B: int = 0
    grad_norm_A: float = float("nan")
    grad_norm_B: float = float("nan")
    w_inf_A: float = float("nan")
    w_inf_B: float = float("nan")

    @property
    def ok(self):
        return self.converged_A and self.converged_B

    def row(self):
        return {k: getattr(self, k) for k in SWEEP_COLUMNS}


def run_trial(config, p, seed):
    """Solve both untilted problems on one coupled dataset and evaluate both models."""
    inst = build_instance(config, p, seed)
    act = get_activation(config.activation)
    fresh = derive_seed(seed, "fresh")
    out = {}
    for tag, model in (("A", "kernel"), ("B", "surrogate")):
        res = inst.solve(model)
        if not res.converged:
            log.warning("trial p=%d seed=%d model %s did not converge (grad %.3e)", p, seed, tag, res.grad_norm)
        e_gen, se = generalization_error_mc(
            res.w_star, inst.F, inst.teacher.xi, model, inst.consts, act, inst.teacher,
            config.fresh_samples, fresh,
        )
        rho, pi = rho_pi_from_solution(res.w_star, inst.sigma, inst.F, inst.teacher.xi, inst.consts.mu1, p)
        out.update({
            f"e_train_{tag}": training_error(res, p),
            f"e_gen_{tag}": e_gen,
            f"se_gen_{tag}": se,
            f"rho_{tag}": rho,
            f"pi_{tag}": pi,
            f"converged_{tag}": bool(res.converged),
            f"iterations_{tag}": res.iterations,
            f"grad_norm_{tag}": res.grad_norm,
            f"w_inf_{tag}": float(np.max(np.abs(res.w_star))) if p else 0.0,
        })
    return TrialResult(p=int(p), d=config.d, n=config.n, seed=int(seed), **out)


# ---------------------------------------------------------------- tilt derivatives


@dataclass(frozen=True)
class DerivativeEstimate:
    tau_step: float
    rho_forward: float
    rho_backward: float
    rho_central: float
    pi_forward: float
    pi_backward: float
    pi_central: float
    rho_direct: float = float("nan")
    pi_direct: float = float("nan")

    @property
    def rho_sandwich_holds(self):
        return self.rho_forward <= self.rho_direct <= self.rho_backward

    @property
    def pi_sandwich_holds(self):
        return self.pi_forward <= self.pi_direct <= self.pi_backward


def derivative_quotients(solve_at, p, tau_step, direct=None):
    """Difference quotients of ``Phi(tau1, tau2) / p`` around the origin.

    ``solve_at(tau1, tau2)`` must return a converged :class:`SolveResult`.
    ``direct`` is the ``(rho, pi)`` pair computed from the untilted solution.
    Because the optimal value is concave in the tilt, forward quotients never
    exceed the derivative and backward quotients never fall below it.
    """
    h = float(tau_step)
    vals = {}
    for key in ((0.0, 0.0), (h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)):
        res = solve_at(*key)
        if not res.converged:
            raise SolverError(f"tilted solve at {key} did not converge")
        vals[key] = res.value / p
    f0 = vals[(0.0, 0.0)]
    rho_f = (vals[(h, 0.0)] - f0) / h
    rho_b = (vals[(-h, 0.0)] - f0) / (-h)
    pi_f = (vals[(0.0, h)] - f0) / h
    pi_b = (vals[(0.0, -h)] - f0) / (-h)
    rho_d, pi_d = direct if direct is not None else (float("nan"), float("nan"))
    return DerivativeEstimate(
        tau_step=h,
        rho_forward=rho_f, rho_backward=rho_b, rho_central=0.5 * (rho_f + rho_b),
        pi_forward=pi_f, pi_backward=pi_b, pi_central=0.5 * (pi_f + pi_b),
        rho_direct=rho_d, pi_direct=pi_d,
    )


def derivative_estimates(config, p, seed, tau_step=None, model="surrogate"):
    """Tilt difference quotients for one trial instance, with the direct ``(rho, pi)``."""
    inst = build_instance(config, p, seed)
    ts = inst.tau_star
    if tau_step is None:
        tau_step = config.tilt_step if config.tilt_step is not None else min(ts, 0.02)
    if not 0 < tau_step <= ts:
        raise ContractViolation(f"tau_step must lie in (0, tau_star={ts!r}], got {tau_step!r}")
    base = inst.solve(model)
    direct = rho_pi_from_solution(base.w_star, inst.sigma, inst.F, inst.teacher.xi, inst.consts.mu1, p)
    return derivative_quotients(
        lambda t1, t2: base if (t1, t2) == (0.0, 0.0) else inst.solve(model, t1, t2, w0=base.w_star),
        p, tau_step, direct,
    )


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class UniversalityReport:
    config: object
    trial_indices: tuple
    rows: tuple
    aggregates: tuple
    incomplete: bool

    def rows_for(self, p):
        return [r for r in self.rows if r.p == p]


def aggregate_rows(rows, p_grid):
    """Per-``p`` means/stds over converged trials; recomputable from the rows alone."""
    out = []
    for p in p_grid:
        good = [r for r in rows if r.p == p and r.ok]
        entry = {"p": p, "n_ok": len(good), "n_failed": sum(1 for r in rows if r.p == p and not r.ok)}
        for key in ("e_train_A", "e_train_B", "e_gen_A", "e_gen_B"):
            vals = np.array([getattr(r, key) for r in good], dtype=float)
            entry[f"mean_{key}"] = float(vals.mean()) if vals.size else float("nan")
            entry[f"std_{key}"] = float(vals.std(ddof=1)) if vals.size > 1 else float("nan")
        for key in ("e_train", "e_gen"):
            gaps = np.array([abs(getattr(r, f"{key}_A") - getattr(r, f"{key}_B")) for r in good])
            entry[f"mean_abs_gap_{key}"] = float(gaps.mean()) if gaps.size else float("nan")
        out.append(entry)
    return tuple(out)


def _trial_job(args):
    config, p, seed = args
    try:
        return run_trial(config, p, seed)
    except (SolverError, np.linalg.LinAlgError) as exc:
        log.warning("trial p=%d seed=%d failed: %s", p, seed, exc)
        return None


def sweep_p(config, trial_indices=None, jobs=1):
    """Run every ``(p, trial)`` pair of the grid and aggregate.

    Failed or non-converged trials are kept as rows but excluded from the
    aggregates, and the report is marked incomplete.
    """
    if trial_indices is None:
        trial_indices = range(config.n_trials)
    trial_indices = tuple(int(i) for i in trial_indices)
    if not trial_indices:
        raise ContractViolation("seed list must not be empty")
    if not config.p_grid:
        raise ContractViolation("p_grid must not be empty")
    jobs_list = [(config, p, trial_seed(config.master_seed, p, i)) for p in config.p_grid for i in trial_indices]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial_job, jobs_list))
    else:
        results = [_trial_job(j) for j in jobs_list]
    rows = []
    incomplete = False
    for (cfg, p, seed), res in zip(jobs_list, results):
        if res is None:
            incomplete = True
            nan = float("nan")
            res = TrialResult(p, cfg.d, cfg.n, seed, nan, nan, nan, nan, nan, nan, nan, nan, False, False)
        incomplete |= not res.ok
        rows.append(res)
    return UniversalityReport(config, trial_indices, tuple(rows), aggregate_rows(rows, config.p_grid), incomplete)


# ---------------------------------------------------------------- Lindeberg path


@dataclass(frozen=True)
class PathAudit:
    p: int
    n: int
    seed: int
    stride: int
    rows: tuple
    phi_A: float
    phi_B: float
    max_step: float
    mean_step: float
    total_drift: float
    hessian_condition_max: float = float("nan")
    extra: dict = field(default_factory=dict)


def _path_grid(n, stride):
    ks = list(range(0, n + 1, stride))
    if ks[-1] != n:
        ks.append(n)
    return ks


def lindeberg_path_audit(config, p, seed, k_stride=1, tilt=None, with_surrogates=True):
    """Walk the interpolation path from the kernel problem (k=0) to the surrogate (k=n).

    Rows carry raw optimal values; the summary statistics are divided by ``p``.
    """
    if config.n > config.path_cap:
        raise ContractViolation(f"n={config.n} exceeds the path cap {config.path_cap}")
    if k_stride < 1:
        raise ContractViolation("k_stride must be positive")
    inst = build_instance(config, p, seed)
    setup = inst.path_setup(tilt)
    ds = inst.dataset
    rows = []
    prev_phi, w_prev = None, None
    cond_max = 0.0
    for k in _path_grid(config.n, k_stride):
        res = solve_path_point(k, setup, w0=w_prev)
        if not res.converged:
            raise SolverError(f"path point {k} did not converge")
        w_prev = res.w_star
        row = {"k": k, "phi_k": res.value,
               "delta_to_prev": float("nan") if prev_phi is None else res.value - prev_phi,
               "psi_b": float("nan"), "psi_a": float("nan"), "gamma_b": float("nan"), "gamma_a": float("nan")}
        if with_surrogates and k >= 1:
            loo = leave_one_out_solve(k, setup, w0=res.w_star)
            H = surrogate_hessian(loo, setup)
            cond_max = max(cond_max, H.condition)
            a_k, b_k, y_k = ds.A[k - 1], ds.B[k - 1], float(ds.y[k - 1])
            row.update(
                psi_b=psi_surrogate(k, b_k, loo, H, setup.loss, y_k, p),
                psi_a=psi_surrogate(k, a_k, loo, H, setup.loss, y_k, p),
                gamma_b=gamma(b_k, H, p),
                gamma_a=gamma(a_k, H, p),
            )
        rows.append(row)
        prev_phi = res.value
    steps = np.array([abs(r["delta_to_prev"]) for r in rows[1:]]) / p
    phi_A, phi_B = rows[0]["phi_k"], rows[-1]["phi_k"]
    return PathAudit(
        p=int(p), n=config.n, seed=int(seed), stride=int(k_stride), rows=tuple(rows),
        phi_A=phi_A, phi_B=phi_B,
        max_step=float(steps.max()) if steps.size else 0.0,
        mean_step=float(steps.mean()) if steps.size else 0.0,
        total_drift=abs(phi_B - phi_A) / p,
        hessian_condition_max=cond_max if with_surrogates else float("nan"),
    )


def trial_to_dict(result):
    return asdict(result)
