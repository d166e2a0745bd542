import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gelab import ExperimentConfig, gauss_moments, get_activation
from gelab._errors import ContractViolation, DomainError
from gelab.lab import (
    aggregate_rows,
    build_instance,
    derivative_estimates,
    derivative_quotients,
    gaussian_gen_error_closed,
    generalization_error_mc,
    lindeberg_path_audit,
    rho_pi_from_solution,
    run_trial,
    sweep_p,
    trial_seed,
)
from gelab.models import sample_feature_matrix, sample_teacher


def test_rho_pi_examples():
    F = np.array([[1.0]])
    assert rho_pi_from_solution(np.array([2.0]), np.array([[13.0]]), F, np.array([1.0]), 2.0, 1) == (52.0, 4.0)
    F = sample_feature_matrix(5, 3, 0)
    xi = sample_teacher(5, 0).xi
    S = np.eye(3)
    assert rho_pi_from_solution(np.zeros(3), S, F, xi, 0.6, 3) == (0.0, 0.0)
    assert rho_pi_from_solution(np.ones(3), S, F, xi, 0.0, 3)[1] == 0.0


def test_closed_form_examples():
    assert gaussian_gen_error_closed(1.0, 1.0, "identity", "identity") == pytest.approx(0.0, abs=1e-12)
    assert gaussian_gen_error_closed(1.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert gaussian_gen_error_closed(2.0, 0.0) == 2.0
    assert gaussian_gen_error_closed(0.0, 0.0) == 2.0
    rho, pi = 1.7, 0.4
    assert gaussian_gen_error_closed(rho, pi, "identity", "identity") == pytest.approx((1 - pi) ** 2 + rho - pi**2)


def test_closed_form_domain():
    with pytest.raises(DomainError):
        gaussian_gen_error_closed(0.5, 1.0)
    assert gaussian_gen_error_closed(1.0, 1.0 + 1e-15) == pytest.approx(0.0, abs=1e-6)


def test_sign_closed_form_against_monte_carlo():
    rng = np.random.default_rng(0)
    rho, pi = 1.3, 0.7
    z1, z2 = rng.standard_normal((2, 2_000_000))
    errs = (np.sign(z1) - np.sign(pi * z1 + math.sqrt(rho - pi * pi) * z2)) ** 2
    se = errs.std() / math.sqrt(errs.size)
    assert abs(errs.mean() - gaussian_gen_error_closed(rho, pi)) <= 4 * se


def test_mixed_outputs_use_monte_carlo():
    ref = gaussian_gen_error_closed(1.0, 0.5, "sign", "tanh", n_mc=1_000_000, seed=1)
    again = gaussian_gen_error_closed(1.0, 0.5, "sign", "tanh", n_mc=1_000_000, seed=1)
    assert ref == again and 0 < ref < 4


@given(st.floats(0.01, 100), st.floats(-1, 1))
def test_sign_closed_form_scale_invariant(rho, frac):
    pi = frac * math.sqrt(rho)
    assert abs(gaussian_gen_error_closed(rho, pi) - gaussian_gen_error_closed(4 * rho, 2 * pi)) <= 1e-12


def _mc(model, w, F, t, c, act="tanh", n=20_000, seed=3):
    return generalization_error_mc(w, F, t.xi, model, c, get_activation(act), t, n, seed)


def test_mc_zero_weights_gives_two():
    F, t, c = sample_feature_matrix(10, 5, 0), sample_teacher(10, 0), gauss_moments("tanh")
    est, se = _mc("kernel", np.zeros(5), F, t, c)
    assert abs(est - 2.0) <= 4 * se + 1e-12


def test_mc_linear_models_coincide():
    F, t, c = sample_feature_matrix(10, 5, 0), sample_teacher(10, 0), gauss_moments("linear")
    w = np.random.default_rng(1).standard_normal(5)
    assert _mc("kernel", w, F, t, c, "linear") == _mc("surrogate", w, F, t, c, "linear")


def test_mc_input_checks():
    F, t, c = sample_feature_matrix(10, 5, 0), sample_teacher(10, 0), gauss_moments("tanh")
    with pytest.raises(ContractViolation):
        _mc("kernel", np.zeros(5), F, t, c, n=10)
    with pytest.raises(ContractViolation):
        _mc("other", np.zeros(5), F, t, c)


def test_run_trial_linear_models_agree():
    cfg = ExperimentConfig(d=20, n=30, p_grid=(10,), activation="linear", fresh_samples=2000)
    res = run_trial(cfg, 10, 5)
    assert res.e_train_A == res.e_train_B and res.e_gen_A == res.e_gen_B


def test_run_trial_deterministic_and_valid(small_config):
    a = run_trial(small_config, 20, 11)
    b = run_trial(small_config, 20, 11)
    assert a == b
    assert a.ok
    for key in ("e_train_A", "e_train_B", "e_gen_A", "e_gen_B"):
        v = getattr(a, key)
        assert math.isfinite(v) and v >= 0
    assert a.rho_A >= a.pi_A**2 - 1e-9 and a.rho_B >= a.pi_B**2 - 1e-9


def test_trial_seed_independent_of_order():
    assert trial_seed(0, 100, 3) == trial_seed(0, 100, 3)
    assert len({trial_seed(0, p, i) for p in (100, 200) for i in range(10)}) == 20


def test_sweep_single_row(small_config):
    cfg = small_config.with_(p_grid=(20,))
    rep = sweep_p(cfg, [0])
    assert len(rep.rows) == 1 and not rep.incomplete
    assert rep.rows[0] == run_trial(cfg, 20, trial_seed(cfg.master_seed, 20, 0))
    np.testing.assert_equal(rep.aggregates, aggregate_rows(rep.rows, cfg.p_grid))
    with pytest.raises(ContractViolation):
        sweep_p(cfg, [])


def test_sweep_parallel_matches_serial(small_config):
    cfg = small_config.with_(p_grid=(10, 20))
    assert sweep_p(cfg, [0, 1], jobs=2).rows == sweep_p(cfg, [0, 1], jobs=1).rows


def test_derivative_sandwich_default_step(small_config):
    est = derivative_estimates(small_config, 20, 3)
    assert est.rho_sandwich_holds and est.pi_sandwich_holds
    assert est.rho_forward <= est.rho_central <= est.rho_backward


def test_derivative_step_bounds(small_config):
    inst = build_instance(small_config, 20, 3)
    with pytest.raises(ContractViolation):
        derivative_estimates(small_config, 20, 3, tau_step=2 * inst.tau_star)
    with pytest.raises(ContractViolation):
        derivative_estimates(small_config, 20, 3, tau_step=0.0)


def test_derivative_zero_solution_gives_zero_pi():
    cfg = ExperimentConfig(d=10, n=8, p_grid=(6,), loss="squared", fresh_samples=1000, solver_tol=1e-12)
    inst = build_instance(cfg, 6, 0)
    y0 = np.zeros(inst.dataset.n)
    from gelab.erm import TiltParams, solve
    from gelab.losses import Ridge

    def solve_at(t1, t2):
        tilt = TiltParams(t1, t2, inst.tau_star) if (t1 or t2) else TiltParams()
        return solve(inst.dataset.B, y0, "squared", Ridge(cfg.lam), tilt, inst.sigma, inst.F, inst.teacher.xi,
                     inst.consts.mu1, cfg.solver_options)
    est = derivative_quotients(solve_at, 6, 1e-3, (0.0, 0.0))
    # w* = 0 and the tilt in tau2 alone is linear-plus-ridge, so the quotients are O(step)
    assert abs(est.pi_central) <= 1e-12
    assert abs(est.rho_forward) <= 1e-12


def test_squared_loss_central_quotient_converges():
    cfg = ExperimentConfig(d=12, n=10, p_grid=(8,), loss="squared", fresh_samples=1000, solver_tol=1e-13)
    inst = build_instance(cfg, 8, 2)
    h1 = 0.5 * inst.tau_star
    e1 = derivative_estimates(cfg, 8, 2, tau_step=h1)
    e2 = derivative_estimates(cfg, 8, 2, tau_step=h1 / 4)
    # one-sided quotients carry an O(step) bias, so the error ratio tracks the step ratio
    r1, r2 = abs(e1.rho_forward - e1.rho_direct), abs(e2.rho_forward - e2.rho_direct)
    assert 2.5 <= r1 / r2 <= 6.0
    # central quotients are better still
    assert abs(e2.rho_central - e2.rho_direct) < r2


def test_path_audit_linear_constant():
    cfg = ExperimentConfig(d=20, n=15, p_grid=(10,), activation="linear", fresh_samples=1000)
    audit = lindeberg_path_audit(cfg, 10, 0, with_surrogates=False)
    assert audit.max_step <= 1e-12 and audit.total_drift <= 1e-12


def test_path_audit_tanh_summary():
    cfg = ExperimentConfig(d=30, n=20, p_grid=(15,), fresh_samples=1000)
    audit = lindeberg_path_audit(cfg, 15, 0, k_stride=3)
    ks = [r["k"] for r in audit.rows]
    assert ks[0] == 0 and ks[-1] == 20 and len(ks) == 8
    inst = build_instance(cfg, 15, 0)
    assert abs(audit.phi_A - inst.solve("kernel").value) / 15 <= 1e-9
    assert abs(audit.phi_B - inst.solve("surrogate").value) / 15 <= 1e-9
    assert math.isfinite(audit.max_step) and audit.mean_step <= audit.phi_A / 15
    assert all(r["gamma_a"] >= 0 for r in audit.rows[1:])


def test_path_audit_cap():
    cfg = ExperimentConfig(d=20, n=30, p_grid=(10,), path_cap=20, fresh_samples=1000)
    with pytest.raises(ContractViolation):
        lindeberg_path_audit(cfg, 10, 0)
