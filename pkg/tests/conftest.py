import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gelab import ExperimentConfig, gauss_moments
from gelab.erm import TiltParams, tau_star
from gelab.lab import build_instance

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def small_config():
    return ExperimentConfig(d=30, n=40, p_grid=(20,), n_trials=2, fresh_samples=2000)


@pytest.fixture(scope="session")
def tanh_consts():
    return gauss_moments("tanh")


def make_instance(seed, n=12, p=8, d=10, loss="logistic", activation="tanh", tilted=False, lam=0.1):
    """Small coupled instance plus a matching path setup."""
    cfg = ExperimentConfig(d=d, n=n, p_grid=(p,), activation=activation, loss=loss, lam=lam,
                           fresh_samples=1000, solver_tol=1e-12)
    inst = build_instance(cfg, p, seed)
    tilt = None
    if tilted:
        ts = tau_star(lam, inst.consts.mu1, inst.consts.mu2, p / d)
        rng = np.random.default_rng(seed)
        tilt = TiltParams(float(rng.uniform(-0.9, 0.9) * ts), float(rng.uniform(-0.9, 0.9)), ts)
    return inst, inst.path_setup(tilt)


ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append((number, line))
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
