import time

import numpy as np
import pytest

from privsynth.model import PrivacyMechanism, case_study_config, load_case_study
from privsynth.synthesis import MODES, SynthesisConfig, sweep_epsilon, synthesize

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
# wall-clock seconds of expensive session fixtures
TIMINGS: dict[str, float] = {}


def random_stable(rng, n, radius=None):
    """Random n x n matrix rescaled to a spectral radius in (0.1, 0.95)."""
    A = rng.standard_normal((n, n))
    rho = np.abs(np.linalg.eigvals(A)).max()
    target = rng.uniform(0.1, 0.95) if radius is None else radius
    return A * (target / rho)


def random_pd(rng, n, floor=0.1):
    M = rng.standard_normal((n, n))
    return M @ M.T + floor * np.eye(n)


@pytest.fixture(scope="session")
def case_study():
    return load_case_study()


@pytest.fixture(scope="session")
def identity_mech(case_study):
    plant, _ = case_study
    return PrivacyMechanism.identity(plant.n_y, plant.n_u)


@pytest.fixture(scope="session")
def synth_007(case_study):
    """Synthesized mechanisms at the reference budget, per mode."""
    plant, filt = case_study
    return {mode: synthesize(plant, filt, SynthesisConfig(0.07, mode=mode)) for mode in MODES}


@pytest.fixture(scope="session")
def default_sweep(case_study):
    """The default budget sweep over both modes (a few minutes; computed once)."""
    plant, filt = case_study
    eps = case_study_config()["synthesis"]["epsilon_list"]
    t0 = time.perf_counter()
    points = sweep_epsilon(plant, filt, eps, SynthesisConfig(eps[0]))
    TIMINGS["default_sweep"] = time.perf_counter() - t0
    return points


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
