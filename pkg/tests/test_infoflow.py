import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_pd
from privsynth.errors import NotPositiveDefiniteError
from privsynth.estimation import solve_lyapunov_direct
from privsynth.infoflow import (
    _uplink,
    finite_horizon_mutual_info,
    leakage_upper_bound,
    mutual_info_rate,
    stationary_error_cov,
)
from privsynth.model import AdversaryFilter, PlantModel, PrivacyMechanism, assemble_closed_loop


def test_scalar_formula():
    # L = 0.5, G = 1, Se = 1, Vt = 1, B = K = 1, Sz = 0, Sw = 1 -> ln 2 in total
    plant = PlantModel(A=[[-0.5]], B=[[1.0]], K=[[1.0]], Sigma_w=[[1.0]], Sigma_h=[[0.5]], Sigma_x1=[[1.0]],
                       Q=[[1.0]], R=[[1.0]])
    mech = PrivacyMechanism([[1.0]], [[0.5]], [[0.0]])
    filt = AdversaryFilter([[0.5]])
    rep = mutual_info_rate(plant, mech, filt, Sigma_e=[[1.0]])
    assert rep.uplink_nats == pytest.approx(0.5 * np.log(2), rel=1e-14)
    assert rep.downlink_nats == pytest.approx(0.5 * np.log(2), rel=1e-14)
    assert rep.rate_nats == pytest.approx(np.log(2), rel=1e-14)
    assert rep.rate_bits == pytest.approx(1.0, rel=1e-14)


def test_zero_error_no_uplink(case_study):
    plant, filt = case_study
    mech = PrivacyMechanism(np.eye(4), 0.01 * np.eye(4), 0.01 * np.eye(3))
    rep = mutual_info_rate(plant, mech, filt, Sigma_e=np.zeros((4, 4)))
    assert rep.uplink_nats == pytest.approx(0.0, abs=1e-14)


def test_singular_uplink_noise_rejected(case_study):
    plant, filt = case_study
    G = np.zeros((4, 4))  # Vt = G Sh G' + 0 = 0
    mech = PrivacyMechanism(G, np.zeros((4, 4)), 0.01 * np.eye(3))
    with pytest.raises(NotPositiveDefiniteError, match="infinite"):
        mutual_info_rate(plant, mech, filt, Sigma_e=np.eye(4))


def test_decomposition_and_sign(case_study, identity_mech):
    plant, filt = case_study
    rep = mutual_info_rate(plant, identity_mech, filt)
    assert rep.rate_nats == rep.uplink_nats + rep.downlink_nats
    assert rep.uplink_nats > 0 and rep.downlink_nats >= -1e-10


def test_finite_horizon_matches_rate(case_study):
    plant, filt = case_study
    mech = PrivacyMechanism(np.eye(4), np.zeros((4, 4)), 0.01 * np.eye(3))  # Sigma_v = Sigma_h on top of h
    rate = mutual_info_rate(plant, mech, filt).rate_nats
    fh = finite_horizon_mutual_info(plant, mech, filt, 500)
    assert abs(fh.per_step_terms[-1] - rate) < 1e-6 * rate
    assert np.all(fh.per_step_terms >= -1e-10)
    total, terms = fh
    assert total == pytest.approx(terms.sum())
    assert fh.normalized_rate == pytest.approx(total / 501)


def test_finite_horizon_stationary_start(case_study):
    plant, filt = case_study
    mech = PrivacyMechanism(0.7 * np.eye(4), 0.02 * np.eye(4), 0.01 * np.eye(3))
    cl = assemble_closed_loop(plant, mech, filt)
    S = solve_lyapunov_direct(cl.Acal, cl.Bcal).Sigma_zeta
    fh = finite_horizon_mutual_info(plant, mech, filt, 1, Sigma_zeta1=S)
    assert fh.per_step_terms[0] == pytest.approx(mutual_info_rate(plant, mech, filt).rate_nats, rel=1e-12)


def test_bound_equals_rate_at_exact_sigma(case_study):
    plant, filt = case_study
    mech = PrivacyMechanism(0.5 * np.eye(4), 0.05 * np.eye(4), 0.01 * np.eye(3))
    cl = assemble_closed_loop(plant, mech, filt)
    S = solve_lyapunov_direct(cl.Acal, cl.Bcal).Sigma_zeta
    rate = mutual_info_rate(plant, mech, filt).rate_nats
    assert leakage_upper_bound(plant, mech, filt, S) == pytest.approx(rate, rel=1e-12)
    assert leakage_upper_bound(plant, mech, filt, S + 0.1 * np.eye(8)) >= rate


def test_identity_reduction(case_study):
    plant, filt = case_study
    mech = PrivacyMechanism(np.eye(4), 0.05 * np.eye(4), 0.01 * np.eye(3))
    Se = stationary_error_cov(plant, mech, filt)
    L, Vt = filt.L, mech.sigma_vtilde(plant.Sigma_h)
    direct = 0.5 * (np.linalg.slogdet(L @ Se @ L.T + L @ Vt @ L.T)[1] - np.linalg.slogdet(L @ Vt @ L.T)[1])
    assert mutual_info_rate(plant, mech, filt).uplink_nats == pytest.approx(direct, rel=1e-12)


def test_scalar_downlink_scale():
    # doubling Sigma_w with Sigma_z = 0, K = B = 1: downlink = 1/2 ln((Vt + W) / W)
    for W in (1.0, 2.0):
        plant = PlantModel(A=[[-0.5]], B=[[1.0]], K=[[1.0]], Sigma_w=[[W]], Sigma_h=[[0.3]], Sigma_x1=[[1.0]],
                           Q=[[1.0]], R=[[1.0]])
        mech = PrivacyMechanism([[1.0]], [[0.7]], [[0.0]])
        rep = mutual_info_rate(plant, mech, AdversaryFilter([[0.5]]), Sigma_e=[[1.0]])
        assert rep.downlink_nats == pytest.approx(0.5 * np.log((1.0 + W) / W), rel=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_uplink_monotone_in_error_cov(seed):
    rng = np.random.default_rng(seed)
    n = 3
    L, G = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    Se, P, Vt = random_pd(rng, n), random_pd(rng, n, 0.0), random_pd(rng, n)
    assert _uplink(L, G, Se + P, Vt) >= _uplink(L, G, Se, Vt) - 1e-10
