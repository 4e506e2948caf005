import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from starisac.tracking import (
    KinematicTruth,
    PcrbProxy,
    ProcessNoise,
    StateEstimate,
    TargetState,
    ekf_update,
    event_probability,
    initial_estimate,
    measurement_noise,
    observe_state,
    predict_state,
    propagate_truth,
    state_error,
)


def test_target_state_invariants():
    with pytest.raises(ValueError):
        TargetState(0.1, 0.0, 0.0, 1.0)
    s = TargetState.from_array([-0.2, 0.5, 10.0, 1.0])
    assert s.theta == pytest.approx(0.2) and s.phi == pytest.approx(0.5 + np.pi)


def test_state_error_wraps_azimuth():
    a = TargetState(0.3, 0.05, 10.0, 0.0)
    b = TargetState(0.3, 2 * np.pi - 0.05, 10.0, 0.0)
    assert state_error(a, b)[1] == pytest.approx(0.1)


def test_observe_state_radial_speed():
    k = KinematicTruth.from_polar(0.4, 1.0, 20.0, [0, 0, 0])
    u = k.position / 20.0
    k = KinematicTruth(k.position, -3.0 * u)
    s = observe_state(k)
    # [TRIVIAL] moving straight at the transceiver at 3 m/s
    assert (s.theta, s.phi, s.d, s.v) == pytest.approx((0.4, 1.0, 20.0, 3.0))
    moved = observe_state(propagate_truth(k, 1.0))
    assert moved.d == pytest.approx(17.0)
    with pytest.raises(ValueError):
        propagate_truth(k, 1.0, accel_std=1.0)


def test_predict_state():
    est = StateEstimate(TargetState(0.3, 0.2, 10.0, 2.0), np.diag([1e-4, 1e-4, 1.0, 0.25]))
    pred = predict_state(est, 0.5, ProcessNoise(0.01, 0.0, 0.0, 0.0))
    assert pred.mean.d == pytest.approx(9.0)
    # [DERIVED] F P F^T with F[2,3] = -dt: P_dd = 1 + 0.25 * 0.25, P_dv = -0.125
    assert pred.covariance[2, 2] == pytest.approx(1.0625)
    assert pred.covariance[2, 3] == pytest.approx(-0.125)
    assert pred.covariance[0, 0] == pytest.approx(2e-4)
    with pytest.raises(ValueError):
        predict_state(est, 100.0)


def test_measurement_noise_scaling():
    proxy = PcrbProxy(1.0, 2.0, 3.0, 4.0)
    r = measurement_noise(proxy, 10, 100.0)
    np.testing.assert_allclose(np.diag(r), [1e-3, 2e-3, 3e-3, 4e-3])
    with pytest.raises(ValueError):
        measurement_noise(proxy, 0, 1.0)
    with pytest.raises(ValueError):
        PcrbProxy(kappa_d=0.0)


@settings(max_examples=200)
@given(st.lists(st.floats(1e-6, 1e2), min_size=4, max_size=4),
       st.lists(st.floats(1e-6, 1e2), min_size=4, max_size=4),
       st.lists(st.floats(-0.1, 0.1), min_size=4, max_size=4))
def test_ekf_matches_scalar_fusion(p, r, dz):
    x = np.array([0.4, 1.0, 30.0, 2.0])
    z = x + np.array(dz)
    est = ekf_update(StateEstimate(TargetState(*x), np.diag(p)), TargetState(*z), np.diag(r))
    p, r = np.array(p), np.array(r)
    # [DERIVED] independent scalar Bayesian fusion
    mean = (x / p + z / r) / (1 / p + 1 / r)
    np.testing.assert_allclose(est.mean.as_array(), mean, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(np.diag(est.covariance), 1 / (1 / p + 1 / r), rtol=1e-9)


def test_ekf_exact_and_unobserved_components():
    prior = StateEstimate(TargetState(0.4, 1.0, 30.0, 2.0), np.diag([1e-2, 1e-2, 1.0, 1.0]))
    z = TargetState(0.41, 1.02, 31.0, 2.5)
    exact = ekf_update(prior, z, np.zeros((4, 4)))
    np.testing.assert_allclose(exact.mean.as_array(), z.as_array())
    assert np.all(exact.covariance == 0)
    blind = ekf_update(prior, z, np.diag(np.full(4, np.inf)))
    assert blind is prior
    zero_prior = StateEstimate(prior.mean, np.zeros((4, 4)))
    fused = ekf_update(zero_prior, z, np.zeros((4, 4)))
    np.testing.assert_allclose(fused.mean.as_array(), z.as_array())


def test_ekf_wraps_azimuth_innovation():
    prior = StateEstimate(TargetState(0.4, 2 * np.pi - 0.01, 30.0, 0.0), np.eye(4))
    z = TargetState(0.4, 0.01, 30.0, 0.0)
    post = ekf_update(prior, z, np.eye(4))
    assert post.mean.phi == pytest.approx(0.0, abs=1e-12) or post.mean.phi == pytest.approx(2 * np.pi)


def test_event_probability():
    # [DERIVED] normal CDF: P(|e| <= a) = 2 Phi(a / sigma) - 1
    p = event_probability((0.01, 0.02), (0.1, 0.1), 0.5)
    assert p == pytest.approx((2 * norm.cdf(5.0) - 1) * (2 * norm.cdf(2.5) - 1), rel=1e-12)
    assert event_probability((0.0, 0.0), (0.1, 0.1)) == 1.0


def test_initial_estimate_noise_free_equals_truth():
    truth = TargetState(0.4, 1.0, 30.0, 2.0)
    est = initial_estimate(truth, np.eye(4), np.eye(4) * 1e-3)
    np.testing.assert_allclose(est.mean.as_array(), truth.as_array())
    a = initial_estimate(truth, np.eye(4) * 1e-2, np.eye(4) * 1e-3, np.random.default_rng(1))
    b = initial_estimate(truth, np.eye(4) * 1e-2, np.eye(4) * 1e-3, np.random.default_rng(1))
    np.testing.assert_array_equal(a.mean.as_array(), b.mean.as_array())


def test_psd_check():
    with pytest.raises(ValueError):
        StateEstimate(TargetState(0.1, 0, 10, 0), -np.eye(4))
