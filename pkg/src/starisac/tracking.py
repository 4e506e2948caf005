"""Target kinematics, state prediction, PCRB-proxy accuracy and EKF fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .geometry import Direction, wrap_angle_error, wrap_phase

STATE_FIELDS = ("theta", "phi", "d", "v")


@dataclass(frozen=True)
class TargetState:
    """Direction (theta, phi), distance ``d`` and radial speed ``v`` (positive when approaching)."""

    theta: float
    phi: float
    d: float
    v: float

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError(f"distance d={self.d!r} must be positive")

    @property
    def direction(self) -> Direction:
        return Direction.folded(self.theta, self.phi)

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.phi, self.d, self.v])

    @classmethod
    def from_array(cls, x) -> "TargetState":
        theta, phi, d, v = (float(t) for t in x)
        if theta < 0.0:
            theta, phi = -theta, phi + np.pi
        return cls(theta, float(wrap_phase(phi)), d, v)


def state_error(estimate: TargetState, truth: TargetState) -> np.ndarray:
    """Component-wise estimate - truth, with the azimuth error wrapped to (-pi, pi]."""
    err = estimate.as_array() - truth.as_array()
    err[1] = wrap_angle_error(err[1])
    return err


@dataclass(frozen=True)
class KinematicTruth:
    """Cartesian position (m) and velocity (m/s) relative to the transceiver."""

    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        p = np.array(self.position, dtype=float)
        vel = np.array(self.velocity, dtype=float)
        if p.shape != (3,) or vel.shape != (3,):
            raise ValueError("position and velocity must be 3-vectors")
        if not np.linalg.norm(p) > 0:
            raise ValueError("target position coincides with the transceiver")
        p.setflags(write=False)
        vel.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "velocity", vel)

    @classmethod
    def from_polar(cls, theta: float, phi: float, d: float, velocity) -> "KinematicTruth":
        st = np.sin(theta)
        pos = d * np.array([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])
        return cls(pos, np.asarray(velocity, dtype=float))


def propagate_truth(k: KinematicTruth, dt: float, accel_std: float = 0.0, rng=None) -> KinematicTruth:
    """Constant-velocity step; optional white acceleration of std ``accel_std`` (m/s^2)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if accel_std > 0:
        if rng is None:
            raise ValueError("a random generator is needed when accel_std > 0")
        a = accel_std * rng.standard_normal(3)
        return KinematicTruth(k.position + k.velocity * dt + 0.5 * a * dt ** 2, k.velocity + a * dt)
    return KinematicTruth(k.position + k.velocity * dt, k.velocity)


def observe_state(k: KinematicTruth) -> TargetState:
    """Map Cartesian truth onto (theta, phi, d, v)."""
    p = k.position
    d = float(np.linalg.norm(p))
    if d == 0.0:
        raise ValueError("degenerate position at the origin")
    theta = float(np.arctan2(np.hypot(p[0], p[1]), p[2]))
    phi = float(wrap_phase(np.arctan2(p[1], p[0])))
    v = -float(p @ k.velocity) / d
    return TargetState(theta, phi, d, v)


@dataclass(frozen=True)
class StateEstimate:
    mean: TargetState
    covariance: np.ndarray

    def __post_init__(self):
        cov = np.array(self.covariance, dtype=float)
        if cov.shape != (4, 4):
            raise ValueError("state covariance must be 4 x 4")
        _check_psd(cov, "state covariance")
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)

    @property
    def angle_stds(self) -> tuple:
        return (float(np.sqrt(self.covariance[0, 0])), float(np.sqrt(self.covariance[1, 1])))


def _check_psd(cov, name, tol=1e-9):
    finite = np.where(np.isfinite(cov), cov, 0.0)
    if not np.allclose(finite, finite.T, atol=tol, rtol=0):
        raise ValueError(f"{name} is not symmetric")
    if np.any(np.isinf(cov) & ~np.eye(len(cov), dtype=bool)):
        raise ValueError(f"{name} has infinite off-diagonal entries")
    if np.any(np.isnan(cov)):
        raise ValueError(f"{name} contains NaN")
    w = np.linalg.eigvalsh(finite)
    scale = max(1.0, float(np.abs(finite).max()))
    if w.min() < -tol * scale:
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {w.min():.3g})")


@dataclass(frozen=True)
class ProcessNoise:
    """Per-slot random-walk standard deviations of the filter model."""

    theta: float = 0.0
    phi: float = 0.0
    d: float = 0.0
    v: float = 0.0

    def covariance(self) -> np.ndarray:
        return np.diag(np.square([self.theta, self.phi, self.d, self.v]))


def transition_matrix(dt: float) -> np.ndarray:
    """Jacobian of the state model: angles held, d <- d - v dt, v held."""
    F = np.eye(4)
    F[2, 3] = -dt
    return F


def predict_state(previous: StateEstimate, dt: float, process_noise: ProcessNoise = None) -> StateEstimate:
    """EKF time update over one slot of length ``dt``.

    Radial motion is propagated exactly; transverse motion is absorbed by the
    angular process noise.
    """
    s = previous.mean
    d_next = s.d - s.v * dt
    if d_next <= 0:
        raise ValueError("predicted distance is not positive; target reached the transceiver")
    F = transition_matrix(dt)
    P = F @ previous.covariance @ F.T
    if process_noise is not None:
        P = P + process_noise.covariance()
    return StateEstimate(TargetState(s.theta, s.phi, d_next, s.v), 0.5 * (P + P.T))


@dataclass(frozen=True)
class PcrbProxy:
    """Proportionality constants of the bound var_q = kappa_q / (I_ISAC SNR)."""

    kappa_theta: float = 1.0
    kappa_phi: float = 1.0
    kappa_d: float = 1.0
    kappa_v: float = 1.0

    def __post_init__(self):
        for name in ("kappa_theta", "kappa_phi", "kappa_d", "kappa_v"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.kappa_theta, self.kappa_phi, self.kappa_d, self.kappa_v])


def measurement_noise(proxy: PcrbProxy, i_isac, snr) -> np.ndarray:
    """Diagonal measurement covariance kappa_q / (i_isac * snr)."""
    if not i_isac >= 1:
        raise ValueError(f"i_isac={i_isac!r} must be at least 1")
    if not snr > 0:
        raise ValueError(f"snr={snr!r} must be positive")
    return np.diag(proxy.as_array() / (i_isac * snr))


def ekf_update(predicted: StateEstimate, measurement: TargetState, meas_cov) -> StateEstimate:
    """Measurement update with an identity observation of (theta, phi, d, v).

    Infinite diagonal entries of ``meas_cov`` mark unobserved components and
    zero entries mark exact ones: those are conditioned on first and the
    posterior takes the measured value verbatim.
    """
    R = np.array(meas_cov, dtype=float)
    if R.shape != (4, 4):
        raise ValueError("measurement covariance must be 4 x 4")
    _check_psd(R, "measurement covariance")
    var = np.diag(R)
    exact = np.flatnonzero(var == 0)
    noisy = np.flatnonzero(np.isfinite(var) & (var > 0))
    if not len(exact) and not len(noisy):
        return predicted

    x = predicted.mean.as_array()
    z = measurement.as_array()
    P = predicted.covariance.copy()

    if len(exact):
        innov = _innovation(z, x)[exact]
        G = P[:, exact] @ np.linalg.pinv(P[np.ix_(exact, exact)], hermitian=True)
        x = x + G @ innov
        P = P - G @ P[exact, :]
        x[exact] = z[exact]
        P[exact, :] = 0.0
        P[:, exact] = 0.0

    if len(noisy):
        H = np.eye(4)[noisy]
        R_o = R[np.ix_(noisy, noisy)]
        S = H @ P @ H.T + R_o
        K = P @ H.T @ np.linalg.pinv(S, hermitian=True)
        x = x + K @ _innovation(z, x)[noisy]
        I_KH = np.eye(4) - K @ H
        P = I_KH @ P @ I_KH.T + K @ R_o @ K.T

    return StateEstimate(TargetState.from_array(x), 0.5 * (P + P.T))


def _innovation(z, x):
    r = z - x
    r[1] = wrap_angle_error(r[1])
    return r


def event_probability(angle_stds, hpbw_effective, bound_factor: float = 0.5) -> float:
    """P[|err_theta| <= f h_theta and |err_phi| <= f h_phi] for independent Gaussian errors."""
    prob = 1.0
    for sigma, h in zip(angle_stds, hpbw_effective):
        if sigma < 0 or not h > 0:
            raise ValueError("stds must be >= 0 and beamwidths > 0")
        if sigma == 0:
            continue
        prob *= float(erf(bound_factor * h / (sigma * np.sqrt(2.0))))
    return prob


def initial_estimate(truth: TargetState, prior_cov, meas_cov, rng=None) -> StateEstimate:
    """Slot-0 estimate: Bayesian fusion of a coverage prior with one training measurement.

    The prior mean is drawn around the truth with ``prior_cov`` and the
    measurement around the truth with ``meas_cov``; ``rng=None`` makes both
    draws noise free.
    """
    prior_cov = np.asarray(prior_cov, dtype=float)
    meas_cov = np.asarray(meas_cov, dtype=float)
    prior_mean = _noisy(truth, prior_cov, rng)
    measurement = _noisy(truth, meas_cov, rng)
    return ekf_update(StateEstimate(prior_mean, prior_cov), measurement, meas_cov)


def _noisy(truth: TargetState, cov, rng) -> TargetState:
    if rng is None:
        return truth
    std = np.sqrt(np.diag(cov))
    return noisy_measurement(truth, std, rng)


def noisy_measurement(truth: TargetState, stds, rng) -> TargetState:
    """Truth plus independent Gaussian errors of the given standard deviations."""
    x = truth.as_array() + np.asarray(stds) * rng.standard_normal(4)
    # keep the distance physical whatever the draw
    x[2] = max(x[2], 1e-9)
    return TargetState.from_array(x)
