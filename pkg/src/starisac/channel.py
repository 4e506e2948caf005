"""Cascaded LoS channel, baseband signal synthesis and closed-form SNR/rate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    SPEED_OF_LIGHT,
    ArrayGeometry,
    Direction,
    dcm_incident_response,
    steering_vector,
    wavevector,
)


@dataclass(frozen=True)
class LinkBudget:
    """Received powers and noise variances (watts) of the two links.

    ``p_r`` folds transmit power and round-trip path loss of the sensing
    link, ``p_t`` the forward path loss to the Comms Rx. ``mu_c`` is the mean
    magnitude of the short DCM-to-Comms-Rx channel.
    """

    p_r: float
    p_t: float
    sigma2_wr: float
    sigma2_wt: float
    mu_c: float = 1.0

    def __post_init__(self):
        for name in ("p_r", "p_t", "sigma2_wr", "sigma2_wt", "mu_c"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"link budget {name}={value!r} must be strictly positive")

    def c_r(self, n: int, m: int, l: int) -> float:
        """Sensing SNR scale P_R N M L^2 / sigma2_wR."""
        return self.p_r * n * m * l ** 2 / self.sigma2_wr

    def c_t(self, n: int, l: int) -> float:
        """Communication SNR scale mu_c^2 P_T N L^2 / sigma2_wT."""
        return self.mu_c ** 2 * self.p_t * n * l ** 2 / self.sigma2_wt


def free_space_budget(tx_power: float, distance: float, lambda0: float, noise_power: float,
                      element_area: float = None, mu_c: float = 1.0, comm_noise_power: float = None) -> LinkBudget:
    """Free-space link budget for a DCM at ``distance``.

    The forward link uses the Friis loss (lambda / 4 pi d)^2. The round trip
    treats each DCM element as an aperture of ``element_area`` (default
    (lambda/2)^2) re-radiating toward the transceiver, i.e. a second Friis-like
    hop scaled by 4 pi A / lambda^2.
    """
    if distance <= 0 or tx_power <= 0 or noise_power <= 0:
        raise ValueError("tx_power, distance and noise_power must be positive")
    area = (lambda0 / 2) ** 2 if element_area is None else element_area
    forward = (lambda0 / (4 * np.pi * distance)) ** 2
    element_gain = 4 * np.pi * area / lambda0 ** 2
    p_t = tx_power * forward * element_gain
    p_r = tx_power * forward ** 2 * element_gain ** 2
    return LinkBudget(p_r, p_t, noise_power, noise_power if comm_noise_power is None else comm_noise_power, mu_c)


@dataclass(frozen=True)
class Arrays:
    """The three apertures of the monostatic link."""

    tx: ArrayGeometry
    rx: ArrayGeometry
    dcm: ArrayGeometry

    def __post_init__(self):
        if self.tx.role != "comms-tx" or self.rx.role != "sens-rx" or self.dcm.role != "dcm":
            raise ValueError("Arrays expects comms-tx, sens-rx and dcm geometries in that order")

    @property
    def sizes(self) -> tuple:
        return (self.tx.size, self.rx.size, self.dcm.size)


@dataclass(frozen=True)
class ChannelRealization:
    """One slot's cascaded channel.

    ``f`` is L x N, ``g`` is M x L and ``c`` has length L. Doppler shifts are
    stored per path (round trip and forward).
    """

    f: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tau_r: float
    tau_t: float
    doppler_r: float
    doppler_t: float
    lambda0: float
    warnings: tuple = field(default=())

    @property
    def doppler(self) -> float:
        return self.doppler_r


def far_field_distance(arrays: Arrays, factor: float = 10.0) -> float:
    """Smallest admissible target distance: ``factor`` times the largest aperture."""
    largest = max(max(g.aperture_lengths()) for g in (arrays.tx, arrays.rx, arrays.dcm))
    return factor * largest


def realize_channel(state, budget: LinkBudget, arrays: Arrays, lambda0: float, rng_seed,
                    c_spread: float = 0.1, far_field_factor: float = 10.0,
                    onboard_distance: float = 0.0) -> ChannelRealization:
    """Rank-one LoS channel for a target in ``state``.

    ``c`` magnitudes are mu_c * (1 + U(-c_spread, c_spread)) with i.i.d.
    uniform phases, drawn from ``rng_seed``.
    """
    if not (0.0 <= c_spread < 1.0):
        raise ValueError("c_spread must lie in [0, 1)")
    direction = Direction(state.theta, state.phi)
    warnings = []
    bound = far_field_distance(arrays, far_field_factor)
    if state.d < bound:
        warnings.append(f"far-field violation: d={state.d:.4g} m < {bound:.4g} m")

    a_tx = steering_vector(arrays.tx, direction, lambda0)
    a_rx = steering_vector(arrays.rx, direction, lambda0)
    a_dcm_in = dcm_incident_response(arrays.dcm, direction, lambda0)
    # a_DCM(-u) coincides with the plain steering vector exp(-j k^T p)
    a_dcm_out = steering_vector(arrays.dcm, direction, lambda0)

    f = np.sqrt(budget.p_t) * np.outer(a_dcm_in, a_tx.conj())
    g = np.sqrt(budget.p_r / budget.p_t) * np.outer(a_rx, a_dcm_out.conj())

    rng = np.random.default_rng(rng_seed)
    l = arrays.dcm.size
    mags = budget.mu_c * (1.0 + rng.uniform(-c_spread, c_spread, l))
    phases = rng.uniform(0.0, 2.0 * np.pi, l)
    c = mags * np.exp(1j * phases)

    return ChannelRealization(
        f=f, g=g, c=c,
        tau_r=2.0 * state.d / SPEED_OF_LIGHT,
        tau_t=(state.d + onboard_distance) / SPEED_OF_LIGHT,
        doppler_r=2.0 * state.v / lambda0,
        doppler_t=state.v / lambda0,
        lambda0=lambda0,
        warnings=tuple(warnings),
    )


# --------------------------------------------------------------------------
# Gains
# --------------------------------------------------------------------------


def array_gain(beamformer, response) -> float:
    """|response^H beamformer|^2."""
    return float(np.abs(np.vdot(response, beamformer)) ** 2)


def comms_rx_gain(c, profile_gamma_t, arrays: Arrays, true_dir: Direction, lambda0: float) -> float:
    """|c^T Gamma_T a_DCM(true)|^2 for an arbitrary transmission profile."""
    a = dcm_incident_response(arrays.dcm, true_dir, lambda0)
    return float(np.abs(np.sum(c * profile_gamma_t * a)) ** 2)


def upsilon(c_magnitudes, true_dir: Direction, design_dir: Direction, geometry: ArrayGeometry, lambda0: float) -> complex:
    """Sum over l of |c_l| exp(j [k(true) - k(design)]^T p_l)."""
    dk = wavevector(true_dir, lambda0) - wavevector(design_dir, lambda0)
    return complex(np.sum(np.asarray(c_magnitudes) * np.exp(1j * (geometry.positions @ dk))))


# --------------------------------------------------------------------------
# Closed forms
# --------------------------------------------------------------------------


def _check_gain(name, value, bound):
    if value < 0:
        raise ValueError(f"{name}={value!r} is negative")
    if bound is not None and value > bound * (1 + 1e-9):
        raise ValueError(f"{name}={value!r} exceeds its bound {bound}")


def sensing_snr(budget: LinkBudget, comms_tx_gain: float, sens_rx_gain: float, dcm_gain: float,
                lam: float, sizes: tuple = None) -> float:
    """lam P_R |G_rx|^2 |G_dcm|^2 |G_tx|^2 / sigma2_wR.

    ``sizes`` = (N, M, L) enables the gain bound checks N, M and L^2.
    """
    n, m, l = sizes if sizes is not None else (None, None, None)
    _check_gain("comms_tx_gain", comms_tx_gain, n)
    _check_gain("sens_rx_gain", sens_rx_gain, m)
    _check_gain("dcm_gain", dcm_gain, None if l is None else l ** 2)
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda={lam!r} outside [0, 1]")
    return lam * budget.p_r * sens_rx_gain * dcm_gain * comms_tx_gain / budget.sigma2_wr


def comm_snr(budget: LinkBudget, comms_rx_gain: float, comms_tx_gain: float, transmit_fraction: float = 1.0) -> float:
    """Post-detection SNR at the Comms Rx."""
    if not (0.0 <= transmit_fraction <= 1.0):
        raise ValueError(f"transmit_fraction={transmit_fraction!r} outside [0, 1]")
    return transmit_fraction * budget.p_t * comms_rx_gain * comms_tx_gain / budget.sigma2_wt


def comm_rate(budget: LinkBudget, comms_rx_gain: float, comms_tx_gain: float, transmit_fraction: float = 1.0) -> float:
    """Achievable rate log2(1 + SNR) in bits/s/Hz."""
    return float(np.log2(1.0 + comm_snr(budget, comms_rx_gain, comms_tx_gain, transmit_fraction)))


# --------------------------------------------------------------------------
# Signal synthesis
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SignalBlock:
    """Baseband samples of one sub-slot.

    Sensing blocks hold an (n_samples, M) array in ``samples`` and the
    combiner output in ``combined``; communication blocks hold a 1-D array in
    both.
    """

    samples: np.ndarray
    sample_period: float
    combined: np.ndarray = None

    def __post_init__(self):
        if np.asarray(self.samples).size == 0:
            raise ValueError("signal block is empty")


def check_narrowband(bandwidth: float, f0: float) -> None:
    if bandwidth >= f0 / 10.0:
        raise ValueError(f"narrowband constraint violated: B={bandwidth:.4g} Hz >= f0/10={f0 / 10:.4g} Hz")


def _complex_noise(rng, shape, variance):
    return np.sqrt(variance / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _doppler_rotation(n_samples, doppler, sample_period):
    return np.exp(2j * np.pi * doppler * sample_period * np.arange(n_samples))


def synthesize_sensing_block(ch: ChannelRealization, profile, beamformers, waveform, noise_seed,
                             sigma2_wr: float, sample_period: float) -> SignalBlock:
    """y[n] = G Gamma_R F b u[n] e^{j 2 pi f_D n T} + w[n] with the combiner output v^H y.

    Frame timing is ideal, so the round-trip delay only shows up through the
    carried ``tau_r`` and the reference waveform is used without shift.
    """
    b, v = beamformers
    u = np.asarray(waveform, dtype=complex).ravel()
    l, n = ch.f.shape
    m = ch.g.shape[0]
    if profile.gamma_r.shape != (l,) or b.shape != (n,) or v.shape != (m,):
        raise ValueError("profile/beamformer dimensions disagree with the channel")
    check_narrowband(1.0 / sample_period, SPEED_OF_LIGHT / ch.lambda0)
    h = ch.g @ (profile.gamma_r * (ch.f @ b))
    signal = np.outer(u * _doppler_rotation(len(u), ch.doppler_r, sample_period), h)
    rng = np.random.default_rng(noise_seed)
    y = signal + _complex_noise(rng, signal.shape, sigma2_wr)
    return SignalBlock(y, sample_period, y @ v.conj())


def synthesize_comm_block(ch: ChannelRealization, profile, transmit_beamformer, symbols, noise_seed,
                          sigma2_wt: float, sample_period: float) -> SignalBlock:
    """y[n] = c^T Gamma_T F b u[n] e^{j 2 pi f_D n T} + w[n]; no direct Tx-Rx path."""
    b = np.asarray(transmit_beamformer)
    u = np.asarray(symbols, dtype=complex).ravel()
    l, n = ch.f.shape
    if profile.gamma_t.shape != (l,) or b.shape != (n,):
        raise ValueError("profile/beamformer dimensions disagree with the channel")
    check_narrowband(1.0 / sample_period, SPEED_OF_LIGHT / ch.lambda0)
    h = ch.c @ (profile.gamma_t * (ch.f @ b))
    rng = np.random.default_rng(noise_seed)
    y = h * u * _doppler_rotation(len(u), ch.doppler_t, sample_period) + _complex_noise(rng, u.shape, sigma2_wt)
    return SignalBlock(y, sample_period, y)


def empirical_snr(received, reference, doppler: float = 0.0, sample_period: float = 1.0) -> float:
    """Pilot-aided SNR estimate of a scalar stream.

    Fits the complex amplitude by least squares against the Doppler-rotated
    reference and returns fitted signal power over residual power.
    """
    r = np.asarray(received).ravel()
    x = np.asarray(reference, dtype=complex).ravel() * _doppler_rotation(len(r), doppler, sample_period)
    amp = np.vdot(x, r) / np.vdot(x, x)
    residual = r - amp * x
    noise = np.mean(np.abs(residual) ** 2) * len(r) / (len(r) - 1)
    if noise == 0.0:
        return float("inf")
    return float(np.abs(amp) ** 2 * np.mean(np.abs(x) ** 2) / noise)


def qpsk_symbols(n: int, seed) -> np.ndarray:
    """Unit-power QPSK symbols."""
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 4, n)
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * bits))
