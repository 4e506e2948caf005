"""STAR-DCM coefficient profiles, phase codebooks and closed-form phase designs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .geometry import (
    ArrayGeometry,
    Direction,
    dcm_incident_response,
    round_trip_steering,
    steering_vector,
    wavevector,
    wrap_phase,
)


# --------------------------------------------------------------------------
# STAR mechanisms
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergySplitting:
    """Every element reflects a fraction ``lam`` of the incident power."""

    lam: float

    def __post_init__(self):
        if not (0.0 < self.lam <= 1.0):
            raise ValueError(f"energy-splitting lambda={self.lam!r} outside (0, 1]")


@dataclass(frozen=True)
class ModeSwitching:
    """Per-element choice of pure reflection (``True``) or pure transmission."""

    mask: tuple

    def __post_init__(self):
        object.__setattr__(self, "mask", tuple(bool(m) for m in self.mask))


@dataclass(frozen=True)
class TimeDivision:
    """Elements alternate between full transmission and full reflection in time."""

    reflect_fraction: float

    def __post_init__(self):
        if not (0.0 <= self.reflect_fraction <= 1.0):
            raise ValueError(f"reflect_fraction={self.reflect_fraction!r} outside [0, 1]")


@dataclass(frozen=True)
class PolarizationDivision:
    """``assignment[l]`` names the polarization ('h' or 'v') element l transmits on.

    The element reflects on the other polarization.
    """

    assignment: tuple

    def __post_init__(self):
        assignment = tuple(str(a) for a in self.assignment)
        bad = set(assignment) - {"h", "v"}
        if bad:
            raise ValueError(f"polarization assignment must use 'h'/'v', got {sorted(bad)}")
        object.__setattr__(self, "assignment", assignment)

    @classmethod
    def uniform(cls, n: int, transmit_pol: str = "v") -> "PolarizationDivision":
        return cls((transmit_pol,) * n)


@dataclass(frozen=True)
class FrequencyDivision:
    """Reflection at ``f_reflect`` and transmission at ``f_transmit``."""

    f_reflect: float
    f_transmit: float

    def __post_init__(self):
        if self.f_reflect <= 0 or self.f_transmit <= 0:
            raise ValueError("frequencies must be positive")
        if self.f_reflect == self.f_transmit:
            raise ValueError("frequency division needs distinct reflect/transmit frequencies")


StarMechanism = Union[EnergySplitting, ModeSwitching, TimeDivision, PolarizationDivision, FrequencyDivision]

MECHANISM_NAMES = {
    EnergySplitting: "energy_splitting",
    ModeSwitching: "mode_switching",
    TimeDivision: "time_division",
    PolarizationDivision: "polarization_division",
    FrequencyDivision: "frequency_division",
}


def mechanism_name(mechanism) -> str:
    return MECHANISM_NAMES[type(mechanism)]


# --------------------------------------------------------------------------
# Profiles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DcmProfile:
    """Per-element reflection and transmission coefficients of the DCM.

    ``gamma_r`` and ``gamma_t`` are the coefficients seen by the sensing
    (reflection) and communication (transmission) links. For the decoupled
    mechanisms they live in separate time intervals, polarizations or
    frequency registers; :meth:`registers` lists the coefficient pairs that
    share one conservation constraint.
    """

    gamma_r: np.ndarray
    gamma_t: np.ndarray
    loss_factor: float = 1.0
    mechanism: object = field(default=None)

    def __post_init__(self):
        gr = np.array(self.gamma_r, dtype=complex)
        gt = np.array(self.gamma_t, dtype=complex)
        if gr.shape != gt.shape or gr.ndim != 1:
            raise ValueError("gamma_r and gamma_t must be 1-D vectors of equal length")
        gr.setflags(write=False)
        gt.setflags(write=False)
        object.__setattr__(self, "gamma_r", gr)
        object.__setattr__(self, "gamma_t", gt)

    @property
    def size(self) -> int:
        return self.gamma_r.shape[0]

    def registers(self) -> list:
        """(gamma_t, gamma_r) pairs bound by |gamma_t|^2 + |gamma_r|^2 = loss_factor."""
        zero = np.zeros_like(self.gamma_r)
        mech = self.mechanism
        if isinstance(mech, (EnergySplitting, ModeSwitching)) or mech is None:
            return [(self.gamma_t, self.gamma_r)]
        if isinstance(mech, (TimeDivision, FrequencyDivision)):
            return [(self.gamma_t, zero), (zero, self.gamma_r)]
        if isinstance(mech, PolarizationDivision):
            tx_h = np.array([a == "h" for a in mech.assignment])
            h_pair = (np.where(tx_h, self.gamma_t, 0), np.where(tx_h, 0, self.gamma_r))
            v_pair = (np.where(tx_h, 0, self.gamma_t), np.where(tx_h, self.gamma_r, 0))
            return [h_pair, v_pair]
        raise TypeError(f"unknown mechanism {mech!r}")

    def power_residual(self) -> float:
        """Largest deviation from the power-conservation constraint over all registers."""
        worst = 0.0
        for gt, gr in self.registers():
            dev = np.abs(np.abs(gt) ** 2 + np.abs(gr) ** 2 - self.loss_factor)
            worst = max(worst, float(dev.max()))
        return worst


def build_profile(mechanism, reflect_phases, transmit_phases, loss_factor: float = 1.0) -> DcmProfile:
    """Assemble a :class:`DcmProfile` with magnitudes dictated by ``mechanism``.

    Energy splitting gives |gamma_R|^2 = lam * loss and |gamma_T|^2 = (1 - lam) *
    loss on every element; mode switching puts the full magnitude on the side
    selected by the mask; the time, polarization and frequency mechanisms use
    full magnitude on both sides, each in its own interval or register.
    """
    pr = np.asarray(reflect_phases, dtype=float)
    pt = np.asarray(transmit_phases, dtype=float)
    if pr.ndim != 1 or pr.shape != pt.shape:
        raise ValueError(f"phase vectors must have equal length, got {pr.shape} and {pt.shape}")
    if not (0.0 < loss_factor <= 1.0):
        raise ValueError(f"loss_factor={loss_factor!r} outside (0, 1]")
    n = pr.shape[0]
    full = np.sqrt(loss_factor)

    if isinstance(mechanism, EnergySplitting):
        mag_r = np.full(n, np.sqrt(mechanism.lam * loss_factor))
        mag_t = np.full(n, np.sqrt((1.0 - mechanism.lam) * loss_factor))
    elif isinstance(mechanism, ModeSwitching):
        if len(mechanism.mask) != n:
            raise ValueError(f"mode-switching mask has {len(mechanism.mask)} entries, expected {n}")
        mask = np.array(mechanism.mask)
        mag_r = np.where(mask, full, 0.0)
        mag_t = np.where(mask, 0.0, full)
    elif isinstance(mechanism, PolarizationDivision):
        if len(mechanism.assignment) != n:
            raise ValueError(f"polarization assignment has {len(mechanism.assignment)} entries, expected {n}")
        mag_r = mag_t = np.full(n, full)
    elif isinstance(mechanism, (TimeDivision, FrequencyDivision)):
        mag_r = mag_t = np.full(n, full)
    else:
        raise TypeError(f"unknown mechanism {mechanism!r}")

    return DcmProfile(mag_r * np.exp(1j * pr), mag_t * np.exp(1j * pt), loss_factor, mechanism)


def reflective_profile(reflect_phases, loss_factor: float = 1.0) -> DcmProfile:
    """Pure reflection (gamma_T = 0), used for the initial estimate."""
    return build_profile(EnergySplitting(1.0), reflect_phases, np.zeros(len(reflect_phases)), loss_factor)


def transmissive_profile(transmit_phases, loss_factor: float = 1.0) -> DcmProfile:
    """Pure transmission (gamma_R = 0) for the communication-only sub-slot."""
    n = len(transmit_phases)
    return build_profile(ModeSwitching((False,) * n), np.zeros(n), transmit_phases, loss_factor)


# --------------------------------------------------------------------------
# Codebooks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseCodebook:
    """Uniform b-bit phase alphabet {2 pi i / 2^b}."""

    bits: int

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < 1:
            raise ValueError(f"codebook bits must be a positive integer, got {self.bits!r}")
        object.__setattr__(self, "bits", int(self.bits))

    @property
    def size(self) -> int:
        return 2 ** self.bits

    @property
    def step(self) -> float:
        return 2.0 * np.pi / self.size

    @property
    def values(self) -> np.ndarray:
        return self.step * np.arange(self.size)


def _circular_distance(a, b):
    return np.abs(np.pi - np.mod(np.pi - (a - b), 2.0 * np.pi))


def phase_codes(phases, codebook: PhaseCodebook) -> np.ndarray:
    """Index of the nearest codebook phase; exact ties go to the smaller index."""
    phases = np.asarray(phases, dtype=float)
    dist = _circular_distance(phases[..., None], codebook.values)
    return np.argmin(dist, axis=-1)


def quantize_phase(phase, codebook: PhaseCodebook):
    """Snap ``phase`` (scalar or array) to the nearest codebook value."""
    q = codebook.values[phase_codes(phase, codebook)]
    return float(q) if np.ndim(q) == 0 else q


# --------------------------------------------------------------------------
# Phase designs and gains
# --------------------------------------------------------------------------


def design_reflection_phases(predicted: Direction, geometry: ArrayGeometry, lambda0: float) -> np.ndarray:
    """Phases -2 k(predicted)^T p_l that co-phase the monostatic return."""
    if geometry.role != "dcm":
        raise ValueError("reflection design needs the dcm geometry")
    return wrap_phase(-2.0 * (geometry.positions @ wavevector(predicted, lambda0)))


def design_transmission_phases(estimated: Direction, c_phases, geometry: ArrayGeometry, lambda0: float) -> np.ndarray:
    """Phases -k(estimated)^T p_l - angle(c_l) that co-phase the Comms Rx sum."""
    c_phases = np.asarray(c_phases, dtype=float)
    if c_phases.shape != (geometry.size,):
        raise ValueError(f"c_phases has shape {c_phases.shape}, expected ({geometry.size},)")
    return wrap_phase(-(geometry.positions @ wavevector(estimated, lambda0)) - c_phases)


def dcm_reflection_gain(true_dir: Direction, pred_dir: Direction, geometry: ArrayGeometry, lambda0: float) -> float:
    """|alpha(true)^H alpha(pred)|^2, at most L^2."""
    a_true = round_trip_steering(geometry, true_dir, lambda0)
    a_pred = round_trip_steering(geometry, pred_dir, lambda0)
    return float(np.abs(np.vdot(a_true, a_pred)) ** 2)


def scattering_pattern(profile: DcmProfile, incident: Direction, side: str, observation_grid,
                       geometry: ArrayGeometry, lambda0: float) -> np.ndarray:
    """Array-factor power |a_obs(d)^H Gamma a_inc|^2 over ``observation_grid``.

    The incident wave comes from the transceiver side at ``incident``.
    Reflection-side observation directions share the transceiver half-space;
    transmission-side directions are expressed in the mirrored frame in which
    ``d == incident`` is the undeflected continuation of the incident wave.
    """
    if side not in ("reflection", "transmission"):
        raise ValueError(f"side must be 'reflection' or 'transmission', got {side!r}")
    grid = list(observation_grid)
    if not grid:
        raise ValueError("observation grid is empty")
    gamma = profile.gamma_r if side == "reflection" else profile.gamma_t
    weighted = gamma * dcm_incident_response(geometry, incident, lambda0)
    obs = steering_vector if side == "reflection" else dcm_incident_response
    a_obs = np.array([obs(geometry, d, lambda0) for d in grid])
    return np.abs(a_obs.conj() @ weighted) ** 2


def steering_phases(target: Direction, incident: Direction, side: str, geometry: ArrayGeometry,
                    lambda0: float) -> np.ndarray:
    """Continuous phases that send a wave from ``incident`` toward ``target`` on ``side``."""
    k_inc = geometry.positions @ wavevector(incident, lambda0)
    k_obs = geometry.positions @ wavevector(target, lambda0)
    if side == "reflection":
        return wrap_phase(-(k_inc + k_obs))
    if side == "transmission":
        return wrap_phase(-(k_inc - k_obs))
    raise ValueError(f"side must be 'reflection' or 'transmission', got {side!r}")


# --------------------------------------------------------------------------
# Coding-matrix text format
# --------------------------------------------------------------------------

CODING_FORMAT_VERSION = 1


def write_coding_matrix(path, codes, bits: int, side: str, mechanism: str) -> None:
    """Write a phase-code matrix: one JSON header line, then one line per DCM row."""
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise ValueError("coding matrix must be 2-D (L_h x L_v)")
    if codes.min() < 0 or codes.max() >= 2 ** bits:
        raise ValueError(f"codes must lie in [0, {2 ** bits})")
    header = {"format": CODING_FORMAT_VERSION, "side": side, "mechanism": mechanism,
              "bits": int(bits), "rows": int(codes.shape[0]), "cols": int(codes.shape[1])}
    lines = [json.dumps(header, sort_keys=True)]
    lines += [" ".join(str(int(c)) for c in row) for row in codes]
    Path(path).write_text("\n".join(lines) + "\n")


def read_coding_matrix(path):
    """Inverse of :func:`write_coding_matrix`; returns ``(codes, header)``."""
    text = Path(path).read_text().splitlines()
    if not text:
        raise ValueError(f"{path}: empty coding-matrix file")
    try:
        header = json.loads(text[0])
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:1: bad header: {exc.msg}") from exc
    for key in ("side", "mechanism", "bits", "rows", "cols"):
        if key not in header:
            raise ValueError(f"{path}:1: header lacks {key!r}")
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        try:
            rows.append([int(tok) for tok in line.split()])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: non-integer code") from exc
    codes = np.array(rows, dtype=int)
    if codes.shape != (header["rows"], header["cols"]):
        raise ValueError(f"{path}: matrix shape {codes.shape} disagrees with header")
    if codes.min() < 0 or codes.max() >= 2 ** header["bits"]:
        raise ValueError(f"{path}: code outside [0, 2^{header['bits']})")
    return codes, header


def codes_to_phases(codes, codebook: PhaseCodebook) -> np.ndarray:
    return codebook.values[np.asarray(codes, dtype=int)]
