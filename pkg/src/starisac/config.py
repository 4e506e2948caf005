"""Scenario files: JSON schema, defaults and validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .channel import Arrays, LinkBudget, far_field_distance
from .geometry import SPEED_OF_LIGHT, ArrayGeometry, near_square_shape
from .tracking import KinematicTruth, PcrbProxy, ProcessNoise, observe_state

SCHEMA_VERSION = 1

ANGLE_KEYS = {"theta", "phi"}


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class SplitConfig:
    mode: str = "optimizer"
    resolution: float = 0.01
    rho: float = 0.1
    lam: float = 0.5


@dataclass(frozen=True)
class Scenario:
    f0: float
    n_tx: int
    n_rx: int
    l_h: int
    l_v: int
    bandwidth: float = 1.0e4
    tx_shape: tuple = None
    rx_shape: tuple = None
    array_spacing: float = 0.5
    dcm_spacing: float = 0.5
    mechanism: str = "energy_splitting"
    bits_reflect: int = 4
    bits_transmit: int = 4
    loss_factor: float = 1.0
    budget: LinkBudget = None
    c_spread: float = 0.1
    delta_t: float = 1.0e-2
    t_u: float = None
    proxy: PcrbProxy = PcrbProxy()
    target_position: tuple = (15.0, 8.0, 40.0)
    target_velocity: tuple = (-3.0, 4.0, -6.0)
    truth_accel_std: float = 0.0
    process_noise: ProcessNoise = ProcessNoise(2e-3, 2e-3, 0.05, 0.5)
    prior_std: tuple = (0.05, 0.05, 5.0, 5.0)
    init_gain_fraction: float = None
    split: SplitConfig = SplitConfig()
    fuse_prior: bool = True
    event_bound_factor: float = 0.5
    ideal_measurements: bool = False
    n_slots: int = 50
    trials: int = 1
    seed: int = 0
    signal_level: bool = False
    signal_samples: int = 4096
    patterns: bool = False
    pattern_points: int = 91
    far_field_factor: float = 10.0
    defaults_applied: tuple = field(default=(), compare=False)

    @property
    def lambda0(self) -> float:
        return SPEED_OF_LIGHT / self.f0

    @property
    def l(self) -> int:
        return self.l_h * self.l_v

    @property
    def slot_symbols(self) -> int:
        return int(np.floor(self.delta_t / self.t_u + 1e-9))

    @cached_property
    def arrays(self) -> Arrays:
        lam0 = self.lambda0
        tx = ArrayGeometry.planar(*self.tx_shape, self.array_spacing * lam0, role="comms-tx")
        rx = ArrayGeometry.planar(*self.rx_shape, self.array_spacing * lam0, role="sens-rx")
        dcm = ArrayGeometry.planar(self.l_h, self.l_v, self.dcm_spacing * lam0, role="dcm")
        return Arrays(tx, rx, dcm)

    @property
    def initial_truth(self) -> KinematicTruth:
        return KinematicTruth(np.array(self.target_position), np.array(self.target_velocity))

    @property
    def c_r(self) -> float:
        return self.budget.c_r(self.n_tx, self.n_rx, self.l)

    @property
    def c_t(self) -> float:
        return self.budget.c_t(self.n_tx, self.l)

    def with_changes(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        """Resolved scenario in the file schema (radians, full defaults)."""
        d = {
            "f0": self.f0, "bandwidth": self.bandwidth,
            "N": self.n_tx, "M": self.n_rx, "L_h": self.l_h, "L_v": self.l_v,
            "tx_shape": list(self.tx_shape), "rx_shape": list(self.rx_shape),
            "array_spacing": self.array_spacing, "dcm_spacing": self.dcm_spacing,
            "mechanism": self.mechanism, "bits_reflect": self.bits_reflect,
            "bits_transmit": self.bits_transmit, "loss_factor": self.loss_factor,
            "budget": {**asdict(self.budget), "c_spread": self.c_spread},
            "slot": {"delta_t": self.delta_t, "t_u": self.t_u},
            "pcrb": asdict(self.proxy),
            "target": {"position": list(self.target_position), "velocity": list(self.target_velocity)},
            "truth_accel_std": self.truth_accel_std,
            "process_noise": asdict(self.process_noise),
            "prior_std": dict(zip(("theta", "phi", "d", "v"), self.prior_std)),
            "init_gain_fraction": self.init_gain_fraction,
            "split": ({"mode": "fixed", "rho": self.split.rho, "lambda": self.split.lam}
                      if self.split.mode == "fixed" else
                      {"mode": "optimizer", "resolution": self.split.resolution}),
            "fuse_prior": self.fuse_prior, "event_bound_factor": self.event_bound_factor,
            "ideal_measurements": self.ideal_measurements,
            "n_slots": self.n_slots, "trials": self.trials, "seed": self.seed,
            "signal_level": self.signal_level, "signal_samples": self.signal_samples,
            "patterns": self.patterns, "pattern_points": self.pattern_points,
            "far_field_factor": self.far_field_factor,
        }
        return d


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

TOP_LEVEL = {
    "f0", "bandwidth", "N", "M", "L_h", "L_v", "tx_shape", "rx_shape", "array_spacing",
    "dcm_spacing", "mechanism", "bits_reflect", "bits_transmit", "loss_factor", "budget", "slot",
    "pcrb", "target", "truth_accel_std", "process_noise", "prior_std", "init_gain_fraction",
    "split", "fuse_prior", "event_bound_factor", "ideal_measurements", "n_slots", "trials", "seed",
    "signal_level", "signal_samples", "patterns", "pattern_points", "far_field_factor",
}
REQUIRED = ("f0", "N", "M", "L_h", "L_v")

DEFAULT_SIGMA2 = 1.0e-13
DEFAULT_C_R_DB = 60.0
DEFAULT_C_T_DB = 30.0


def _convert_degrees(group: dict, where: str) -> dict:
    """Replace ``<angle>_deg`` keys by radians under ``<angle>``."""
    out = {}
    for key, value in group.items():
        if key.endswith("_deg"):
            base = key[:-4]
            if base not in ANGLE_KEYS:
                raise ScenarioError(f"{where}.{key}", "degree suffix is only accepted on theta/phi")
            if base in group:
                raise ScenarioError(f"{where}.{key}", f"given together with {base!r}")
            out[base] = float(np.deg2rad(_number(value, f"{where}.{key}")))
        else:
            out[key] = value
    return out


def _number(value, name, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(name, f"expected a number, got {value!r}")
    if not np.isfinite(value):
        raise ScenarioError(name, "must be finite")
    if integer and int(value) != value:
        raise ScenarioError(name, f"expected an integer, got {value!r}")
    if positive and not value > 0:
        raise ScenarioError(name, f"must be positive, got {value!r}")
    if nonneg and value < 0:
        raise ScenarioError(name, f"must be non-negative, got {value!r}")
    return int(value) if integer else float(value)


def _group(raw: dict, key: str, allowed: set) -> dict:
    group = raw.get(key, {})
    if not isinstance(group, dict):
        raise ScenarioError(key, "expected an object")
    unknown = set(group) - allowed - {f"{a}_deg" for a in allowed & ANGLE_KEYS}
    if unknown:
        raise ScenarioError(f"{key}.{sorted(unknown)[0]}", "unknown field")
    return _convert_degrees(group, key)


def _flag(raw, key, default):
    value = raw.get(key, default)
    if not isinstance(value, bool):
        raise ScenarioError(key, f"expected true/false, got {value!r}")
    return value


def _shape(raw, key, n):
    if key not in raw:
        return near_square_shape(n)
    value = raw[key]
    if not (isinstance(value, list) and len(value) == 2):
        raise ScenarioError(key, "expected [rows, cols]")
    rows, cols = (_number(v, key, positive=True, integer=True) for v in value)
    if rows * cols != n:
        raise ScenarioError(key, f"{rows} x {cols} does not hold {n} elements")
    return (rows, cols)


def scenario_from_dict(raw: dict) -> Scenario:
    """Validate a parsed scenario document and fill defaults."""
    if not isinstance(raw, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    unknown = set(raw) - TOP_LEVEL
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown field")
    for key in REQUIRED:
        if key not in raw:
            raise ScenarioError(key, "required field missing")
    defaults = sorted(TOP_LEVEL - set(raw))

    f0 = _number(raw["f0"], "f0", positive=True)
    n_tx = _number(raw["N"], "N", positive=True, integer=True)
    n_rx = _number(raw["M"], "M", positive=True, integer=True)
    l_h = _number(raw["L_h"], "L_h", positive=True, integer=True)
    l_v = _number(raw["L_v"], "L_v", positive=True, integer=True)
    l = l_h * l_v

    slot = _group(raw, "slot", {"delta_t", "t_u"})
    bandwidth = _number(raw.get("bandwidth", 1.0e4), "bandwidth", positive=True)
    if bandwidth >= f0 / 10.0:
        raise ScenarioError("bandwidth", f"narrowband constraint B < f0/10 violated ({bandwidth:.4g} >= {f0 / 10:.4g})")
    delta_t = _number(slot.get("delta_t", 1.0e-2), "slot.delta_t", positive=True)
    t_u = _number(slot.get("t_u", 1.0 / bandwidth), "slot.t_u", positive=True)
    if delta_t < t_u:
        raise ScenarioError("slot.delta_t", "slot shorter than one symbol")

    mechanism = raw.get("mechanism", "energy_splitting")
    if mechanism != "energy_splitting":
        raise ScenarioError("mechanism", "the ISAC loop optimizes the energy-splitting mechanism only")
    bits_r = _number(raw.get("bits_reflect", 4), "bits_reflect", integer=True)
    bits_t = _number(raw.get("bits_transmit", 4), "bits_transmit", integer=True)
    for name, bits in (("bits_reflect", bits_r), ("bits_transmit", bits_t)):
        if bits < 1:
            raise ScenarioError(name, "codebook must hold at least two phases (bits >= 1)")
    loss = _number(raw.get("loss_factor", 1.0), "loss_factor", positive=True)
    if loss > 1.0:
        raise ScenarioError("loss_factor", "must lie in (0, 1]")

    b = _group(raw, "budget", {"p_r", "p_t", "sigma2_wr", "sigma2_wt", "mu_c", "c_spread", "c_r_db", "c_t_db"})
    sigma2_wr = _number(b.get("sigma2_wr", DEFAULT_SIGMA2), "budget.sigma2_wr", positive=True)
    sigma2_wt = _number(b.get("sigma2_wt", DEFAULT_SIGMA2), "budget.sigma2_wt", positive=True)
    mu_c = _number(b.get("mu_c", 1.0), "budget.mu_c", positive=True)
    if "p_r" in b and "c_r_db" in b:
        raise ScenarioError("budget.c_r_db", "give either p_r or c_r_db")
    if "p_t" in b and "c_t_db" in b:
        raise ScenarioError("budget.c_t_db", "give either p_t or c_t_db")
    if "p_r" in b:
        p_r = _number(b["p_r"], "budget.p_r", positive=True)
    else:
        c_r = 10 ** (_number(b.get("c_r_db", DEFAULT_C_R_DB), "budget.c_r_db") / 10)
        p_r = c_r * sigma2_wr / (n_tx * n_rx * l ** 2)
    if "p_t" in b:
        p_t = _number(b["p_t"], "budget.p_t", positive=True)
    else:
        c_t = 10 ** (_number(b.get("c_t_db", DEFAULT_C_T_DB), "budget.c_t_db") / 10)
        p_t = c_t * sigma2_wt / (mu_c ** 2 * n_tx * l ** 2)
    budget = LinkBudget(p_r, p_t, sigma2_wr, sigma2_wt, mu_c)
    c_spread = _number(b.get("c_spread", 0.1), "budget.c_spread", nonneg=True)
    if c_spread >= 1.0:
        raise ScenarioError("budget.c_spread", "must lie in [0, 1)")

    pc = _group(raw, "pcrb", {"kappa_theta", "kappa_phi", "kappa_d", "kappa_v"})
    proxy = PcrbProxy(**{k: _number(v, f"pcrb.{k}", positive=True) for k, v in pc.items()})

    tg = _group(raw, "target", {"position", "velocity", "theta", "phi", "d"})
    if "position" in tg and ({"theta", "phi", "d"} & set(tg)):
        raise ScenarioError("target.position", "give either a position or (theta, phi, d)")
    velocity = tg.get("velocity", list(Scenario.target_velocity))
    if not (isinstance(velocity, list) and len(velocity) == 3):
        raise ScenarioError("target.velocity", "expected a 3-vector")
    velocity = tuple(_number(v, "target.velocity") for v in velocity)
    if {"theta", "phi", "d"} & set(tg):
        theta = _number(tg.get("theta", 0.5), "target.theta")
        phi = _number(tg.get("phi", 0.0), "target.phi")
        d = _number(tg.get("d", 50.0), "target.d", positive=True)
        position = tuple(KinematicTruth.from_polar(theta, phi, d, velocity).position.tolist())
    else:
        position = tg.get("position", list(Scenario.target_position))
        if not (isinstance(position, list) and len(position) == 3):
            raise ScenarioError("target.position", "expected a 3-vector")
        position = tuple(_number(v, "target.position") for v in position)

    pn = _group(raw, "process_noise", {"theta", "phi", "d", "v"})
    process_noise = replace(Scenario.process_noise,
                            **{k: _number(v, f"process_noise.{k}", nonneg=True) for k, v in pn.items()})
    ps = _group(raw, "prior_std", {"theta", "phi", "d", "v"})
    prior_std = dict(zip(("theta", "phi", "d", "v"), Scenario.prior_std))
    prior_std.update({k: _number(v, f"prior_std.{k}", positive=True) for k, v in ps.items()})

    sp = _group(raw, "split", {"mode", "resolution", "rho", "lambda"})
    mode = sp.get("mode", "optimizer")
    if mode not in ("fixed", "optimizer"):
        raise ScenarioError("split.mode", f"expected 'fixed' or 'optimizer', got {mode!r}")
    if mode == "fixed":
        if set(sp) - {"mode", "rho", "lambda"}:
            raise ScenarioError("split.resolution", "only used in optimizer mode")
        rho = _number(sp.get("rho", 0.1), "split.rho")
        lam = _number(sp.get("lambda", 0.5), "split.lambda")
        if not 0 < rho <= 1:
            raise ScenarioError("split.rho", f"{rho!r} outside (0, 1]")
        if not 0 < lam <= 1:
            raise ScenarioError("split.lambda", f"{lam!r} outside (0, 1]")
        split = SplitConfig("fixed", rho=rho, lam=lam)
    else:
        if set(sp) - {"mode", "resolution"}:
            raise ScenarioError("split.rho" if "rho" in sp else "split.lambda", "only used in fixed mode")
        res = _number(sp.get("resolution", 0.01), "split.resolution")
        if not 0 < res <= 0.5:
            raise ScenarioError("split.resolution", f"{res!r} outside (0, 0.5]")
        split = SplitConfig("optimizer", resolution=res)

    init_gain = raw.get("init_gain_fraction")
    if init_gain is not None:
        init_gain = _number(init_gain, "init_gain_fraction", positive=True)
        if init_gain > 1:
            raise ScenarioError("init_gain_fraction", "must lie in (0, 1]")
    else:
        init_gain = 1.0 / l

    bound_factor = _number(raw.get("event_bound_factor", 0.5), "event_bound_factor", positive=True)

    scenario = Scenario(
        f0=f0, n_tx=n_tx, n_rx=n_rx, l_h=l_h, l_v=l_v, bandwidth=bandwidth,
        tx_shape=_shape(raw, "tx_shape", n_tx), rx_shape=_shape(raw, "rx_shape", n_rx),
        array_spacing=_number(raw.get("array_spacing", 0.5), "array_spacing", positive=True),
        dcm_spacing=_number(raw.get("dcm_spacing", 0.5), "dcm_spacing", positive=True),
        mechanism=mechanism, bits_reflect=bits_r, bits_transmit=bits_t, loss_factor=loss,
        budget=budget, c_spread=c_spread, delta_t=delta_t, t_u=t_u, proxy=proxy,
        target_position=position, target_velocity=velocity,
        truth_accel_std=_number(raw.get("truth_accel_std", 0.0), "truth_accel_std", nonneg=True),
        process_noise=process_noise, prior_std=tuple(prior_std[k] for k in ("theta", "phi", "d", "v")),
        init_gain_fraction=init_gain, split=split,
        fuse_prior=_flag(raw, "fuse_prior", True), event_bound_factor=bound_factor,
        ideal_measurements=_flag(raw, "ideal_measurements", False),
        n_slots=_number(raw.get("n_slots", 50), "n_slots", positive=True, integer=True),
        trials=_number(raw.get("trials", 1), "trials", positive=True, integer=True),
        seed=_number(raw.get("seed", 0), "seed", nonneg=True, integer=True),
        signal_level=_flag(raw, "signal_level", False),
        signal_samples=_number(raw.get("signal_samples", 4096), "signal_samples", positive=True, integer=True),
        patterns=_flag(raw, "patterns", False),
        pattern_points=_number(raw.get("pattern_points", 91), "pattern_points", positive=True, integer=True),
        far_field_factor=_number(raw.get("far_field_factor", 10.0), "far_field_factor", positive=True),
        defaults_applied=tuple(defaults),
    )
    _check_target(scenario)
    return scenario


def _check_target(s: Scenario) -> None:
    state = observe_state(s.initial_truth)
    if not 0.0 < state.theta < np.pi / 2:
        raise ScenarioError("target", f"initial polar angle {state.theta:.4g} rad outside the covered half-space")
    bound = far_field_distance(s.arrays, s.far_field_factor)
    if state.d < bound:
        raise ScenarioError("target", f"far-field violation: d={state.d:.4g} m < {bound:.4g} m")


def load_scenario(path) -> Scenario:
    """Read and validate a scenario JSON file."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from exc
    return scenario_from_dict(raw)
