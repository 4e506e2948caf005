"""The slot-structured sensing-assisted beam tracking loop."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .channel import (
    array_gain,
    comm_rate,
    comms_rx_gain,
    empirical_snr,
    far_field_distance,
    qpsk_symbols,
    realize_channel,
    sensing_snr,
    synthesize_comm_block,
    synthesize_sensing_block,
)
from .config import Scenario
from .geometry import (
    ArrayGeometry,
    Direction,
    dcm_incident_response,
    effective_hpbw,
    steering_vector,
)
from .metasurface import (
    DcmProfile,
    EnergySplitting,
    PhaseCodebook,
    build_profile,
    codes_to_phases,
    design_reflection_phases,
    design_transmission_phases,
    phase_codes,
    reflective_profile,
    scattering_pattern,
    transmissive_profile,
)
from .optimizer import AverageBudget, SensingModel, optimize_split, snap_rho
from .tracking import (
    StateEstimate,
    TargetState,
    ekf_update,
    event_probability,
    initial_estimate,
    measurement_noise,
    noisy_measurement,
    observe_state,
    predict_state,
    propagate_truth,
    state_error,
)

SLOTS_SCHEMA_VERSION = 1

# purpose codes of the per-slot random streams
STREAM_C, STREAM_INIT, STREAM_MEAS, STREAM_TRUTH, STREAM_SENS_NOISE, STREAM_COMM_NOISE, STREAM_SYMBOLS = range(7)

# below this sensing SNR the reflected return carries no usable measurement
MIN_SENSING_SNR = 1e-12


class SimulationError(RuntimeError):
    """A slot failed; the message carries the trial and slot index."""


def stream(master_seed: int, trial: int, slot: int, purpose: int) -> np.random.Generator:
    """Independent generator keyed by (master seed, trial, slot, purpose)."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, trial, slot, purpose]))


def trial_seed(master_seed: int, trial: int) -> int:
    """64-bit digest of (master seed, trial) recorded in run manifests."""
    return int(np.random.SeedSequence([master_seed, trial]).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SlotPlan:
    delta_t: float
    t_u: float
    i_isac: int
    i_c: int

    def __post_init__(self):
        if self.i_isac < 1 or self.i_c < 0:
            raise ValueError("i_isac must be >= 1 and i_c >= 0")
        if (self.i_isac + self.i_c) * self.t_u > self.delta_t + self.t_u:
            raise ValueError("sub-slots overflow the slot")

    @property
    def rho(self) -> float:
        return self.i_isac * self.t_u / self.delta_t

    @classmethod
    def from_rho(cls, rho: float, delta_t: float, t_u: float) -> "SlotPlan":
        i_isac, i_c, _ = snap_rho(rho, delta_t, t_u)
        return cls(delta_t, t_u, i_isac, i_c)


@dataclass(frozen=True)
class BeamformerPair:
    b: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class SlotMetrics:
    trial: int
    slot: int
    rho: float
    lam: float
    i_isac: int
    i_c: int
    p_a1: float
    p_a2: float
    snr_subslot1: float
    rate_subslot1: float
    rate_subslot2: float
    sum_rate: float
    genie_rate: float
    gain_tx1: float
    gain_rx1: float
    gain_dcm1: float
    gain_comms_rx1: float
    gain_tx2: float
    gain_comms_rx2: float
    pred_err_theta: float
    pred_err_phi: float
    pred_err_d: float
    pred_err_v: float
    fine_err_theta: float
    fine_err_phi: float
    fine_err_d: float
    fine_err_v: float
    fine_std_theta: float
    fine_std_phi: float

    @classmethod
    def columns(cls) -> list:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        """CSV cells; floats use repr so the text round-trips exactly."""
        return [repr(v) if isinstance(v, float) else str(v) for v in asdict(self).values()]


@dataclass
class SlotOutcome:
    posterior: StateEstimate
    metrics: SlotMetrics
    profile_subslot1: DcmProfile
    profile_subslot2: DcmProfile
    codes: dict
    pattern: np.ndarray = None


@dataclass
class CampaignResult:
    trial: int
    metrics: list
    initial: StateEstimate
    init_logs: dict
    terminated: str = None
    outcomes: list = None


# --------------------------------------------------------------------------


def beamformer_from_direction(d: Direction, geometry: ArrayGeometry, lambda0: float) -> np.ndarray:
    """Matched-filter beamformer: the steering vector scaled to unit norm."""
    a = steering_vector(geometry, d, lambda0)
    return a / np.linalg.norm(a)


def pointing_direction(state: TargetState) -> Direction:
    """Direction a beam is steered to; polar angles past endfire are held at pi/2."""
    d = state.direction
    return d if d.theta <= np.pi / 2 else Direction(np.pi / 2, d.phi)


def _dcm_sensing_gain(profile: DcmProfile, scenario: Scenario, true_dir: Direction) -> float:
    """|sum_l gamma_R,l a_in,l^2|^2: the DCM term of the monostatic cascade (includes lam)."""
    a_in = dcm_incident_response(scenario.arrays.dcm, true_dir, scenario.lambda0)
    return float(np.abs(np.sum(profile.gamma_r * a_in ** 2)) ** 2)


def _hpbw(scenario: Scenario) -> tuple:
    a = scenario.arrays
    return effective_hpbw((a.tx, a.rx, a.dcm), scenario.lambda0)


def genie_rate(scenario: Scenario, c) -> float:
    """log2(1 + P_T (sum |c_l|)^2 N / sigma2_wT): true direction, lossless, fully transmissive."""
    b = scenario.budget
    return float(np.log2(1.0 + scenario.loss_factor * b.p_t * np.sum(np.abs(c)) ** 2 * scenario.n_tx / b.sigma2_wt))


def _codebooks(scenario: Scenario):
    return PhaseCodebook(scenario.bits_reflect), PhaseCodebook(scenario.bits_transmit)


def initialize_run(scenario: Scenario, rng=None, truth: TargetState = None):
    """Slot-0 training with the DCM fully reflective.

    The whole slot feeds the initial estimate, whose SNR is C_R times
    ``init_gain_fraction`` (the training beams are not yet aligned).
    ``rng=None`` or ``scenario.ideal_measurements`` gives a noise-free start.
    """
    if truth is None:
        truth = observe_state(scenario.initial_truth)
    n = scenario.l
    profile = reflective_profile(np.zeros(n), scenario.loss_factor)
    snr0 = scenario.c_r * scenario.init_gain_fraction
    prior_cov = np.diag(np.square(scenario.prior_std))
    if scenario.ideal_measurements:
        meas_cov = np.zeros((4, 4))
        rng = None
    else:
        meas_cov = measurement_noise(scenario.proxy, scenario.slot_symbols, snr0)
    estimate = initial_estimate(truth, prior_cov, meas_cov, rng)
    logs = {"snr": snr0, "i_isac": scenario.slot_symbols, "gamma_t": profile.gamma_t,
            "gamma_r": profile.gamma_r, "truth": truth}
    return estimate, logs


def choose_split(scenario: Scenario, predicted: StateEstimate, p_a1: float):
    """(rho, lam) for the slot: fixed from the scenario or from the grid search."""
    if scenario.split.mode == "fixed":
        return scenario.split.rho, scenario.split.lam
    model = SensingModel(
        hpbw_effective=_hpbw(scenario), proxy=scenario.proxy, slot_symbols=scenario.slot_symbols,
        bound_factor=scenario.event_bound_factor, fuse_prior=scenario.fuse_prior,
        prior_stds=predicted.angle_stds,
    )
    decision = optimize_split(AverageBudget(scenario.c_r, scenario.c_t, p_a1), scenario.split.resolution, model)
    return decision.rho, decision.lam


def run_slot(k: int, prior: StateEstimate, truth: TargetState, plan: SlotPlan, lambda_k: float,
             scenario: Scenario, c_seed, rng=None, trial: int = 0, master_seed: int = 0,
             predicted: StateEstimate = None, p_a1: float = None) -> SlotOutcome:
    """One slot: prediction, joint sub-slot 1, EKF fusion and communication sub-slot 2.

    ``rng`` drives the measurement noise; ``c_seed`` fixes the in-vehicle
    channel. ``predicted`` may be passed when the caller already ran the
    time update (it then must come from ``prior``).
    """
    if not 0.0 < lambda_k <= 1.0:
        raise ValueError(f"lambda={lambda_k!r} outside (0, 1]")
    lam0 = scenario.lambda0
    arrays = scenario.arrays
    budget = scenario.budget
    hpbw = _hpbw(scenario)
    cb_r, cb_t = _codebooks(scenario)

    if predicted is None:
        predicted = predict_state(prior, scenario.delta_t, scenario.process_noise)
    if p_a1 is None:
        p_a1 = event_probability(predicted.angle_stds, hpbw, scenario.event_bound_factor)

    ch = realize_channel(truth, budget, arrays, lam0, c_seed, scenario.c_spread, scenario.far_field_factor)
    true_dir = truth.direction
    c_phases = np.angle(ch.c)

    # sub-slot 1: beams and DCM designed on the prediction
    pred_dir = pointing_direction(predicted.mean)
    beams = BeamformerPair(beamformer_from_direction(pred_dir, arrays.tx, lam0),
                           beamformer_from_direction(pred_dir, arrays.rx, lam0))
    codes_r = phase_codes(design_reflection_phases(pred_dir, arrays.dcm, lam0), cb_r)
    codes_t1 = phase_codes(design_transmission_phases(pred_dir, c_phases, arrays.dcm, lam0), cb_t)
    profile1 = build_profile(EnergySplitting(lambda_k), codes_to_phases(codes_r, cb_r),
                             codes_to_phases(codes_t1, cb_t), scenario.loss_factor)

    a_tx = steering_vector(arrays.tx, true_dir, lam0)
    a_rx = steering_vector(arrays.rx, true_dir, lam0)
    g_tx1 = array_gain(beams.b, a_tx)
    g_rx1 = array_gain(beams.v, a_rx)
    g_dcm1 = _dcm_sensing_gain(profile1, scenario, true_dir)
    g_crx1 = comms_rx_gain(ch.c, profile1.gamma_t, arrays, true_dir, lam0)
    snr1 = sensing_snr(budget, g_tx1, g_rx1, g_dcm1 / lambda_k, lambda_k,
                       sizes=(scenario.n_tx, scenario.n_rx, scenario.l))
    rate1 = comm_rate(budget, g_crx1, g_tx1)

    if scenario.signal_level:
        snr1, rate1 = _signal_level(scenario, ch, profile1, beams, plan, master_seed, trial, k)

    # fine estimation
    if scenario.ideal_measurements:
        meas_cov = np.zeros((4, 4))
        measurement = truth
    elif snr1 > MIN_SENSING_SNR:
        meas_cov = measurement_noise(scenario.proxy, plan.i_isac, snr1)
        measurement = noisy_measurement(truth, np.sqrt(np.diag(meas_cov)), rng)
    else:
        meas_cov = np.diag(np.full(4, np.inf))
        measurement = truth
    posterior = ekf_update(predicted, measurement, meas_cov)

    # sub-slot 2: DCM fully transmissive, beam re-pointed on the fine estimate
    fine_dir = pointing_direction(posterior.mean)
    b2 = beamformer_from_direction(fine_dir, arrays.tx, lam0)
    codes_t2 = phase_codes(design_transmission_phases(fine_dir, c_phases, arrays.dcm, lam0), cb_t)
    profile2 = transmissive_profile(codes_to_phases(codes_t2, cb_t), scenario.loss_factor)
    g_tx2 = array_gain(b2, a_tx)
    g_crx2 = comms_rx_gain(ch.c, profile2.gamma_t, arrays, true_dir, lam0)
    rate2 = comm_rate(budget, g_crx2, g_tx2)

    rho = plan.rho
    pred_err = state_error(predicted.mean, truth)
    fine_err = state_error(posterior.mean, truth)
    fine_std = posterior.angle_stds
    metrics = SlotMetrics(
        trial=trial, slot=k, rho=float(rho), lam=float(lambda_k), i_isac=plan.i_isac, i_c=plan.i_c,
        p_a1=float(p_a1),
        p_a2=float(event_probability(fine_std, hpbw, scenario.event_bound_factor)),
        snr_subslot1=float(snr1), rate_subslot1=float(rate1), rate_subslot2=float(rate2),
        sum_rate=float(rho * rate1 + (1.0 - rho) * rate2), genie_rate=genie_rate(scenario, ch.c),
        gain_tx1=g_tx1, gain_rx1=g_rx1, gain_dcm1=g_dcm1, gain_comms_rx1=g_crx1,
        gain_tx2=g_tx2, gain_comms_rx2=g_crx2,
        pred_err_theta=float(pred_err[0]), pred_err_phi=float(pred_err[1]),
        pred_err_d=float(pred_err[2]), pred_err_v=float(pred_err[3]),
        fine_err_theta=float(fine_err[0]), fine_err_phi=float(fine_err[1]),
        fine_err_d=float(fine_err[2]), fine_err_v=float(fine_err[3]),
        fine_std_theta=fine_std[0], fine_std_phi=fine_std[1],
    )
    pattern = _pattern(scenario, profile1, pred_dir) if scenario.patterns else None
    codes = {"reflection": codes_r, "transmission_subslot1": codes_t1, "transmission_subslot2": codes_t2}
    return SlotOutcome(posterior, metrics, profile1, profile2, codes, pattern)


def _signal_level(scenario, ch, profile, beams, plan, master_seed, trial, k):
    """Empirical sub-slot-1 sensing SNR and rate from synthesized samples."""
    n = max(plan.i_isac, scenario.signal_samples)
    symbols = qpsk_symbols(n, np.random.SeedSequence([master_seed, trial, k, STREAM_SYMBOLS]))
    sens = synthesize_sensing_block(ch, profile, (beams.b, beams.v), symbols,
                                    np.random.SeedSequence([master_seed, trial, k, STREAM_SENS_NOISE]),
                                    scenario.budget.sigma2_wr, scenario.t_u)
    snr = empirical_snr(sens.combined, symbols, ch.doppler_r, scenario.t_u)
    comm = synthesize_comm_block(ch, profile, beams.b, symbols,
                                 np.random.SeedSequence([master_seed, trial, k, STREAM_COMM_NOISE]),
                                 scenario.budget.sigma2_wt, scenario.t_u)
    comm_snr_hat = empirical_snr(comm.combined, symbols, ch.doppler_t, scenario.t_u)
    return snr, float(np.log2(1.0 + comm_snr_hat))


def pattern_grid(scenario: Scenario, phi: float):
    thetas = np.linspace(0.0, np.pi / 2, scenario.pattern_points)
    return thetas, [Direction(t, phi) for t in thetas]


def _pattern(scenario: Scenario, profile: DcmProfile, incident: Direction) -> np.ndarray:
    """Columns theta, reflection power, transmission power along the incident azimuth."""
    thetas, grid = pattern_grid(scenario, incident.phi)
    dcm = scenario.arrays.dcm
    refl = scattering_pattern(profile, incident, "reflection", grid, dcm, scenario.lambda0)
    trans = scattering_pattern(profile, incident, "transmission", grid, dcm, scenario.lambda0)
    return np.column_stack([thetas, refl, trans])


def _coverage_problem(scenario: Scenario, truth: TargetState) -> str:
    if not 0.0 < truth.theta < np.pi / 2:
        return f"target left coverage: theta={truth.theta:.6g} rad"
    bound = far_field_distance(scenario.arrays, scenario.far_field_factor)
    if truth.d < bound:
        return f"target entered the near field: d={truth.d:.6g} m < {bound:.6g} m"
    return None


def run_campaign(scenario: Scenario, n_slots: int = None, master_seed: int = None, trial: int = 0,
                 keep_outcomes: bool = False) -> CampaignResult:
    """Initialization followed by ``n_slots`` sequential slots of one trial.

    All randomness is drawn from streams keyed by (master seed, trial, slot,
    purpose), so results do not depend on how trials are scheduled.
    """
    n_slots = scenario.n_slots if n_slots is None else n_slots
    master_seed = scenario.seed if master_seed is None else master_seed
    if n_slots < 1:
        raise ValueError("n_slots must be at least 1")

    kin = scenario.initial_truth
    init_rng = None if scenario.ideal_measurements else stream(master_seed, trial, 0, STREAM_INIT)
    estimate, init_logs = initialize_run(scenario, init_rng, observe_state(kin))
    initial = estimate
    c_seed = np.random.SeedSequence([master_seed, trial, 0, STREAM_C])

    metrics, outcomes = [], []
    reason = None
    for k in range(1, n_slots + 1):
        truth_rng = stream(master_seed, trial, k, STREAM_TRUTH) if scenario.truth_accel_std > 0 else None
        try:
            kin = propagate_truth(kin, scenario.delta_t, scenario.truth_accel_std, truth_rng)
        except ValueError as exc:
            reason = f"target reached the transceiver: {exc}"
            break
        truth = observe_state(kin)
        reason = _coverage_problem(scenario, truth)
        if reason:
            break
        try:
            predicted = predict_state(estimate, scenario.delta_t, scenario.process_noise)
        except ValueError as exc:
            reason = str(exc)
            break
        p_a1 = event_probability(predicted.angle_stds, _hpbw(scenario), scenario.event_bound_factor)
        rho, lam = choose_split(scenario, predicted, p_a1)
        plan = SlotPlan.from_rho(rho, scenario.delta_t, scenario.t_u)
        try:
            outcome = run_slot(k, estimate, truth, plan, lam, scenario, c_seed,
                               rng=stream(master_seed, trial, k, STREAM_MEAS), trial=trial,
                               master_seed=master_seed, predicted=predicted, p_a1=p_a1)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SimulationError(f"trial {trial}, slot {k}: {exc}") from exc
        estimate = outcome.posterior
        metrics.append(outcome.metrics)
        if keep_outcomes or scenario.patterns:
            outcomes.append(outcome)
    return CampaignResult(trial=trial, metrics=metrics, initial=initial, init_logs=init_logs,
                          terminated=reason, outcomes=outcomes)


def summarize(results: list) -> dict:
    """Means and standard deviations of the per-trial averages."""
    rows = [m for r in results for m in r.metrics]
    out = {"trials": len(results), "slots": len(rows),
           "terminated": {str(r.trial): r.terminated for r in results if r.terminated}}
    if not rows:
        return out
    per_trial = {}
    for name in ("snr_subslot1", "rate_subslot1", "rate_subslot2", "sum_rate", "genie_rate", "rho", "lam",
                 "p_a1", "p_a2"):
        vals = np.array([np.mean([getattr(m, name) for m in r.metrics]) for r in results if r.metrics])
        per_trial[name] = vals
    for axis in ("theta", "phi"):
        vals = np.array([np.sqrt(np.mean([getattr(m, f"fine_err_{axis}") ** 2 for m in r.metrics]))
                         for r in results if r.metrics])
        per_trial[f"rmse_{axis}"] = vals
    for name, vals in per_trial.items():
        out[f"mean_{name}"] = float(np.mean(vals))
        out[f"std_{name}"] = float(np.std(vals))
    all_theta = np.array([m.fine_err_theta for m in rows])
    all_phi = np.array([m.fine_err_phi for m in rows])
    out["rmse_theta"] = float(np.sqrt(np.mean(all_theta ** 2)))
    out["rmse_phi"] = float(np.sqrt(np.mean(all_phi ** 2)))
    out["sum_rate_over_genie"] = float(np.mean([m.sum_rate for m in rows]) / np.mean([m.genie_rate for m in rows]))
    return out
