import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from starisac.geometry import Direction, round_trip_steering
from starisac.metasurface import (
    EnergySplitting,
    FrequencyDivision,
    ModeSwitching,
    PhaseCodebook,
    PolarizationDivision,
    TimeDivision,
    build_profile,
    codes_to_phases,
    dcm_reflection_gain,
    design_reflection_phases,
    design_transmission_phases,
    phase_codes,
    quantize_phase,
    read_coding_matrix,
    reflective_profile,
    scattering_pattern,
    steering_phases,
    transmissive_profile,
    write_coding_matrix,
)


def _mechanisms(n, rng):
    return [
        EnergySplitting(float(rng.uniform(0.01, 1.0))),
        ModeSwitching(tuple(bool(b) for b in rng.integers(0, 2, n))),
        TimeDivision(float(rng.uniform())),
        PolarizationDivision(tuple(rng.choice(["h", "v"], n))),
        FrequencyDivision(27e9, 29e9),
    ]


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.0))
def test_power_conservation_every_mechanism(seed, loss):
    rng = np.random.default_rng(seed)
    n = 9
    for mech in _mechanisms(n, rng):
        p = build_profile(mech, rng.uniform(0, 7, n), rng.uniform(0, 7, n), loss)
        assert p.power_residual() <= 1e-12


def test_mechanism_validation():
    with pytest.raises(ValueError):
        EnergySplitting(0.0)
    with pytest.raises(ValueError):
        TimeDivision(1.5)
    with pytest.raises(ValueError):
        PolarizationDivision(("h", "x"))
    with pytest.raises(ValueError):
        FrequencyDivision(28e9, 28e9)
    with pytest.raises(ValueError):
        build_profile(ModeSwitching((True,)), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        build_profile(EnergySplitting(0.5), np.zeros(2), np.zeros(2), loss_factor=1.2)


def test_energy_split_magnitudes():
    p = build_profile(EnergySplitting(0.3), np.zeros(4), np.ones(4), 0.8)
    # [TRIVIAL] |gamma_R|^2 = lam * loss, |gamma_T|^2 = (1 - lam) * loss
    np.testing.assert_allclose(np.abs(p.gamma_r) ** 2, 0.24)
    np.testing.assert_allclose(np.abs(p.gamma_t) ** 2, 0.56)
    assert np.all(reflective_profile(np.ones(4)).gamma_t == 0)
    assert np.all(transmissive_profile(np.ones(4)).gamma_r == 0)


def test_codebook_and_ties():
    cb = PhaseCodebook(2)
    np.testing.assert_allclose(cb.values, [0, np.pi / 2, np.pi, 3 * np.pi / 2])
    # [TRIVIAL] pi/4 is half-way between codes 0 and 1: smaller index wins
    assert phase_codes(np.pi / 4, cb) == 0
    assert phase_codes(7 * np.pi / 4, cb) == 0  # tie between 3 and 0 goes to 0
    assert quantize_phase(2 * np.pi - 1e-3, cb) == 0.0
    with pytest.raises(ValueError):
        PhaseCodebook(0)


@given(st.floats(-20, 20), st.integers(1, 6))
def test_quantization_error_bound(phase, bits):
    cb = PhaseCodebook(bits)
    q = quantize_phase(phase, cb)
    err = np.angle(np.exp(1j * (phase - q)))
    assert abs(err) <= cb.step / 2 + 1e-12


def test_matched_reflection_gain(dcm16, lambda0):
    d = Direction(0.5, 2.0)
    phases = design_reflection_phases(d, dcm16, lambda0)
    alpha = round_trip_steering(dcm16, d, lambda0)
    # [TRIVIAL] co-phased sum reaches L
    assert abs(np.sum(np.exp(1j * phases) / alpha)) == pytest.approx(256.0)
    assert dcm_reflection_gain(d, d, dcm16, lambda0) == pytest.approx(256.0 ** 2)
    assert dcm_reflection_gain(d, Direction(0.6, 2.0), dcm16, lambda0) < 256.0 ** 2


def test_transmission_design_cophases(dcm16, lambda0, rng):
    d = Direction(0.3, 0.7)
    c = rng.uniform(0.9, 1.1, 256) * np.exp(1j * rng.uniform(0, 2 * np.pi, 256))
    phases = design_transmission_phases(d, np.angle(c), dcm16, lambda0)
    a_in = np.exp(1j * dcm16.positions @ (2 * np.pi / lambda0 * np.array(
        [np.sin(0.3) * np.cos(0.7), np.sin(0.3) * np.sin(0.7), np.cos(0.3)])))
    total = np.sum(c * np.exp(1j * phases) * a_in)
    # [DERIVED] co-phasing makes the sum equal the sum of magnitudes
    assert abs(total) == pytest.approx(np.sum(np.abs(c)), rel=1e-12)


def test_scattering_pattern_peaks_on_design(dcm16, lambda0):
    inc = Direction(0.4, 1.0)
    target = Direction(0.7, 1.0)
    grid = [Direction(t, 1.0) for t in np.linspace(0, np.pi / 2, 181)]
    for side in ("reflection", "transmission"):
        ph = steering_phases(target, inc, side, dcm16, lambda0)
        p = build_profile(EnergySplitting(0.5), ph, ph)
        pat = scattering_pattern(p, inc, side, grid, dcm16, lambda0)
        assert grid[int(np.argmax(pat))].theta == pytest.approx(0.7, abs=np.pi / 360)
        assert pat.max() == pytest.approx(0.5 * 256 ** 2, rel=1e-3)
    with pytest.raises(ValueError):
        scattering_pattern(p, inc, "sideways", grid, dcm16, lambda0)


def test_coding_matrix_round_trip(tmp_path, rng):
    codes = rng.integers(0, 16, (4, 5))
    path = tmp_path / "coding.txt"
    write_coding_matrix(path, codes, 4, "reflection", "energy_splitting")
    back, header = read_coding_matrix(path)
    np.testing.assert_array_equal(back, codes)
    assert header["bits"] == 4 and header["side"] == "reflection"
    np.testing.assert_allclose(codes_to_phases(back, PhaseCodebook(4)), codes * np.pi / 8)


def test_coding_matrix_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text('{"side": "reflection", "mechanism": "x", "bits": 1, "rows": 1, "cols": 2}\n0 a\n')
    with pytest.raises(ValueError, match=":2:"):
        read_coding_matrix(p)
    with pytest.raises(ValueError):
        write_coding_matrix(p, np.array([[0, 4]]), 2, "reflection", "x")
