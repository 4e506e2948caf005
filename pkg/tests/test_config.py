import json

import numpy as np
import pytest

from starisac.config import ScenarioError, load_scenario, scenario_from_dict

MIN = {"f0": 28e9, "N": 16, "M": 16, "L_h": 16, "L_v": 16}


def test_minimal_file_gets_defaults(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(MIN))
    s = load_scenario(path)
    assert "budget" in s.defaults_applied and "split" in s.defaults_applied
    assert s.c_r == pytest.approx(1e6) and s.c_t == pytest.approx(1e3)
    assert s.slot_symbols == 100 and s.tx_shape == (4, 4)
    assert s.init_gain_fraction == pytest.approx(1 / 256)


def test_narrowband_rejected():
    with pytest.raises(ScenarioError, match="narrowband") as exc:
        scenario_from_dict({**MIN, "bandwidth": 28e9})
    assert exc.value.field == "bandwidth"


@pytest.mark.parametrize("lam", [0.0, 1.5, -0.2])
def test_fixed_lambda_outside_domain(lam):
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict({**MIN, "split": {"mode": "fixed", "rho": 0.2, "lambda": lam}})
    assert exc.value.field == "split.lambda"


def test_parse_error_has_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"f0": 28e9,\n"N": 16,\n"M" 16}')
    with pytest.raises(ScenarioError, match=r":3:"):
        load_scenario(path)


def test_degrees_and_unknown_fields():
    s = scenario_from_dict({**MIN, "target": {"theta_deg": 30, "phi_deg": 90, "d": 40, "velocity": [0, 0, 0]}})
    p = np.array(s.target_position)
    assert np.degrees(np.arccos(p[2] / np.linalg.norm(p))) == pytest.approx(30)
    with pytest.raises(ScenarioError, match="unknown"):
        scenario_from_dict({**MIN, "colour": 3})
    with pytest.raises(ScenarioError):
        scenario_from_dict({**MIN, "budget": {"p_r_deg": 3}})
    with pytest.raises(ScenarioError):
        scenario_from_dict({**MIN, "target": {"theta": 0.1, "theta_deg": 3}})


def test_rejects_instead_of_clamping():
    for bad in ({"bits_reflect": 0}, {"loss_factor": 1.2}, {"N": 0}, {"budget": {"c_spread": 1.0}},
                {"target": {"theta_deg": 30, "phi": 0, "d": 0.2}}, {"n_slots": 2.5}, {"fuse_prior": 1}):
        with pytest.raises(ScenarioError):
            scenario_from_dict({**MIN, **bad})
    with pytest.raises(ScenarioError, match="far-field"):
        scenario_from_dict({**MIN, "target": {"theta_deg": 30, "phi": 0, "d": 0.5}})
    with pytest.raises(ScenarioError, match="required"):
        scenario_from_dict({"f0": 28e9})


def test_to_dict_round_trip():
    s = scenario_from_dict({**MIN, "split": {"mode": "fixed", "rho": 0.3, "lambda": 0.4}})
    again = scenario_from_dict(json.loads(json.dumps(s.to_dict())))
    assert again == s
    assert again.budget == s.budget
