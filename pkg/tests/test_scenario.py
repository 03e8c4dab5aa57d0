"""Tests for scenario loading, validation and sweep overrides."""

from __future__ import annotations

import json

import pytest

from sensecap.model import ScenarioError, SensingModel
from sensecap.scenario import (
    build_traffic,
    load_scenario,
    reference_scenario,
    scenario_from_dict,
)


def _doc(**traffic) -> dict:
    return {
        "channel": {"snr1": 7, "snr2": 7, "h12_sq": 0.5, "h21_sq": 0.5, "inr_gap": 3.5},
        "traffic": {"T": 4, **traffic},
    }


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


class TestScenarioFromDict:
    def test_family(self):
        scenario = scenario_from_dict(_doc(f_family="uniform", pi0=0.25))
        assert scenario.traffic.t_len == 4
        assert scenario.traffic.pi0 == 0.25
        assert scenario.sensing.p_m == 0.0
        assert scenario.beta is None

    def test_raw_pmf(self):
        scenario = scenario_from_dict(_doc(f=[0.2, 0.2, 0.2, 0.2, 0.2]))
        assert scenario.f_family is None
        assert scenario.traffic.pi0 == 0.5

    def test_point_mass_args(self):
        scenario = scenario_from_dict(_doc(f_family="point_mass", tau=2))
        assert scenario.traffic.f.tolist() == [0.0, 1.0, 0.0, 0.0, 0.0]

    def test_round_trip(self):
        original = reference_scenario(6)
        again = scenario_from_dict(json.loads(json.dumps(original.to_dict())))
        assert again.to_dict() == original.to_dict()

    @pytest.mark.parametrize(
        ("doc", "message"),
        [
            ({**_doc(f_family="uniform"), "extra": 1}, "unknown top-level"),
            (_doc(f_family="uniform", bogus=1), "unknown keys in 'traffic'"),
            (_doc(), "exactly one of"),
            (_doc(f_family="uniform", f=[1, 0, 0, 0, 0]), "exactly one of"),
            (_doc(f=[1, 0, 0, 0, 0], tau=2), "only valid together"),
            (_doc(f_family="uniform", T=2.5), "positive integer"),
            (_doc(f_family="triangle"), "Unknown f_family"),
            (_doc(f_family="geometric"), "needs 'p'"),
            (_doc(f=[0.5, 0.5]), "T\\+1"),
            ({**_doc(f_family="uniform"), "beta": 2}, "beta"),
            ({"traffic": {"T": 4, "f_family": "uniform"}}, "'channel'"),
        ],
    )
    def test_invalid(self, doc, message):
        with pytest.raises(ScenarioError, match=message):
            scenario_from_dict(doc)

    def test_non_numeric_channel(self):
        doc = _doc(f_family="uniform")
        doc["channel"]["snr1"] = "seven"
        with pytest.raises(ScenarioError, match="channel.snr1"):
            scenario_from_dict(doc)

    @pytest.mark.parametrize("value", [True, "0.1", None])
    def test_non_numeric_sensing(self, value):
        doc = {**_doc(f_family="uniform"), "sensing": {"p_m": value, "p_f": 0.1}}
        with pytest.raises(ScenarioError, match="sensing.p_m"):
            scenario_from_dict(doc)

    def test_sensing_defaults_to_perfect(self):
        scenario = scenario_from_dict({**_doc(f_family="uniform"), "sensing": {"p_f": 0.2}})
        assert scenario.sensing == SensingModel(0.0, 0.2)

    def test_negative_power_is_scenario_error(self):
        doc = _doc(f_family="uniform")
        doc["channel"]["snr2"] = -1
        with pytest.raises(ScenarioError, match="snr2"):
            scenario_from_dict(doc)

    def test_scenario_error_is_value_error(self):
        assert issubclass(ScenarioError, ValueError)


class TestLoadScenario:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError, match="cannot read"):
            load_scenario(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ScenarioError, match="invalid JSON"):
            load_scenario(path)

    def test_loads(self, scenario_file):
        scenario = load_scenario(scenario_file(5))
        assert scenario.traffic.t_len == 5
        assert scenario.effective_beta == 0.5


# ---------------------------------------------------------------------------
# Overrides
# ---------------------------------------------------------------------------


class TestWithUpdates:
    def test_inr_gap(self):
        assert reference_scenario().with_updates("inr_gap", 2.0).channel.inr_gap == 2.0

    def test_inr2_sets_cross_gain(self):
        channel = reference_scenario().with_updates("inr2", 14.0).channel
        assert channel.h12_sq == pytest.approx(2.0)
        assert channel.inr2 == pytest.approx(14.0)

    def test_block_length(self):
        assert reference_scenario().with_updates("T", 20).traffic.t_len == 20

    def test_block_length_needs_family(self):
        scenario = scenario_from_dict(_doc(f=[0.2, 0.2, 0.2, 0.2, 0.2]))
        with pytest.raises(ScenarioError, match="f_family"):
            scenario.with_updates("T", 8)

    def test_sensing(self):
        sensing = reference_scenario().with_updates("p_f", 0.3).sensing
        assert (sensing.p_m, sensing.p_f) == (0.0, 0.3)

    def test_beta(self):
        assert reference_scenario().with_updates("beta", 0.9).effective_beta == 0.9

    def test_unknown_variable(self):
        with pytest.raises(ValueError, match="Unknown sweep variable"):
            reference_scenario().with_updates("snr9", 1.0)

    def test_effective_beta_from_traffic(self):
        scenario = scenario_from_dict(_doc(f_family="point_mass", tau=5, pi0=0.0))
        assert scenario.effective_beta == 1.0


class TestBuildTraffic:
    def test_point_mass_beyond_block_means_no_switch(self):
        traffic = build_traffic(3, 0.5, "point_mass", {"tau": 10})
        assert traffic.f.tolist() == [0.0, 0.0, 0.0, 1.0]

    def test_geometric(self):
        traffic = build_traffic(3, 0.5, "geometric", {"p": 0.5})
        assert traffic.f.tolist() == pytest.approx([0.5, 0.25, 0.125, 0.125])
