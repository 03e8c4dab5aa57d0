"""Shared fixtures for sensecap tests."""

from __future__ import annotations

import json

import numpy as np
import pytest

from sensecap.model import ChannelParams, SensingModel, TrafficModel
from sensecap.scenario import reference_scenario
from sensecap.sense_opt import PowerProfile


@pytest.fixture()
def ref_params() -> ChannelParams:
    """SNR1 = SNR2 = 7, |h12|^2 = |h21|^2 = 0.5, INR_gap = 3.5."""
    return ChannelParams(snr1=7.0, snr2=7.0, h12_sq=0.5, h21_sq=0.5, inr_gap=3.5)


@pytest.fixture()
def tight_params() -> ChannelParams:
    """Reference channel with SNR2 = 3, so the average power budget binds."""
    return ChannelParams(snr1=7.0, snr2=3.0, h12_sq=0.5, h21_sq=0.5, inr_gap=3.5)


@pytest.fixture()
def ref_traffic() -> TrafficModel:
    return TrafficModel.uniform(10, 0.5)


@pytest.fixture()
def perfect() -> SensingModel:
    return SensingModel(0.0, 0.0)


@pytest.fixture()
def scenario_file(tmp_path):
    """Write the reference scenario at T = 3 to a JSON file and return its path."""

    def write(t_len: int = 3, **overrides) -> str:
        data = reference_scenario(t_len).to_dict()
        data.update(overrides)
        path = tmp_path / f"scenario_{t_len}.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    return write


def make_traffic(t_len: int, seed: int = 42, pi0: float | None = None) -> TrafficModel:
    """Random switch-time pmf drawn from a flat Dirichlet."""
    rng = np.random.default_rng(seed)
    f = rng.dirichlet(np.ones(t_len + 1))
    return TrafficModel(t_len, float(rng.uniform(0.1, 0.9)) if pi0 is None else pi0, f)


def random_feasible_profile(
    rng: np.random.Generator,
    params: ChannelParams,
    traffic: TrafficModel,
    sensing: SensingModel,
    sic: float,
    inr_c: float,
) -> PowerProfile:
    """Uniform random profile scaled down until every constraint holds."""
    t_len = traffic.t_len
    s = rng.uniform(0.0, sic, (2, t_len))
    n = rng.uniform(0.0, 1.0, (2, t_len)) * (inr_c - s)
    q = sensing.joint(traffic).sum(axis=0)
    spent = float(q @ (n + s).sum(axis=1))
    budget = (t_len + 1) * params.snr2
    scale = min(1.0, budget / spent) if spent > 0 else 1.0
    return PowerProfile(n * scale, s * scale)
