"""Scenario files: JSON loading, validation and parameter overrides."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np

from sensecap.model import (
    ChannelParams,
    ScenarioError,
    SensingModel,
    TrafficModel,
    long_run_on_fraction,
)

_log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Configuration (environment overrides)
# ---------------------------------------------------------------------------

DEFAULT_SEED = 20240601
SEED = int(os.environ.get("SENSECAP_SEED", DEFAULT_SEED))

LOG_LEVEL = os.environ.get("SENSECAP_LOG_LEVEL", "WARNING").upper()

SENSECAP_HOME = Path(os.environ.get("SENSECAP_HOME", Path.home() / ".sensecap"))

# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

_TOP_KEYS = {"channel", "traffic", "sensing", "beta"}
_CHANNEL_KEYS = {"snr1", "snr2", "h12_sq", "h21_sq", "inr_gap"}
_TRAFFIC_KEYS = {"T", "pi0", "f", "f_family", "tau", "p"}
_SENSING_KEYS = {"p_m", "p_f"}

F_FAMILIES = ("uniform", "point_mass", "geometric")

SWEEP_VARIABLES = ("inr_gap", "inr2", "T", "beta", "p_m", "p_f")


@dataclass(frozen=True)
class Scenario:
    """A fully validated scenario: channel, traffic, sensing and optional beta.

    ``f_family`` (with ``family_args``) records how the switch-time pmf was
    generated so that it can be rebuilt when T changes. It is None for raw
    pmf arrays.
    """

    channel: ChannelParams
    traffic: TrafficModel
    sensing: SensingModel
    beta: float | None = None
    f_family: str | None = None
    family_args: tuple[tuple[str, float], ...] = ()

    @property
    def effective_beta(self) -> float:
        """Explicit beta when given, else the on-fraction implied by the traffic model."""
        if self.beta is not None:
            return self.beta
        return long_run_on_fraction(self.traffic)

    def with_updates(self, variable: str, value: float) -> Scenario:
        """Copy with one sweep variable replaced."""
        if variable == "inr_gap":
            return replace(self, channel=replace(self.channel, inr_gap=float(value)))
        if variable == "inr2":
            if self.channel.snr1 == 0:
                raise ScenarioError("cannot set inr2 when snr1 = 0")
            h12 = float(value) / self.channel.snr1
            return replace(self, channel=replace(self.channel, h12_sq=h12))
        if variable == "T":
            t_len = int(round(value))
            if self.f_family is None:
                raise ScenarioError(
                    "sweeping T needs a scenario with 'f_family' instead of a raw 'f' array"
                )
            traffic = build_traffic(t_len, self.traffic.pi0, self.f_family, dict(self.family_args))
            return replace(self, traffic=traffic)
        if variable == "beta":
            return replace(self, beta=float(value))
        if variable in ("p_m", "p_f"):
            return replace(self, sensing=replace(self.sensing, **{variable: float(value)}))
        valid = ", ".join(SWEEP_VARIABLES)
        raise ValueError(f"Unknown sweep variable '{variable}'. Valid options: {valid}")

    def to_dict(self) -> dict[str, Any]:
        traffic: dict[str, Any] = {"T": self.traffic.t_len, "pi0": self.traffic.pi0}
        if self.f_family is None:
            traffic["f"] = self.traffic.f.tolist()
        else:
            traffic["f_family"] = self.f_family
            traffic.update(dict(self.family_args))
        out: dict[str, Any] = {
            "channel": {
                "snr1": self.channel.snr1,
                "snr2": self.channel.snr2,
                "h12_sq": self.channel.h12_sq,
                "h21_sq": self.channel.h21_sq,
                "inr_gap": self.channel.inr_gap,
            },
            "traffic": traffic,
            "sensing": {"p_m": self.sensing.p_m, "p_f": self.sensing.p_f},
        }
        if self.beta is not None:
            out["beta"] = self.beta
        return out


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_traffic(t_len: int, pi0: float, family: str, args: dict[str, float]) -> TrafficModel:
    """TrafficModel from a named switch-time family."""
    if family == "uniform":
        return TrafficModel.uniform(t_len, pi0)
    if family == "point_mass":
        if "tau" not in args:
            raise ScenarioError("f_family 'point_mass' needs 'tau'")
        tau = args["tau"]
        # tau beyond the block means "no switch"
        return TrafficModel.point_mass(t_len, min(int(tau), t_len + 1), pi0)
    if family == "geometric":
        if "p" not in args:
            raise ScenarioError("f_family 'geometric' needs 'p'")
        return TrafficModel.geometric(t_len, float(args["p"]), pi0)
    valid = ", ".join(F_FAMILIES)
    raise ScenarioError(f"Unknown f_family '{family}'. Valid options: {valid}")


def _section(data: dict[str, Any], name: str, allowed: set[str]) -> dict[str, Any]:
    section = data.get(name)
    if not isinstance(section, dict):
        raise ScenarioError(f"scenario is missing the '{name}' object")
    unknown = set(section) - allowed
    if unknown:
        raise ScenarioError(f"unknown keys in '{name}': {', '.join(sorted(unknown))}")
    return section


def _number(section: dict[str, Any], owner: str, key: str) -> float:
    if key not in section:
        raise ScenarioError(f"'{owner}.{key}' is required")
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, int | float):
        raise ScenarioError(f"'{owner}.{key}' must be a number, got {value!r}")
    return float(value)


def scenario_from_dict(data: dict[str, Any]) -> Scenario:
    """Validate a parsed scenario document and build the model objects.

    Raises:
        ScenarioError: On unknown keys, missing fields or invalid values.
    """
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ScenarioError(f"unknown top-level keys: {', '.join(sorted(unknown))}")

    ch = _section(data, "channel", _CHANNEL_KEYS)
    tr = _section(data, "traffic", _TRAFFIC_KEYS)
    se = data.get("sensing", {"p_m": 0.0, "p_f": 0.0})
    se = _section({"sensing": se}, "sensing", _SENSING_KEYS)

    try:
        channel = ChannelParams(**{k: _number(ch, "channel", k) for k in sorted(_CHANNEL_KEYS)})
        sensing = SensingModel(
            **{k: _number(se, "sensing", k) for k in sorted(_SENSING_KEYS) if k in se}
        )

        t_raw = _number(tr, "traffic", "T")
        if t_raw != int(t_raw) or t_raw < 1:
            raise ScenarioError(f"'traffic.T' must be a positive integer, got {tr['T']!r}")
        t_len = int(t_raw)
        pi0 = _number(tr, "traffic", "pi0") if "pi0" in tr else 0.5

        has_f, has_family = "f" in tr, "f_family" in tr
        if has_f == has_family:
            raise ScenarioError("'traffic' needs exactly one of 'f' or 'f_family'")
        family: str | None = None
        family_args: tuple[tuple[str, float], ...] = ()
        if has_f:
            extra = {"tau", "p"} & set(tr)
            if extra:
                raise ScenarioError(
                    f"'traffic.{sorted(extra)[0]}' is only valid together with 'f_family'"
                )
            f = np.asarray(tr["f"], dtype=np.float64)
            traffic = TrafficModel(t_len, pi0, f)
        else:
            family = str(tr["f_family"])
            family_args = tuple(
                (key, _number(tr, "traffic", key)) for key in ("tau", "p") if key in tr
            )
            traffic = build_traffic(t_len, pi0, family, dict(family_args))

        beta: float | None = None
        if data.get("beta") is not None:
            beta = _number(data, "scenario", "beta")
            if not 0.0 <= beta <= 1.0:
                raise ScenarioError(f"'beta' must lie in [0, 1], got {beta!r}")
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc

    return Scenario(channel, traffic, sensing, beta, family, family_args)


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario JSON file.

    Raises:
        ScenarioError: If the file is missing, unreadable or invalid.
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {p}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    scenario = scenario_from_dict(data)
    _log.debug("loaded scenario %s (T=%d)", p, scenario.traffic.t_len)
    return scenario


def reference_scenario(t_len: int = 10) -> Scenario:
    """Reference scenario: SNR1 = SNR2 = 7, |h12|^2 = |h21|^2 = 0.5, INR_gap = 3.5.

    Uniform switch time, pi = (0.5, 0.5), perfect sensing, beta = 0.5.
    """
    return Scenario(
        channel=ChannelParams(snr1=7.0, snr2=7.0, h12_sq=0.5, h21_sq=0.5, inr_gap=3.5),
        traffic=TrafficModel.uniform(t_len, 0.5),
        sensing=SensingModel(0.0, 0.0),
        beta=0.5,
        f_family="uniform",
    )
