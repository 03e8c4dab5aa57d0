"""Transmission schemes: genie-aided, perfect sensing, noisy sensing, no sensing."""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any

from sensecap.bounds import (
    GenieAllocation,
    genie_is_feasible,
    genie_power,
    genie_rate,
    genie_slacks,
    no_sensing_alpha_star,
)
from sensecap.model import SensingModel, derive_limits, primary_rate
from sensecap.scenario import Scenario
from sensecap.sense_opt import PowerProfile, RateReport, optimize_profile

_log = logging.getLogger(__name__)


@dataclass
class SchemeResult:
    """Outcome of running one scheme on one scenario."""

    scheme: str
    rate: float
    profile: PowerProfile | None = None
    report: RateReport | None = None
    details: dict[str, Any] = field(default_factory=dict)

    def summary(self) -> dict[str, Any]:
        out: dict[str, Any] = {"scheme": self.scheme, "rate": self.rate}
        out.update(self.details)
        if self.report is not None:
            out["components"] = {
                f"{s}{s_hat}": value for (s, s_hat), value in self.report.components.items()
            }
            out["slacks"] = dict(self.report.slacks)
            out["multiplier"] = self.report.multiplier
        return out


# ---------------------------------------------------------------------------
# Abstract base
# ---------------------------------------------------------------------------


class Scheme(ABC):
    """Abstract base class for all secondary transmission schemes."""

    @property
    @abstractmethod
    def name(self) -> str:
        """Registry name (e.g. 'genie', 'perfect')."""

    @property
    def has_profile(self) -> bool:
        """True when the scheme produces a sensed-state power profile."""
        return False

    @abstractmethod
    def solve(self, scenario: Scenario) -> SchemeResult:
        """Compute the scheme's powers and average secondary rate."""


# ---------------------------------------------------------------------------
# Closed-form schemes
# ---------------------------------------------------------------------------


class GenieScheme(Scheme):
    """Upper bound: the secondary knows the primary state of every slot."""

    @property
    def name(self) -> str:
        return "genie"

    def solve(self, scenario: Scenario) -> SchemeResult:
        beta = scenario.effective_beta
        ch = scenario.channel
        limits = derive_limits(ch, beta)
        alloc = genie_power(limits, ch.snr2, beta)
        if not genie_is_feasible(alloc, limits, ch.snr2, beta):
            _log.warning("genie allocation %s violates a constraint", alloc)
        return SchemeResult(
            scheme=self.name,
            rate=genie_rate(alloc, limits, beta),
            details={
                "beta": beta,
                "rho0": alloc.rho0,
                "rho1n": alloc.rho1n,
                "rho1s": alloc.rho1s,
                "regime": str(alloc.regime),
                "slacks": genie_slacks(alloc, limits, ch.snr2, beta),
                "primary_rate": primary_rate(ch, beta),
            },
        )


class NoSensingScheme(Scheme):
    """Lower bound: fixed superposition code, no knowledge of the primary state."""

    @property
    def name(self) -> str:
        return "nosense"

    def solve(self, scenario: Scenario) -> SchemeResult:
        ch = scenario.channel
        beta = scenario.effective_beta
        limits = derive_limits(ch, beta)
        result = no_sensing_alpha_star(limits, ch.snr1, ch.snr2, ch.inr_gap)
        return SchemeResult(
            scheme=self.name,
            rate=result.rate,
            details={
                "beta": beta,
                "alpha_star": result.alpha_star,
                "region": str(result.region),
                "power": result.power,
                "primary_rate": primary_rate(ch, beta),
            },
        )


# ---------------------------------------------------------------------------
# Sense-and-send schemes
# ---------------------------------------------------------------------------


class NoisySensingScheme(Scheme):
    """Sense in slot 0 with the scenario's (P_M, P_F), then follow the optimal profile."""

    @property
    def name(self) -> str:
        return "noisy"

    @property
    def has_profile(self) -> bool:
        return True

    def sensing(self, scenario: Scenario) -> SensingModel:
        return scenario.sensing

    def solve(self, scenario: Scenario) -> SchemeResult:
        sensing = self.sensing(scenario)
        profile, report = optimize_profile(scenario.channel, scenario.traffic, sensing)
        beta = scenario.effective_beta
        return SchemeResult(
            scheme=self.name,
            rate=report.r2,
            profile=profile,
            report=report,
            details={
                "beta": beta,
                "p_m": sensing.p_m,
                "p_f": sensing.p_f,
                "layer2_power": float(profile.rho_s.max()) if profile.t_len else 0.0,
                "primary_rate": primary_rate(scenario.channel, beta),
            },
        )


class PerfectSensingScheme(NoisySensingScheme):
    """Error-free sensing; its rate is the sense-and-send capacity."""

    @property
    def name(self) -> str:
        return "perfect"

    def sensing(self, scenario: Scenario) -> SensingModel:
        return SensingModel(0.0, 0.0)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

SCHEME_REGISTRY: dict[str, type[Scheme]] = {
    "genie": GenieScheme,
    "perfect": PerfectSensingScheme,
    "noisy": NoisySensingScheme,
    "nosense": NoSensingScheme,
}


def get_scheme(name: str) -> Scheme:
    """Instantiate and return a scheme by name.

    Raises:
        ValueError: If the scheme name is not recognised.
    """
    cls = SCHEME_REGISTRY.get(name)
    if cls is None:
        valid = ", ".join(sorted(SCHEME_REGISTRY))
        raise ValueError(f"Unknown scheme '{name}'. Valid options: {valid}")
    return cls()


def genie_profile(alloc: GenieAllocation, t_len: int) -> PowerProfile:
    """Flat profile carrying the genie's on-state powers in both sensed rows."""
    return PowerProfile.flat(t_len, (alloc.rho1n, alloc.rho1n), alloc.rho1s)
