"""Closed-form schemes: genie-aided allocation, two-state water-filling, no sensing."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import StrEnum
from typing import Literal

import numpy as np

from sensecap.model import FEAS_TOL, DerivedLimits, cap

_log = logging.getLogger(__name__)


class GenieRegime(StrEnum):
    """Which branch of the genie-aided allocation produced the powers."""

    NO_SIC_A = "NoSicA"
    NO_SIC_B = "NoSicB"
    SIC_A = "SicA"
    SIC_B = "SicB"
    SIC_C = "SicC"
    PERSISTENT_OFF = "PersistentOff"  # beta = 0
    PERSISTENT_ON = "PersistentOn"  # beta = 1


class Region(StrEnum):
    """Operating region of the secondary under the no-sensing scheme."""

    TREAT_AS_NOISE = "R1_TreatAsNoise"
    SUPERPOSITION = "R2_Superposition"
    DECODE_PRIMARY_FIRST = "R3_DecodePrimaryFirst"
    NOT_ALLOWED = "NotAllowed"


@dataclass(frozen=True)
class GenieAllocation:
    rho0: float
    rho1n: float
    rho1s: float
    regime: GenieRegime

    @property
    def rho1(self) -> float:
        return self.rho1n + self.rho1s

    def average_power(self, beta: float) -> float:
        return (1.0 - beta) * self.rho0 + beta * self.rho1


@dataclass(frozen=True)
class NoSensingResult:
    alpha_star: float
    rate: float
    region: Region
    power: float  # total power actually used, min(SNR2, INR_C)


@dataclass(frozen=True)
class MacCorner:
    """Rates of the three virtual users seen by the secondary receiver."""

    layer1: float
    primary: float
    layer2: float

    @property
    def total(self) -> float:
        return self.layer1 + self.primary + self.layer2


# ---------------------------------------------------------------------------
# Two-state water-filling
# ---------------------------------------------------------------------------


def _two_state_case(
    alpha: float, beta: float, gamma: float, delta: float
) -> Literal["A", "B", "C"]:
    rho1_star = gamma - (1.0 - beta) * alpha
    if rho1_star < 0:
        return "A"
    if rho1_star <= delta:
        return "B"
    return "C"


def waterfill_two_state(
    alpha: float, beta: float, gamma: float, delta: float
) -> tuple[float, float]:
    """Maximise (1-beta) C(rho0) + beta C(rho1 / (1 + alpha)).

    Subject to (1-beta) rho0 + beta rho1 <= gamma and 0 <= rho1 <= delta.
    *alpha* is the excess noise in the second state. The budget is met with
    equality in every case.
    """
    for name, value in (("alpha", alpha), ("gamma", gamma), ("delta", delta)):
        if not value >= 0:
            raise ValueError(f"waterfill_two_state: {name} must be >= 0, got {value!r}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"waterfill_two_state: beta must lie in [0, 1], got {beta!r}")

    beta_bar = 1.0 - beta
    case = _two_state_case(alpha, beta, gamma, delta)
    if case == "B":
        return gamma + beta * alpha, gamma - beta_bar * alpha
    if beta_bar == 0:
        raise ValueError(
            f"waterfill_two_state: case {case} needs beta < 1 "
            f"(gamma={gamma!r} exceeds delta={delta!r} with no off state)"
        )
    if case == "A":
        return gamma / beta_bar, 0.0
    return (gamma - beta * delta) / beta_bar, delta


# ---------------------------------------------------------------------------
# Genie-aided bound
# ---------------------------------------------------------------------------


def genie_power(limits: DerivedLimits, snr2: float, beta: float) -> GenieAllocation:
    """Optimal (rho0, rho1N, rho1S) when the secondary knows every slot's state."""
    if not snr2 >= 0:
        raise ValueError(f"genie_power: snr2 must be >= 0, got {snr2!r}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"genie_power: beta must lie in [0, 1], got {beta!r}")

    inr_c, sic_c = limits.inr_c, limits.sic_c
    if inr_c == 0 and snr2 > 0:
        _log.info("INR_gap = 0: no secondary power while the primary is on")

    if beta == 0:
        _log.info("beta = 0: primary never on, single-state water-filling")
        return GenieAllocation(snr2, 0.0, 0.0, GenieRegime.PERSISTENT_OFF)
    if beta == 1:
        _log.info("beta = 1: primary always on, single layered bucket")
        total = min(snr2, inr_c)
        layer2 = min(limits.sic_plus, total)
        return GenieAllocation(0.0, total - layer2, layer2, GenieRegime.PERSISTENT_ON)

    beta_bar = 1.0 - beta
    if sic_c >= min(snr2, inr_c):
        if snr2 <= inr_c:
            return GenieAllocation(snr2, 0.0, snr2, GenieRegime.NO_SIC_A)
        return GenieAllocation(
            (snr2 - beta * inr_c) / beta_bar, 0.0, inr_c, GenieRegime.NO_SIC_B
        )

    # SIC binds: fill Layer 2 up to SIC_C, then water-fill Layer 1 against the
    # fixed layer INR2 + SIC_C.
    layer2 = limits.sic_plus
    alpha = layer2 + limits.inr2
    gamma = snr2 - beta * layer2
    delta = inr_c - layer2
    rho0, rho1n = waterfill_two_state(alpha, beta, gamma, delta)
    regime = {
        "A": GenieRegime.SIC_A,
        "B": GenieRegime.SIC_B,
        "C": GenieRegime.SIC_C,
    }[_two_state_case(alpha, beta, gamma, delta)]
    return GenieAllocation(rho0, rho1n, layer2, regime)


def genie_rate(alloc: GenieAllocation, limits: DerivedLimits, beta: float) -> float:
    """(1-beta) C(rho0) + beta [C(rho1N / (1 + INR2 + rho1S)) + C(rho1S)]."""
    on = cap(alloc.rho1n / (1.0 + limits.inr2 + alloc.rho1s)) + cap(alloc.rho1s)
    off = cap(alloc.rho0)
    if beta == 0:
        return off
    if beta == 1:
        return on
    return (1.0 - beta) * off + beta * on


def genie_slacks(
    alloc: GenieAllocation, limits: DerivedLimits, snr2: float, beta: float
) -> dict[str, float]:
    """Slack of each genie constraint; negative means violated."""
    return {
        "power": snr2 - alloc.average_power(beta),
        "inr": limits.inr_c - alloc.rho1,
        "sic": limits.sic_plus - alloc.rho1s,
    }


def genie_is_feasible(
    alloc: GenieAllocation, limits: DerivedLimits, snr2: float, beta: float
) -> bool:
    if min(alloc.rho0, alloc.rho1n, alloc.rho1s) < 0:
        return False
    return all(v >= -FEAS_TOL for v in genie_slacks(alloc, limits, snr2, beta).values())


# ---------------------------------------------------------------------------
# No sensing
# ---------------------------------------------------------------------------


def superposition_rate(alpha: float | np.ndarray, power: float, inr2: float) -> float | np.ndarray:
    """C((1-alpha) P / (1 + INR2 + alpha P)) + C(alpha P)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    layer2 = alpha * power
    out = cap((power - layer2) / (1.0 + inr2 + layer2)) + cap(layer2)
    if np.ndim(out) == 0:
        return float(out)
    return out


def effective_mac(alpha: float, power: float, inr2: float) -> MacCorner:
    """Corner point of the virtual MAC (Layer 1, primary, Layer 2) at fraction alpha.

    Decoding order: Layer 1 against everything, then the primary against
    Layer 2, then Layer 2 alone. The three rates always sum to C(INR2 + P).
    """
    layer2 = alpha * power
    return MacCorner(
        layer1=cap((power - layer2) / (1.0 + inr2 + layer2)),
        primary=cap(inr2 / (1.0 + layer2)),
        layer2=cap(layer2),
    )


def classify_region(limits: DerivedLimits, snr1: float, snr2: float, inr_gap: float) -> Region:
    """Operating region of the no-sensing secondary.

    Boundaries are INR2 = SNR1 / (1 + INR_gap) and
    INR2 = SNR1 (1 + P) / (1 + INR_gap) with P = min(SNR2, INR_C).
    """
    if inr_gap <= 0:
        return Region.NOT_ALLOWED
    power = min(snr2, limits.inr_c)
    lower = snr1 / (1.0 + inr_gap)
    upper = snr1 * (1.0 + power) / (1.0 + inr_gap)
    if limits.inr2 <= lower:
        return Region.TREAT_AS_NOISE
    if limits.inr2 >= upper:
        return Region.DECODE_PRIMARY_FIRST
    return Region.SUPERPOSITION


def no_sensing_alpha_star(
    limits: DerivedLimits, snr1: float, snr2: float, inr_gap: float
) -> NoSensingResult:
    """Optimal superposition fraction and rate when the primary state is unknown.

    Total power is capped at min(SNR2, INR_C) so the primary is protected in
    every slot.
    """
    power = min(snr2, limits.inr_c)
    region = classify_region(limits, snr1, snr2, inr_gap)
    if region is Region.NOT_ALLOWED:
        return NoSensingResult(0.0, 0.0, region, 0.0)
    if region is Region.TREAT_AS_NOISE:
        alpha = 0.0
    elif region is Region.DECODE_PRIMARY_FIRST:
        alpha = 1.0
    else:
        alpha = min(max(limits.sic_c / power, 0.0), 1.0)
    rate = superposition_rate(alpha, power, limits.inr2)
    if not math.isfinite(rate):
        raise ValueError(f"no_sensing_alpha_star: non-finite rate for power={power!r}")
    return NoSensingResult(alpha, float(rate), region, power)
