"""Power-profile optimisation for the sense-and-send schemes.

The secondary senses the primary in slot 0 of each block and then transmits a
two-layer superposition code in slots 1..T with powers that depend on the
sensed state and on the slot. Slot totals are water-filled across slots and
sensed states by bisection on the multiplier of the average power constraint;
Layer 2 takes each slot up to min(SIC_C^+, INR_C) and Layer 1 the rest.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from sensecap.model import (
    FEAS_TOL,
    PMF_ZERO,
    ChannelParams,
    DerivedLimits,
    SensingModel,
    SolverError,
    TrafficModel,
    cap,
    derive_limits,
    long_run_on_fraction,
)

_log = logging.getLogger(__name__)

MAX_BISECTION_ITERS = 200
LAMBDA_FLOOR = 1e-12

_LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PowerProfile:
    """Layer-1 and Layer-2 powers, shape (2, T): row = sensed state, column = slot 1..T."""

    rho_n: np.ndarray
    rho_s: np.ndarray

    def __post_init__(self) -> None:
        rho_n = np.array(self.rho_n, dtype=np.float64)
        rho_s = np.array(self.rho_s, dtype=np.float64)
        if rho_n.ndim != 2 or rho_n.shape[0] != 2 or rho_n.shape != rho_s.shape:
            raise ValueError(
                f"PowerProfile needs two (2, T) arrays, got {rho_n.shape} and {rho_s.shape}"
            )
        if np.any(~np.isfinite(rho_n)) or np.any(~np.isfinite(rho_s)):
            raise ValueError("PowerProfile powers must be finite")
        if np.any(rho_n < 0) or np.any(rho_s < 0):
            raise ValueError("PowerProfile powers must be >= 0")
        rho_n.setflags(write=False)
        rho_s.setflags(write=False)
        object.__setattr__(self, "rho_n", rho_n)
        object.__setattr__(self, "rho_s", rho_s)

    @property
    def t_len(self) -> int:
        return self.rho_n.shape[1]

    @property
    def total(self) -> np.ndarray:
        return self.rho_n + self.rho_s

    @classmethod
    def zeros(cls, t_len: int) -> PowerProfile:
        return cls(np.zeros((2, t_len)), np.zeros((2, t_len)))

    @classmethod
    def flat(
        cls, t_len: int, rho_n: tuple[float, float], rho_s: float | tuple[float, float]
    ) -> PowerProfile:
        """Profile constant across slots within each sensed state."""
        n = np.repeat(np.asarray(rho_n, dtype=np.float64)[:, None], t_len, axis=1)
        s = np.broadcast_to(np.asarray(rho_s, dtype=np.float64).reshape(-1, 1), (2, t_len))
        return cls(n, s.copy())

    def rows(self) -> list[tuple[int, int, float, float]]:
        """(sensed_state, slot, rho_n, rho_s) for every entry, slots numbered from 1."""
        return [
            (s_hat, t + 1, float(self.rho_n[s_hat, t]), float(self.rho_s[s_hat, t]))
            for s_hat in (0, 1)
            for t in range(self.t_len)
        ]


@dataclass(frozen=True)
class RateReport:
    """Average secondary rate with its per-(s0, s_hat) components.

    ``components[(s, s_hat)]`` is the unweighted block sum R_{s s_hat};
    ``r2`` is their occurrence-weighted combination divided by T + 1.
    """

    r2: float
    components: dict[tuple[int, int], float]
    slacks: dict[str, float] = field(default_factory=dict)
    multiplier: float | None = None


@dataclass(frozen=True)
class MonotoneReport:
    checks: dict[str, bool]
    violations: list[str]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


# ---------------------------------------------------------------------------
# Rate and constraints
# ---------------------------------------------------------------------------


def slot_capacities(profile: PowerProfile, inr2: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot rates with the primary off (C_{s0}) and on (C_{s1}), each (2, T)."""
    off = cap(profile.total)
    on = cap(profile.rho_n / (1.0 + inr2 + profile.rho_s)) + cap(profile.rho_s)
    return off, on


def average_power(profile: PowerProfile, traffic: TrafficModel, sensing: SensingModel) -> float:
    """Sum over (s, s_hat, t) of pi(s) P(s_hat|s) (rho_N + rho_S); budget is (T+1) SNR2."""
    q = sensing.joint(traffic).sum(axis=0)
    return float(q @ profile.total.sum(axis=1))


def profile_slacks(
    profile: PowerProfile, params: ChannelParams, traffic: TrafficModel, sensing: SensingModel
) -> dict[str, float]:
    """Slack of the average-power, INR and SIC constraints; negative means violated."""
    limits = derive_limits(params)
    return {
        "power": (traffic.t_len + 1) * params.snr2 - average_power(profile, traffic, sensing),
        "inr": limits.inr_c - float(profile.total.max()),
        "sic": limits.sic_plus - float(profile.rho_s.max()),
    }


def _check_shapes(profile: PowerProfile, traffic: TrafficModel) -> None:
    if profile.t_len != traffic.t_len:
        raise ValueError(
            f"profile has {profile.t_len} slots but the traffic model has T = {traffic.t_len}"
        )


def achievable_rate(
    profile: PowerProfile,
    params: ChannelParams,
    traffic: TrafficModel,
    sensing: SensingModel,
    *,
    check: bool = True,
) -> RateReport:
    """Average secondary rate of *profile* in bits per slot, sensing slot included."""
    _check_shapes(profile, traffic)
    slacks = profile_slacks(profile, params, traffic, sensing)
    if check:
        violated = [name for name, value in slacks.items() if value < -FEAS_TOL]
        if violated:
            raise ValueError(
                "profile violates the "
                + ", ".join(f"{name} constraint (slack {slacks[name]:.3g})" for name in violated)
            )

    off, on = slot_capacities(profile, params.inr2)
    beta = traffic.on_probability  # rows indexed by s
    # component[s, s_hat] = sum_t (1 - beta_s(t)) C_{s_hat 0}(t) + beta_s(t) C_{s_hat 1}(t)
    components = (1.0 - beta) @ off.T + beta @ on.T
    weights = sensing.joint(traffic)
    r2 = float((weights * components).sum()) / (traffic.t_len + 1)
    return RateReport(
        r2=r2,
        components={(s, s_hat): float(components[s, s_hat]) for s in (0, 1) for s_hat in (0, 1)},
        slacks=slacks,
    )


def noise_weights(traffic: TrafficModel, sensing: SensingModel) -> tuple[np.ndarray, np.ndarray]:
    """G and H, shape (2, T): occurrence weight of the off / on channel per (s_hat, t)."""
    weights = sensing.joint(traffic)
    beta = traffic.on_probability
    g = weights.T @ (1.0 - beta)
    h = weights.T @ beta
    return g, h


def rate_gradient(
    profile: PowerProfile, params: ChannelParams, traffic: TrafficModel, sensing: SensingModel
) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of the average rate with respect to rho_N and rho_S."""
    _check_shapes(profile, traffic)
    g, h = noise_weights(traffic, sensing)
    return gradient_arrays(profile.rho_n, profile.rho_s, g, h, params.inr2, traffic.t_len)


def gradient_arrays(
    rho_n: np.ndarray, rho_s: np.ndarray, g: np.ndarray, h: np.ndarray, inr2: float, t_len: int
) -> tuple[np.ndarray, np.ndarray]:
    """Rate partials from raw power arrays and the G/H weights of :func:`noise_weights`."""
    scale = 1.0 / (2.0 * _LN2 * (t_len + 1))
    total = rho_n + rho_s
    shared = g / (1.0 + total) + h / (1.0 + inr2 + total)
    d_n = scale * shared
    d_s = scale * (shared + h * (1.0 / (1.0 + rho_s) - 1.0 / (1.0 + inr2 + rho_s)))
    return d_n, d_s


# ---------------------------------------------------------------------------
# Layer 2
# ---------------------------------------------------------------------------


def layer2_power(limits: DerivedLimits, snr2: float) -> float:
    """Layer-2 level (min(SIC_C, INR_C, SNR2))^+ of a slot that reaches the SIC limit.

    :func:`optimize_profile` uses exactly this level in every slot whenever
    SIC_C^+ <= SNR2; with a smaller budget Layer 2 takes the whole slot.
    """
    return max(min(limits.sic_c, limits.inr_c, snr2), 0.0)


# ---------------------------------------------------------------------------
# KKT solver
# ---------------------------------------------------------------------------


def _totals_at(
    lam: float, g: np.ndarray, inr2: float, sic: float, inr_c: float, active: np.ndarray
) -> np.ndarray:
    """Per-slot total power at water level *lam*.

    Up to *sic* the slot rate has slope 1/(1 + x) whatever the primary does;
    above it the slope is g/(1 + x) + (1 - g)/(1 + INR2 + x).
    """
    below = 1.0 / lam - 1.0
    if below <= sic:
        x = np.full_like(g, max(below, 0.0))
    else:
        b = lam * inr2 - 1.0
        disc = b * b + 4.0 * lam * g * inr2
        above = (-b + np.sqrt(np.maximum(disc, 0.0))) / (2.0 * lam) - 1.0
        x = np.maximum(above, sic)
    return np.where(active[:, None], np.minimum(x, inr_c), 0.0)


def optimize_profile(
    params: ChannelParams, traffic: TrafficModel, sensing: SensingModel
) -> tuple[PowerProfile, RateReport]:
    """Maximise the average secondary rate over sensed-state/slot power profiles.

    Every slot total solves the stationarity condition for a common water
    level, found by bisection so that the average power constraint is tight.
    Layer 2 takes the first min(SIC_C^+, INR_C) of each slot and Layer 1 the
    remainder.
    """
    t_len = traffic.t_len
    limits = derive_limits(params, long_run_on_fraction(traffic))
    budget = (t_len + 1) * params.snr2

    if limits.inr_c <= 0 or params.snr2 <= 0:
        _log.info("zero budget or INR_gap = 0: returning the zero profile")
        profile = PowerProfile.zeros(t_len)
        return profile, achievable_rate(profile, params, traffic, sensing)

    q = sensing.joint(traffic).sum(axis=0)  # occurrence probability of each sensed state
    active = q > PMF_ZERO
    sic = min(limits.sic_plus, limits.inr_c)

    g_raw, _ = noise_weights(traffic, sensing)
    g = np.divide(g_raw, q[:, None], out=np.zeros_like(g_raw), where=active[:, None])

    def spend(total: np.ndarray) -> float:
        return float(q @ total.sum(axis=1))

    def build(total: np.ndarray, multiplier: float) -> tuple[PowerProfile, RateReport]:
        rho_s = np.minimum(total, sic)
        profile = PowerProfile(total - rho_s, rho_s)
        report = achievable_rate(profile, params, traffic, sensing)
        fixed = layer2_power(limits, params.snr2)
        if float(rho_s.max(initial=0.0)) > fixed + FEAS_TOL:
            _log.debug("Layer 2 above the fixed level %.6g: budget below SIC_C", fixed)
        return profile, RateReport(report.r2, report.components, report.slacks, multiplier)

    capped = np.where(active[:, None], limits.inr_c, 0.0) * np.ones((2, t_len))
    if spend(capped) <= budget:
        _log.debug("every slot at its INR cap; budget not binding")
        profile, report = build(capped, 0.0)
        _post_check(profile, limits, traffic, sensing)
        return profile, report

    tol = FEAS_TOL * max(1.0, budget)
    lo, hi = LAMBDA_FLOOR, 1.0
    best = _totals_at(hi, g, limits.inr2, sic, limits.inr_c, active)
    for it in range(MAX_BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        total = _totals_at(mid, g, limits.inr2, sic, limits.inr_c, active)
        spent = spend(total)
        if spent > budget:
            lo = mid
            continue
        hi, best = mid, total
        if budget - spent <= tol:
            _log.debug("water level %.12g found after %d bisection steps", mid, it + 1)
            break
    else:
        gap = budget - spend(best)
        if gap > tol:
            profile, report = build(best, hi)
            raise SolverError(
                f"water-level bisection did not converge in {MAX_BISECTION_ITERS} steps "
                f"(unused budget {gap:.3g})",
                profile=profile,
                rate=report.r2,
            )

    profile, report = build(best, hi)
    _post_check(profile, limits, traffic, sensing)
    return profile, report


def _post_check(
    profile: PowerProfile, limits: DerivedLimits, traffic: TrafficModel, sensing: SensingModel
) -> None:
    report = check_monotone(profile, inr_c=limits.inr_c)
    if report.passed:
        return
    if sensing.is_informative(traffic):
        raise SolverError(
            "solver output is not monotone: " + "; ".join(report.violations), profile=profile
        )
    _log.warning(
        "sensing is worse than a coin flip for one sensed state; profile is not monotone: %s",
        "; ".join(report.violations),
    )


def perfect_sensing_capacity(params: ChannelParams, traffic: TrafficModel) -> RateReport:
    """Capacity when s0 is sensed without error (the noisy solver at P_M = P_F = 0)."""
    return optimize_profile(params, traffic, SensingModel(0.0, 0.0))[1]


# ---------------------------------------------------------------------------
# Monotonicity
# ---------------------------------------------------------------------------


def check_monotone(
    profile: PowerProfile, inr_c: float | None = None, tol: float = FEAS_TOL
) -> MonotoneReport:
    """Check the monotone ("paranoid") structure of the Layer-1 powers.

    Row 0 (sensed idle) must be non-increasing and row 1 (sensed busy)
    non-decreasing; zeros spread right in row 0 and left in row 1; INR caps
    spread left in row 0 and right in row 1. Cap checks run only when
    *inr_c* is given.
    """
    n = profile.rho_n
    total = profile.total
    violations: list[str] = []

    def steps(row: np.ndarray, sign: float, label: str) -> bool:
        bad = np.nonzero(sign * np.diff(row) > tol)[0]
        for i in bad:
            violations.append(f"{label} at t={i + 1}->{i + 2}")
        return bad.size == 0

    def spread(mask: np.ndarray, forward: bool, label: str) -> bool:
        # once the mask holds it must keep holding in the given direction
        seq = mask if forward else mask[::-1]
        hits = np.nonzero(seq)[0]
        if hits.size == 0 or seq[hits[0] :].all():
            return True
        first = hits[0] if forward else mask.size - 1 - hits[0]
        violations.append(f"{label} from t={first + 1}")
        return False

    checks = {
        "row0_non_increasing": steps(n[0], 1.0, "row 0 increases"),
        "row1_non_decreasing": steps(n[1], -1.0, "row 1 decreases"),
        "row0_zeros_right": spread(n[0] <= tol, True, "row 0 zero not propagated right"),
        "row1_zeros_left": spread(n[1] <= tol, False, "row 1 zero not propagated left"),
    }
    if inr_c is not None and math.isfinite(inr_c):
        checks["row0_caps_left"] = spread(
            total[0] >= inr_c - tol, False, "row 0 cap not propagated left"
        )
        checks["row1_caps_right"] = spread(
            total[1] >= inr_c - tol, True, "row 1 cap not propagated right"
        )
    return MonotoneReport(checks, violations)
