"""Scenario types, derived limits and block-activity traffic statistics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import overload

import numpy as np

_log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Tolerances
# ---------------------------------------------------------------------------

PMF_TOL = 1e-12  # probabilities must sum to one within this
PMF_ZERO = 1e-15  # pmf entries below this are treated as exactly zero
FEAS_TOL = 1e-9  # constraint satisfaction tolerance used everywhere

_LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class SensecapError(Exception):
    """Base class for all sensecap errors."""


class ScenarioError(SensecapError, ValueError):
    """A scenario file or dictionary failed validation."""


class SolverError(SensecapError, RuntimeError):
    """A solver did not converge. The best iterate found is attached."""

    def __init__(self, message: str, profile: object = None, rate: float | None = None) -> None:
        super().__init__(message)
        self.profile = profile
        self.rate = rate


class OracleError(SensecapError, RuntimeError):
    """A reference solver failed (empty feasible set or iteration cap)."""

    def __init__(self, message: str, best: object = None, rate: float | None = None) -> None:
        super().__init__(message)
        self.best = best
        self.rate = rate


# ---------------------------------------------------------------------------
# Capacity
# ---------------------------------------------------------------------------


@overload
def cap(x: float) -> float: ...
@overload
def cap(x: np.ndarray) -> np.ndarray: ...
def cap(x: float | np.ndarray) -> float | np.ndarray:
    """Gaussian channel capacity C(x) = 1/2 log2(1 + x) in bits per channel use.

    Accepts scalars or numpy arrays. Negative SNRs are rejected.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError(f"cap() requires a non-negative SNR, got {np.min(arr)!r}")
    out = np.log1p(arr) / (2.0 * _LN2)
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Channel
# ---------------------------------------------------------------------------


def _check_non_negative(owner: str, **values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value) or value < 0:
            raise ValueError(f"{owner}.{name} must be finite and >= 0, got {value!r}")


def _check_probability(owner: str, **values: float) -> None:
    for name, value in values.items():
        if not (0.0 <= value <= 1.0):
            raise ValueError(f"{owner}.{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class ChannelParams:
    """Physical scenario in standard form (|h11| = |h22| = 1, unit noise)."""

    snr1: float
    snr2: float
    h12_sq: float
    h21_sq: float
    inr_gap: float

    def __post_init__(self) -> None:
        _check_non_negative(
            "ChannelParams",
            snr1=self.snr1,
            snr2=self.snr2,
            h12_sq=self.h12_sq,
            h21_sq=self.h21_sq,
            inr_gap=self.inr_gap,
        )

    @property
    def inr2(self) -> float:
        """Interference-to-noise ratio of the primary at the secondary receiver."""
        return self.h12_sq * self.snr1


@dataclass(frozen=True)
class DerivedLimits:
    """Per-slot limits on the secondary powers implied by a ChannelParams.

    ``inr_c`` caps the total secondary power in a slot where the primary may be
    on; ``sic_c`` caps the Layer-2 power so the primary stays decodable.
    ``sic_c`` may be negative, in which case Layer 2 is unusable.
    """

    inr2: float
    inr_c: float
    sic_c: float
    beta: float = 0.5

    @property
    def sic_prime_c(self) -> float:
        return self.sic_c + self.beta * self.inr2

    @property
    def sic_plus(self) -> float:
        return max(self.sic_c, 0.0)


def derive_limits(p: ChannelParams, beta: float = 0.5) -> DerivedLimits:
    """Compute INR2, INR_C, SIC_C and SIC'_C for *p* at on-fraction *beta*."""
    _check_probability("derive_limits", beta=beta)
    if p.h21_sq == 0:
        raise ZeroDivisionError("INR_C = inr_gap / h21_sq is undefined for h21_sq = 0")
    return DerivedLimits(
        inr2=p.inr2,
        inr_c=p.inr_gap / p.h21_sq,
        sic_c=p.h12_sq * (p.inr_gap + 1.0) - 1.0,
        beta=beta,
    )


def primary_rate(p: ChannelParams, beta: float) -> float:
    """Average rate of the fixed primary, R1 = beta * C(SNR1 / (1 + INR_gap))."""
    _check_probability("primary_rate", beta=beta)
    return beta * cap(p.snr1 / (1.0 + p.inr_gap))


def instantaneous_inr1(p: ChannelParams, power: float) -> float:
    """Interference the primary receiver sees from a secondary transmit power."""
    return p.h21_sq * power


# ---------------------------------------------------------------------------
# Traffic
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrafficModel:
    """Block activity model of the primary.

    A block has ``t_len + 1`` slots; slot 0 is reserved for sensing. The
    primary starts in state s0 ~ (pi0, pi1) and flips once at slot tau ~ f,
    where ``f[k]`` is the probability of tau = k + 1 and tau = T + 1 means it
    never switches within the block.
    """

    t_len: int
    pi0: float
    f: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if not isinstance(self.t_len, int | np.integer) or self.t_len < 1:
            raise ValueError(f"TrafficModel.t_len must be a positive integer, got {self.t_len!r}")
        _check_probability("TrafficModel", pi0=self.pi0)
        f = np.array(self.f, dtype=np.float64).reshape(-1)
        if f.shape != (self.t_len + 1,):
            raise ValueError(
                f"TrafficModel.f must have T+1 = {self.t_len + 1} entries, got {f.size}"
            )
        if np.any(~np.isfinite(f)) or np.any(f < 0):
            raise ValueError("TrafficModel.f entries must be finite and >= 0")
        f[f < PMF_ZERO] = 0.0
        total = float(f.sum())
        if abs(total - 1.0) > PMF_TOL:
            raise ValueError(f"TrafficModel.f must sum to 1 (within {PMF_TOL}), got {total!r}")
        f.setflags(write=False)
        object.__setattr__(self, "t_len", int(self.t_len))
        object.__setattr__(self, "f", f)

    @property
    def pi1(self) -> float:
        return 1.0 - self.pi0

    @property
    def pi(self) -> tuple[float, float]:
        return (self.pi0, self.pi1)

    @cached_property
    def cdf(self) -> np.ndarray:
        """F_T(t) for t = 1..T as an array of length T."""
        out = np.minimum(np.cumsum(self.f)[: self.t_len], 1.0)
        out.setflags(write=False)
        return out

    @cached_property
    def on_probability(self) -> np.ndarray:
        """Matrix beta_s(t), shape (2, T): row s0 = P(s_t = 1 | s0) for t = 1..T."""
        out = np.vstack([self.cdf, 1.0 - self.cdf])
        out.setflags(write=False)
        return out

    # -- pmf families -------------------------------------------------------

    @classmethod
    def uniform(cls, t_len: int, pi0: float = 0.5) -> TrafficModel:
        """Switch time uniform over {1, ..., T+1}."""
        return cls(t_len, pi0, np.full(t_len + 1, 1.0 / (t_len + 1)))

    @classmethod
    def point_mass(cls, t_len: int, tau: int, pi0: float = 0.5) -> TrafficModel:
        """Deterministic switch at slot *tau* (tau = T + 1 means no switch)."""
        if not 1 <= tau <= t_len + 1:
            raise ValueError(f"tau must lie in [1, {t_len + 1}], got {tau!r}")
        f = np.zeros(t_len + 1)
        f[tau - 1] = 1.0
        return cls(t_len, pi0, f)

    @classmethod
    def geometric(cls, t_len: int, p: float, pi0: float = 0.5) -> TrafficModel:
        """Switch time of a two-state Markov source flipping w.p. *p* per slot.

        Mass beyond slot T is collected at tau = T + 1.
        """
        _check_probability("TrafficModel.geometric", p=p)
        k = np.arange(1, t_len + 1)
        f = np.empty(t_len + 1)
        f[:t_len] = p * (1.0 - p) ** (k - 1)
        f[t_len] = (1.0 - p) ** t_len
        return cls(t_len, pi0, f)


def _check_slot(traffic: TrafficModel, t: int) -> None:
    if not 1 <= t <= traffic.t_len:
        raise IndexError(f"slot index must lie in [1, {traffic.t_len}], got {t!r}")


def state_cdf(traffic: TrafficModel, t: int) -> float:
    """F_T(t) = P(tau <= t)."""
    _check_slot(traffic, t)
    return float(traffic.cdf[t - 1])


def beta_s(traffic: TrafficModel, s0: int, t: int) -> float:
    """P(s_t = 1 | s0): F_T(t) when the block starts idle, 1 - F_T(t) when busy."""
    if s0 not in (0, 1):
        raise ValueError(f"s0 must be 0 or 1, got {s0!r}")
    _check_slot(traffic, t)
    return float(traffic.on_probability[s0, t - 1])


def long_run_on_fraction(traffic: TrafficModel) -> float:
    """On-fraction implied by the block model, averaged over data slots 1..T."""
    on = traffic.pi1 * traffic.on_probability[1] + traffic.pi0 * traffic.on_probability[0]
    return float(np.clip(on.mean(), 0.0, 1.0))


def mixture_noise_variance(traffic: TrafficModel, s0: int, t: int, inr2: float) -> float:
    """Mean noise variance at the secondary receiver in slot t given s0.

    The noise is a two-component Gaussian mixture: variance 1 + INR2 with
    probability beta_s(t), variance 1 otherwise.
    """
    return 1.0 + beta_s(traffic, s0, t) * inr2


# ---------------------------------------------------------------------------
# Sensing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SensingModel:
    """Binary sensing channel from s0 to the estimate s_hat0."""

    p_m: float = 0.0
    p_f: float = 0.0

    def __post_init__(self) -> None:
        _check_probability("SensingModel", p_m=self.p_m, p_f=self.p_f)

    @property
    def confusion(self) -> np.ndarray:
        """P(s_hat | s) with rows indexed by s and columns by s_hat."""
        return np.array([[1.0 - self.p_f, self.p_f], [self.p_m, 1.0 - self.p_m]])

    def joint(self, traffic: TrafficModel) -> np.ndarray:
        """pi(s) * P(s_hat | s), shape (2, 2), rows s, columns s_hat."""
        return np.asarray(traffic.pi)[:, None] * self.confusion

    def is_informative(self, traffic: TrafficModel) -> bool:
        """True when each sensed state is at least as likely right as wrong."""
        w = self.joint(traffic)
        return bool(w[0, 0] >= w[1, 0] and w[1, 1] >= w[0, 1])
