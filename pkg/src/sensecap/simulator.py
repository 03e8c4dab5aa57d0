"""Monte Carlo sampling of the block activity model.

Blocks are generated in fixed-size chunks. Chunk ``c`` draws from its own
PCG64 stream seeded by ``SeedSequence(seed, spawn_key=(c,))``, so a run is
reproducible bit for bit and chunks can be generated in any order.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from sensecap.model import FEAS_TOL, ChannelParams, SensingModel, TrafficModel
from sensecap.scenario import SEED
from sensecap.sense_opt import PowerProfile, slot_capacities

_log = logging.getLogger(__name__)

CHUNK_BLOCKS = 4096
CONFIDENCE = 0.95


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BlockRealization:
    """One block: start state, switch slot, per-slot states 0..T and the sensed state."""

    s0: int
    tau: int
    states: np.ndarray = field(repr=False)
    sensed: int


@dataclass(frozen=True)
class SimConfig:
    num_blocks: int
    seed: int = SEED

    def __post_init__(self) -> None:
        if self.num_blocks < 1:
            raise ValueError(f"SimConfig.num_blocks must be >= 1, got {self.num_blocks!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"SimConfig.seed must fit in 64 unsigned bits, got {self.seed!r}")


@dataclass(frozen=True)
class BlockBatch:
    """Vectorised draws for a chunk of blocks."""

    s0: np.ndarray
    tau: np.ndarray
    sensed: np.ndarray

    def on_matrix(self, t_len: int) -> np.ndarray:
        """Boolean (n, T): primary on in data slot t = 1..T."""
        t = np.arange(1, t_len + 1)[None, :]
        switched = t >= self.tau[:, None]
        return np.where(self.s0[:, None] == 0, switched, ~switched)


@dataclass(frozen=True, eq=False)
class StateEstimate:
    """Empirical P(s_t = 1 | s0), shape (2, T), with NaN rows for unseen start states."""

    beta_hat: np.ndarray
    blocks: tuple[int, int]

    def max_sigma(self, traffic: TrafficModel) -> float:
        """Largest deviation from the exact law in binomial standard deviations."""
        exact = traffic.on_probability
        worst = 0.0
        for s in (0, 1):
            n = self.blocks[s]
            if n == 0:
                continue
            dev = np.abs(self.beta_hat[s] - exact[s])
            sd = np.sqrt(exact[s] * (1.0 - exact[s]) / n)
            z = np.where(sd > 0, dev / np.where(sd > 0, sd, 1.0), np.where(dev > 1e-12, np.inf, 0))
            worst = max(worst, float(z.max()))
        return worst


@dataclass(frozen=True)
class SensingEstimate:
    p_m: float
    p_f: float
    blocks: tuple[int, int]


@dataclass(frozen=True)
class RateEstimate:
    mean: float
    std_err: float
    ci_low: float
    ci_high: float
    num_blocks: int
    seed: int

    def contains(self, value: float) -> bool:
        return self.ci_low - 1e-12 <= value <= self.ci_high + 1e-12

    def to_dict(self) -> dict[str, float | int]:
        return {
            "mean": self.mean,
            "std_err": self.std_err,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "num_blocks": self.num_blocks,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ProtectionReport:
    passed: bool
    max_inr1: float
    violations: list[tuple[int, int, float]]  # (sensed_state, slot, INR1)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def block_rng(seed: int, chunk: int) -> np.random.Generator:
    """Independent generator for chunk *chunk* of a run seeded with *seed*."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _switch_cdf(traffic: TrafficModel) -> np.ndarray:
    cdf = np.cumsum(traffic.f)
    cdf[-1] = 1.0
    return cdf


def _draw(u: np.ndarray, traffic: TrafficModel, sensing: SensingModel) -> BlockBatch:
    """Map uniforms of shape (n, 3) to (s0, tau, sensed)."""
    s0 = (u[:, 0] >= traffic.pi0).astype(np.int64)
    tau = np.searchsorted(_switch_cdf(traffic), u[:, 1], side="right") + 1
    flip_prob = np.where(s0 == 1, sensing.p_m, sensing.p_f)
    sensed = np.where(u[:, 2] < flip_prob, 1 - s0, s0)
    return BlockBatch(s0, tau.astype(np.int64), sensed.astype(np.int64))


def sample_block(
    traffic: TrafficModel, sensing: SensingModel, rng: np.random.Generator
) -> BlockRealization:
    """Draw one block: s0 ~ pi, tau ~ f, then pass s0 through the sensing channel."""
    batch = _draw(rng.random((1, 3)), traffic, sensing)
    s0, tau = int(batch.s0[0]), int(batch.tau[0])
    slots = np.arange(traffic.t_len + 1)
    states = np.where(slots < tau, s0, 1 - s0)
    return BlockRealization(s0=s0, tau=tau, states=states, sensed=int(batch.sensed[0]))


def sample_blocks(
    traffic: TrafficModel, sensing: SensingModel, config: SimConfig
) -> Iterator[BlockBatch]:
    """Yield the run's blocks chunk by chunk, in chunk order."""
    remaining = config.num_blocks
    chunk = 0
    while remaining > 0:
        n = min(CHUNK_BLOCKS, remaining)
        yield _draw(block_rng(config.seed, chunk).random((n, 3)), traffic, sensing)
        remaining -= n
        chunk += 1


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def empirical_state_prob(
    traffic: TrafficModel, config: SimConfig, sensing: SensingModel | None = None
) -> StateEstimate:
    """Fraction of blocks with the primary on in slot t, split by start state."""
    sensing = sensing or SensingModel()
    on = np.zeros((2, traffic.t_len))
    blocks = np.zeros(2, dtype=np.int64)
    for batch in sample_blocks(traffic, sensing, config):
        active = batch.on_matrix(traffic.t_len)
        for s in (0, 1):
            rows = batch.s0 == s
            blocks[s] += int(rows.sum())
            on[s] += active[rows].sum(axis=0)
    beta_hat = np.full((2, traffic.t_len), np.nan)
    for s in (0, 1):
        if blocks[s] > 0:
            beta_hat[s] = on[s] / blocks[s]
        else:
            _log.info("no sampled block started in state %d; row left undefined", s)
    return StateEstimate(beta_hat, (int(blocks[0]), int(blocks[1])))


def empirical_sensing_errors(
    traffic: TrafficModel, sensing: SensingModel, config: SimConfig
) -> SensingEstimate:
    """Observed missed-detection and false-alarm frequencies (NaN when undefined)."""
    counts = np.zeros((2, 2), dtype=np.int64)  # [s0, sensed]
    for batch in sample_blocks(traffic, sensing, config):
        np.add.at(counts, (batch.s0, batch.sensed), 1)
    busy, idle = int(counts[1].sum()), int(counts[0].sum())
    p_m = counts[1, 0] / busy if busy else math.nan
    p_f = counts[0, 1] / idle if idle else math.nan
    return SensingEstimate(float(p_m), float(p_f), (idle, busy))


def empirical_rate(
    profile: PowerProfile,
    params: ChannelParams,
    traffic: TrafficModel,
    sensing: SensingModel,
    config: SimConfig,
) -> RateEstimate:
    """Mean per-block rate with a normal confidence interval.

    Each data slot contributes C_{s_hat 0} when the primary is off and
    C_{s_hat 1} when it is on, evaluated at the powers of the sensed row.
    The block rate is divided by T + 1 to charge the sensing slot.
    """
    if profile.t_len != traffic.t_len:
        raise ValueError(
            f"profile has {profile.t_len} slots but the traffic model has T = {traffic.t_len}"
        )
    off, on = slot_capacities(profile, params.inr2)
    scale = 1.0 / (traffic.t_len + 1)

    count, mean, m2 = 0, 0.0, 0.0
    for batch in sample_blocks(traffic, sensing, config):
        active = batch.on_matrix(traffic.t_len)
        rates = np.where(active, on[batch.sensed], off[batch.sensed]).sum(axis=1) * scale
        n_b = rates.size
        mean_b = float(rates.mean())
        m2_b = float(((rates - mean_b) ** 2).sum())
        # pairwise merge of running moments
        delta = mean_b - mean
        total = count + n_b
        mean += delta * n_b / total
        m2 += m2_b + delta * delta * count * n_b / total
        count = total

    std_err = math.sqrt(m2 / (count - 1) / count) if count > 1 else 0.0
    half = float(norm.ppf(0.5 + CONFIDENCE / 2.0)) * std_err
    _log.debug("empirical rate %.9g +/- %.3g over %d blocks", mean, half, count)
    return RateEstimate(mean, std_err, mean - half, mean + half, count, config.seed)


def primary_protection_check(profile: PowerProfile, params: ChannelParams) -> ProtectionReport:
    """Check h21^2 (rho_N + rho_S) <= INR_gap in every sensed state and slot."""
    inr1 = params.h21_sq * profile.total
    bad = np.argwhere(inr1 > params.inr_gap + FEAS_TOL)
    violations = [(int(s), int(t) + 1, float(inr1[s, t])) for s, t in bad]
    for s_hat, slot, value in violations:
        _log.warning(
            "INR at the primary %.6g exceeds INR_gap %.6g (sensed %d, slot %d)",
            value,
            params.inr_gap,
            s_hat,
            slot,
        )
    max_inr1 = float(inr1.max()) if inr1.size else 0.0
    return ProtectionReport(not violations, max_inr1, violations)


def trace_rows(
    traffic: TrafficModel, sensing: SensingModel, config: SimConfig
) -> Iterator[tuple[int, int, int, int]]:
    """(block, s0, tau, sensed) for every block of the run, for audit exports."""
    index = 0
    for batch in sample_blocks(traffic, sensing, config):
        for s0, tau, sensed in zip(batch.s0, batch.tau, batch.sensed, strict=True):
            yield index, int(s0), int(tau), int(sensed)
            index += 1
