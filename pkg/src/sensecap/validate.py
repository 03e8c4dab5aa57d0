"""End-to-end oracle and invariant checks behind ``sensecap validate``."""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from itertools import pairwise

import numpy as np
from scipy.stats import binom

from sensecap.bounds import (
    Region,
    classify_region,
    effective_mac,
    genie_power,
    genie_rate,
    no_sensing_alpha_star,
)
from sensecap.model import (
    ChannelParams,
    DerivedLimits,
    OracleError,
    SensingModel,
    SolverError,
    TrafficModel,
    cap,
    derive_limits,
)
from sensecap.oracle import GridSpec, grid_alpha, grid_genie, projected_gradient_profile
from sensecap.scenario import SEED, reference_scenario
from sensecap.schemes import get_scheme
from sensecap.sense_opt import (
    PowerProfile,
    achievable_rate,
    check_monotone,
    optimize_profile,
    rate_gradient,
)
from sensecap.simulator import (
    CONFIDENCE,
    SimConfig,
    empirical_rate,
    empirical_sensing_errors,
    empirical_state_prob,
)

_log = logging.getLogger(__name__)

LEVELS = {
    "quick": {"instances": 20, "mac": 1_000, "gradient": 100, "grid": 20, "blocks": 20_000},
    "full": {"instances": 1000, "mac": 10_000, "gradient": 100, "grid": 100, "blocks": 1_000_000},
}

COVERAGE = {
    "quick": {"seeds": 50, "blocks": 10_000},
    "full": {"seeds": 200, "blocks": 10_000},
}

PROFILE_INSTANCES = {"quick": 20, "full": 100}
ORACLE_MONOTONE_TOL = 1e-5
SIGMA_BOUND = 5.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


@dataclass
class ValidationReport:
    level: str
    seed: int
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        out = [
            f"{'PASS' if c.passed else 'FAIL'}  {c.name:<22} {c.seconds:7.2f}s  {c.detail}"
            for c in self.checks
        ]
        out.append(f"{sum(c.passed for c in self.checks)}/{len(self.checks)} checks passed")
        return out


# ---------------------------------------------------------------------------
# Instance samplers
# ---------------------------------------------------------------------------


def random_channel(rng: np.random.Generator) -> ChannelParams:
    return ChannelParams(
        snr1=float(rng.uniform(0.1, 20.0)),
        snr2=float(rng.uniform(0.1, 20.0)),
        h12_sq=float(rng.uniform(0.05, 2.0)),
        h21_sq=float(rng.uniform(0.05, 2.0)),
        inr_gap=float(rng.uniform(0.0, 10.0)),
    )


def random_traffic(rng: np.random.Generator, t_len: int) -> TrafficModel:
    f = rng.dirichlet(np.ones(t_len + 1))
    return TrafficModel(t_len, float(rng.uniform(0.1, 0.9)), f / f.sum())


def random_profile_instance(
    rng: np.random.Generator, t_len: int
) -> tuple[ChannelParams, TrafficModel]:
    """Instance for the profile solvers, covering SIC_C^+ on both sides of SNR2."""
    params = ChannelParams(
        snr1=float(rng.uniform(0.5, 10.0)),
        snr2=float(rng.uniform(0.5, 10.0)),
        h12_sq=float(rng.uniform(0.05, 2.0)),
        h21_sq=float(rng.uniform(0.2, 2.0)),
        inr_gap=float(rng.uniform(0.5, 8.0)),
    )
    return params, random_traffic(rng, t_len)


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


def check_genie_vs_grid(rng: np.random.Generator, n: int) -> CheckResult:
    settings = GridSpec()
    slack = settings.step / math.log(2.0)
    worst_low = worst_high = 0.0
    for _ in range(n):
        params = random_channel(rng)
        beta = float(rng.uniform(0.05, 0.95))
        limits = derive_limits(params, beta)
        closed = genie_rate(genie_power(limits, params.snr2, beta), limits, beta)
        _, grid = grid_genie(limits, params.snr2, beta, settings)
        worst_low = max(worst_low, grid - closed)
        worst_high = max(worst_high, closed - grid)
    ok = worst_low <= 1e-3 and worst_high <= slack
    return CheckResult(
        "genie_vs_grid", ok, f"grid ahead by {worst_low:.2e}, closed form ahead by {worst_high:.2e}"
    )


def check_alpha_vs_grid(rng: np.random.Generator, n: int) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        params = random_channel(rng)
        limits = derive_limits(params)
        closed = no_sensing_alpha_star(limits, params.snr1, params.snr2, params.inr_gap)
        _, grid = grid_alpha(limits, params.snr1, params.snr2, params.inr_gap)
        worst = max(worst, abs(closed.rate - grid))
    return CheckResult("alpha_vs_grid", worst < 1e-6, f"max |diff| {worst:.2e}")


def check_mac_identity(rng: np.random.Generator, n: int) -> CheckResult:
    alpha = rng.uniform(0.0, 1.0, n)
    s = rng.uniform(0.01, 50.0, n)
    i = rng.uniform(0.01, 50.0, n)
    worst = 0.0
    for a, p, inr in zip(alpha, s, i, strict=True):
        worst = max(worst, abs(effective_mac(a, p, inr).total - cap(inr + p)))
    return CheckResult("mac_identity", worst <= 1e-12, f"max |diff| {worst:.2e}")


def check_summation_order(rng: np.random.Generator, n: int) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        t_len = int(rng.integers(1, 20))
        traffic = random_traffic(rng, t_len)
        rho = rng.uniform(0.01, 10.0, t_len)
        a, b = rng.uniform(0.5, 5.0, 2)
        before, after = cap(rho / a), cap(rho / b)
        lhs = sum(
            traffic.f[j - 1] * (before[: j - 1].sum() + after[j - 1 :].sum())
            for j in range(1, t_len + 2)
        )
        cdf = traffic.cdf
        rhs = float(((1.0 - cdf) * before + cdf * after).sum())
        worst = max(worst, abs(lhs - rhs))
    return CheckResult("summation_order", worst <= 1e-12, f"max |diff| {worst:.2e}")


def check_kkt_vs_gradient(rng: np.random.Generator, n: int) -> CheckResult:
    settings = GridSpec()
    worst = 0.0
    failures: list[str] = []
    for k in range(n):
        t_len = (2, 5, 10)[k % 3]
        params, traffic = random_profile_instance(rng, t_len)
        sensing = SensingModel(*[(0.0, 0.0), (0.2, 0.0), (0.0, 0.2), (0.2, 0.2)][k % 4])
        try:
            profile, report = optimize_profile(params, traffic, sensing)
            oracle_profile, oracle_rate = projected_gradient_profile(
                params, traffic, sensing, settings
            )
        except (SolverError, OracleError) as exc:
            failures.append(f"instance {k}: {exc}")
            continue
        worst = max(worst, abs(report.r2 - oracle_rate))
        if not sensing.is_informative(traffic):
            continue
        inr_c = derive_limits(params).inr_c
        if not check_monotone(profile, inr_c=inr_c).passed:
            failures.append(f"instance {k}: solver output not monotone")
        if not check_monotone(oracle_profile, tol=ORACLE_MONOTONE_TOL).passed:
            failures.append(f"instance {k}: oracle output not monotone")
    ok = worst <= 1e-4 and not failures
    detail = f"max |diff| {worst:.2e}"
    if failures:
        detail += "; " + "; ".join(failures[:3])
    return CheckResult("kkt_vs_gradient", ok, detail)


def check_gradient(rng: np.random.Generator, n: int, h: float = 1e-6) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        t_len = int(rng.integers(2, 8))
        params = ChannelParams(7.0, 7.0, float(rng.uniform(0.1, 1.0)), 0.5, 3.5)
        traffic = random_traffic(rng, t_len)
        sensing = SensingModel(*rng.uniform(0.0, 0.3, 2))
        base_n = rng.uniform(0.1, 3.0, (2, t_len))
        base_s = rng.uniform(0.1, 1.0, (2, t_len))
        d_n, d_s = rate_gradient(PowerProfile(base_n, base_s), params, traffic, sensing)
        s_hat, t = int(rng.integers(0, 2)), int(rng.integers(0, t_len))
        for analytic, which in ((d_n, 0), (d_s, 1)):
            arrays = [base_n, base_s]
            plus, minus = [a.copy() for a in arrays], [a.copy() for a in arrays]
            plus[which][s_hat, t] += h
            minus[which][s_hat, t] -= h
            r_plus = achievable_rate(PowerProfile(*plus), params, traffic, sensing, check=False)
            r_minus = achievable_rate(PowerProfile(*minus), params, traffic, sensing, check=False)
            fd = (r_plus.r2 - r_minus.r2) / (2.0 * h)
            rel = abs(analytic[s_hat, t] - fd) / max(abs(fd), 1e-12)
            worst = max(worst, rel)
    return CheckResult("gradient_fd", worst <= 1e-5, f"max rel err {worst:.2e}")


def check_region_map(points: int, snr: float = 7.0) -> CheckResult:
    gaps = np.linspace(0.05, 10.0, points)
    inr2s = np.linspace(0.0, 30.0, points)
    mismatches = 0
    for gap in gaps:
        lower, upper = snr / (1.0 + gap), snr * (1.0 + snr) / (1.0 + gap)
        for inr2 in inr2s:
            limits = DerivedLimits(inr2=inr2, inr_c=math.inf, sic_c=inr2 * (gap + 1.0) / snr - 1.0)
            region = classify_region(limits, snr, snr, gap)
            if inr2 <= lower:
                expected = Region.TREAT_AS_NOISE
            elif inr2 >= upper:
                expected = Region.DECODE_PRIMARY_FIRST
            else:
                expected = Region.SUPERPOSITION
            alpha = no_sensing_alpha_star(limits, snr, snr, gap).alpha_star
            consistent = {
                Region.TREAT_AS_NOISE: alpha == 0.0,
                Region.DECODE_PRIMARY_FIRST: alpha == 1.0,
                Region.SUPERPOSITION: 0.0 <= alpha <= 1.0,
            }[region]
            if region is not expected or not consistent:
                mismatches += 1
    total = points * points
    return CheckResult("region_map", mismatches == 0, f"{total - mismatches}/{total} cells agree")


def check_simulator_law(seed: int, blocks: int) -> CheckResult:
    traffic = TrafficModel.uniform(10, 0.5)
    config = SimConfig(blocks, seed)
    est = empirical_state_prob(traffic, config)
    z_state = est.max_sigma(traffic)
    sensing = SensingModel(0.1, 0.2)
    errors = empirical_sensing_errors(traffic, sensing, config)
    z_m = abs(errors.p_m - 0.1) / math.sqrt(0.1 * 0.9 / errors.blocks[1])
    z_f = abs(errors.p_f - 0.2) / math.sqrt(0.2 * 0.8 / errors.blocks[0])
    worst = max(z_state, z_m, z_f)
    return CheckResult("simulator_law", worst < SIGMA_BOUND, f"max deviation {worst:.2f} sigma")


def check_rate_coverage(seed: int, seeds: int, blocks: int) -> CheckResult:
    """Interval coverage and bias of the simulated rate over *seeds* independent runs.

    Each run misses the analytic rate with probability 1 - CONFIDENCE, so the
    miss count is compared against the 99.9% binomial quantile. The mean of the
    estimates must sit within three pooled standard errors of the analytic rate.
    """
    scenario = reference_scenario()
    result = get_scheme("perfect").solve(scenario)
    assert result.profile is not None
    sensing = SensingModel()
    estimates = [
        empirical_rate(
            result.profile, scenario.channel, scenario.traffic, sensing, SimConfig(blocks, seed + k)
        )
        for k in range(seeds)
    ]
    covered = sum(e.contains(result.rate) for e in estimates)
    allowed = int(binom.ppf(0.999, seeds, 1.0 - CONFIDENCE))
    bias = float(np.mean([e.mean for e in estimates])) - result.rate
    pooled = math.sqrt(sum(e.std_err**2 for e in estimates)) / seeds
    z = abs(bias) / pooled if pooled > 0 else (0.0 if bias == 0 else math.inf)
    ok = seeds - covered <= allowed and z < 3.0
    detail = f"{covered}/{seeds} intervals cover the analytic rate; bias {z:.2f} SE"
    return CheckResult("rate_coverage", ok, detail)


def check_trends() -> CheckResult:
    problems: list[str] = []
    perfect, nosense, genie = get_scheme("perfect"), get_scheme("nosense"), get_scheme("genie")

    base = reference_scenario()
    genie_rate_ = genie.solve(base).rate
    rates = [perfect.solve(reference_scenario(t)).rate for t in (5, 10, 20, 50)]
    if not all(b > a for a, b in pairwise(rates)):
        problems.append(f"perfect-sensing rate not increasing in T: {rates}")
    gaps = [genie_rate_ - r for r in rates]
    if not all(b < a for a, b in pairwise(gaps)):
        problems.append("gap to the genie bound does not shrink with T")

    crossing = False
    for gap in np.linspace(0.5, 30.0, 60):
        sc = base.with_updates("inr_gap", float(gap))
        if nosense.solve(sc).rate > perfect.solve(sc).rate:
            crossing = True
            break
    if not crossing:
        problems.append("no INR_gap where no sensing beats perfect sensing at T = 10")

    betas = (0.5, 0.7, 0.9, 0.99)
    beta_gaps: list[float] = []
    flat: set[float] = set()
    for beta in betas:
        sc = base.with_updates("beta", beta)
        ns = nosense.solve(sc).rate
        flat.add(ns)
        beta_gaps.append(genie.solve(sc).rate - ns)
    if len(flat) != 1:
        problems.append("no-sensing rate depends on beta")
    if not all(b < a for a, b in pairwise(beta_gaps)):
        problems.append(f"genie - no-sensing gap not decreasing in beta: {beta_gaps}")

    return CheckResult("trends", not problems, "; ".join(problems) or "T, INR_gap and beta trends")


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


def run_validation(level: str = "quick", seed: int = SEED) -> ValidationReport:
    """Run every check at the given level.

    Raises:
        ValueError: If *level* is not 'quick' or 'full'.
    """
    if level not in LEVELS:
        valid = ", ".join(sorted(LEVELS))
        raise ValueError(f"Unknown validation level '{level}'. Valid options: {valid}")
    sizes = LEVELS[level]
    coverage = COVERAGE[level]
    rng = np.random.default_rng(seed)
    report = ValidationReport(level, seed)

    checks: list[tuple[str, Callable[[], CheckResult]]] = [
        ("genie_vs_grid", lambda: check_genie_vs_grid(rng, sizes["instances"])),
        ("alpha_vs_grid", lambda: check_alpha_vs_grid(rng, sizes["instances"])),
        ("mac_identity", lambda: check_mac_identity(rng, sizes["mac"])),
        ("summation_order", lambda: check_summation_order(rng, sizes["instances"])),
        ("kkt_vs_gradient", lambda: check_kkt_vs_gradient(rng, PROFILE_INSTANCES[level])),
        ("gradient_fd", lambda: check_gradient(rng, sizes["gradient"])),
        ("region_map", lambda: check_region_map(sizes["grid"])),
        ("simulator_law", lambda: check_simulator_law(seed, sizes["blocks"])),
        (
            "rate_coverage",
            lambda: check_rate_coverage(seed, coverage["seeds"], coverage["blocks"]),
        ),
        ("trends", check_trends),
    ]
    for name, run in checks:
        started = time.perf_counter()
        try:
            result = run()
        except Exception as exc:
            _log.exception("validation check %s crashed", name)
            result = CheckResult(name, False, f"crashed: {exc}")
        result.seconds = time.perf_counter() - started
        _log.info("%s: %s", result.name, "pass" if result.passed else "FAIL")
        report.checks.append(result)
    return report
