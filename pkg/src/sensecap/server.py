"""FastMCP server exposing sensecap tools."""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

from mcp.server.fastmcp import FastMCP

from sensecap.bounds import classify_region, no_sensing_alpha_star
from sensecap.cli import to_json, write_profile
from sensecap.model import ChannelParams, SensingModel, derive_limits
from sensecap.scenario import SENSECAP_HOME, SEED, Scenario, scenario_from_dict
from sensecap.schemes import SCHEME_REGISTRY, get_scheme
from sensecap.simulator import SimConfig, empirical_rate, primary_protection_check

_log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# MCP server setup
# ---------------------------------------------------------------------------

mcp = FastMCP("sensecap")

# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

MAX_SIM_BLOCKS = 1_000_000


def _parse_scenario(scenario_json: str) -> Scenario:
    return scenario_from_dict(json.loads(scenario_json))


def _scenario_hash(scenario: Scenario) -> str:
    text = json.dumps(scenario.to_dict(), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _run_dir(scenario: Scenario) -> Path:
    """Per-scenario output directory under SENSECAP_HOME."""
    d = SENSECAP_HOME / "runs" / _scenario_hash(scenario)
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# MCP Tools
# ---------------------------------------------------------------------------


@mcp.tool()
def solve_scheme(scenario_json: str, scheme: str = "perfect", save: bool = False) -> str:
    """
    Solve one transmission scheme for a scenario.

    Args:
        scenario_json: Scenario document as a JSON string with "channel",
                       "traffic", optional "sensing" and optional "beta".
        scheme: One of 'genie', 'perfect', 'noisy', 'nosense'.
        save: If True, also write report.json and profile.csv under
              SENSECAP_HOME/runs/<scenario hash>/.

    Returns:
        JSON report with the rate, tags and constraint slacks.
    """
    try:
        scenario = _parse_scenario(scenario_json)
        result = get_scheme(scheme).solve(scenario)
        text = to_json(result.summary())
        if save:
            out = _run_dir(scenario) / scheme
            out.mkdir(parents=True, exist_ok=True)
            (out / "report.json").write_text(text, encoding="utf-8")
            if result.profile is not None:
                write_profile(str(out / "profile.csv"), result.profile)
            text += f"saved to {out}\n"
        return text
    except Exception as e:
        _log.exception("solve_scheme failed")
        return f"Error: {e}"


@mcp.tool()
def region_of_operation(
    snr1: float, snr2: float, h12_sq: float, h21_sq: float, inr_gap: float
) -> str:
    """
    Classify where the no-sensing secondary operates and its superposition fraction.

    Returns:
        Region tag (R1_TreatAsNoise, R2_Superposition, R3_DecodePrimaryFirst or
        NotAllowed), alpha* and the resulting rate.
    """
    try:
        params = ChannelParams(snr1, snr2, h12_sq, h21_sq, inr_gap)
        limits = derive_limits(params)
        region = classify_region(limits, snr1, snr2, inr_gap)
        result = no_sensing_alpha_star(limits, snr1, snr2, inr_gap)
        return (
            f"Region:     {region}\n"
            f"alpha*:     {result.alpha_star:.6g}\n"
            f"Rate:       {result.rate:.6g} bits/slot\n"
            f"Power used: {result.power:.6g}"
        )
    except Exception as e:
        return f"Error: {e}"


@mcp.tool()
def simulate_scheme(
    scenario_json: str, scheme: str = "perfect", blocks: int = 100_000, seed: int = SEED
) -> str:
    """
    Monte Carlo check of a sense-and-send scheme against its analytic rate.

    Args:
        scenario_json: Scenario document as a JSON string.
        scheme: 'perfect' or 'noisy'.
        blocks: Number of simulated blocks (max 1,000,000).
        seed: RNG seed; equal seeds give identical output.

    Returns:
        Analytic rate, empirical estimate with its 95% interval and the
        primary-protection verdict.
    """
    try:
        if blocks > MAX_SIM_BLOCKS:
            return f"Error: blocks must be <= {MAX_SIM_BLOCKS}"
        scenario = _parse_scenario(scenario_json)
        solver = get_scheme(scheme)
        if not solver.has_profile:
            valid = ", ".join(n for n in sorted(SCHEME_REGISTRY) if get_scheme(n).has_profile)
            return f"Error: scheme '{scheme}' cannot be simulated. Valid options: {valid}"
        result = solver.solve(scenario)
        assert result.profile is not None
        sensing = scenario.sensing if scheme == "noisy" else SensingModel()
        est = empirical_rate(
            result.profile, scenario.channel, scenario.traffic, sensing, SimConfig(blocks, seed)
        )
        protection = primary_protection_check(result.profile, scenario.channel)
        verdict = "inside" if est.contains(result.rate) else "OUTSIDE (statistical alarm)"
        return (
            f"Scheme:        {scheme}\n"
            f"Analytic rate: {result.rate:.9g}\n"
            f"Estimate:      {est.mean:.9g} "
            f"[{est.ci_low:.9g}, {est.ci_high:.9g}] over {est.num_blocks} blocks\n"
            f"Analytic rate is {verdict} the 95% interval\n"
            f"Primary protection: {'pass' if protection.passed else 'FAIL'} "
            f"(max INR1 {protection.max_inr1:.6g})"
        )
    except Exception as e:
        _log.exception("simulate_scheme failed")
        return f"Error: {e}"


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main() -> None:
    mcp.run()


if __name__ == "__main__":
    main()
