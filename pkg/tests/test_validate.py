"""Tests for the validation suite behind ``sensecap validate``."""

from __future__ import annotations

import numpy as np
import pytest

from sensecap.model import derive_limits
from sensecap.validate import (
    CheckResult,
    ValidationReport,
    check_alpha_vs_grid,
    check_genie_vs_grid,
    check_gradient,
    check_kkt_vs_gradient,
    check_mac_identity,
    check_rate_coverage,
    check_region_map,
    check_summation_order,
    check_trends,
    random_profile_instance,
    run_validation,
)


class TestReport:
    def test_lines_and_verdict(self):
        report = ValidationReport("quick", 1, [CheckResult("a", True), CheckResult("b", False)])
        lines = report.lines()
        assert not report.passed
        assert lines[0].startswith("PASS  a")
        assert lines[1].startswith("FAIL  b")
        assert lines[-1] == "1/2 checks passed"

    def test_unknown_level(self):
        with pytest.raises(ValueError, match="Unknown validation level"):
            run_validation("exhaustive")


class TestChecks:
    def test_instance_sampler_covers_both_layer2_regimes(self):
        rng = np.random.default_rng(0)
        above = below = 0
        for _ in range(200):
            params, traffic = random_profile_instance(rng, 4)
            limits = derive_limits(params)
            if min(limits.sic_plus, limits.inr_c) > params.snr2:
                above += 1
            else:
                below += 1
            assert traffic.t_len == 4
        assert above > 0
        assert below > 0

    def test_rate_coverage(self):
        result = check_rate_coverage(11, seeds=10, blocks=2_000)
        assert result.passed, result.detail
        assert result.detail.endswith("SE")

    def test_kkt_against_gradient_with_caps(self):
        result = check_kkt_vs_gradient(np.random.default_rng(5), 2)
        assert result.passed, result.detail

    def test_closed_forms_against_grids(self):
        rng = np.random.default_rng(1)
        assert check_genie_vs_grid(rng, 5).passed
        assert check_alpha_vs_grid(rng, 5).passed

    def test_identities(self):
        rng = np.random.default_rng(2)
        assert check_mac_identity(rng, 200).passed
        assert check_summation_order(rng, 20).passed
        assert check_gradient(rng, 20).passed

    def test_region_map(self):
        result = check_region_map(40)
        assert result.passed
        assert result.detail == "1600/1600 cells agree"

    def test_trends(self):
        result = check_trends()
        assert result.passed, result.detail


@pytest.mark.slow
def test_quick_level_passes():
    report = run_validation("quick", seed=7)
    assert report.passed, "\n".join(report.lines())
