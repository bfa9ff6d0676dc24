from __future__ import annotations

import numpy as np
import pytest

from edgeworth import trade, verify
from edgeworth.engine import PriorSpec, SimConfig, UniformArc
from edgeworth.errors import SpecificationError
from edgeworth.prefs import UtilitySpec
from edgeworth.trade import Allocation, Economy, SpeedPrior

from oracles import clearing_price, log_uniform


class TestIdentitySuite:
    @pytest.mark.parametrize("family,bound", [("cd", 1e-9), ("ces", 1e-8)])
    def test_passes_with_tiny_residuals(self, family, bound, cd, ces):
        spec = cd if family == "cd" else ces
        report = verify.identity_suite(spec, draws=1000, seed=3)
        assert report.passed
        assert report.worst_violation <= bound
        assert report.draws == 1000

    def test_three_goods(self):
        spec = UtilitySpec.ces([0.2, 0.5, 0.3], 0.4)
        report = verify.identity_suite(spec, draws=300, seed=5)
        assert report.passed

    def test_corrupted_demand_fails_every_draw(self, cd):
        report = verify.identity_suite(cd, draws=50, seed=3, demand_scale=1.01)
        assert not report.passed
        assert report.failures == 50

    def test_deterministic(self, ces):
        a = verify.identity_suite(ces, draws=200, seed=11)
        b = verify.identity_suite(ces, draws=200, seed=11)
        assert a == b


class TestJacobianSuite:
    @pytest.mark.parametrize("family", ["cd", "ces"])
    def test_passes(self, family, cd, ces):
        spec = cd if family == "cd" else ces
        report = verify.jacobian_suite(spec, draws=300, seed=7)
        assert report.passed
        # worst is scaled so 1.0 is the failure bar
        assert report.worst_violation < 1.0


class TestClearingSolver:
    def test_matches_scipy_oracle(self, rng):
        specs = [
            UtilitySpec.ces([0.2, 0.3, 0.5], 0.5),
            UtilitySpec.ces([0.5, 0.3, 0.2], 0.4),
        ]
        e = Economy.of(specs)
        for _ in range(10):
            y = Allocation(log_uniform(rng, (2, 3)))
            q_mine = verify.weighted_clearing_rates(e, y, np.ones(2))
            q_ref = clearing_price(e, y)
            np.testing.assert_allclose(q_mine, q_ref, rtol=1e-8)

    def test_weighted_solution_is_trade_compatible(self, rng):
        specs = [
            UtilitySpec.ces([0.2, 0.3, 0.5], 0.5),
            UtilitySpec.cobb_douglas_log([0.4, 0.3, 0.3]),
        ]
        e = Economy.of(specs)
        for _ in range(10):
            y = Allocation(log_uniform(rng, (2, 3)))
            w = rng.uniform(0.2, 1.0, 2)
            q = verify.weighted_clearing_rates(e, y, w)
            sigma = trade.SpeedVector(w / w.max())
            assert trade.speed_contains(e, y, np.append(q, 1.0), sigma)


class TestAttractionSuite:
    def test_2x2_cobb_douglas(self, cd):
        report = verify.attraction_suite(Economy.of([cd, cd]), draws=300, seed=1)
        assert report.passed

    def test_three_good_ces_pair(self):
        specs = [
            UtilitySpec.ces([0.2, 0.5, 0.3], 0.5),
            UtilitySpec.ces([0.4, 0.3, 0.3], 0.5),
        ]
        report = verify.attraction_suite(Economy.of(specs), draws=300, seed=1)
        assert report.passed

    def test_mixed_2x2(self, cd, ces73):
        report = verify.attraction_suite(Economy.of([cd, ces73]), draws=200, seed=2)
        assert report.passed

    def test_rejects_unserialized_families(self, mult_c1c2):
        with pytest.raises(SpecificationError):
            verify.attraction_suite(Economy.of([mult_c1c2, mult_c1c2]), draws=10, seed=0)


class TestWelfareSuite:
    def test_cobb_douglas_config(self):
        cfg = verify._bundled_configs()["cobb_douglas"]
        report = verify.welfare_suite(cfg, seed=0)
        assert report.passed
        assert report.worst_violation == 0.0

    def test_ces_config(self):
        cfg = verify._bundled_configs()["ces"]
        report = verify.welfare_suite(cfg, seed=0)
        assert report.passed

    def test_already_optimal_start_counts_converged(self, cd):
        e = Economy.of([cd, cd])
        flat = Allocation(np.array([[1.5, 1.5], [1.5, 1.5]]))
        cfg = SimConfig(
            e, flat, PriorSpec(UniformArc(), SpeedPrior.MAX_SPEED), master_seed=0, runs=20, max_steps=200
        )
        report = verify.welfare_suite(cfg, seed=0)
        assert report.passed

    def test_requires_max_speed(self, cd):
        e = Economy.of([cd, cd])
        cfg = SimConfig(
            e,
            Allocation(np.array([[2.0, 1.0], [1.0, 2.0]])),
            PriorSpec(UniformArc(), SpeedPrior.UNIFORM_CUBE),
            master_seed=0,
            runs=10,
        )
        with pytest.raises(SpecificationError):
            verify.welfare_suite(cfg)


class TestRunAll:
    def test_filter_selects_suites(self):
        reports = verify.run_all(seed=0, name_filter="jacobian")
        assert len(reports) == 2
        assert all("jacobian" in r.check_name for r in reports)
        assert all(r.passed for r in reports)

    def test_injected_fault_fails(self):
        reports = verify.run_all(seed=0, name_filter="identity", inject_fault=True)
        assert all(not r.passed for r in reports)

    def test_report_line_format(self, cd):
        line = verify.identity_suite(cd, draws=10, seed=0).line()
        assert "identity" in line and "PASS" in line and "seed=0" in line
