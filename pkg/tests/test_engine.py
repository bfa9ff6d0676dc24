from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import kstest

from edgeworth import engine, prefs, trade
from edgeworth.engine import (
    ArctanNormal,
    PriorSpec,
    SimConfig,
    Tabulated,
    Terminal,
    UniformArc,
    example3_ladder_value,
    example3_process,
)
from edgeworth.errors import SamplingError, SpecificationError
from edgeworth.prefs import UtilitySpec
from edgeworth.trade import Allocation, Economy, SpeedPrior

from oracles import log_uniform


@pytest.fixture
def cd_economy(cd) -> Economy:
    return Economy.of([cd, cd])


@pytest.fixture
def shock() -> Allocation:
    return Allocation(np.array([[2.0, 1.0], [1.0, 2.0]]))


def make_config(economy, initial, q_prior, s_prior, **kw) -> SimConfig:
    defaults = dict(master_seed=1, runs=1, max_steps=500, pareto_tol=1e-8)
    defaults.update(kw)
    return SimConfig(economy, initial, PriorSpec(q_prior, s_prior), **defaults)


class TestPriorTypes:
    def test_arctan_normal_validation(self):
        with pytest.raises(SpecificationError):
            ArctanNormal(center_rate=-1.0, sigma_angle=0.1)
        with pytest.raises(SpecificationError):
            ArctanNormal(center_rate=1.0, sigma_angle=0.0)

    def test_tabulated_validation(self):
        with pytest.raises(SpecificationError):
            Tabulated(np.array([1.0, 2.0]), np.array([0.0, 0.0]))
        with pytest.raises(SpecificationError):
            Tabulated(np.array([1.0, -2.0]), np.array([0.5, 0.5]))

    def test_config_validation(self, cd_economy, shock):
        prior = PriorSpec(UniformArc(), SpeedPrior.UNIFORM_CUBE)
        with pytest.raises(SpecificationError):
            SimConfig(cd_economy, shock, prior, master_seed=1, runs=0)
        with pytest.raises(SpecificationError):
            SimConfig(cd_economy, shock, prior, master_seed=1, max_steps=0)


class TestQDensity:
    def test_arctan_normal_peak(self):
        assert engine.q_density(ArctanNormal(1.0, 0.1), 1.0) == pytest.approx(0.5)

    def test_uniform_arc(self):
        assert engine.q_density(UniformArc(), 1.0) == pytest.approx(0.5)

    def test_uniform_arc_is_wide_sigma_limit(self):
        wide = ArctanNormal(1.0, 1e3)
        flat = UniformArc()
        ratios = [
            engine.q_density(wide, q) / engine.q_density(flat, q) for q in (0.6, 1.0, 1.8)
        ]
        assert max(ratios) - min(ratios) < 1e-6

    def test_tabulated_atoms(self):
        prior = Tabulated(np.array([0.8, 1.0, 1.2]), np.array([1.0, 2.0, 1.0]))
        assert engine.q_density(prior, 1.0) == pytest.approx(2.0)
        assert engine.q_density(prior, 0.9) == 0.0


class TestDrawPrice:
    def test_uniform_arc_law_matches_closed_form_cdf(self, cd_economy, shock):
        rng = engine.run_rng(123, 0)
        prior = PriorSpec(UniformArc(), SpeedPrior.UNIFORM_CUBE)
        draws = np.array(
            [float(engine.draw_price(cd_economy, shock, prior, rng)[0]) for _ in range(10_000)]
        )
        a, b = math.atan(0.5), math.atan(2.0)

        def cdf(q):
            return (np.arctan(q) - a) / (b - a)

        stat = kstest(draws, cdf).statistic
        assert stat < 0.02
        assert draws.min() > 0.5 and draws.max() < 2.0

    def test_sticky_prior_concentrates(self, cd_economy, shock):
        rng = engine.run_rng(7, 0)
        prior = PriorSpec(ArctanNormal(1.0, 0.05), SpeedPrior.UNIFORM_CUBE)
        draws = np.array(
            [float(engine.draw_price(cd_economy, shock, prior, rng)[0]) for _ in range(2_000)]
        )
        # 4-sigma band on the angle: q in tan(pi/4 +- 4 * 0.05)
        four_sigma = np.tan(np.arctan(1.0) + np.array([-0.2, 0.2]))
        inside = np.mean((draws > four_sigma[0]) & (draws < four_sigma[1]))
        assert inside >= 0.99
        # (0.8, 1.25) is the +-2.21-sigma band; its mass is Phi(2.21)-Phi(-2.21)
        two_sigma_mass = float(np.mean((draws > 0.8) & (draws < 1.25)))
        assert two_sigma_mass == pytest.approx(0.9731, abs=0.015)

    def test_accepted_draws_are_trade_compatible(self, cd_economy, shock):
        rng = engine.run_rng(5, 3)
        prior = PriorSpec(UniformArc(), SpeedPrior.UNIFORM_CUBE)
        for _ in range(50):
            q = engine.draw_price(cd_economy, shock, prior, rng)
            assert trade.has_trade(cd_economy, shock, np.append(q, 1.0))

    def test_tabulated_single_atom(self, cd_economy, shock):
        rng = engine.run_rng(5, 4)
        prior = PriorSpec(Tabulated(np.array([1.0]), np.array([1.0])), SpeedPrior.MAX_SPEED)
        q = engine.draw_price(cd_economy, shock, prior, rng)
        assert q[0] == 1.0

    def test_zero_mass_prior_raises(self, cd_economy, shock):
        rng = engine.run_rng(5, 5)
        prior = PriorSpec(Tabulated(np.array([9.0]), np.array([1.0])), SpeedPrior.MAX_SPEED)
        with pytest.raises(SamplingError):
            engine.draw_price(cd_economy, shock, prior, rng)

    def test_three_goods_requires_tabulated(self, rng):
        specs = [
            UtilitySpec.ces([0.2, 0.3, 0.5], 0.5),
            UtilitySpec.ces([0.5, 0.3, 0.2], 0.5),
            UtilitySpec.cobb_douglas_log([0.3, 0.4, 0.3]),
            UtilitySpec.cobb_douglas_log([0.4, 0.2, 0.4]),
        ]
        e = Economy.of(specs)
        y = Allocation(log_uniform(np.random.default_rng(0), (4, 3), 0.8, 1.2))
        prior = PriorSpec(UniformArc(), SpeedPrior.UNIFORM_CUBE)
        with pytest.raises(SpecificationError):
            engine.draw_price(e, y, prior, engine.run_rng(1, 0))


class TestStep:
    def test_pareto_stop(self, cd_economy):
        flat = Allocation(np.array([[1.5, 1.5], [1.5, 1.5]]))
        prior = PriorSpec(UniformArc(), SpeedPrior.MAX_SPEED)
        assert engine.sntp_step(cd_economy, flat, prior, engine.run_rng(1, 0)) is None

    def test_forced_unit_price_max_speed_reaches_equilibrium(self, cd_economy, shock):
        prior = PriorSpec(Tabulated(np.array([1.0]), np.array([1.0])), SpeedPrior.MAX_SPEED)
        out, q, sigma = engine.sntp_step(cd_economy, shock, prior, engine.run_rng(1, 0))
        np.testing.assert_allclose(out.bundles, [[1.5, 1.5], [1.5, 1.5]], atol=1e-12)
        assert q[0] == 1.0
        np.testing.assert_allclose(sigma.sigma, [1.0, 1.0], atol=1e-12)

    def test_utilities_never_decrease(self, cd_economy, shock, cd):
        prior = PriorSpec(UniformArc(), SpeedPrior.UNIFORM_CUBE)
        rng = engine.run_rng(2, 0)
        state = shock
        for _ in range(20):
            step = engine.sntp_step(cd_economy, state, prior, rng)
            if step is None:
                break
            new, _, _ = step
            for h in range(2):
                assert prefs.utility(cd, new.bundle(h)) >= prefs.utility(cd, state.bundle(h)) - 1e-12
            state = new


class TestTrajectory:
    def test_determinism_bitwise(self, cd_economy, shock):
        cfg = make_config(cd_economy, shock, ArctanNormal(1.0, 0.2), SpeedPrior.UNIFORM_CUBE)
        t1 = engine.run_trajectory(cfg, 3)
        t2 = engine.run_trajectory(cfg, 3)
        assert t1.terminal == t2.terminal
        assert t1.steps == t2.steps
        for a, b in zip(t1.states, t2.states):
            np.testing.assert_array_equal(a.bundles, b.bundles)
        for a, b in zip(t1.prices, t2.prices):
            np.testing.assert_array_equal(a, b)

    def test_distinct_runs_differ(self, cd_economy, shock):
        cfg = make_config(cd_economy, shock, UniformArc(), SpeedPrior.UNIFORM_CUBE)
        t1 = engine.run_trajectory(cfg, 0)
        t2 = engine.run_trajectory(cfg, 1)
        assert t1.prices[0][0] != t2.prices[0][0]

    def test_frozen_at_pareto_start(self, cd_economy):
        flat = Allocation(np.array([[1.5, 1.5], [1.5, 1.5]]))
        cfg = make_config(cd_economy, flat, UniformArc(), SpeedPrior.MAX_SPEED)
        t = engine.run_trajectory(cfg, 0)
        assert t.terminal is Terminal.PARETO_REACHED
        assert t.steps == 0
        assert len(t.states) == 1
        np.testing.assert_array_equal(t.states[0].bundles, flat.bundles)
        np.testing.assert_allclose(t.terminal_q(cd_economy), [1.0])

    def test_aggregate_conserved_along_path(self, cd_economy, shock):
        cfg = make_config(cd_economy, shock, UniformArc(), SpeedPrior.UNIFORM_CUBE)
        t = engine.run_trajectory(cfg, 0)
        for state in t.states:
            np.testing.assert_allclose(state.aggregate, [3.0, 3.0], atol=1e-8)

    def test_states_replay_through_advance(self, cd_economy, shock):
        cfg = make_config(cd_economy, shock, UniformArc(), SpeedPrior.UNIFORM_CUBE, max_steps=40)
        t = engine.run_trajectory(cfg, 5)
        for k in range(t.steps):
            replayed = trade.advance(
                cd_economy, t.states[k], np.append(t.prices[k], 1.0), t.speeds[k]
            )
            np.testing.assert_allclose(replayed.bundles, t.states[k + 1].bundles, atol=1e-12)

    def test_fast_and_generic_paths_agree(self, cd_economy, shock):
        # coarse pareto_tol keeps direction norms far above the LP decision
        # floor, where the two acceptance tests provably coincide
        cfg = make_config(
            cd_economy, shock, ArctanNormal(1.0, 0.3), SpeedPrior.UNIFORM_CUBE,
            max_steps=60, pareto_tol=1e-3,
        )
        fast = engine.run_trajectory(cfg, 2)
        slow = engine.run_trajectory(cfg, 2, _force_generic=True)
        assert fast.terminal == slow.terminal
        assert fast.steps == slow.steps
        for a, b in zip(fast.states, slow.states):
            np.testing.assert_allclose(a.bundles, b.bundles, rtol=1e-9, atol=1e-12)

    def test_max_speed_converges_fast(self, cd_economy, shock):
        cfg = make_config(cd_economy, shock, UniformArc(), SpeedPrior.MAX_SPEED, max_steps=200, pareto_tol=1e-3)
        hits = 0
        for idx in range(100):
            t = engine.run_trajectory(cfg, idx)
            if t.terminal is Terminal.PARETO_REACHED:
                hits += 1
        assert hits >= 99

    def test_monotone_utilities_along_path(self, cd_economy, shock, cd):
        cfg = make_config(cd_economy, shock, UniformArc(), SpeedPrior.UNIFORM_CUBE, max_steps=80)
        t = engine.run_trajectory(cfg, 9)
        for h in range(2):
            vals = [prefs.utility(cd, s.bundle(h)) for s in t.states]
            assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


class TestMonteCarlo:
    def test_parallel_equals_sequential(self, cd_economy, shock):
        cfg = make_config(
            cd_economy, shock, ArctanNormal(1.0, 0.1), SpeedPrior.UNIFORM_CUBE, runs=64, max_steps=120
        )
        seq = engine.run_monte_carlo(cfg)
        par = engine.run_monte_carlo(cfg, workers=2)
        np.testing.assert_array_equal(seq.samples, par.samples)
        np.testing.assert_array_equal(seq.coords, par.coords)
        np.testing.assert_array_equal(seq.bin_counts, par.bin_counts)
        assert seq.mean == par.mean

    def test_sticky_prior_centers_on_equilibrium(self, cd_economy, shock):
        cfg = make_config(
            cd_economy, shock, ArctanNormal(1.0, 0.05), SpeedPrior.UNIFORM_CUBE, runs=500, master_seed=11
        )
        dist = engine.run_monte_carlo(cfg)
        assert abs(dist.mean - 1.5) < 0.05
        np.testing.assert_allclose(dist.household_means[0], [1.5, 1.5], atol=0.05)
        assert dist.runs == 500
        lo_wide, hi_wide = dist.bands["5-95"]
        lo_tight, hi_tight = dist.bands["25-75"]
        assert lo_wide <= lo_tight <= hi_tight <= hi_wide

    def test_bands_nested_and_counts_sum(self, cd_economy, shock):
        cfg = make_config(cd_economy, shock, UniformArc(), SpeedPrior.MAX_SPEED, runs=200)
        dist = engine.run_monte_carlo(cfg)
        assert dist.bin_counts.sum() == 200
        assert len(dist.terminal_tags) == 200


class TestGenericPathThreeGoods:
    @pytest.fixture
    def economy3(self) -> Economy:
        return Economy.of(
            [
                UtilitySpec.ces([0.2, 0.3, 0.5], 0.5),
                UtilitySpec.ces([0.5, 0.3, 0.2], 0.5),
                UtilitySpec.cobb_douglas_log([0.3, 0.4, 0.3]),
                UtilitySpec.cobb_douglas_log([0.4, 0.2, 0.4]),
            ]
        )

    @pytest.fixture
    def state3(self, economy3) -> Allocation:
        return Allocation(log_uniform(np.random.default_rng(42), (4, 3), 0.5, 2.0))

    def make_cfg(self, economy3, state3, s_prior, **kw) -> SimConfig:
        from oracles import clearing_price

        q_star = clearing_price(economy3, state3)
        atoms = np.vstack([q_star, q_star * 1.002, q_star * 0.998])
        prior = PriorSpec(Tabulated(atoms, np.array([1.0, 1.0, 1.0])), s_prior)
        defaults = dict(master_seed=5, runs=1, max_steps=12, pareto_tol=1e-8)
        defaults.update(kw)
        return SimConfig(economy3, state3, prior, **defaults)

    def test_trajectory_runs_and_conserves(self, economy3, state3):
        cfg = self.make_cfg(economy3, state3, SpeedPrior.UNIFORM_CUBE)
        t = engine.run_trajectory(cfg, 0)
        assert t.steps >= 1
        total = state3.aggregate
        for state in t.states:
            np.testing.assert_allclose(state.aggregate, total, atol=1e-8)
        for k in range(t.steps):
            replayed = trade.advance(
                economy3, t.states[k], np.append(t.prices[k], 1.0), t.speeds[k]
            )
            np.testing.assert_allclose(replayed.bundles, t.states[k + 1].bundles, atol=1e-10)

    def test_utilities_monotone_and_prices_from_grid(self, economy3, state3):
        cfg = self.make_cfg(economy3, state3, SpeedPrior.MAX_SPEED, max_steps=1)
        t = engine.run_trajectory(cfg, 1)
        assert t.steps == 1
        for h, spec in enumerate(economy3.specs):
            vals = [prefs.utility(spec, s.bundle(h)) for s in t.states]
            assert all(b >= a - 1e-10 for a, b in zip(vals, vals[1:]))
        grid = cfg.prior.q_prior.grid
        for q in t.prices:
            assert any(np.allclose(q, atom) for atom in grid)

    def test_exhausted_discrete_prior_fails_fast(self, economy3, state3):
        # after a max-speed epoch the narrow atom grid can lose all mass on
        # the trade-compatible set; that surfaces as a sampling error
        cfg = self.make_cfg(economy3, state3, SpeedPrior.MAX_SPEED, max_steps=12)
        start = time.perf_counter()
        with pytest.raises(SamplingError):
            engine.run_trajectory(cfg, 1)
        assert time.perf_counter() - start < 5.0

    def test_monte_carlo_summarizes_over_rates(self, economy3, state3):
        cfg = self.make_cfg(economy3, state3, SpeedPrior.UNIFORM_CUBE, runs=4, max_steps=6)
        dist = engine.run_monte_carlo(cfg)
        assert dist.samples.shape == (4, 4, 3)
        assert dist.terminal_qs.shape == (4, 2)
        # higher-dimensional outcomes are summarized over the first rate
        np.testing.assert_array_equal(dist.coords, dist.terminal_qs[:, 0])


class TestExample3:
    def test_outcome_values_match_product_formula(self):
        dist = example3_process(engine.run_rng(1, 0), 300)
        for coord, steps in zip(dist.coords, dist.steps):
            assert coord == pytest.approx(example3_ladder_value(int(steps)), rel=1e-12)

    def test_ladder_values_exact_fractions(self):
        assert example3_ladder_value(1) == pytest.approx(1.5)
        assert example3_ladder_value(2) == pytest.approx(float(Fraction(35, 24)))

    def test_masses_follow_geometric_law(self):
        dist = example3_process(engine.run_rng(1, 0), 10_000)
        for j, mass in ((1, 0.5), (2, 0.25), (3, 0.125)):
            freq = float(np.mean(dist.steps == j))
            assert abs(freq - mass) <= 0.02

    def test_single_run_degenerate(self):
        dist = example3_process(engine.run_rng(9, 0), 1)
        assert dist.runs == 1
        assert dist.bin_counts.sum() == 1
