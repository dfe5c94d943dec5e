import csv

import numpy as np
import pytest
from scipy.stats import chisquare

from whittle_kit.errors import InsufficientSamples
from whittle_kit.learner import (
    ArmSimulator,
    EmpiricalCounts,
    LearningTrace,
    Schedule,
    blinq_run,
    error_metrics,
    estimate_arm,
    loglog_slope,
    run_streams,
    write_metrics_csv,
)
from whittle_kit.solver import ewisc


def simulate_counts(arm, steps, seed, check=False):
    sim = ArmSimulator(arm)
    act, env = run_streams(seed)
    counts = EmpiricalCounts.empty(arm.num_states)
    s = sim.initial_state
    for a in act.integers(0, 2, size=steps):
        nxt, _ = sim.step(s, int(a), env)
        counts.observe(s, int(a), nxt)
        s = nxt
        if check:
            counts.check()
    return counts


class TestEstimate:
    def test_ratio(self):
        c = EmpiricalCounts.empty(2)
        for nxt in (1, 1, 1, 0):
            c.observe(0, 0, nxt)
        for s, a in ((0, 1), (1, 0), (1, 1)):
            c.observe(s, a, 0)
        est = estimate_arm(c, [0, 0], [1, 1])
        np.testing.assert_allclose(est.p_passive[0], [0.25, 0.75])
        assert est.source_counts == 7

    def test_unvisited_pair(self):
        c = EmpiricalCounts.empty(2)
        c.observe(0, 0, 1)
        with pytest.raises(InsufficientSamples):
            estimate_arm(c, [0, 0], [1, 1])

    def test_rows_sum_to_one_and_rewards_copied(self, restart_arm):
        c = simulate_counts(restart_arm, 3000, seed=1)
        est = estimate_arm(c, restart_arm.r_passive, restart_arm.r_active)
        np.testing.assert_allclose(est.transitions.sum(axis=2), 1.0, atol=1e-15)
        np.testing.assert_array_equal(est.r_passive, restart_arm.r_passive)

    def test_concentration(self, restart_arm):
        c = simulate_counts(restart_arm, 10**6, seed=2)
        est = estimate_arm(c, restart_arm.r_passive, restart_arm.r_active)
        assert np.abs(est.transitions - restart_arm.transitions).sum(axis=2).max() < 0.02

    def test_support_recovered(self, restart_arm):
        c = simulate_counts(restart_arm, 10**5, seed=3)
        est = estimate_arm(c, restart_arm.r_passive, restart_arm.r_active)
        np.testing.assert_array_equal(est.transitions > 0, restart_arm.transitions > 0)


def test_count_conservation(restart_arm):
    simulate_counts(restart_arm, 2000, seed=4, check=True)


def test_simulator_frequencies(restart_arm):
    sim = ArmSimulator(restart_arm)
    rng = np.random.default_rng(5)
    draws = np.array([sim.step(2, 0, rng)[0] for _ in range(10**5)])
    observed = np.bincount(draws, minlength=5)
    p = restart_arm.p_passive[2]
    support = p > 0
    assert set(np.flatnonzero(observed)) <= set(np.flatnonzero(support))
    assert chisquare(observed[support], 1e5 * p[support]).pvalue > 1e-3
    assert sim.step(2, 1, rng) == (0, 0.0)


class TestSchedule:
    def test_doubling_gaps(self):
        assert Schedule().run_times(10, 100) == [10, 11, 13, 17, 25, 41, 73, 100]
        assert Schedule(final=False).run_times(10, 100) == [10, 11, 13, 17, 25, 41, 73]

    def test_rounding_up(self):
        assert Schedule(factor=1.5, first_gap=1, final=False).run_times(0, 20) == [0, 1, 3, 6, 11, 19]  # gaps 1, 2, 3, 5, 8

    def test_checkpoints_skip_before_start(self):
        assert Schedule(checkpoints=(5, 50, 500)).run_times(10, 500) == [50, 500]

    def test_invalid(self):
        with pytest.raises(ValueError):
            Schedule(factor=1.0)
        with pytest.raises(ValueError):
            Schedule(first_gap=0)


class TestBlinq:
    def args(self, arm):
        return ArmSimulator(arm), (arm.r_passive, arm.r_active)

    def test_one_step_has_no_records(self, restart_arm):
        tr = blinq_run(*self.args(restart_arm), Schedule(), 1, seed=0)
        assert len(tr) == 0

    def test_restart_arm_converges(self, restart_arm):
        tr = blinq_run(*self.args(restart_arm), Schedule(), 20_000, seed=0, reference=restart_arm)
        assert tr.times == sorted(set(tr.times))
        assert error_metrics(tr)[-1, 3] < 0.05

    def test_discounted(self, restart_arm):
        arm = restart_arm.replace(discount=0.9)
        tr = blinq_run(*self.args(arm), Schedule(), 20_000, seed=0, discount=0.9, reference=arm)
        assert error_metrics(tr)[-1, 3] < 0.05

    def test_deterministic(self, restart_arm):
        a = blinq_run(*self.args(restart_arm), Schedule(), 3000, seed=7, reference=restart_arm)
        b = blinq_run(*self.args(restart_arm), Schedule(), 3000, seed=7, reference=restart_arm)
        assert a.times == b.times
        np.testing.assert_array_equal(np.array(a.estimates), np.array(b.estimates))

    def test_failures_are_logged(self):
        from whittle_kit.arm import generate_dirichlet_arm

        # average reward on a rested arm: every estimate is multichain, so every solve fails
        arm = generate_dirichlet_arm(4, seed=8).replace(discount=None)
        tr = blinq_run(*self.args(arm), Schedule(), 2000, seed=0)
        assert len(tr) > 0
        assert all(f is not None for f in tr.failures)
        assert tr.final_estimate() is None

    def test_model_error_rate(self, restart_arm):
        slopes = []
        for seed in range(10):
            tr = blinq_run(
                *self.args(restart_arm), Schedule(checkpoints=(1000, 10_000, 100_000)), 100_000, seed, reference=restart_arm
            )
            assert tr.times == [1000, 10_000, 100_000]
            assert tr.model_error[0] > tr.model_error[1] > tr.model_error[2]
            slopes.append(loglog_slope(tr.times, tr.model_error))
        assert -0.65 <= np.mean(slopes) <= -0.35


class TestMetrics:
    def trace(self, est, truth):
        tr = LearningTrace("x", len(truth), np.asarray(truth, float))
        tr.record(5, est)
        return tr

    def test_exact(self):
        m = error_metrics(self.trace([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(m, [[5, 0, 0, 0]])

    def test_order_statistics(self):
        m = error_metrics(self.trace([0.1, 0.3, 0.2], [0.0, 0.0, 0.0]))
        np.testing.assert_allclose(m, [[5, 0.1, 0.2, 0.3]])

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            error_metrics(self.trace([0.0, 0.0], [0.0, 0.0]), [0.0])

    def test_times_increase(self):
        tr = self.trace([0.0], [0.0])
        with pytest.raises(ValueError):
            tr.record(5, [0.0])

    def test_csv_formats(self, tmp_path):
        tr = self.trace([0.1, 0.3], [0.0, 0.0])
        tr.write_csv(tmp_path / "t.csv")
        rows = list(csv.reader(open(tmp_path / "t.csv")))
        assert rows[0] == ["t", "state", "estimate", "truth", "abs_error", "indexable", "ewisc_ms"]
        assert rows[1][:3] == ["5", "0", "0.10000000000000001"]
        write_metrics_csv(error_metrics(tr), tmp_path / "m.csv")
        rows = list(csv.reader(open(tmp_path / "m.csv")))
        assert rows[0] == ["t", "min_err", "median_err", "max_err"]
        assert rows[1][0] == "5" and float(rows[1][3]) == 0.3


def test_truth_from_reference(restart_arm):
    tr = blinq_run(ArmSimulator(restart_arm), (restart_arm.r_passive, restart_arm.r_active), Schedule(), 500, 0,
                   reference=restart_arm)
    np.testing.assert_allclose(tr.truth, ewisc(restart_arm).indices)
