import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from pinchgat import check_feasible, default_config, positions_from_deltas, scale_to_budget
from pinchgat.system import PowerAllocation, Solution


class TestScaleToBudget:
    def test_under_budget_is_identity(self):
        out = scale_to_budget(np.array([1.0, 1.0]), 4.0)
        np.testing.assert_array_equal(out, [1.0, 1.0])

    def test_over_budget_scales(self):
        out = scale_to_budget(np.array([3.0, 3.0]), 3.0)
        np.testing.assert_allclose(out, [1.5, 1.5], rtol=1e-15)

    def test_zero_vector(self):
        out = scale_to_budget(np.array([0.0, 0.0]), 3.0)
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError):
            scale_to_budget(np.array([-1.0, 2.0]), 3.0)

    def test_output_sum_never_exceeds_budget(self):
        rng = np.random.default_rng(1)
        for _ in range(2000):
            v = rng.uniform(0, 10, size=rng.integers(1, 9))
            budget = rng.uniform(0.1, 20)
            out = scale_to_budget(v, budget)
            assert float(np.sum(out)) <= budget

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.floats(min_value=0.0, max_value=1e6), min_size=1,
                    max_size=8),
           st.floats(min_value=1e-6, max_value=1e6))
    def test_exact_idempotence(self, values, budget):
        v = np.asarray(values)
        once = scale_to_budget(v, budget)
        twice = scale_to_budget(once, budget)
        np.testing.assert_array_equal(once, twice)


class TestPositionsFromDeltas:
    def test_zero_deltas_left_packed(self):
        cfg = default_config(n_antennas=2, n_users=2)
        placement = positions_from_deltas(np.zeros(2), cfg)
        assert placement.x_coords[0] == -100.0
        assert placement.x_coords[1] == pytest.approx(
            -100.0 + cfg.guard_distance, abs=1e-12)

    def test_full_budget_reaches_far_end(self):
        cfg = default_config(n_antennas=4, n_users=2)
        budget = cfg.placement_budget
        deltas = np.full(4, budget / 4)
        placement = positions_from_deltas(deltas, cfg)
        # telescoping the recurrence puts the last antenna at +D
        assert placement.x_coords[-1] == pytest.approx(
            cfg.waveguide_half_length, rel=1e-12)

    def test_uniform_deltas_equal_gaps(self):
        cfg = default_config(n_antennas=4, n_users=2)
        budget = cfg.placement_budget
        placement = positions_from_deltas(np.full(4, budget / 4), cfg)
        gaps = np.diff(placement.x_coords)
        np.testing.assert_allclose(
            gaps, budget / 4 + cfg.guard_distance, rtol=1e-12)

    def test_rejects_budget_violation(self):
        cfg = default_config(n_antennas=4, n_users=2)
        with pytest.raises(ValueError):
            positions_from_deltas(np.full(4, cfg.placement_budget), cfg)

    def test_rejects_negative(self):
        cfg = default_config(n_antennas=2, n_users=2)
        with pytest.raises(ValueError):
            positions_from_deltas(np.array([-0.1, 1.0]), cfg)

    def test_monotone_in_each_delta(self):
        cfg = default_config(n_antennas=4, n_users=2)
        rng = np.random.default_rng(3)
        for _ in range(200):
            d = rng.uniform(0, 10, size=4)
            k = rng.integers(0, 4)
            bumped = d.copy()
            bumped[k] += rng.uniform(0, 5)
            x0 = positions_from_deltas(d, cfg).x_coords
            x1 = positions_from_deltas(bumped, cfg).x_coords
            assert np.all(x1[k:] >= x0[k:])
            np.testing.assert_array_equal(x1[:k], x0[:k])

    def test_feasible_for_random_deltas(self):
        # the placement recurrence must hand check_feasible a clean result
        cfg = default_config(n_antennas=4, n_users=2)
        budget = cfg.placement_budget
        rng = np.random.default_rng(7)
        power = PowerAllocation(np.full(4, cfg.power_budget / 4))
        for _ in range(5000):
            raw = rng.uniform(0, 1, size=4)
            d = raw * (budget * rng.uniform(0, 1) / raw.sum())
            placement = positions_from_deltas(d, cfg)
            report = check_feasible(cfg, Solution(placement, power), tol=0.0)
            assert report.ok, report.violations
