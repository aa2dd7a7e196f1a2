import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import hdrelay.scheduler as scheduler
from conftest import gaussian_table, mixture_table
from hdrelay.gaussian import LineNetworkGains, line_fixed_power_table
from hdrelay.lp import solve_full_lp
from hdrelay.model import CutValueTable, RelayState, Schedule
from hdrelay.scheduler import (
    extract_simple_schedule,
    solve_saddle,
    verify_schedule,
)


def cross_gain_table(gamma=3.0):
    return line_fixed_power_table(LineNetworkGains((np.sqrt(gamma), 0), (0, np.sqrt(gamma))))


def duplicated(table):
    """Same network with every state listed twice; optimal schedules split mass."""
    M = table.matrix()
    return CutValueTable.explicit(np.vstack([M, M]))


class TestSolveSaddle:
    def test_cross_gain(self):
        res = solve_saddle(cross_gain_table())
        assert res.rate == pytest.approx(2.0, abs=1e-12)
        assert res.schedule.support == [RelayState.from_label("01").index]
        generated = [t.violated_cut for t in res.trace if t.violated_cut is not None]
        assert len(generated) <= 4

    def test_equal_gain_half(self):
        res = solve_saddle(line_fixed_power_table(LineNetworkGains.symmetric(0.5)))
        l2, l3 = np.log2(2), np.log2(3)
        assert res.rate == pytest.approx(l2 * l3 / (l2 + l3), abs=1e-10)
        assert res.schedule.support == [0, 3]
        assert res.schedule.probs[0] == pytest.approx(l3 / (l2 + l3), abs=1e-9)

    def test_single_state(self, rng):
        vals = rng.random((1, 8)) + 0.1
        res = solve_saddle(CutValueTable.explicit(vals))
        assert res.rate == pytest.approx(vals.min(), abs=1e-12)
        assert res.iterations == 1

    def test_monotone_master_and_no_repeats(self, rng):
        for _ in range(10):
            table = mixture_table(rng, 6)
            res = solve_saddle(table)
            values = [t.master_value for t in res.trace]
            assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
            cuts = [t.violated_cut for t in res.trace if t.violated_cut is not None]
            assert len(cuts) == len(set(cuts))

    def test_min_norm_separation(self, rng, monkeypatch):
        table, _ = gaussian_table(rng, 6)
        exact = solve_full_lp(table).c_prime
        monkeypatch.setattr(scheduler, "SEPARATION_LIMIT", 0)
        res = solve_saddle(table)
        assert res.rate == pytest.approx(exact, abs=1e-6)
        assert len(res.schedule.support) <= 7

    def test_lazy_table(self, rng):
        _, net = gaussian_table(rng, 5)
        eager = solve_saddle(CutValueTable.from_network(net))
        lazy = solve_saddle(CutValueTable.from_network(net, lazy=True))
        assert lazy.rate == pytest.approx(eager.rate, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(1, 6), gaussian=st.booleans())
    def test_oracle_equivalence(self, seed, n, gaussian):
        rng = np.random.default_rng(seed)
        table = gaussian_table(rng, n)[0] if gaussian else mixture_table(rng, n)
        res = solve_saddle(table)
        assert res.rate == pytest.approx(solve_full_lp(table).c_prime, abs=1e-6)
        assert len(res.schedule.support) <= n + 1
        assert verify_schedule(table, res.schedule).achieved_rate >= res.rate - 1e-6

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(1, 3))
    def test_antenna_count_independence(self, seed, n):
        rng = np.random.default_rng(seed)
        table, _ = gaussian_table(rng, n, 2, "independent", 2, 2)
        assert table.n_states == 4 ** n
        res = solve_saddle(table)
        assert len(res.schedule.support) <= n + 1
        assert res.certificate.min_cut_value_at_schedule >= res.rate - 1e-6


class TestExtraction:
    def test_idempotent(self, rng):
        table = mixture_table(rng, 2)
        full = solve_full_lp(table)
        raw = Schedule(full.schedule.probs + np.where(full.schedule.probs == 0, 1e-13, 0))
        ex = extract_simple_schedule(table, raw, full.c_prime)
        assert ex.method == "input"
        np.testing.assert_allclose(ex.schedule.probs, full.schedule.probs, atol=1e-12)

    def test_equal_gain_chain(self):
        table = line_fixed_power_table(LineNetworkGains.symmetric(0.5))
        full = solve_full_lp(table)
        ex = extract_simple_schedule(table, full.schedule, full.c_prime)
        assert ex.permutation.pi == (1,)
        assert sorted(ex.tight_cuts) == [0, 1]
        assert ex.schedule.support == [0, 3]

    def test_random_n4(self, rng):
        for _ in range(5):
            table, _ = gaussian_table(rng, 4)
            full = solve_full_lp(table)
            ex = extract_simple_schedule(table, full.schedule, full.c_prime)
            assert len(ex.schedule.support) <= 5
            assert ex.tau == pytest.approx(full.c_prime, abs=1e-7)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(1, 5))
    def test_non_simple_input_is_reduced(self, seed, n):
        rng = np.random.default_rng(seed)
        base = gaussian_table(rng, n)[0] if seed % 2 else mixture_table(rng, n)
        table = duplicated(base)
        full = solve_full_lp(base)
        p = full.schedule.probs
        w = rng.uniform(0.2, 0.8)
        raw = Schedule(np.concatenate([w * p, (1 - w) * p]))
        ex = extract_simple_schedule(table, raw, full.c_prime)
        assert ex.simple and len(ex.schedule.support) <= n + 1
        assert verify_schedule(table, ex.schedule).achieved_rate >= full.c_prime - 1e-7
        if len(raw.support) > n + 1:
            assert ex.method in ("chain", "permutation-search", "support-vertex")

    def test_chain_through_lattice(self):
        # cut values make {}, {1} and {1,2} tight: chain picks pi = (1, 2)
        vals = np.array([[1.0, 1.0, 2.0, 1.0], [1.0, 1.0, 2.0, 1.0]])
        table = CutValueTable.explicit(vals)
        ex = extract_simple_schedule(table, Schedule([0.5, 0.5]), 1.0)
        assert ex.permutation.pi == (1, 2)
        assert ex.tight_cuts == [0, 1, 3]


class TestVerify:
    def test_all_listen(self):
        table = line_fixed_power_table(LineNetworkGains.symmetric(1.0))
        res = verify_schedule(table, Schedule.point_mass(4, 0))
        assert res.achieved_rate == 0 and res.worst_cut == 0

    def test_uniform_gamma1(self):
        table = line_fixed_power_table(LineNetworkGains.symmetric(1.0))
        res = verify_schedule(table, Schedule.uniform(4))
        empty = 0.25 * (0 + 1 + 1 + np.log2(5))
        relay = 0.25 * (np.log2(3) + 1 + 1 + 0)
        assert res.achieved_rate == pytest.approx(min(empty, relay), abs=1e-14)
        assert res.achieved_rate == pytest.approx(0.8962, abs=1e-4)
        assert res.worst_cut == 1

    def test_certificate_replay(self, rng):
        for _ in range(5):
            table = mixture_table(rng, 5)
            res = solve_saddle(table)
            assert verify_schedule(table, res.schedule).achieved_rate >= res.rate - 1e-7
            assert res.certificate.gap_to_master <= 1e-6

    def test_min_norm_route(self, rng, monkeypatch):
        table = mixture_table(rng, 7)
        lam = Schedule(rng.dirichlet(np.ones(table.n_states)))
        a = verify_schedule(table, lam).achieved_rate
        monkeypatch.setattr(scheduler, "SEPARATION_LIMIT", 0)
        assert verify_schedule(table, lam).achieved_rate == pytest.approx(a, abs=1e-8)
