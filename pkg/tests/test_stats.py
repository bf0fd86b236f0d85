import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erw.core import PackedHistory, Trajectory, WalkParams, kernel_prob, sample_trajectory
from erw.errors import DomainError
from erw.rng import Stream
from erw.stats import (
    TrialSummary,
    bound_positive_recurrence,
    hitting_time_samples,
    hitting_time_trials,
    lil_diagnostics,
    path_diagnostics,
    return_probability_curve,
    transience_mass_estimate,
)


def traj(steps) -> Trajectory:
    return Trajectory(WalkParams(0.5), PackedHistory.from_steps(steps))


class TestTrialSummary:
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200), st.integers(0, 5))
    def test_invariants(self, values, censored):
        s = TrialSummary.from_values(values, censored)
        assert s.ci_low <= s.mean <= s.ci_high
        assert s.stderr >= 0
        assert s.count == len(values)

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=50), st.lists(st.floats(-100, 100), min_size=2, max_size=50))
    def test_merge_matches_pooled(self, a, b):
        merged = TrialSummary.from_values(a, 1).merge(TrialSummary.from_values(b, 2))
        pooled = TrialSummary.from_values(a + b, 3)
        assert merged.count == pooled.count and merged.censored_count == 3
        assert merged.mean == pytest.approx(pooled.mean, abs=1e-9)
        assert merged.std == pytest.approx(pooled.std, rel=1e-7, abs=1e-7)

    def test_empty(self):
        s = TrialSummary.from_values([], 4)
        assert s.count == 0 and s.censored_count == 4 and math.isnan(s.mean)


class TestBound:
    def test_examples(self):
        assert bound_positive_recurrence(0.1, 1) == pytest.approx(6.0)
        assert bound_positive_recurrence(0.0, 3) == 7.0
        assert bound_positive_recurrence(0.0, 1) == 3.0
        assert bound_positive_recurrence(0.0, -3) == 7.0

    def test_pole(self):
        values = [bound_positive_recurrence(1 / 6 - eps, 1) for eps in (1e-1, 1e-2, 1e-4, 1e-8)]
        assert all(b > a for a, b in zip(values, values[1:]))
        assert values[-1] > 1e7

    @pytest.mark.parametrize("p, x", [(1 / 6, 1), (0.2, 1), (0.05, 0)])
    def test_domain(self, p, x):
        with pytest.raises(DomainError):
            bound_positive_recurrence(p, x)


def hitting_law_oracle(m, x, p, kmax):
    """P(tau_0 = k), k = 1..kmax, by propagating the killed chain with the kernel."""
    par = WalkParams(p)
    mass = {x: 1.0}
    out = []
    for step in range(kmax):
        n = m + step
        nxt: dict[int, float] = {}
        for pos, w in mass.items():
            for y in (1, -1):
                nxt[pos + y] = nxt.get(pos + y, 0.0) + w * kernel_prob(pos, n, y, par)
        out.append(nxt.pop(0, 0.0))
        mass = nxt
    return np.array(out)


class TestHitting:
    def test_immediate_return_when_memory_reverses(self):
        s = hitting_time_samples(1, 1, WalkParams(0.0), 100, 1000, seed=1)
        assert np.all(s.values == 1) and not s.censored.any()

    def test_fair_first_step(self):
        s = hitting_time_samples(1, 1, WalkParams(0.5), 10**4, 40_000, seed=2)
        assert abs(np.mean(s.values == 1) - 0.5) <= 4 * math.sqrt(0.25 / 40_000)

    @pytest.mark.parametrize("m, x, p", [(1, 1, 0.1), (3, 1, 0.1), (4, 2, 0.3), (5, -3, 0.05)])
    def test_law_matches_oracle(self, m, x, p):
        kmax = 30
        oracle = hitting_law_oracle(m, x, p, kmax)
        s = hitting_time_samples(m, x, WalkParams(p), 10**6, 200_000, seed=3)
        emp = np.bincount(np.minimum(s.values, kmax + 1), minlength=kmax + 2)[1 : kmax + 1] / 200_000
        tv = 0.5 * (np.abs(emp - oracle).sum() + abs((1 - emp.sum()) - (1 - oracle.sum())))
        assert tv <= 0.01

    def test_censoring(self):
        s = hitting_time_samples(10, 10, WalkParams(0.9), 5, 200, seed=4)
        assert s.censored.all() and np.all(s.values == 5)
        summary = s.summary()
        assert summary.count == 0 and summary.censored_count == 200

    @given(st.integers(1, 50), st.integers(0, 10**6))
    @settings(max_examples=25, deadline=None)
    def test_values_within_cap(self, cap, seed):
        s = hitting_time_samples(7, 3, WalkParams(0.6), cap, 100, seed)
        assert np.all(s.values <= cap)
        assert np.all(s.values[s.censored] == cap)

    @pytest.mark.parametrize("m, x", [(1, 0), (2, 1), (1, 3), (0, 0)])
    def test_preconditions(self, m, x):
        with pytest.raises(DomainError):
            hitting_time_trials(m, x, WalkParams(0.1), 10, 10, seed=0)

    def test_large_p_still_runs(self):
        s = hitting_time_trials(1, 1, WalkParams(0.4), 1000, 100, seed=0)
        assert s.count + s.censored_count == 100


class TestPathDiagnostics:
    def test_ballistic(self):
        d = path_diagnostics(sample_trajectory(WalkParams(1.0, 1.0), 100, rng=Stream.for_trial(0)))
        assert d.zero_hits == 0 and d.sign_changes == 0 and d.last_return is None

    @pytest.mark.parametrize("h", [1, 2, 7, 30])
    def test_alternating(self, h):
        d = path_diagnostics(traj(np.tile([1, -1], h)[:h]))
        assert d.zero_hits == h // 2

    def test_hand_path(self):
        d = path_diagnostics(traj([1, -1, -1, 1, 1, 1]))
        assert (d.zero_hits, d.last_return, d.sign_changes) == (2, 4, 2)
        assert d.max_lil_stat is None and d.max_lil_critical is None

    def test_lil_statistics_brute_force(self):
        t = sample_trajectory(WalkParams(0.6), 5000, rng=Stream.for_trial(3))
        n = np.arange(16, 5001)
        x = np.abs(t.positions[15:])
        d = path_diagnostics(t)
        assert d.max_lil_stat == pytest.approx(np.max(x / np.sqrt(2 * n * np.log(np.log(n)))), rel=1e-12)
        crit = x / np.sqrt(2 * n * np.log(n) * np.log(np.log(np.log(n))))
        assert d.max_lil_critical == pytest.approx(np.max(crit), rel=1e-12)

    def test_fused_equals_stored_paths(self):
        par = WalkParams(0.7, 0.4)
        fused = lil_diagnostics(par, 3000, 20, seed=9)
        stored = [path_diagnostics(sample_trajectory(par, 3000, rng=Stream.for_trial(9, t))) for t in range(20)]
        assert fused == stored


def no_return_oracle(n_max):
    """P(no zero in (0, N]) for the fair walk, by enumerating all 2**n_max paths."""
    paths = np.array(list(itertools.product((1, -1), repeat=n_max)))
    pos = np.cumsum(paths, axis=1)
    first_zero = np.where((pos == 0).any(axis=1), (pos == 0).argmax(axis=1) + 1, n_max + 1)
    return lambda N: float(np.mean(first_zero > N))


class TestReturnCurve:
    def test_full_copy_never_returns(self):
        c = return_probability_curve(WalkParams(1.0, 0.5), [10, 100, 1000], 500, seed=1)
        assert np.all(c.no_return == 1.0)

    def test_fair_walk_against_enumeration(self):
        oracle = no_return_oracle(16)
        horizons = [2, 4, 8, 12, 16]
        c = return_probability_curve(WalkParams(0.5, 0.5), horizons, 100_000, seed=2)
        for N, est in zip(horizons, c.no_return):
            q = oracle(N)
            assert q == pytest.approx(math.comb(2 * (N // 2), N // 2) / 4 ** (N // 2))
            assert abs(est - q) <= 4 * math.sqrt(q * (1 - q) / 100_000)

    @given(st.floats(0, 1), st.integers(0, 1000))
    @settings(max_examples=20, deadline=None)
    def test_nonincreasing(self, p, seed):
        c = return_probability_curve(WalkParams(p), [1, 3, 10, 50, 200], 300, seed)
        assert np.all(np.diff(c.no_return) <= 0)

    def test_bad_horizons(self):
        with pytest.raises(DomainError):
            return_probability_curve(WalkParams(0.5), [10, 5], 10, seed=0)


class TestTransience:
    def test_full_copy_is_constant(self):
        est = transience_mass_estimate(WalkParams(1.0, 1.0), 10**4, 50, seed=1)
        np.testing.assert_allclose(est.values, 1.0, rtol=1e-12)

    def test_symmetric_mean_zero(self):
        for h in (100, 1000):
            s = transience_mass_estimate(WalkParams(0.9, 0.5), h, 10**4, seed=2).summary
            assert abs(s.mean) <= 3 * s.stderr

    def test_martingale_mean_paired(self):
        par = WalkParams(0.85, 0.7)
        a = transience_mass_estimate(par, 100, 10**4, seed=3)
        b = transience_mass_estimate(par, 2000, 10**4, seed=3)
        diff = TrialSummary.from_values(b.values - a.values)
        assert abs(diff.mean) <= 3 * diff.stderr
        assert abs(a.summary.mean - (2 * par.r - 1)) <= 3 * a.summary.stderr

    def test_fraction_above(self):
        est = transience_mass_estimate(WalkParams(0.95, 0.5), 1000, 5000, seed=4, epsilon=0.05)
        assert est.fraction_above == pytest.approx(np.mean(np.abs(est.values) > 0.05))
        assert est.fraction_above > 0.8

    @pytest.mark.parametrize("p", [0.5, 0.75])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            transience_mass_estimate(WalkParams(p), 10, 10, seed=0)
