import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import crandn
from qammd.beamforming import md_two_user, snr_gain_rho
from qammd.errors import FeasibilityError, QammdError
from qammd.grouping import (
    GroupingPlan,
    count_pair_groupings,
    enumerate_pair_partitions,
    exhaustive_grouping,
    gamma_threshold,
    greedy_from_gains,
    greedy_grouping,
    group_beamformers,
    group_weights,
    grouping_gain,
    pair_gains,
    plan_is_feasible,
)
from qammd.subspace import pair_stats

seeds = st.integers(0, 2**32 - 1)


def pair_with_angle(rho, phi):
    h1 = np.array([math.sqrt(rho), 0], dtype=complex)
    h2 = np.array([math.cos(phi), math.sin(phi)], dtype=complex)
    return np.stack([h1, h2], axis=1)


def explicit_gain(H, m, n):
    # project with an explicit projector matrix, then apply the closed form
    others = np.delete(H, [m, n], axis=1)
    M = H.shape[0]
    if others.shape[1]:
        Pm = np.eye(M) - others @ np.linalg.pinv(others)
    else:
        Pm = np.eye(M)
    s = pair_stats(Pm @ H[:, m], Pm @ H[:, n])
    return snr_gain_rho(s.rho, s.cos_phi)


class TestPlan:
    def test_relabel_and_lines(self):
        plan = GroupingPlan(((0, 2), (1,)))
        assert plan.relabel == {0: (0, 0), 2: (0, 1), 1: (1, 0)}
        assert plan.to_lines() == ["group 1: 1 3", "group 2: 2"]
        assert plan.num_pairs == 1 and plan.num_users == 3

    @pytest.mark.parametrize("groups", [((0, 1, 2),), ((0,), (2,)), ((0, 1), (1,)), ((),)])
    def test_invalid(self, groups):
        with pytest.raises(QammdError):
            GroupingPlan(groups)


class TestGroupingGain:
    def test_orthogonal_pair(self):
        assert grouping_gain(np.eye(2), 0, 1) == pytest.approx(0.0, abs=1e-12)

    def test_aligned_pair(self):
        assert grouping_gain(pair_with_angle(1, math.radians(1)), 0, 1) == pytest.approx(38.17, abs=0.01)

    @pytest.mark.parametrize("M, N", [(4, 3), (6, 5), (5, 5)])
    def test_matches_explicit_projection(self, rng, M, N):
        H = crandn(rng, M, N)
        fast = pair_gains(H)
        for m in range(N):
            for n in range(m + 1, N):
                ref = explicit_gain(H, m, n)
                assert grouping_gain(H, m, n) == pytest.approx(ref, abs=1e-8)
                assert fast[(m, n)] == pytest.approx(ref, abs=1e-8)

    def test_schur_path_when_overloaded(self, rng):
        # N = M + 1 takes the Schur-complement route
        H = crandn(rng, 4, 5)
        fast = pair_gains(H)
        for (m, n), g in fast.items():
            assert g == pytest.approx(grouping_gain(H, m, n), abs=1e-8)

    def test_collinear_after_projection(self, rng):
        H = crandn(rng, 3, 3)
        H[:, 2] = 2j * H[:, 1]
        assert pair_gains(H)[(1, 2)] == math.inf


class TestThreshold:
    @pytest.mark.parametrize("K, expected", [(4, 6.99), (16, 12.30), (64, 18.13)])
    def test_values(self, K, expected):
        assert gamma_threshold(K) == pytest.approx(expected, abs=0.005)

    @pytest.mark.parametrize("K", [1, 3, 6])
    def test_invalid(self, K):
        with pytest.raises(ValueError):
            gamma_threshold(K)


class TestGreedy:
    def test_trace(self):
        gains = {(0, 1): 20.0, (2, 3): 15.0, (0, 2): 18.0, (1, 2): 1.0, (0, 3): 2.0, (1, 3): 3.0}
        plan = greedy_from_gains(gains, 4, 7.0)
        assert plan.groups == ((0, 1), (2, 3))

    def test_all_below_threshold(self):
        gains = {(0, 1): 7.0, (0, 2): 3.0, (1, 2): -1.0}
        assert greedy_from_gains(gains, 3, 7.0) == GroupingPlan.singletons(3)

    def test_two_users_pair(self):
        H = pair_with_angle(1, math.radians(5))
        assert greedy_grouping(H, gamma_threshold(4)).groups == ((0, 1),)

    def test_orthogonal_users_stay_apart(self):
        assert greedy_grouping(np.eye(3), gamma_threshold(4)) == GroupingPlan.singletons(3)

    def test_too_many_users(self, rng):
        with pytest.raises(FeasibilityError):
            greedy_grouping(crandn(rng, 2, 4), 7.0)

    @settings(max_examples=30, deadline=None)
    @given(seeds, st.integers(2, 6))
    def test_plan_respects_threshold(self, seed, N):
        rng = np.random.default_rng(seed)
        H = crandn(rng, N, N)
        gains = pair_gains(H)
        plan = greedy_grouping(H, 7.0)
        for g in plan.groups:
            if len(g) == 2:
                assert gains[g] > 7.0
        singles = [g[0] for g in plan.groups if len(g) == 1]
        for i, m in enumerate(singles):
            for n in singles[i + 1 :]:
                assert gains[(m, n)] <= 7.0


class TestCounting:
    @pytest.mark.parametrize("N", range(1, 9))
    def test_formula_matches_enumeration(self, N):
        plans = list(enumerate_pair_partitions(N))
        assert len(set(plans)) == len(plans) == count_pair_groupings(N)

    def test_values(self):
        assert [count_pair_groupings(n) for n in (2, 3, 4)] == [2, 4, 10]


class TestWeights:
    def test_values(self):
        plan = GroupingPlan(((0,), (1, 2)))
        np.testing.assert_allclose(group_weights(plan, (1, 1)), [2.0, 0.4])

    def test_identical_groups(self):
        w = group_weights(GroupingPlan(((0, 1), (2, 3))), (1, 1))
        assert w[0] == w[1]

    def test_per_user_rates(self):
        w = group_weights(GroupingPlan(((0, 1),)), [(2, 2), (1, 1)])
        # 64-QAM sum: (4^3 - 1)/12 per component
        assert w[0] == pytest.approx(1 / (2 * 63 / 12))


class TestGroupBeamformers:
    def test_single_pair_is_two_user_beam(self, rng):
        H = crandn(rng, 3, 2)
        tx = group_beamformers(H, GroupingPlan(((0, 1),)), 2.0, [0.4])
        sol = md_two_user(H[:, 0], H[:, 1], 2.0)
        assert tx.powers[0] == pytest.approx(2.0)
        np.testing.assert_allclose(tx.beams[0], sol.w, atol=1e-12)
        assert tx.unit_gains[0] * 2.0 == pytest.approx(sol.value, rel=1e-12)

    def test_symmetric_allocation(self):
        tx = group_beamformers(np.eye(2, dtype=complex), GroupingPlan.singletons(2), 1.0, [2.0, 2.0])
        np.testing.assert_allclose(tx.powers, [0.5, 0.5])

    def test_infeasible(self, rng):
        with pytest.raises(FeasibilityError):
            group_beamformers(crandn(rng, 3, 4), GroupingPlan.singletons(4), 1.0, [2.0] * 4)

    @settings(max_examples=60, deadline=None)
    @given(seeds, st.integers(2, 8), st.data())
    def test_invariants(self, seed, M, data):
        rng = np.random.default_rng(seed)
        N = data.draw(st.integers(2, M + 1))
        plans = [p for p in enumerate_pair_partitions(N) if plan_is_feasible(p, M)] if N <= 7 else []
        if not plans:
            plans = [GroupingPlan.singletons(N)] if N <= M else []
        if not plans:
            return
        plan = plans[data.draw(st.integers(0, len(plans) - 1))]
        H = crandn(rng, M, N)
        P = data.draw(st.floats(0.5, 4))
        weights = group_weights(plan, (1, 1))
        tx = group_beamformers(H, plan, P, weights)

        assert tx.powers.sum() == pytest.approx(P, rel=1e-10)
        for g, w, p in zip(plan.groups, tx.beams, tx.powers):
            assert np.vdot(w, w).real == pytest.approx(p, rel=1e-10)
            others = np.delete(H, list(g), axis=1)
            assert np.linalg.norm(others.conj().T @ w) < 1e-10 * np.linalg.norm(w) * max(1, np.linalg.norm(others))
            # value of the group equals P_k varsigma_k
            own = min(abs(np.vdot(H[:, u], w)) ** 2 for u in g)
            assert own == pytest.approx(p * tx.unit_gains[plan.groups.index(g)], rel=1e-9)

        weighted = tx.weights * tx.powers * tx.unit_gains
        assert weighted.min() == pytest.approx(weighted.max(), rel=1e-9)
        # product form of the closed-form allocation
        prods = tx.weights * tx.unit_gains
        num = np.array([np.prod(np.delete(prods, k)) for k in range(len(prods))])
        np.testing.assert_allclose(tx.powers, P * num / num.sum(), rtol=1e-9)


class TestExhaustive:
    def test_two_users_picks_better(self, rng):
        H = crandn(rng, 2, 2)
        plan = exhaustive_grouping(H, 1.0, (1, 1))
        vals = {}
        for p in (GroupingPlan(((0, 1),)), GroupingPlan.singletons(2)):
            vals[p] = group_beamformers(H, p, 1.0, group_weights(p, (1, 1))).objective
        assert plan == max(vals, key=vals.get)

    @settings(max_examples=30, deadline=None)
    @given(seeds, st.integers(2, 6), st.data())
    def test_beats_greedy(self, seed, N, data):
        M = data.draw(st.integers(N, N + 2))
        H = crandn(np.random.default_rng(seed), M, N)
        best = exhaustive_grouping(H, 1.0, (1, 1))
        greedy = greedy_grouping(H, gamma_threshold(4))

        def objective(p):
            return group_beamformers(H, p, 1.0, group_weights(p, (1, 1))).objective

        assert objective(best) >= objective(greedy) * (1 - 1e-12)

    def test_overloaded_pairs_everyone(self, rng):
        plan = exhaustive_grouping(crandn(rng, 3, 4), 1.0, (1, 1))
        assert plan.num_pairs == 2

    def test_size_limit(self, rng):
        with pytest.raises(QammdError):
            exhaustive_grouping(crandn(rng, 9, 9), 1.0, (1, 1))

    def test_no_feasible_plan(self, rng):
        with pytest.raises(FeasibilityError):
            exhaustive_grouping(crandn(rng, 2, 3), 1.0, (1, 1))
