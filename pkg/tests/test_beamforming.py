import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import crandn
from qammd.beamforming import (
    _boundary_value,
    _interior_value,
    baseline_precoders,
    maxmin_dual_bound,
    maxmin_grid_oracle,
    md_two_user,
    snr_gain_kappa,
    snr_gain_rho,
)
from qammd.errors import DegenerateChannelError, RankError
from qammd.subspace import closed_form_spectra, pair_stats
from qammd.verification import random_pair

seeds = st.integers(0, 2**32 - 1)


def check_solution(h1, h2, P, sol):
    assert np.vdot(sol.w, sol.w).real == pytest.approx(P, rel=1e-10)
    achieved = min(abs(np.vdot(h1, sol.w)) ** 2, abs(np.vdot(h2, sol.w)) ** 2)
    assert achieved == pytest.approx(sol.value, rel=1e-9)


class TestMdTwoUser:
    def test_collinear(self):
        sol = md_two_user([1, 0], [1, 0], 4.0)
        np.testing.assert_allclose(sol.w, [2, 0])
        assert sol.value == 4.0 and sol.branch == "scenario1"

    def test_collinear_uses_weaker_user(self):
        sol = md_two_user([3, 0], [1j, 0], 2.0)
        assert sol.value == pytest.approx(2.0)

    def test_orthogonal(self):
        sol = md_two_user([1, 0], [0, 1], 1.0)
        assert sol.value == pytest.approx(0.5)
        np.testing.assert_allclose(np.abs(sol.w), [math.sqrt(0.5)] * 2)
        np.testing.assert_allclose(sol.gains, [0.5, 0.5])
        assert maxmin_grid_oracle([1, 0], [0, 1], 1.0) == pytest.approx(0.5, abs=1e-9)

    def test_zero_channel(self):
        with pytest.raises(DegenerateChannelError):
            md_two_user([0, 0], [1, 0], 1.0)

    def test_interior_branch(self):
        rng = np.random.default_rng(7)
        for _ in range(2000):
            h1, h2 = random_pair(rng, 4)
            sol = md_two_user(h1, h2, 1.0)
            if sol.branch == "case1b":
                break
        else:
            pytest.fail("no interior instance found")
        sp = closed_form_spectra(pair_stats(h1, h2))
        s = sp.sin_theta
        assert s > sp.lam1 / sp.lam2
        assert sol.value == pytest.approx((sp.lam1 + sp.lam2 * s * s) / (1 - s * s), rel=1e-9)
        assert sol.value >= maxmin_grid_oracle(h1, h2, 1.0) * (1 - 1e-6)

    @settings(max_examples=150, deadline=None)
    @given(seeds, st.integers(2, 6), st.floats(0.1, 10))
    def test_invariants(self, seed, M, P):
        h1, h2 = random_pair(np.random.default_rng(seed), M)
        sol = md_two_user(h1, h2, P)
        check_solution(h1, h2, P, sol)
        # strong duality route: the value attains the dual upper bound
        assert sol.value == pytest.approx(maxmin_dual_bound(h1, h2, P), rel=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(seeds)
    def test_not_beaten_by_grid(self, seed):
        h1, h2 = random_pair(np.random.default_rng(seed), 3)
        sol = md_two_user(h1, h2, 1.0)
        scale = max(np.vdot(h1, h1).real, np.vdot(h2, h2).real)
        assert sol.value >= maxmin_grid_oracle(h1, h2, 1.0) - 1e-6 * scale

    @settings(max_examples=50, deadline=None)
    @given(seeds, st.floats(0, 2 * math.pi))
    def test_phase_invariance(self, seed, psi):
        h1, h2 = random_pair(np.random.default_rng(seed), 4)
        v0 = md_two_user(h1, h2, 1.0).value
        v1 = md_two_user(h1, np.exp(1j * psi) * h2, 1.0).value
        assert v1 == pytest.approx(v0, rel=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(seeds)
    def test_dominates_zf(self, seed):
        h1, h2 = random_pair(np.random.default_rng(seed), 4)
        H = np.stack([h1, h2], axis=1)
        zf_min = 1.0 / np.trace(np.linalg.inv(H.conj().T @ H)).real
        assert md_two_user(h1, h2, 1.0).value >= zf_min * (1 - 1e-9)

    def test_every_branch_reached(self):
        rng = np.random.default_rng(3)
        seen = {md_two_user(*random_pair(rng, 3), 1.0).branch for _ in range(3000)}
        seen.add(md_two_user([1, 0], [2, 0], 1.0).branch)
        assert seen == {"scenario1", "case1a", "case1b", "case2a", "case2b"}

    @given(st.floats(0.01, 10), st.floats(1.01, 50))
    def test_branch_boundary_continuity(self, lam1, ratio):
        lam2 = lam1 * ratio
        s = lam1 / lam2
        assert _boundary_value(lam1, lam2, s, 1.0) == pytest.approx(_interior_value(lam1, lam2, s, 1.0), rel=1e-9)


class TestDualBound:
    def test_orthogonal(self):
        assert maxmin_dual_bound([1, 0], [0, 1], 2.0) == pytest.approx(1.0)

    def test_collinear(self):
        assert maxmin_dual_bound([1, 0], [3, 0], 1.0) == pytest.approx(1.0)

    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_bounds_the_grid(self, seed):
        h1, h2 = random_pair(np.random.default_rng(seed), 3)
        assert maxmin_grid_oracle(h1, h2, 1.0) <= maxmin_dual_bound(h1, h2, 1.0) * (1 + 1e-9)


class TestGainFormulas:
    @pytest.mark.parametrize(
        "rho, phi_deg, expected",
        [(1, 90, 0.0), (1, 1, 38.17), (0.5, 45, 4.77)],
    )
    def test_rho_examples(self, rho, phi_deg, expected):
        assert snr_gain_rho(rho, math.cos(math.radians(phi_deg))) == pytest.approx(expected, abs=0.01)

    def test_rho_collinear(self):
        assert snr_gain_rho(1.0, 1.0) == math.inf

    @pytest.mark.parametrize("args", [(0, 0.5), (1, -0.1), (1, 1.1)])
    def test_rho_domain(self, args):
        with pytest.raises(ValueError):
            snr_gain_rho(*args)

    @given(st.floats(0.01, 100))
    def test_kappa_zero_angle(self, kappa):
        assert snr_gain_kappa(kappa, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_kappa_example(self):
        assert snr_gain_kappa(1.0, 0.5) == pytest.approx(10 * math.log10(5), abs=1e-12)

    def test_kappa_limit(self):
        assert snr_gain_kappa(2.0, 1.0) == math.inf

    @given(st.floats(0.01, 100), st.floats(0, 0.999))
    def test_rho_symmetric_in_users(self, rho, cos_phi):
        assert snr_gain_rho(rho, cos_phi) == pytest.approx(snr_gain_rho(1 / rho, cos_phi), rel=1e-9, abs=1e-9)

    @settings(max_examples=200)
    @given(seeds)
    def test_kappa_agrees_with_rho(self, seed):
        h1, h2 = random_pair(np.random.default_rng(seed), 4)
        st_ = pair_stats(h1, h2)
        sp = closed_form_spectra(st_)
        g1 = snr_gain_rho(st_.rho, st_.cos_phi)
        g2 = snr_gain_kappa(sp.kappa, sp.sin_theta)
        assert g2 == pytest.approx(g1, abs=1e-9, rel=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(seeds)
    def test_gain_is_md_over_zf(self, seed):
        h1, h2 = random_pair(np.random.default_rng(seed), 3)
        st_ = pair_stats(h1, h2)
        H = np.stack([h1, h2], axis=1)
        zf = 1.0 / np.trace(np.linalg.inv(H.conj().T @ H)).real
        md = md_two_user(h1, h2, 1.0).value
        ratio_db = 10 * math.log10(md / zf)
        assert snr_gain_rho(st_.rho, st_.cos_phi) == pytest.approx(ratio_db, abs=1e-8)


class TestBaselines:
    def test_zf_identity(self):
        ps = baseline_precoders(np.eye(2), 1.0, 1.0, "zf")
        H = np.eye(2)
        snr = np.abs(np.diag(H.conj().T @ ps.W)) ** 2
        np.testing.assert_allclose(snr, 0.5)

    def test_zf_orthogonal_is_matched_filter(self):
        H = np.diag([2.0, 1.0]).astype(complex)
        W = baseline_precoders(H, 1.0, 1.0, "zf").W
        assert abs(W[1, 0]) < 1e-15 and abs(W[0, 1]) < 1e-15

    @pytest.mark.parametrize("scheme", ["zf", "mmse", "slnr"])
    def test_power_and_phase(self, rng, scheme):
        H = crandn(rng, 4, 3)
        ps = baseline_precoders(H, 2.0, 0.1, scheme)
        assert ps.powers.sum() == pytest.approx(2.0, rel=1e-10)
        own = np.einsum("mk,mk->k", H.conj(), ps.W)
        np.testing.assert_allclose(own.imag, 0, atol=1e-12)
        assert (own.real > 0).all()

    def test_zf_nulls_interference(self, rng):
        H = crandn(rng, 4, 3)
        R = H.conj().T @ baseline_precoders(H, 1.0, 1.0, "zf").W
        off = R - np.diag(np.diag(R))
        assert np.max(np.abs(off)) < 1e-12
        np.testing.assert_allclose(np.abs(np.diag(R)), abs(R[0, 0]), rtol=1e-10)

    @pytest.mark.parametrize("sigma2", [1e-3, 0.1, 1.0, 10.0])
    def test_mmse_slnr_same_direction(self, rng, sigma2):
        H = crandn(rng, 4, 3)
        Wm = baseline_precoders(H, 1.0, sigma2, "mmse").W
        Ws = baseline_precoders(H, 1.0, sigma2, "slnr").W
        for k in range(3):
            cos = abs(np.vdot(Wm[:, k], Ws[:, k])) / (np.linalg.norm(Wm[:, k]) * np.linalg.norm(Ws[:, k]))
            assert cos == pytest.approx(1.0, abs=1e-8)

    def test_slnr_is_generalized_eigenvector(self, rng):
        H = crandn(rng, 4, 3)
        sigma2, P, N = 0.5, 1.0, 3
        W = baseline_precoders(H, P, sigma2, "slnr").W
        for k in range(N):
            h = H[:, k : k + 1]
            Ho = np.delete(H, k, axis=1)
            B = Ho @ Ho.conj().T + (N * sigma2 / P) * np.eye(4)
            _, vecs = scipy.linalg.eigh(h @ h.conj().T, B)
            v = vecs[:, -1]
            cos = abs(np.vdot(v, W[:, k])) / (np.linalg.norm(v) * np.linalg.norm(W[:, k]))
            assert cos == pytest.approx(1.0, abs=1e-9)

    def test_too_many_users(self, rng):
        with pytest.raises(RankError):
            baseline_precoders(crandn(rng, 2, 3), 1.0, 1.0, "zf")

    def test_zf_rank_deficient(self, rng):
        h = crandn(rng, 3, 1)
        with pytest.raises(RankError):
            baseline_precoders(np.hstack([h, h]), 1.0, 1.0, "zf")

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            baseline_precoders(np.eye(2), 1.0, 1.0, "dpc")
