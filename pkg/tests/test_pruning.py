import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iard.errors import DomainError
from iard.pruning import (
    H0Dist,
    H1Dist,
    PruneTest,
    gumbel_cdf,
    gumbel_pdf,
    h0_cdf,
    h0_pdf,
    h0_point_mass,
    h1_cdf,
    h1_normalizer,
    h1_pdf,
    ks_distance,
    marcum_q,
    max_test_size,
    size_from_threshold,
    threshold_from_size,
    threshold_table,
)

from oracles import gumbel_max_cdf, marcum_q1, quad, truncated_ncx2_pdf


class TestH0:
    def test_point_mass_value(self):
        assert h0_cdf(1.0, 128) == pytest.approx(np.exp(-128 / np.e), rel=1e-12)
        assert h0_cdf(1.0, 128) == pytest.approx(3.5e-21, rel=0.02)

    def test_mode(self):
        x = np.linspace(1.5, 10, 20001)
        assert x[np.argmax(h0_pdf(x, 128))] == pytest.approx(np.log(128), abs=1e-3)
        assert np.log(128) == pytest.approx(4.852, abs=1e-3)

    def test_tail(self):
        assert h0_cdf(np.inf, 128) == 1.0

    def test_right_continuous_below_one(self):
        N = 3
        assert h0_cdf(0.0, N) == pytest.approx(h0_point_mass(N))
        assert h0_cdf(0.5, N) == pytest.approx(h0_point_mass(N))
        assert h0_pdf(0.5, N) == 0.0
        assert h0_cdf(-1.0, N) == 0.0

    def test_domain(self):
        with pytest.raises(DomainError):
            h0_cdf(2.0, 0.5)
        with pytest.raises(DomainError):
            h0_pdf(-1.0, 10)

    @pytest.mark.parametrize("N", [16, 128, 1024, 3200])
    def test_mixture_normalised(self, N):
        total = h0_point_mass(N) + quad(lambda r: h0_pdf(r, N), 1.0, np.log(N) + 60)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_matches_scipy_gumbel(self):
        x = np.linspace(1.5, 15, 30)
        np.testing.assert_allclose(gumbel_cdf(x, 128), gumbel_max_cdf(x, 128), rtol=1e-12)

    def test_fisher_tippett(self):
        rng = np.random.default_rng(0)
        m = rng.exponential(size=(5000, 128)).max(axis=1)
        assert ks_distance(m, lambda x: gumbel_cdf(x, 128)) < 0.05

    def test_rvs_point_mass(self):
        d = H0Dist(3)
        draws = d.rvs(200_000, np.random.default_rng(1))
        assert np.mean(draws == 0) == pytest.approx(d.point_mass, abs=0.01)
        assert d.location == pytest.approx(np.log(3))


class TestH1:
    @pytest.mark.parametrize("a,b", [(0.0, 1.0), (1.0, np.sqrt(2)), (3.0, 2.0), (10.0, 12.0), (40.0, np.sqrt(2)), (0.5, 30.0)])
    def test_marcum_against_ncx2(self, a, b):
        assert marcum_q(a, b) == pytest.approx(marcum_q1(a, b), rel=1e-9, abs=1e-300)
        assert marcum_q(a, b, complement=True) == pytest.approx(1 - marcum_q1(a, b), rel=1e-7, abs=1e-15)

    def test_marcum_domain(self):
        with pytest.raises(DomainError):
            marcum_q(-1.0, 1.0)

    def test_zero_noncentrality_is_truncated_exponential(self):
        rho = np.array([1.5, 3.0, 6.0])
        np.testing.assert_allclose(h1_pdf(rho, 0.0), np.exp(-rho) / np.exp(-1.0), rtol=1e-12)

    def test_small_noncentrality_limit(self):
        rho = np.array([1.5, 3.0, 6.0])
        np.testing.assert_allclose(h1_pdf(rho, 1e-10), np.exp(-rho + 1.0), atol=1e-8)

    @pytest.mark.parametrize("eta", [0.0, 4.0, 40.0])
    def test_normalised(self, eta):
        hi = eta / 2 + 60 + 20 * np.sqrt(eta + 1)
        assert quad(lambda r: h1_pdf(r, eta), 1.0, hi) == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("eta", [0.5, 10.0, 100.0, 2 * 10**2.1])
    def test_pdf_matches_ncx2(self, eta):
        rho = np.linspace(1.01, eta + 30, 25)
        np.testing.assert_allclose(h1_pdf(rho, eta), truncated_ncx2_pdf(rho, eta), rtol=1e-8, atol=1e-300)

    def test_cdf_consistent_with_pdf(self):
        eta = 30.0
        for r in (2.0, 10.0, 15.0, 25.0):
            assert h1_cdf(r, eta) == pytest.approx(quad(lambda x: h1_pdf(x, eta), 1.0, r), abs=1e-9)
        assert h1_cdf(0.5, eta) == 0.0

    def test_normalizer_bounds(self):
        for eta in (0.0, 1.0, 50.0, 2000.0):
            Z = H1Dist(eta).normalizer
            assert 0 < Z <= 1
        assert h1_normalizer(0.0) == pytest.approx(np.exp(-1.0))

    def test_large_noncentrality_stable(self):
        eta = 2 * 10**4
        rho = np.array([eta / 2 - 100, eta / 2, eta / 2 + 100])
        p = h1_pdf(rho, eta)
        assert np.all(np.isfinite(p)) and p[1] > p[0] > 0

    def test_mass_near_half_noncentrality(self):
        eta = 2 * 10**1.7
        x = np.linspace(1.01, 200, 40000)
        assert abs(x[np.argmax(h1_pdf(x, eta))] - eta / 2) < 2.0


class TestThreshold:
    def test_closed_form(self):
        assert threshold_from_size(1e-3, 128) == pytest.approx(np.log(128 / -np.log1p(-1e-3)), rel=1e-12)
        assert threshold_from_size(1e-3, 128) == pytest.approx(11.76, abs=0.005)

    def test_boundary_gives_standard(self):
        assert threshold_from_size(max_test_size(128), 128) == pytest.approx(1.0, abs=1e-9)

    def test_outside_bound(self):
        with pytest.raises(DomainError, match="upper|1 - exp"):
            threshold_from_size(0.9999, 2)
        with pytest.raises(DomainError):
            threshold_from_size(0.0, 128)

    def test_growth_with_n(self):
        d = threshold_from_size(1e-3, 1024) - threshold_from_size(1e-3, 128)
        assert d == pytest.approx(np.log(8), abs=1e-9)

    def test_standard_size(self):
        assert size_from_threshold(1.0, 128) == pytest.approx(1.0, abs=1e-15)
        with pytest.raises(DomainError):
            size_from_threshold(0.5, 128)

    @given(st.floats(1.0, 30.0), st.integers(1, 5000))
    @settings(max_examples=100, deadline=None)
    def test_round_trip(self, kappa, N):
        eps = size_from_threshold(kappa, N)
        # near eps = 1 the inverse is ill-conditioned in double precision
        if eps <= 0 or eps >= 0.999:
            return
        assert threshold_from_size(eps, N) == pytest.approx(kappa, abs=1e-12)
        assert 1 - gumbel_cdf(threshold_from_size(eps, N), N) == pytest.approx(eps, rel=1e-10)

    @given(st.floats(1.0, 20.0), st.integers(1, 4000), st.integers(1, 4000))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_n(self, kappa, n1, n2):
        lo, hi = sorted((n1, n2))
        assert size_from_threshold(kappa, lo) <= size_from_threshold(kappa, hi)

    def test_ump_size(self):
        eps, N, n = 1e-2, 128, 100_000
        test = PruneTest.from_size(eps, N)
        draws = H0Dist(N).rvs(n, np.random.default_rng(3))
        freq = np.mean(test.rejects(draws))
        assert abs(freq - eps) <= 3 * np.sqrt(eps * (1 - eps) / n)

    def test_standard_test(self):
        t = PruneTest.standard(128)
        assert t.kappa == 1.0 and t.epsilon == pytest.approx(1.0)
        assert t.h0.N == 128

    def test_table(self):
        rows = threshold_table([16, 128], [1.0, 5.0])
        assert len(rows) == 4 and rows[0] == (1.0, size_from_threshold(1.0, 16), 16)


class TestKS:
    def test_null_sample(self):
        rng = np.random.default_rng(4)
        hits = 0
        for _ in range(20):
            x = rng.gumbel(np.log(128), 1.0, 5000)
            hits += ks_distance(x, lambda v: gumbel_cdf(v, 128)) < 0.03
        assert hits >= 19

    def test_constant_samples(self):
        assert ks_distance(np.full(100, 5.0), lambda v: gumbel_cdf(v, 128)) >= 0.5

    def test_deterministic(self):
        x = np.random.default_rng(5).exponential(size=300)
        cdf = lambda v: 1 - np.exp(-v)
        assert ks_distance(x, cdf) == ks_distance(x.copy(), cdf)

    def test_too_few(self):
        with pytest.raises(DomainError):
            ks_distance([1.0], lambda v: v)

    def test_gumbel_pdf_integrates(self):
        assert quad(lambda r: gumbel_pdf(r, 50), -20, 60) == pytest.approx(1.0, abs=1e-8)
