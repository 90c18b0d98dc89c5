import numpy as np
import pytest

from fbmlab import (
    TimeGrid,
    branch_futures,
    conditional_law,
    conditional_variance,
    covariance_factor,
    covariance_matrix,
    fbm_covariance,
    sample_fbm,
    scaling_moment_check,
)
from fbmlab.fbm import estimate_lnd_constant, lnd_ratio_table


class TestCovariance:
    def test_brownian_case_is_min(self):
        assert fbm_covariance(0.5, 0.3, 0.7) == pytest.approx(0.3, abs=1e-15)

    def test_equal_times(self):
        assert fbm_covariance(0.25, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_cancellation_at_double_time(self):
        # s^{2H} and |t-s|^{2H} cancel when t - s = s
        assert fbm_covariance(0.25, 0.5, 1.0) == pytest.approx(0.5, abs=1e-15)

    def test_symmetry(self):
        for H in (0.2, 0.5, 0.8):
            assert fbm_covariance(H, 0.2, 0.9) == fbm_covariance(H, 0.9, 0.2)

    def test_rejects_out_of_range_hurst(self):
        with pytest.raises(ValueError):
            fbm_covariance(1.2, 0.1, 0.2)
        with pytest.raises(ValueError):
            fbm_covariance(0.0, 0.1, 0.2)

    def test_positive_semidefinite_and_factor_reconstruction(self):
        for H in (0.25, 0.5, 0.75):
            for n in (64, 256, 1024):
                grid = TimeGrid(n)
                cov = covariance_matrix(H, grid)
                eig_min = np.linalg.eigvalsh(cov)[0]
                assert eig_min >= -1e-8 * np.trace(cov)
                L = covariance_factor(H, grid)
                assert np.max(np.abs(L @ L.T - cov)) < 1e-8


class TestSampling:
    def test_determinism(self):
        grid = TimeGrid(128)
        a = sample_fbm(0.3, grid, 2, seed=7)
        b = sample_fbm(0.3, grid, 2, seed=7)
        assert np.array_equal(a.values, b.values)

    def test_different_seeds_differ(self):
        grid = TimeGrid(64)
        a = sample_fbm(0.3, grid, 1, seed=1)
        b = sample_fbm(0.3, grid, 1, seed=2)
        assert not np.array_equal(a.values, b.values)

    def test_starts_at_zero(self):
        path = sample_fbm(0.7, TimeGrid(32), 3, seed=0)
        assert np.all(path.values[0] == 0.0)

    def test_rejects_bad_hurst(self):
        for H in (1.0, 2.0, -0.3, 2.5):
            with pytest.raises(ValueError):
                sample_fbm(H, TimeGrid(16), 1, seed=0)

    def test_brownian_increments_uncorrelated(self):
        # MC oracle: lag-1 increment correlation of Brownian motion is 0
        grid = TimeGrid(256)
        L = covariance_factor(0.5, grid)
        rng = np.random.Generator(np.random.Philox(3))
        B = L @ rng.standard_normal((256, 10_000))
        inc = np.diff(np.vstack([np.zeros(10_000), B]), axis=0)
        a, b = inc[:-1].ravel(), inc[1:].ravel()
        corr = np.mean(a * b) / (np.std(a) * np.std(b))
        se = 1.0 / np.sqrt(a.size)
        assert abs(corr) < 3 * se

    def test_empirical_covariance_matches_closed_form(self):
        # MC oracle at H=0.3, n=64: entrywise within 3 standard errors
        H, n, N = 0.3, 64, 20_000
        grid = TimeGrid(n)
        L = covariance_factor(H, grid)
        Sig = covariance_matrix(H, grid)
        rng = np.random.Generator(np.random.Philox(0))
        C = np.zeros((n, n))
        for _ in range(N // 2000):
            B = L @ rng.standard_normal((n, 2000))
            C += B @ B.T
        C /= N
        se = np.sqrt((np.outer(np.diag(Sig), np.diag(Sig)) + Sig**2) / N)
        assert np.max(np.abs(C - Sig) / se) < 3.0

    def test_high_hurst_path_is_integral_of_base(self):
        # H in (1,2): trapezoid integral of an (H-1)-path, so increments of
        # the derivative recover the base path within quadrature error
        grid = TimeGrid(128)
        path = sample_fbm(1.5, grid, 1, seed=5)
        dt = grid.dt
        deriv_mid = np.diff(path.values[:, 0]) / dt
        # midpoint derivative equals average of base endpoints
        L = covariance_factor(0.5, grid)
        base = np.concatenate([[0.0], L @ path.driver[:, 0]])
        assert np.max(np.abs(deriv_mid - 0.5 * (base[1:] + base[:-1]))) < 1e-10

    def test_csv_export(self):
        path = sample_fbm(0.4, TimeGrid(8), 2, seed=1)
        text = path.to_csv()
        lines = text.strip().split("\n")
        assert lines[0].startswith("# H=0.4")
        assert lines[1] == "t,B_1,B_2"
        assert len(lines) == 2 + 9


class TestConditioning:
    def test_brownian_conditional_variance_exact(self):
        grid = TimeGrid(128)
        for s, t in [(10, 30), (50, 100), (0, 64)]:
            var = conditional_variance(0.5, grid, s, t)
            assert var == pytest.approx((t - s) * grid.dt, rel=1e-10)

    def test_degenerate_pair(self):
        path = sample_fbm(0.3, TimeGrid(64), 1, seed=0)
        law = conditional_law(path, 17, 17)
        assert law.variance == 0.0
        assert law.mean[0] == path.values[17, 0]

    def test_lnd_ratio_near_constant(self):
        # dense-grid conditioning approximates the continuous filtration:
        # ratio variance / (t-s)^{2H} constant within 5% over interior pairs
        grid = TimeGrid(512)
        for H in (0.25, 0.5, 0.75):
            _, spread = estimate_lnd_constant(H, grid)
            assert spread < 0.05

    def test_lnd_markov_constant_is_one(self):
        grid = TimeGrid(512)
        c, spread = estimate_lnd_constant(0.5, grid)
        assert c == pytest.approx(1.0, abs=1e-6)
        assert spread < 1e-6

    def test_conditional_law_matches_brute_force(self):
        # oracle: direct Gaussian conditioning from the covariance matrix
        H, n = 0.3, 64
        grid = TimeGrid(n)
        path = sample_fbm(H, grid, 1, seed=11)
        Sig = covariance_matrix(H, grid)
        s_idx, t_idx = 20, 45
        past = slice(0, s_idx)
        Spp = Sig[past, past]
        Stp = Sig[t_idx - 1, past]
        w = np.linalg.solve(Spp, path.values[1 : s_idx + 1, 0])
        mean_oracle = Stp @ w
        var_oracle = Sig[t_idx - 1, t_idx - 1] - Stp @ np.linalg.solve(Spp, Stp)
        law = conditional_law(path, s_idx, t_idx)
        assert law.mean[0] == pytest.approx(mean_oracle, rel=1e-9)
        assert law.variance == pytest.approx(var_oracle, rel=1e-9)


class TestBranching:
    def test_branches_share_past(self):
        path = sample_fbm(0.3, TimeGrid(64), 1, seed=2)
        branches = branch_futures(path, 20, 5, seed=3)
        for br in branches:
            assert np.array_equal(br.values[:21], path.values[:21])
            assert not np.array_equal(br.values[21:], path.values[21:])

    def test_branch_moments_match_conditional_law(self):
        # MC vs linear-algebra oracle: branch ensemble mean and variance at t
        path = sample_fbm(0.35, TimeGrid(64), 1, seed=4)
        s_idx, t_idx, m = 24, 52, 4000
        branches = branch_futures(path, s_idx, m, seed=5)
        at_t = np.array([br.values[t_idx, 0] for br in branches])
        law = conditional_law(path, s_idx, t_idx)
        se_mean = np.sqrt(law.variance / m)
        assert abs(at_t.mean() - law.mean[0]) < 3 * se_mean
        se_var = law.variance * np.sqrt(2.0 / (m - 1))
        assert abs(at_t.var(ddof=1) - law.variance) < 3 * se_var

    def test_pooled_branches_recover_unconditional_law(self):
        # law of (parent past, branch future) = unconditional fBm law
        H, n = 0.4, 32
        grid = TimeGrid(n)
        t_idx, s_idx = 24, 12
        vals = []
        for r in range(400):
            parent = sample_fbm(H, grid, 1, seed=100, labels=("pool", r))
            br = branch_futures(parent, s_idx, 1, seed=200 + r)[0]
            vals.append([br.values[s_idx, 0], br.values[t_idx, 0]])
        vals = np.asarray(vals)
        cov = vals.T @ vals / len(vals)
        target = np.array([
            [fbm_covariance(H, s_idx / n, s_idx / n), fbm_covariance(H, s_idx / n, t_idx / n)],
            [fbm_covariance(H, s_idx / n, t_idx / n), fbm_covariance(H, t_idx / n, t_idx / n)],
        ])
        se = np.sqrt((np.outer(np.diag(target), np.diag(target)) + target**2) / len(vals))
        assert np.max(np.abs(cov - target) / se) < 3.0


class TestScalingCheck:
    def test_identity_scale(self):
        rep = scaling_moment_check(0.7, 1.0, 1000)
        assert rep.empirical_deviation == 0.0

    def test_exact_covariance_scaling(self):
        rep = scaling_moment_check(0.7, 0.5, 0)
        assert rep.exact_deviation < 1e-12

    def test_monte_carlo_scaling(self):
        rep = scaling_moment_check(0.7, 0.5, 10_000, seed=1)
        assert rep.max_z < 3.0
