import numpy as np
import pytest

from fbmlab import (
    DiscretePath,
    SdeProblem,
    TimeGrid,
    averaged_field,
    compute_flow,
    make_field,
    malliavin_directional,
    sample_fbm,
    solve_distributional,
    solve_euler,
    solve_euler_lattice,
)
from fbmlab.fields import DriftField, classify_regime
from fbmlab.fitting import fit_loglog
from fbmlab.sde import jacobian_flow_matrix, shift_noise
from fbmlab.young import p_variation


def _problem(drift, H=0.5, n=256, x0=0.2, seed=0, d=1):
    grid = TimeGrid(n)
    noise = sample_fbm(H, grid, d, seed=seed)
    return SdeProblem(drift, noise, np.full(d, x0), grid)


class TestEuler:
    def test_zero_drift_is_noise_plus_start(self):
        prob = _problem(make_field("zero"))
        sol = solve_euler(prob)
        expect = 0.2 + prob.noise.values[:, 0]
        assert np.array_equal(sol.X.values, expect)

    def test_constant_drift_exact(self):
        prob = _problem(make_field("constant", c=1.5))
        sol = solve_euler(prob)
        expect = 0.2 + 1.5 * prob.grid.nodes + prob.noise.values[:, 0]
        assert np.max(np.abs(sol.X.values - expect)) < 1e-12

    def test_decomposition_invariant(self):
        prob = _problem(make_field("sine"), H=0.3, n=512)
        sol = solve_euler(prob)
        assert np.array_equal(sol.X.values,
                              sol.phi.values + prob.noise.values[:, 0])

    def test_richardson_order(self):
        # sup error vs 16x reference fits O(dt^theta), theta >= 0.9
        drift = make_field("sine", amplitude=1.0, freq=1.5)
        fine_grid = TimeGrid(2 ** 14)
        fine_noise = sample_fbm(0.5, fine_grid, 1, seed=3)
        ref = solve_euler(SdeProblem(drift, fine_noise, [0.2], fine_grid))
        errs, dts = [], []
        for n in (256, 512, 1024):
            sub = 2 ** 14 // n
            grid = TimeGrid(n)
            noise = sample_fbm(0.5, grid, 1, seed=99)
            noise.values[:] = fine_noise.values[::sub]
            sol = solve_euler(SdeProblem(drift, noise, [0.2], grid))
            errs.append(np.max(np.abs(sol.X.values - ref.X.values[::sub])))
            dts.append(1.0 / n)
        fit = fit_loglog(dts, errs)
        assert fit.slope >= 0.9

    def test_overflow_flag(self):
        explode = DriftField(lambda t, x: x * 60.0, 1.0, 2.0, 1,
                             lambda t: 60.0, lambda t, x: np.full_like(x, 60.0))
        prob = _problem(explode, n=128, x0=1.0)
        sol = solve_euler(prob)
        assert sol.overflow

    def test_shift_equivariance(self):
        # solving with noise B + h equals solving with drift shifted by h
        drift = make_field("sine", amplitude=0.8, freq=2.0)
        grid = TimeGrid(256)
        noise = sample_fbm(0.4, grid, 1, seed=5)
        h_vals = 0.3 * np.sin(2 * np.pi * grid.nodes)
        h = DiscretePath(grid, h_vals)
        shifted_noise = shift_noise(noise, h)
        direct = solve_euler(SdeProblem(drift, shifted_noise, [0.1], grid))
        tilted = DriftField(
            lambda t, x: drift(t, x + np.interp(t, grid.nodes, h_vals)),
            drift.alpha, drift.q, 1, drift.norm_profile,
        )
        indirect = solve_euler(SdeProblem(tilted, noise, [0.1], grid))
        back = indirect.X.values + h_vals
        assert np.max(np.abs(direct.X.values - back)) < 1e-10


class TestDistributional:
    def test_zero_levels_identical(self):
        base = make_field("distributional_lacunary", alpha=-0.1)
        zero = DriftField(base.fn, -0.1, 2.0, 1, None, None,
                          meta={"fourier": (np.array([1.0]), np.array([0.0]),
                                            np.array([0.0]))})
        noise = sample_fbm(0.3, TimeGrid(128), 1, seed=1)
        fam = solve_distributional(zero, [0.1, 0.05, 0.02], noise, 0.0)
        assert np.max(fam.cauchy_deltas) == 0.0

    def test_cauchy_deltas_track_besov_distance(self):
        # regression per the stability estimate: mean sup-distance between
        # consecutive levels vs their C^{alpha-1} distance, slope 1 +- 0.2
        from fbmlab.fields import besov_seminorm_lacunary

        base = make_field("distributional_lacunary", alpha=-0.1)
        levels = 0.25 * 4.0 ** -np.arange(5)
        deltas = np.zeros(4)
        for r in range(200):
            noise = sample_fbm(0.3, TimeGrid(1024), 1, seed=42, labels=("cau", r))
            fam = solve_distributional(base, levels, noise, 0.1)
            deltas += fam.cauchy_deltas
        deltas /= 200
        freqs, amps, _ = base.meta["fourier"]
        dists = []
        for k in range(4):
            diff = amps * np.abs(np.exp(-freqs**2 * levels[k + 1] / 2)
                                 - np.exp(-freqs**2 * levels[k] / 2))
            dists.append(besov_seminorm_lacunary(freqs, diff, -1.1))
        fit = fit_loglog(dists, deltas)
        assert abs(fit.slope - 1.0) <= 0.2
        # monotone nonincreasing with 10% slack
        for a, b in zip(deltas, deltas[1:]):
            assert b <= a * 1.1

    def test_regime_rejection(self):
        base = make_field("distributional_lacunary", alpha=-0.8)
        noise = sample_fbm(0.3, TimeGrid(64), 1, seed=1)
        with pytest.raises(ValueError):
            solve_distributional(base, [0.1, 0.05], noise, 0.0)


class TestAveragedField:
    def test_constant_field(self):
        grid = TimeGrid(128)
        noise = sample_fbm(0.4, grid, 1, seed=2)
        av = averaged_field(make_field("constant", c=2.0), noise,
                            np.linspace(-1, 1, 9))
        for j, t in enumerate(grid.nodes):
            assert np.max(np.abs(av.values[j] - 2.0 * t)) < 1e-12

    def test_spatial_lipschitz_ratio_finite(self):
        grid = TimeGrid(512)
        drift = make_field("weierstrass", alpha=0.5, n_terms=10)
        ratios = []
        for r in range(20):
            noise = sample_fbm(0.3, grid, 1, seed=7, labels=("avg", r))
            xs = np.linspace(-0.5, 0.5, 11)
            av = averaged_field(drift, noise, xs)
            inc = av.values[256] - av.values[128]
            dif = np.abs(np.diff(inc)) / np.diff(xs)
            ratios.append(np.max(dif))
        mean_ratio = float(np.mean(ratios))
        assert np.isfinite(mean_ratio)

    def test_temporal_pvar_finite_at_critical_index(self):
        grid = TimeGrid(1024)
        drift = make_field("weierstrass", alpha=0.5, n_terms=10)
        noise = sample_fbm(0.3, grid, 1, seed=8)
        av = averaged_field(drift, noise, np.linspace(-0.5, 0.5, 5))
        alpha, H = 0.5, 0.3
        p_ah = (1.0 / (1.0 + (alpha - 1.0) * H) + 2.0) / 2.0
        assert np.isfinite(av.temporal_pvar(p_ah))

    def test_euler_vs_nonlinear_young_agreement(self):
        # two independent solution routes for the same singular problem
        from fbmlab import solve_nonlinear_yde

        grid = TimeGrid(1024)
        drift = make_field("weierstrass", alpha=0.5, n_terms=12)
        noise = sample_fbm(0.35, grid, 1, seed=9)
        euler = solve_euler(SdeProblem(drift, noise, [0.1], grid), time_point="mid")
        xs = np.linspace(-3.0, 3.0, 961)
        av = averaged_field(drift, noise, xs)
        sol = solve_nonlinear_yde(av.germ(), 0.1, grid)
        phi = sol.path.values + noise.values[:, 0]
        assert np.max(np.abs(phi - euler.X.values)) < 5e-3


class TestFlow:
    def test_zero_drift_flow_is_translation(self):
        grid = TimeGrid(128)
        noise = sample_fbm(0.5, grid, 1, seed=4)
        xs = np.linspace(-1, 1, 7)
        flow = compute_flow(make_field("zero"), noise, [0, 32], [64, 128], xs)
        B = noise.values[:, 0]
        for (si, ti), vals in flow.Phi.items():
            assert np.max(np.abs(vals - (xs + B[ti] - B[si]))) < 1e-14

    def test_composition_residual_small(self):
        grid = TimeGrid(1024)
        noise = sample_fbm(0.5, grid, 1, seed=5)
        drift = make_field("sine", amplitude=0.8, freq=1.3)
        xs = np.linspace(-1, 1, 5)
        flow = compute_flow(drift, noise, [0, 256], [512, 1024], xs)
        assert flow.composition_residual < 1e-9

    def test_jacobian_vs_finite_difference(self):
        grid = TimeGrid(2048)
        noise = sample_fbm(0.5, grid, 1, seed=6)
        drift = make_field("sine", amplitude=0.8, freq=1.3)
        xs = np.linspace(-1, 1, 5)
        flow = compute_flow(drift, noise, [0], [2048], xs)
        J = flow.J[(0, 2048)]
        eps = 1e-4
        plus = solve_euler_lattice(drift, noise, xs + eps)[-1]
        minus = solve_euler_lattice(drift, noise, xs - eps)[-1]
        fd = (plus - minus) / (2 * eps)
        assert np.max(np.abs(J - fd) / np.abs(fd)) < 1e-3

    def test_jk_identity(self):
        grid = TimeGrid(2048)
        noise = sample_fbm(0.5, grid, 1, seed=7)
        drift = make_field("sine", amplitude=0.8, freq=1.3)
        flow = compute_flow(drift, noise, [0], [2048], np.linspace(-1, 1, 5))
        J, K = flow.J[(0, 2048)], flow.K[(0, 2048)]
        assert np.max(np.abs(J * K - 1.0)) < 1e-6

    def test_matrix_jacobian_identity_and_positivity(self):
        grid = TimeGrid(512)
        noise = sample_fbm(0.5, grid, 2, seed=8)
        drift = DriftField(
            lambda t, x: np.stack([np.sin(x[..., 0]) + 0.3 * x[..., 1],
                                   np.cos(x[..., 1]) - 0.2 * x[..., 0]], axis=-1),
            1.0, 2.0, 2, lambda t: 1.5,
            gradient=lambda t, x: np.stack([
                np.stack([np.cos(x[..., 0]), 0.3 * np.ones_like(x[..., 0])], axis=-1),
                np.stack([-0.2 * np.ones_like(x[..., 0]), -np.sin(x[..., 1])], axis=-1),
            ], axis=-2),
        )
        sol, J, K = jacobian_flow_matrix(drift, noise, np.array([0.1, -0.2]))
        prod = np.einsum("nij,njk->nik", J, K)
        assert np.max(np.abs(prod - np.eye(2))) < 1e-10
        dets = np.linalg.det(J)
        assert np.all(dets > 0)

    def test_two_point_inverse_moment_bounded(self):
        # MC over noises: E[sup_t |Phi(x)-Phi(y)|^{-1}] |x-y| stays bounded
        grid = TimeGrid(256)
        drift = make_field("sine", amplitude=0.5, freq=1.0)
        gaps = 2.0 ** -np.arange(2, 7)
        worst = []
        for gap in gaps:
            vals = []
            for r in range(500):
                noise = sample_fbm(0.45, grid, 1, seed=11, labels=("inv", r))
                sol = solve_euler_lattice(drift, noise, np.array([0.0, gap]))
                inv_sup = 1.0 / np.min(np.abs(sol[:, 1] - sol[:, 0]))
                vals.append(inv_sup)
            worst.append(np.mean(vals) * gap)
        assert max(worst) < 3.0


class TestMalliavin:
    def test_zero_direction(self):
        prob = _problem(make_field("sine"), n=128)
        h = DiscretePath(prob.grid, np.zeros(129))
        out = malliavin_directional(prob, h)
        assert np.max(np.abs(out.values)) == 0.0

    def test_zero_drift_returns_h(self):
        prob = _problem(make_field("zero"), n=128)
        h = DiscretePath(prob.grid, prob.grid.nodes**2)
        out = malliavin_directional(prob, h)
        assert np.max(np.abs(out.values - h.values)) < 1e-14

    def test_matches_extrapolated_finite_difference(self):
        drift = make_field("sine", amplitude=0.9, freq=1.1)
        prob = _problem(drift, n=1024, x0=0.2, seed=13)
        h = DiscretePath(prob.grid, prob.grid.nodes.copy())
        deriv = malliavin_directional(prob, h)
        base = solve_euler(prob)
        diffs = {}
        for eps in (1e-3, 1e-4):
            pert = shift_noise(prob.noise, DiscretePath(prob.grid, eps * h.values))
            sol = solve_euler(SdeProblem(drift, pert, prob.x0, prob.grid))
            diffs[eps] = (sol.X.values - base.X.values) / eps
        e1, e2 = 1e-3, 1e-4
        extrap = diffs[e2] + e2 * (diffs[e2] - diffs[e1]) / (e1 - e2)
        assert np.max(np.abs(extrap - deriv.values)) < 1e-4

    def test_requires_zero_start(self):
        prob = _problem(make_field("sine"), n=32)
        h = DiscretePath(prob.grid, np.ones(33))
        with pytest.raises(ValueError):
            malliavin_directional(prob, h)

    def test_gradient_needed(self):
        cusp = make_field("sqrt_cusp")
        prob = _problem(cusp, n=32, x0=1.0)
        h = DiscretePath(prob.grid, prob.grid.nodes.copy())
        with pytest.raises(ValueError):
            malliavin_directional(prob, h)
