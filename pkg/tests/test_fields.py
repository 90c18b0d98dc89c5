import numpy as np
import pytest

from fbmlab import (
    classify_regime,
    control_from_profile,
    heat_smooth,
    holder_seminorm_estimate,
    make_field,
    mollify_sequence,
)
from fbmlab.fields import besov_seminorm_lacunary
from fbmlab.fitting import fit_loglog
from fbmlab.rng import stream


class TestRegime:
    def test_brownian_threshold_zero(self):
        rep = classify_regime(0.5, 2.0, 0.1)
        assert rep.threshold == pytest.approx(0.0, abs=1e-15)
        assert rep.classification == "subcritical"
        assert rep.condition_a

    def test_critical_boundary(self):
        rep = classify_regime(0.5, 2.0, 0.0)
        assert rep.classification == "critical"
        assert not rep.condition_a

    def test_high_hurst(self):
        rep = classify_regime(2.0, 2.0, 0.8)
        assert rep.threshold == pytest.approx(0.75)
        assert rep.classification == "subcritical"

    def test_rejects_integer_hurst_for_conditions(self):
        rep = classify_regime(1.0, 2.0, 0.5)
        assert not rep.condition_a and not rep.condition_b
        with pytest.raises(ValueError):
            rep.require("A")

    def test_monotone_in_alpha(self):
        # increasing alpha never moves subcritical -> supercritical
        rank = {"supercritical": 0, "critical": 1, "subcritical": 2}
        for H in (0.3, 0.8, 1.5):
            prev = -1
            for alpha in np.linspace(-0.9, 0.9, 19):
                r = rank[classify_regime(H, 2.0, alpha).classification]
                assert r >= prev
                prev = r

    def test_scaling_exponent(self):
        rep = classify_regime(0.5, 2.0, 0.2)
        assert rep.gamma_scaling == pytest.approx(1 - 0.5 - 0.5 + 0.2 * 0.5)

    def test_condition_b(self):
        rep = classify_regime(0.3, 2.0, -0.1)
        assert rep.condition_b
        assert rep.condition_a  # for q <= 2 condition B reduces to A
        rep2 = classify_regime(0.3, 4.0, -0.1)
        assert rep2.condition_b and not rep2.condition_a


class TestControls:
    def test_constant_profile(self):
        w = control_from_profile(lambda t: 2.0, 3.0)
        assert w(0.2, 0.7) == pytest.approx(8.0 * 0.5, rel=1e-9)

    def test_additivity(self):
        w = control_from_profile(lambda t: 1.0 + t, 2.0)
        assert w(0.0, 0.5) + w(0.5, 1.0) == pytest.approx(w(0.0, 1.0), rel=1e-9)

    def test_singular_profile_closed_form(self):
        # profile t^{-1/q~} with q~ > q: w(0,t) = t^{1-q/q~} / (1 - q/q~)
        q, qt = 2.0, 3.0
        w = control_from_profile(lambda t: t ** (-1.0 / qt), q)
        for t in (0.25, 0.5, 1.0):
            expect = t ** (1 - q / qt) / (1 - q / qt)
            assert w(0.0, t) == pytest.approx(expect, abs=1e-8)

    def test_superadditivity_randomized(self):
        rng = stream(0, "ctrl-test")
        w = control_from_profile(lambda t: 1.0 + np.sin(3 * t) ** 2, 2.0)
        for _ in range(100):
            s, u, t = np.sort(rng.uniform(0, 1, 3))
            assert w(s, u) + w(u, t) <= w(s, t) + 1e-9

    def test_non_integrable_profile_raises(self):
        w = control_from_profile(lambda t: t ** (-0.9), 2.0)
        with pytest.raises((ValueError, ZeroDivisionError)):
            w(0.0, 1.0)


class TestHeatSmoothing:
    def test_constant_field_fixed(self):
        b = make_field("constant", c=2.5)
        sm = heat_smooth(b, 0.1)
        x = np.linspace(-2, 2, 11)
        assert np.max(np.abs(sm(0.0, x) - 2.5)) < 1e-12

    def test_linear_field_fixed(self):
        b = make_field("linear", rate=1.0)
        sm = heat_smooth(b, 0.3)
        x = np.linspace(-2, 2, 11)
        assert np.max(np.abs(sm(0.0, x) - x)) < 1e-10

    def test_gradient_slope_of_cusp(self):
        # d/dx P_tau applied to sign(x)|x|^{1/2} has sup growing like
        # tau^{(alpha-1)/2} = tau^{-1/4}; log-log slope within 0.05
        b = make_field("sqrt_cusp")
        taus = 2.0 ** -np.arange(4, 13)
        x = np.linspace(-1.0, 1.0, 41)
        sups = []
        for tau in taus:
            sm = heat_smooth(b, tau)
            sups.append(np.max(np.abs(sm.grad(0.0, x))))
        fit = fit_loglog(taus, sups)
        assert abs(fit.slope - (-0.25)) < 0.05

    def test_semigroup_property(self):
        b = make_field("sine", amplitude=1.0, freq=2.0)
        x = np.linspace(-1.5, 1.5, 31)
        one = heat_smooth(heat_smooth(b, 0.05), 0.1)
        two = heat_smooth(b, 0.15)
        assert np.max(np.abs(one(0.0, x) - two(0.0, x))) < 1e-8

    def test_rejects_nonpositive_tau(self):
        with pytest.raises(ValueError):
            heat_smooth(make_field("zero"), 0.0)

    def test_fourier_closed_form_matches_quadrature(self):
        b = make_field("weierstrass", alpha=0.5, n_terms=5)
        no_meta = make_field("weierstrass", alpha=0.5, n_terms=5)
        no_meta.meta = {k: v for k, v in no_meta.meta.items() if k != "fourier"}
        tau = 0.02
        x = np.linspace(-1, 1, 21)
        exact = heat_smooth(b, tau)
        quad = heat_smooth(no_meta, tau)
        assert np.max(np.abs(exact(0.0, x) - quad(0.0, x))) < 1e-8


class TestMollify:
    def test_levels_must_decrease(self):
        with pytest.raises(ValueError):
            mollify_sequence(make_field("sine"), [0.1, 0.2])

    def test_smooth_field_linear_convergence(self):
        # Taylor oracle: ||P_tau b - b||_C0 = O(tau) for smooth b
        b = make_field("sine", amplitude=1.0, freq=2.0)
        taus = [2.0**-k for k in range(3, 9)]
        x = np.linspace(-2, 2, 81)
        errs = []
        for sm, tau in zip(mollify_sequence(b, taus), taus):
            errs.append(np.max(np.abs(sm(0.0, x) - b(0.0, x))))
        fit = fit_loglog(taus, errs)
        assert fit.slope >= 0.9

    def test_seminorms_nonincreasing_along_levels(self):
        b = make_field("weierstrass", alpha=0.5, n_terms=10)
        taus = [0.1, 0.02, 0.004, 0.0008]
        fields = mollify_sequence(b, taus)
        x = np.linspace(-1, 1, 513)
        norms = [holder_seminorm_estimate(f(0.0, x), x, 0.5) for f in fields]
        # smoother fields have smaller seminorm: nonincreasing as tau grows
        for coarse, fine in zip(norms, norms[1:]):
            assert coarse <= fine * 1.1

    def test_vanishing_level_recovers_field(self):
        b = make_field("weierstrass", alpha=0.5, n_terms=8)
        x = np.linspace(-1, 1, 101)
        sm = heat_smooth(b, 1e-9)
        assert np.max(np.abs(sm(0.0, x) - b(0.0, x))) < 1e-3

    def test_distributional_field_refuses_pointwise(self):
        b = make_field("distributional_lacunary", alpha=-0.1)
        with pytest.raises(ValueError):
            b(0.0, np.zeros(3))
        sm = heat_smooth(b, 0.1)
        assert np.all(np.isfinite(sm(0.0, np.linspace(-1, 1, 11))))


class TestSeminorm:
    def test_linear_function(self):
        x = np.linspace(0, 1, 101)
        assert holder_seminorm_estimate(x, x, 1.0) == pytest.approx(1.0, rel=1e-12)

    def test_constant(self):
        x = np.linspace(0, 1, 51)
        assert holder_seminorm_estimate(np.ones(51), x, 0.5) == 0.0

    def test_sqrt_seminorm_exhaustive(self):
        # |x|^{1/2} has C^{1/2} seminorm exactly 1, attained on pairs (0, x)
        x = np.linspace(-1, 1, 2**11 + 1)
        est = holder_seminorm_estimate(np.sqrt(np.abs(x)), x, 0.5)
        assert abs(est - 1.0) < 1e-3

    def test_monotone_under_refinement(self):
        f = lambda x: np.sin(5 * x)
        prev = 0.0
        for n in (33, 65, 129, 257):
            x = np.linspace(-1, 1, n)
            est = holder_seminorm_estimate(f(x), x, 0.5)
            assert est >= prev - 1e-12
            prev = est

    def test_rejects_bad_alpha(self):
        with pytest.raises(ValueError):
            holder_seminorm_estimate([0, 1], [0, 1], 1.5)


class TestFieldLibrary:
    def test_registry_unknown_name(self):
        with pytest.raises(KeyError):
            make_field("nope")

    def test_counterexample_profile_and_oddness(self):
        b = make_field("counterexample", q_tilde=4.0, alpha=0.05)
        x = np.linspace(0.01, 2, 19)
        assert np.max(np.abs(b(0.5, x) + b(0.5, -x))) < 1e-12
        assert b.norm_profile(0.25) == pytest.approx(2.0 * 0.25 ** (-0.25))

    def test_counterexample_nd_structure(self):
        b = make_field("counterexample", q_tilde=4.0, alpha=0.3, dim=3)
        x = np.array([[0.5, -0.2, 0.1], [-0.5, 0.2, -0.1]])
        out = b(1.0, x)
        assert out.shape == (2, 3)
        assert np.all(out[:, 1:] == 0.0)
        assert out[0, 0] > 0 > out[1, 0]

    def test_weierstrass_exactly_alpha(self):
        # lacunary series: Besov block norm comparable at exponent alpha
        b = make_field("weierstrass", alpha=0.5, n_terms=12)
        freqs, amps, _ = b.meta["fourier"]
        assert besov_seminorm_lacunary(freqs, amps, 0.5) == pytest.approx(1.0)
