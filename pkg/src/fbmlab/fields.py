"""Drift fields b in L^q_t C^alpha_x: analytic families, regime classification,
controls, heat smoothing and mollified sequences.

A DriftField packages an evaluator with its declared (alpha, q) regularity
metadata and, when available, an analytic norm profile and gradient.  Fields
with alpha < 0 are never evaluated pointwise as distributions; they exist
only through their mollified families (heat smoothing at a positive scale),
which for the built-in lacunary series is available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .rng import stream


@dataclass(eq=False)
class DriftField:
    """Evaluable drift with declared regularity metadata.

    fn maps (t, x) -> drift, broadcasting over leading axes of x; for dim=1
    scalar x arrays map to arrays of the same shape.  gradient, when present,
    returns d/dx with shape x.shape + (dim,) in dim > 1 or x.shape in dim=1.
    """

    fn: Callable
    alpha: float
    q: float
    dim: int = 1
    norm_profile: Callable | None = None
    gradient: Callable | None = None
    divergence: Callable | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __call__(self, t, x):
        return self.fn(t, np.asarray(x, dtype=float))

    def grad(self, t, x):
        if self.gradient is None:
            raise ValueError(
                f"field {self.name!r} has no gradient; mollify it first "
                "(heat_smooth provides one analytically through the kernel)"
            )
        return self.gradient(t, np.asarray(x, dtype=float))

    def div(self, t, x):
        if self.divergence is not None:
            return self.divergence(t, np.asarray(x, dtype=float))
        if self.dim == 1:
            return self.grad(t, x)
        raise ValueError(f"field {self.name!r} has no divergence")

    def control(self, s: float, t: float) -> float:
        """w_{b,alpha,q}(s,t) = int_s^t ||b_r||_{C^alpha}^q dr from the profile."""
        if self.norm_profile is None:
            raise ValueError(f"field {self.name!r} has no norm profile")
        return control_from_profile(self.norm_profile, self.q)(s, t)


@dataclass(frozen=True)
class RegimeReport:
    hurst: float
    q: float
    alpha: float
    q_conj: float
    threshold: float
    gamma_scaling: float
    classification: str
    condition_a: bool
    condition_b: bool

    def require(self, condition: str):
        ok = {"A": self.condition_a, "B": self.condition_b}[condition]
        if not ok:
            raise ValueError(
                f"regime condition {condition} violated: H={self.hurst}, q={self.q}, "
                f"alpha={self.alpha} needs alpha > 1 - 1/(q'H) = {self.threshold:.4f}"
                + (" and q in (1,2], alpha < 1" if condition == "A"
                   else " and alpha > 1/2 - 1/(2H), H in (0,1)")
            )


def classify_regime(H: float, q: float, alpha: float) -> RegimeReport:
    """Sub/super-criticality of L^q_t C^alpha_x drift against H-fBm.

    threshold = 1 - 1/(q'H); condition A is the strong well-posedness regime
    (H non-integer, q in (1,2], threshold < alpha < 1); condition B is the
    weaker assumption used for distributional a priori bounds (H in (0,1),
    q in (1,inf], alpha > 1/2 - 1/(2H) and alpha > 1 - 1/(Hq')).

    The threshold arithmetic is direct substitution and works for any H > 0;
    integer H (where the theory's conditions are void) makes both condition
    flags false, and RegimeReport.require rejects it.
    """
    if H <= 0:
        raise ValueError(f"H must be positive, got H={H}")
    if not q > 1:
        raise ValueError(f"q must lie in (1, inf], got q={q}")
    integer_h = H == int(H)
    q_conj = 1.0 if math.isinf(q) else q / (q - 1.0)
    threshold = 1.0 - 1.0 / (q_conj * H)
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    gamma_scaling = 1.0 - H - inv_q + alpha * H
    if alpha > threshold:
        classification = "subcritical"
    elif alpha == threshold:
        classification = "critical"
    else:
        classification = "supercritical"
    condition_a = (not integer_h) and (1.0 < q <= 2.0) and (threshold < alpha < 1.0)
    condition_b = (
        not integer_h
        and 0.0 < H < 1.0
        and alpha > 0.5 - 1.0 / (2.0 * H)
        and alpha > threshold
    )
    return RegimeReport(
        H, q, alpha, q_conj, threshold, gamma_scaling, classification,
        condition_a, condition_b,
    )


@dataclass(eq=False)
class ControlFn:
    """Superadditive two-time functional w(s,t); additive when built from a profile."""

    w: Callable
    provenance: str = ""

    def __call__(self, s: float, t: float) -> float:
        if t < s:
            raise ValueError(f"control needs s <= t, got {s} > {t}")
        if t == s:
            return 0.0
        return float(self.w(s, t))


def control_from_profile(profile: Callable, q: float, tol: float = 1e-10) -> ControlFn:
    """w(s,t) = int_s^t profile(r)^q dr by adaptive quadrature.

    Additive by construction, hence a control.  Raises if the quadrature
    does not converge (profile not q-integrable on the requested window).
    """
    def w(s, t):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error", category=IntegrationWarning)
            try:
                val, err = quad(lambda r: profile(r) ** q, s, t,
                                epsabs=tol, epsrel=tol, limit=200)
            except IntegrationWarning as exc:
                raise ValueError(
                    f"control quadrature did not converge on [{s},{t}]: {exc}; "
                    "profile/q mismatch?"
                ) from None
        if not np.isfinite(val) or err > max(tol, 1e-6 * abs(val)) * 100:
            raise ValueError(
                f"control quadrature did not converge on [{s},{t}] "
                f"(val={val}, err={err}); profile/q mismatch?"
            )
        return val
    return ControlFn(w, provenance=f"profile^{q} quadrature")


# ---------------------------------------------------------------------------
# Heat smoothing
# ---------------------------------------------------------------------------

_GH_POINTS = 64


def _gh_nodes(n_points):
    h, w = np.polynomial.hermite.hermgauss(n_points)
    return h, w / np.sqrt(np.pi)


def heat_smooth(b: DriftField, tau: float, n_points: int = _GH_POINTS) -> DriftField:
    """Gaussian smoothing P_tau b (convolution with the N(0, tau I) density).

    Gauss-Hermite quadrature in each coordinate; the gradient of the output
    comes analytically through the kernel (Stein identity), so mollified
    fields always expose a gradient.  Fields carrying closed-form Fourier
    data are smoothed exactly instead.
    """
    if tau <= 0:
        raise ValueError(f"smoothing time must be positive, got tau={tau}")
    if "fourier" in b.meta:
        return _smooth_fourier(b, tau)
    if b.dim != 1:
        return _heat_smooth_nd(b, tau, n_points=max(12, n_points // 4))
    h, wts = _gh_nodes(n_points)
    sigma = math.sqrt(tau)
    shift = sigma * math.sqrt(2.0) * h  # N(0, tau) quadrature offsets

    def fn(t, x):
        xx = np.asarray(x, dtype=float)
        vals = b.fn(t, xx[..., None] + shift)
        return np.tensordot(vals, wts, axes=([-1], [0]))

    def grad(t, x):
        xx = np.asarray(x, dtype=float)
        vals = b.fn(t, xx[..., None] + shift)
        kern = wts * shift / tau  # E[b(x + sZ) Z] / s with Z ~ N(0, tau)
        return np.tensordot(vals, kern, axes=([-1], [0]))

    profile = b.norm_profile  # ||P_tau b_t||_{C^a} <= ||b_t||_{C^a}
    return DriftField(
        fn, b.alpha, b.q, b.dim, profile, grad,
        name=f"{b.name}~P{tau:g}", meta={**b.meta, "smoothing": tau},
    )


def _heat_smooth_nd(b: DriftField, tau: float, n_points: int) -> DriftField:
    h, wts = _gh_nodes(n_points)
    sigma = math.sqrt(2.0 * tau)
    grids = np.meshgrid(*([h * sigma] * b.dim), indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=-1)  # (K, d)
    wgrid = np.meshgrid(*([wts] * b.dim), indexing="ij")
    weights = np.prod(np.stack([w.ravel() for w in wgrid]), axis=0)  # (K,)

    def fn(t, x):
        xx = np.asarray(x, dtype=float)
        vals = b.fn(t, xx[..., None, :] + offsets)  # (..., K, d)
        return np.tensordot(vals, weights, axes=([-2], [0]))

    def grad(t, x):
        xx = np.asarray(x, dtype=float)
        vals = b.fn(t, xx[..., None, :] + offsets)  # (..., K, d)
        kern = weights[:, None] * offsets / tau  # (K, d)
        # grad[..., i, j] = d b_i / d x_j
        return np.einsum("...ki,kj->...ij", vals, kern)

    return DriftField(
        fn, b.alpha, b.q, b.dim, b.norm_profile, grad,
        name=f"{b.name}~P{tau:g}", meta={**b.meta, "smoothing": tau},
    )


def _smooth_fourier(b: DriftField, tau: float) -> DriftField:
    freqs, amps, phases = b.meta["fourier"]
    damped = amps * np.exp(-(freqs ** 2) * tau / 2.0)
    prof_scale = b.meta.get("profile_scale")
    sm = _lacunary_field(
        freqs, damped, phases, b.alpha, b.q,
        name=f"{b.name}~P{tau:g}", profile_scale=prof_scale,
    )
    sm.meta["smoothing"] = tau
    return sm


def mollify_sequence(b: DriftField, levels) -> list[DriftField]:
    """Heat smoothing at each scale in `levels` (decreasing smoothing times)."""
    levels = list(levels)
    if any(l2 >= l1 for l1, l2 in zip(levels, levels[1:])):
        raise ValueError("mollification levels must be strictly decreasing")
    return [heat_smooth(b, tau) for tau in levels]


def holder_seminorm_estimate(values, positions, alpha: float) -> float:
    """max over lattice pairs of |f(x)-f(y)| / |x-y|^alpha (a lower bound).

    Monotone under lattice refinement; one-sided by construction, so tests
    against analytic seminorms allow slack on one side only.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0,1], got {alpha}")
    v = np.asarray(values, dtype=float)
    x = np.asarray(positions, dtype=float)
    if len(v) != len(x) or len(v) < 2:
        raise ValueError("need matching lattices with at least 2 points")
    best = 0.0
    step = 512
    for i in range(0, len(v), step):
        vi = v[i : i + step]
        xi = x[i : i + step]
        dv = np.abs(vi[:, None] - v[None, :])
        dx = np.abs(xi[:, None] - x[None, :])
        mask = dx > 0
        best = max(best, float(np.max(dv[mask] / dx[mask] ** alpha)))
    return best


def besov_seminorm_lacunary(freqs, amps, s: float) -> float:
    """C^s (Besov B^s_{inf,inf}) seminorm of a lacunary cosine series.

    For frequencies separated into dyadic blocks the Littlewood-Paley norm
    is comparable to max_j freq_j^s * |block amplitude|; exact up to
    absolute constants, which is enough for one-sided tests and for
    measuring distances between mollification levels.
    """
    freqs = np.asarray(freqs, dtype=float)
    amps = np.abs(np.asarray(amps, dtype=float))
    blocks = {}
    for f, a in zip(freqs, amps):
        j = max(0, int(np.floor(np.log2(max(f, 1e-300)))))
        blocks[j] = blocks.get(j, 0.0) + a
    return max((2.0 ** (j * s)) * a for j, a in blocks.items())


# ---------------------------------------------------------------------------
# Field library
# ---------------------------------------------------------------------------

def _lacunary_field(freqs, amps, phases, alpha, q, name, profile_scale=None) -> DriftField:
    freqs = np.asarray(freqs, dtype=float)
    amps = np.asarray(amps, dtype=float)
    phases = np.asarray(phases, dtype=float)

    def fn(t, x):
        xv = np.asarray(x, dtype=float)
        ang = np.multiply.outer(xv, freqs) + phases
        return np.cos(ang) @ amps

    def grad(t, x):
        xv = np.asarray(x, dtype=float)
        ang = np.multiply.outer(xv, freqs) + phases
        return -np.sin(ang) @ (amps * freqs)

    scale = profile_scale if profile_scale is not None else float(np.sum(np.abs(amps)))
    return DriftField(
        fn, alpha, q, 1, (lambda t: scale), grad, name=name,
        meta={"fourier": (freqs, amps, phases), "profile_scale": profile_scale},
    )


def make_field(name: str, **params) -> DriftField:
    """Instantiate a registered field by name with a parameter map."""
    try:
        factory = FIELD_REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown field {name!r}; known: {sorted(FIELD_REGISTRY)}"
        ) from None
    return factory(**params)


def _field_zero(dim=1, q=2.0):
    fn = (lambda t, x: np.zeros_like(np.asarray(x, dtype=float)))
    return DriftField(fn, 1.0, q, dim, (lambda t: 0.0), fn,
                      divergence=(lambda t, x: np.zeros(np.shape(np.asarray(x))[:-1] if dim > 1 else np.shape(x))),
                      name="zero")


def _field_constant(c=1.0, dim=1, q=2.0):
    cv = np.asarray(c, dtype=float)

    def fn(t, x):
        xv = np.asarray(x, dtype=float)
        return np.broadcast_to(cv, xv.shape).copy() if cv.ndim == 0 or dim == 1 \
            else np.broadcast_to(cv, xv.shape).copy()

    zero = lambda t, x: np.zeros_like(np.asarray(x, dtype=float))
    return DriftField(fn, 1.0, q, dim, (lambda t: float(np.max(np.abs(cv)))), zero,
                      name="constant", meta={"c": c})


def _field_linear(rate=-1.0, q=2.0):
    fn = lambda t, x: rate * np.asarray(x, dtype=float)
    gr = lambda t, x: np.full_like(np.asarray(x, dtype=float), rate)
    return DriftField(fn, 1.0, q, 1, (lambda t: abs(rate)), gr, name="linear",
                      meta={"rate": rate})


def _field_sine(amplitude=1.0, freq=2.0, q=2.0):
    fn = lambda t, x: amplitude * np.sin(freq * np.asarray(x, dtype=float))
    gr = lambda t, x: amplitude * freq * np.cos(freq * np.asarray(x, dtype=float))
    return DriftField(fn, 1.0, q, 1, (lambda t: abs(amplitude) * max(1.0, abs(freq))),
                      gr, name="sine", meta={"amplitude": amplitude, "freq": freq})


def _field_sqrt_cusp(scale=1.0, q=2.0, alpha=0.5):
    """sign(x)|x|^alpha, the spatial part of the counterexample drift."""
    def fn(t, x):
        xv = np.asarray(x, dtype=float)
        return scale * np.sign(xv) * np.abs(xv) ** alpha
    return DriftField(fn, alpha, q, 1, (lambda t: 2.0 * scale), None,
                      name="sqrt_cusp", meta={"scale": scale})


def _field_counterexample(q_tilde=4.0, alpha=0.05, q=None, dim=1):
    """b_t(x) = t^{-1/q_tilde} sign(x^1) |x|^alpha; supercritical test drift.

    Time-integrable singularity at t=0: any q < q_tilde works; q defaults to
    (1 + q_tilde)/2.  The norm profile carries the local C^alpha seminorm of
    the spatial part on the unit ball.
    """
    q_eff = q if q is not None else (1.0 + q_tilde) / 2.0
    if dim == 1:
        def fn(t, x):
            xv = np.asarray(x, dtype=float)
            return t ** (-1.0 / q_tilde) * np.sign(xv) * np.abs(xv) ** alpha
    else:
        def fn(t, x):
            xv = np.asarray(x, dtype=float)
            r = np.linalg.norm(xv, axis=-1)
            out = np.zeros_like(xv)
            out[..., 0] = t ** (-1.0 / q_tilde) * np.sign(xv[..., 0]) * r ** alpha
            return out
    profile = lambda t: 2.0 * t ** (-1.0 / q_tilde)
    return DriftField(fn, alpha, q_eff, dim, profile, None, name="counterexample",
                      meta={"q_tilde": q_tilde, "alpha": alpha})


def _field_weierstrass(alpha=0.5, base=2.0, n_terms=16, seed=0, q=2.0):
    """Lacunary cosine series with exact C^alpha regularity."""
    rng = stream(seed, "weierstrass")
    ks = np.arange(n_terms)
    freqs = base ** ks
    amps = base ** (-alpha * ks)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_terms)
    f = _lacunary_field(freqs, amps, phases, alpha, q, name="weierstrass")
    f.meta.update({"base": base, "n_terms": n_terms, "seed": seed})
    return f


def _field_multiscale(alpha=0.5, j_lo=-3, j_hi=10, modes_per_octave=4, seed=0, q=2.0):
    """Random multi-mode rough field, C^alpha with spatially homogeneous
    local amplitude (several random phases and frequencies per octave)."""
    rng = stream(seed, "multiscale")
    freqs, amps, phases = [], [], []
    for j in range(j_lo, j_hi + 1):
        f = 2.0 ** (j + rng.uniform(0.0, 1.0, modes_per_octave))
        freqs.append(f)
        amps.append(2.0 ** (-alpha * j) * np.ones(modes_per_octave) / np.sqrt(modes_per_octave))
        phases.append(rng.uniform(0.0, 2.0 * np.pi, modes_per_octave))
    f = _lacunary_field(np.concatenate(freqs), np.concatenate(amps),
                        np.concatenate(phases), alpha, q, name="multiscale")
    f.meta.update({"j_lo": j_lo, "j_hi": j_hi, "modes_per_octave": modes_per_octave,
                   "seed": seed})
    return f


def _field_distributional_lacunary(alpha=-0.1, n_terms=20, seed=9, q=2.0):
    """Lacunary series with growing amplitudes: a C^alpha object for alpha<0.

    Never evaluated unmollified; heat_smooth damps mode k by
    exp(-4^k tau / 2) in closed form, so the mollified family is exact.
    """
    if alpha >= 0:
        raise ValueError("distributional field expects alpha < 0")
    rng = stream(seed, "distributional")
    ks = np.arange(n_terms)
    freqs = 2.0 ** ks
    amps = 2.0 ** (-alpha * ks)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_terms)

    def fail(t, x):
        raise ValueError(
            "distributional drift (alpha < 0) cannot be evaluated pointwise; "
            "use heat_smooth / mollify_sequence"
        )

    f = DriftField(fail, alpha, q, 1, None, None, name="distributional_lacunary",
                   meta={"fourier": (freqs, amps, phases), "profile_scale": None,
                         "n_terms": n_terms, "seed": seed})
    return f


FIELD_REGISTRY = {
    "zero": _field_zero,
    "constant": _field_constant,
    "linear": _field_linear,
    "sine": _field_sine,
    "sqrt_cusp": _field_sqrt_cusp,
    "counterexample": _field_counterexample,
    "weierstrass": _field_weierstrass,
    "multiscale": _field_multiscale,
    "distributional_lacunary": _field_distributional_lacunary,
}
