"""Named experiments: each binds library routines to a parameter set that
targets one acceptance criterion, emits CSV artifacts plus a JSON summary,
and is bit-reproducible from (config, code version).

Artifact conventions: every numeric table is written with repr-faithful
formatting ('%.17g'), file contents are hashed, and the run digest is the
hash of the sorted artifact hashes.  Wall time lives only in the summary,
which is excluded from the digest.
"""

from __future__ import annotations

import numpy as np

from . import estimators, fbm, fields, mkv, sde, transport, young
from .fitting import fit_linear, fit_loglog
from .grids import DiscretePath, TimeGrid
from .rng import stream


def _csv(columns: dict) -> str:
    names = list(columns)
    arrays = [np.atleast_1d(np.asarray(columns[c])) for c in names]
    n = max(len(a) for a in arrays)
    rows = [",".join(names)]
    for i in range(n):
        cells = []
        for a in arrays:
            v = a[i] if i < len(a) else ""
            cells.append(f"{v:.17g}" if isinstance(v, (float, np.floating)) else str(v))
        rows.append(",".join(cells))
    return "\n".join(rows) + "\n"


def _scaling_csv(x, y, fit) -> str:
    lx, ly = np.log(np.asarray(x)), np.log(np.asarray(y))
    return _csv({
        "log_x": lx,
        "log_y": ly,
        "fit_y": fit.intercept + fit.slope * lx,
    })


# ---------------------------------------------------------------------------
# experiment bodies: params -> (artifacts: name -> str, headline: dict)
# ---------------------------------------------------------------------------

def _exp_lnd_constant(p):
    grid = TimeGrid(p["n_steps"])
    artifacts, headline = {}, {}
    worst = 0.0
    for H in p["hurst_list"]:
        table = fbm.lnd_ratio_table(H, grid)
        c, spread = fbm.estimate_lnd_constant(H, grid)
        artifacts[f"lnd_H{H:g}.csv"] = _csv(
            {"s": table[:, 0], "lag": table[:, 1], "ratio": table[:, 2]}
        )
        headline[f"c_H{H:g}"] = c
        headline[f"spread_H{H:g}"] = spread
        worst = max(worst, spread)
    headline["max_spread"] = worst
    headline["criterion"] = "1"
    return artifacts, headline


def _exp_fbm_covariance(p):
    grid = TimeGrid(p["n_steps"])
    H = p["hurst"]
    n, N = grid.n_steps, p["n_paths"]
    L = fbm.covariance_factor(H, grid)
    Sig = fbm.covariance_matrix(H, grid)
    rng = stream(p["master_seed"], "cov-check")
    C = np.zeros((n, n))
    done = 0
    while done < N:
        chunk = min(2048, N - done)
        B = L @ rng.standard_normal((n, chunk))
        C += B @ B.T
        done += chunk
    C /= N
    se = np.sqrt((np.outer(np.diag(Sig), np.diag(Sig)) + Sig ** 2) / N)
    z = np.abs(C - Sig) / se
    artifacts = {"cov_z.csv": _csv({
        "max_z_per_row": z.max(axis=1),
    })}
    headline = {"max_z": float(z.max()), "n_paths": N, "criterion": "2"}
    return artifacts, headline


def _exp_sewing_convergence(p):
    f = lambda s: np.sin(2.0 * np.pi * s)
    g = lambda s: np.cos(np.pi * s) + s ** 2
    germ = young.germ_from_functions(f, g, mode="left")
    res = young.sew(germ, 0.0, 1.0, max_level=p["max_level"], tol=1e-12)
    k = 2 ** p["max_level"]
    u = np.linspace(0.0, 1.0, k + 1)
    oracle = float(np.sum(f(u[:-1]) * np.diff(g(u))))
    artifacts = {"levels.csv": _csv({
        "level": np.arange(1, len(res.diagnostics.level_deltas) + 1),
        "delta": res.diagnostics.level_deltas,
    })}
    headline = {
        "sewing_value": float(res.value),
        "oracle_value": oracle,
        "difference": abs(float(res.value) - oracle),
        "fitted_rate": res.diagnostics.fitted_rate,
        "predicted_rate": 1.0,
        "criterion": "3",
    }
    return artifacts, headline


def _exp_p_variation_oracle(p):
    rng = stream(p["master_seed"], "pvar-oracle")
    mismatches = 0
    rows = []
    for case in range(p["n_cases"]):
        vals = rng.standard_normal(8)
        dp = young.p_variation(vals, p["p"], method="exact_dp")
        best = 0.0
        for mask in range(2 ** 6):
            part = [0] + [i + 1 for i in range(6) if mask >> i & 1] + [7]
            best = max(best, float(np.sum(np.abs(np.diff(vals[part])) ** p["p"])))
        rows.append((case, dp.power_sum, best))
        if dp.power_sum != best:
            mismatches += 1
    artifacts = {"cases.csv": _csv({
        "case": [r[0] for r in rows],
        "dp": [r[1] for r in rows],
        "enumeration": [r[2] for r in rows],
    })}
    return artifacts, {"mismatches": mismatches, "n_cases": p["n_cases"], "criterion": "4"}


def _exp_affine_young_bound(p):
    grid = TimeGrid(p["n_steps"])
    H = 1.0 / p["p"] + 0.02  # paths with a.s. finite p-variation at this p
    logs, pvars, overflow = [], [], 0
    for r in range(p["n_cases"]):
        noise = fbm.sample_fbm(H, grid, 2, p["master_seed"], labels=("affine", r))
        scale = 0.5 + 1.5 * (r % 5) / 4.0
        A = DiscretePath(grid, np.einsum(
            "nk,kij->nij", noise.values * scale, np.array([
                [[0.3, 1.0], [-1.0, 0.2]], [[0.1, -0.4], [0.6, -0.2]],
            ])
        ))
        rep = young.affine_bound_report(A, None, np.array([1.0, 0.5]), p["p"])
        if rep["overflow"]:
            overflow += 1
            continue
        logs.append(np.log(rep["sup_x"]))
        pvars.append(rep["a_pvar_power"])
    fit = fit_linear(np.asarray(pvars), np.asarray(logs))
    artifacts = {"bound_scaling.csv": _csv({
        "a_pvar_power": pvars, "log_sup_x": logs,
        "fit": fit.intercept + fit.slope * np.asarray(pvars),
    })}
    headline = {
        "slope": fit.slope, "r2": fit.r_squared, "n_overflow": overflow,
        "max_log_sup": float(np.max(logs)), "criterion": "5",
    }
    return artifacts, headline


def _exp_conditional_regularity(p):
    H, q, alpha = p["hurst"], p["q"], p["alpha"]
    grid = TimeGrid(p["n_steps"])
    drift = fields.make_field("multiscale", alpha=alpha)
    n = grid.n_steps
    pairs = []
    for s_frac in (0.15, 0.35, 0.55):
        s_idx = int(s_frac * n)
        for lag in np.unique(np.round(n * np.geomspace(0.02, 0.3, 8)).astype(int)):
            pairs.append((s_idx, s_idx + int(lag)))
    fit, stats = estimators.conditional_regularity_exponent(
        drift, H, q, alpha, grid, pairs,
        n_pasts=p["n_pasts"], n_branches=p["n_branches"],
        m=p["m"], seed=p["master_seed"],
    )
    lags = np.array([t - s for s, t in stats.pairs])
    artifacts = {"conditional_scaling.csv": _csv({
        "lag": lags, "estimate": stats.estimates,
        "fit": np.exp(fit.intercept) * lags ** fit.slope,
    })}
    q_conj = q / (q - 1.0)
    headline = {
        "slope": fit.slope, "target": 1.0 / q_conj + alpha * H,
        "r2": fit.r_squared, "stderr": fit.stderr,
        "budget_flag": stats.budget_flag, "criterion": "6",
    }
    return artifacts, headline


def _exp_stability_rate(p):
    drift = fields.make_field("sine", amplitude=1.0, freq=1.5)
    grid = TimeGrid(p["n_steps"])
    offsets = 2.0 ** -np.arange(1, 8)
    report = estimators.stability_rate(
        drift, p["hurst"], grid, x0_offsets=offsets, drift_offsets=offsets,
        n_replicates=p["n_replicates"], seed=p["master_seed"],
    )
    artifacts = {
        "x0_scaling.csv": _scaling_csv(report.x0_table[:, 0], report.x0_table[:, 1],
                                       report.x0_fit),
        "drift_scaling.csv": _scaling_csv(report.drift_table[:, 0],
                                          report.drift_table[:, 1], report.drift_fit),
    }
    headline = {
        "x0_slope": report.x0_fit.slope, "x0_r2": report.x0_fit.r_squared,
        "drift_slope": report.drift_fit.slope, "drift_r2": report.drift_fit.r_squared,
        "criterion": "7",
    }
    return artifacts, headline


def _exp_mollified_cauchy(p):
    H, q, alpha = p["hurst"], p["q"], p["alpha"]
    fields.classify_regime(H, q, alpha).require("A")
    base = fields.make_field("distributional_lacunary", alpha=alpha, q=q)
    grid = TimeGrid(p["n_steps"])
    levels = p["tau0"] * (p["tau_ratio"] ** -np.arange(p["n_levels"]))
    deltas = np.zeros(p["n_levels"] - 1)
    for r in range(p["n_replicates"]):
        noise = fbm.sample_fbm(H, grid, 1, p["master_seed"], labels=("cauchy", r))
        fam = sde.solve_distributional(base, levels, noise, 0.1)
        deltas += fam.cauchy_deltas
    deltas /= p["n_replicates"]
    dists = []
    freqs, amps, _ = base.meta["fourier"]
    for k in range(p["n_levels"] - 1):
        diff = amps * np.abs(np.exp(-freqs ** 2 * levels[k + 1] / 2.0)
                             - np.exp(-freqs ** 2 * levels[k] / 2.0))
        dists.append(fields.besov_seminorm_lacunary(freqs, diff, alpha - 1.0))
    fit = fit_loglog(dists, deltas)
    monotone = all(deltas[i + 1] <= deltas[i] * (1.0 + p["slack"])
                   for i in range(len(deltas) - 1))
    artifacts = {"cauchy_levels.csv": _csv({
        "level": np.arange(len(deltas)), "delta": deltas, "besov_dist": dists,
    })}
    headline = {
        "deltas": [float(d) for d in deltas], "monotone": monotone,
        "distance_slope": fit.slope, "distance_r2": fit.r_squared,
        "criterion": "8",
    }
    return artifacts, headline


def _exp_semiflow_jacobian(p):
    grid = TimeGrid(p["n_steps"])
    drift = fields.make_field("sine", amplitude=0.8, freq=1.3)
    noise = fbm.sample_fbm(p["hurst"], grid, 1, p["master_seed"], labels=("flow",))
    n = grid.n_steps
    xs = np.linspace(-1.0, 1.0, 9)
    flow = sde.compute_flow(drift, noise, [0, n // 4], [n // 2, n], xs)
    # Jacobian vs central finite differences of the flow map
    eps = 1e-4
    states = sde.solve_euler_lattice(drift, noise, np.concatenate([xs - eps, xs + eps]))
    fd = (states[-1][len(xs):] - states[-1][: len(xs)]) / (2 * eps)
    J = flow.J[(0, n)]
    K = flow.K[(0, n)]
    jk_err = float(np.max(np.abs(J * K - 1.0)))
    fd_err = float(np.max(np.abs(J - fd) / np.abs(fd)))
    artifacts = {"flow.csv": flow.to_csv()}
    headline = {
        "composition_residual": flow.composition_residual,
        "fd_rel_err": fd_err, "jk_identity_err": jk_err,
        "solver_tol": young.SOLVER_TOL, "criterion": "9",
    }
    return artifacts, headline


def _exp_malliavin_direction(p):
    grid = TimeGrid(p["n_steps"])
    drift = fields.make_field("sine", amplitude=0.9, freq=1.1)
    noise = fbm.sample_fbm(p["hurst"], grid, 1, p["master_seed"], labels=("malliavin",))
    prob = sde.SdeProblem(drift, noise, np.array([0.2]), grid)
    h = DiscretePath(grid, grid.nodes.copy())
    deriv = sde.malliavin_directional(prob, h)
    diffs = {}
    for eps in (1e-3, 1e-4):
        pert = sde.solve_euler(sde.SdeProblem(
            drift, sde.shift_noise(noise, DiscretePath(grid, eps * h.values)),
            np.array([0.2]), grid))
        base = sde.solve_euler(prob)
        diffs[eps] = (pert.X.values - base.X.values) / eps
    e1, e2 = 1e-3, 1e-4
    extrap = diffs[e2] + e2 * (diffs[e2] - diffs[e1]) / (e1 - e2)
    err = float(np.max(np.abs(extrap - deriv.values)))
    artifacts = {"malliavin.csv": _csv({
        "t": grid.nodes, "derivative": deriv.values, "fd_extrap": extrap,
    })}
    return artifacts, {"sup_err": err, "criterion": "10"}


def _exp_rho_irregularity(p):
    grid = TimeGrid(p["n_steps"])
    artifacts, headline = {}, {}
    for H in p["hurst_list"]:
        L = fbm.covariance_factor(H, grid)
        rng = stream(p["master_seed"], "rho", H)
        Z = rng.standard_normal((grid.n_steps, p["n_paths"]))
        paths = np.vstack([np.zeros(p["n_paths"]), L @ Z]).T
        rep = estimators.rho_irregularity(paths, grid.dt)
        artifacts[f"rho_H{H:g}.csv"] = _csv({
            "xi": rep.xi_values,
            "median_mag": np.median(rep.magnitudes, axis=0),
            "kept": rep.fit_mask.astype(float),
        })
        headline[f"rho_median_H{H:g}"] = rep.rho_median
        headline[f"rho_target_H{H:g}"] = 1.0 / (2.0 * H)
    headline["criterion"] = "11"
    return artifacts, headline


def _exp_counterexample_branching(p):
    rep = estimators.counterexample_branching(
        p["hurst"], p["q_tilde"], p["alpha"], grid=TimeGrid(p["n_steps"]),
        n_replicates=p["n_replicates"], seed=p["master_seed"],
    )
    sub = estimators.counterexample_branching(
        p["control_hurst"], p["q_tilde"], p["control_alpha"],
        grid=TimeGrid(p["n_steps"]), n_replicates=p["n_replicates"],
        seed=p["master_seed"], require_supercritical=False, delta=0.05,
    )
    artifacts = {
        "fractions.csv": _csv({
            "x": np.repeat(rep.x_sequence, len(rep.rho_grid)),
            "rho": np.tile(rep.rho_grid, len(rep.x_sequence)),
            "upper": rep.upper_fractions.ravel(),
            "lower": rep.lower_fractions.ravel(),
        }),
        "gaps.csv": _csv({
            "x": sub.x_sequence, "gap_subcritical": sub.gap_statistic,
            "gap_supercritical": rep.gap_statistic,
        }),
    }
    headline = {
        "best_rho": rep.best_rho, "best_fraction": rep.best_fraction,
        "gamma": rep.gamma, "delta": rep.delta,
        "subcritical_gap_first": float(sub.gap_statistic[0]),
        "subcritical_gap_last": float(sub.gap_statistic[-1]),
        "criterion": "12",
    }
    return artifacts, headline


def _exp_mkv_contraction(p):
    f = fields.make_field("zero")
    g = fields.make_field("linear", rate=-1.0)
    problem = mkv.MkvProblem(f, g, p["hurst"],
                             (lambda rng, N: np.full(N, 0.4)), TimeGrid(p["n_steps"]))
    ens, diag = mkv.solve_mkv_picard(problem, iterations=p["iterations"],
                                     n_particles=p["n_particles"],
                                     seed=p["master_seed"])
    artifacts = {"picard.csv": _csv({
        "iteration": np.arange(len(diag.weighted_distances)),
        "raw": diag.raw_distances, "weighted": diag.weighted_distances,
    })}
    headline = {
        "contraction_ratio": diag.contraction_ratio,
        "lambda": diag.lam,
        "decay_r2": diag.decay_fit.r_squared if diag.decay_fit else 1.0,
        "decay_slope": diag.decay_fit.slope if diag.decay_fit else 0.0,
        "diverged": diag.diverged,
        "terminal_mean": float(ens[-1].mean()),
        "criterion": "13",
    }
    return artifacts, headline


def _exp_transport_duality(p):
    u0 = lambda x: np.exp(-4.0 * x ** 2)
    muT = lambda x: np.exp(-6.0 * (x - 0.2) ** 2)
    drift = fields.make_field("sine", amplitude=0.7, freq=1.2)
    residuals, masses, ns = [], [], []
    for n in p["n_grid_list"]:
        grid = TimeGrid(n)
        noise = fbm.sample_fbm(p["hurst"], TimeGrid(max(p["n_grid_list"])),
                               1, p["master_seed"], labels=("transport",))
        sub = max(p["n_grid_list"]) // n
        noise_n = fbm.FbmPath(noise.hurst, 1, grid, noise.values[::sub],
                              noise.driver, None)
        lat = np.linspace(-6.0, 6.0, 4 * n)
        t_idx = list(range(0, n + 1, max(1, n // 8)))
        u = transport.solve_transport(u0, drift, noise_n, lat, t_idx)
        rho = transport.solve_continuity_backward(muT, drift, noise_n, lat, n, t_idx)
        dens = transport.solve_continuity(u0, drift, noise_n, lat, t_idx)
        residuals.append(transport.duality_check(u, rho))
        masses.append(dens.mass_drift())
        ns.append(n)
    res_fit = fit_loglog([1.0 / n for n in ns], np.maximum(residuals, 1e-16))
    mass_fit = fit_loglog([1.0 / n for n in ns], np.maximum(masses, 1e-16))
    artifacts = {"refinement.csv": _csv({
        "n": ns, "duality_residual": residuals, "mass_drift": masses,
    })}
    headline = {
        "duality_order": res_fit.slope, "mass_order": mass_fit.slope,
        "finest_mass_drift": float(masses[-1]),
        "finest_residual": float(residuals[-1]),
        "criterion": "14",
    }
    return artifacts, headline


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

def _ps(**kw):
    return kw


EXPERIMENTS = {
    "lnd-constant": {
        "fn": _exp_lnd_constant,
        "claim": "conditional variance ratio constant over interior pairs",
        "criterion": "1",
        "params": _ps(n_steps=(int, 512), hurst_list=(list, [0.25, 0.5, 0.75])),
        "plot": "levels",
    },
    "fbm-covariance": {
        "fn": _exp_fbm_covariance,
        "claim": "sampled grid law matches the closed-form covariance",
        "criterion": "2",
        "params": _ps(n_steps=(int, 64), hurst=(float, 0.3), n_paths=(int, 20000)),
        "plot": "levels",
    },
    "sewing-convergence": {
        "fn": _exp_sewing_convergence,
        "claim": "dyadic Riemann sums converge geometrically to the Young integral",
        "criterion": "3",
        "params": _ps(max_level=(int, 16)),
        "plot": "levels",
    },
    "p-variation-oracle": {
        "fn": _exp_p_variation_oracle,
        "claim": "dynamic program equals exhaustive partition enumeration",
        "criterion": "4",
        "params": _ps(n_cases=(int, 100), p=(float, 1.5)),
        "plot": "levels",
    },
    "affine-young-bound": {
        "fn": _exp_affine_young_bound,
        "claim": "log sup|x| grows at most linearly in the p-variation power of A",
        "criterion": "5",
        "params": _ps(n_steps=(int, 512), n_cases=(int, 100), p=(float, 1.8)),
        "plot": "scaling",
    },
    "conditional-regularity": {
        "fn": _exp_conditional_regularity,
        "claim": "conditional prediction error scales with exponent 1/q' + alpha H",
        "criterion": "6",
        "params": _ps(hurst=(float, 1.0 / 3.0), q=(float, 2.0), alpha=(float, 0.5),
                      n_steps=(int, 512), n_pasts=(int, 64), n_branches=(int, 256),
                      m=(float, 1.0)),
        "plot": "scaling",
    },
    "stability-rate": {
        "fn": _exp_stability_rate,
        "claim": "solution distance is Lipschitz in initial condition and drift",
        "criterion": "7",
        "params": _ps(hurst=(float, 1.0 / 3.0), n_steps=(int, 512),
                      n_replicates=(int, 200)),
        "plot": "scaling",
    },
    "mollified-cauchy": {
        "fn": _exp_mollified_cauchy,
        "claim": "mollified solutions form a Cauchy family under shared noise",
        "criterion": "8",
        "params": _ps(hurst=(float, 0.3), q=(float, 2.0), alpha=(float, -0.1),
                      n_steps=(int, 1024), n_replicates=(int, 200),
                      n_levels=(int, 5), tau0=(float, 0.25), tau_ratio=(float, 4.0),
                      slack=(float, 0.1)),
        "plot": "levels",
    },
    "semiflow-jacobian": {
        "fn": _exp_semiflow_jacobian,
        "claim": "flow composition, variational Jacobian and its inverse are consistent",
        "criterion": "9",
        "params": _ps(hurst=(float, 0.5), n_steps=(int, 2048)),
        "plot": "levels",
    },
    "malliavin-direction": {
        "fn": _exp_malliavin_direction,
        "claim": "directional noise derivative solves the affine variational equation",
        "criterion": "10",
        "params": _ps(hurst=(float, 0.5), n_steps=(int, 1024)),
        "plot": "levels",
    },
    "rho-irregularity": {
        "fn": _exp_rho_irregularity,
        "claim": "perturbed paths are rho-irregular up to 1/(2H)",
        "criterion": "11",
        "params": _ps(n_steps=(int, 4096), n_paths=(int, 200),
                      hurst_list=(list, [0.35, 0.5, 0.75])),
        "plot": "scaling",
    },
    "counterexample-branching": {
        "fn": _exp_counterexample_branching,
        "claim": "supercritical drift branches; subcritical control coalesces",
        "criterion": "12",
        "params": _ps(hurst=(float, 0.8), q_tilde=(float, 4.0), alpha=(float, 0.05),
                      control_hurst=(float, 0.5), control_alpha=(float, 0.5),
                      n_steps=(int, 1024), n_replicates=(int, 400)),
        "plot": "fractions",
    },
    "mkv-contraction": {
        "fn": _exp_mkv_contraction,
        "claim": "the law-iteration map contracts in the weighted metric",
        "criterion": "13",
        "params": _ps(hurst=(float, 0.5), n_steps=(int, 256), iterations=(int, 6),
                      n_particles=(int, 512)),
        "plot": "levels",
    },
    "transport-duality": {
        "fn": _exp_transport_duality,
        "claim": "transport/continuity duality pairing is conserved under refinement",
        "criterion": "14",
        "params": _ps(hurst=(float, 0.5), n_grid_list=(list, [128, 256, 512, 1024])),
        "plot": "levels",
    },
}


def list_experiments() -> list[dict]:
    """Catalog of experiments with required parameters and targeted claims."""
    out = []
    for name in sorted(EXPERIMENTS):
        spec = EXPERIMENTS[name]
        out.append({
            "name": name,
            "claim": spec["claim"],
            "criterion": spec["criterion"],
            "params": {k: {"type": t.__name__, "default": d}
                       for k, (t, d) in spec["params"].items()},
        })
    return out


def run_experiment_body(name: str, params: dict):
    spec = EXPERIMENTS[name]
    return spec["fn"](params)
