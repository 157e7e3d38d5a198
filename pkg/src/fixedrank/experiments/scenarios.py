"""Desk-scale experiment scenarios.

Each scenario builds seeded instances, runs the configured solvers,
aggregates fitted rates / iteration counts / wall times, evaluates its
pass-fail checks, and returns a ScenarioResult whose tables and traces the
CLI writes out.  Aggregates are always recomputable from the emitted
traces.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import analysis, linalg, oracle
from ..errors import InvalidInputError
from ..manifold import FixedRankPoint
from ..operators import (
    ProblemInstance,
    build_theta,
    generate_instance,
    random_init,
    spectral_init,
)
from ..solvers import IterationTrace, SolverConfig, fitted_rate, run
from .runio import ScenarioConfig, ScenarioResult, write_csv, write_gnuplot

DEFAULT_COMPARE_ALGORITHMS = [
    {"label": "iht_opt", "algorithm": "iht", "stepsize": "constant", "mu": "step_opt"},
    {"label": "niht", "algorithm": "iht", "stepsize": "niht_u"},
    {"label": "grad", "algorithm": "grad"},
    {"label": "nag_lazy2", "algorithm": "nag", "momentum": "lazy", "lazy_d": 2},
    {"label": "rgrad_proj", "algorithm": "rgrad", "retraction": "projective"},
    {"label": "rgrad_orth", "algorithm": "rgrad", "retraction": "orthographic"},
    {"label": "rnag_lazy2", "algorithm": "rnag", "momentum": "lazy", "lazy_d": 2},
    {"label": "rnag_restart", "algorithm": "rnag_restart", "momentum": "restart"},
]


def make_instance(cfg: ScenarioConfig, seed: int) -> ProblemInstance:
    return generate_instance(cfg.kind, cfg.n1, cfg.n2, cfg.r, cfg.sampling, seed)


def spectral_report_for(inst: ProblemInstance) -> analysis.SpectralReport:
    return analysis.projected_theta_spectrum(build_theta(inst.operator), inst.ground_truth)


def basin_start(inst: ProblemInstance, scale: float, seed: int) -> np.ndarray:
    """Ground truth plus a random perturbation of size scale * sigma_r."""
    rng = np.random.default_rng(seed + 777)
    noise = rng.standard_normal(inst.shape)
    noise *= scale * inst.sigma_min_truth / np.linalg.norm(noise)
    return inst.truth_dense + noise


def _pool_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _median(values) -> float:
    values = [v for v in values if np.isfinite(v)]
    return float(np.median(values)) if values else float("nan")


def _wall_seconds(trace: IterationTrace) -> float:
    return trace.records[-1].wall_time_ns / 1e9 if trace.records else float("nan")


# ---------------------------------------------------------------------------
# quadratic driver


def exact_line_search_quadratic(
    q: np.ndarray, x0: np.ndarray, max_iters: int = 200, floor: float = 1e-13
) -> tuple[np.ndarray, np.ndarray]:
    """Steepest descent with exact line search on 0.5 x'Qx (minimizer at 0).

    Returns (residual norms including the start, stepsizes).
    """
    q = np.asarray(q, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    resids = [float(np.linalg.norm(x))]
    mus: list[float] = []
    for _ in range(max_iters):
        g = q @ x
        gn2 = float(g @ g)
        if gn2 == 0.0:
            break
        mu = gn2 / float(g @ (q @ g))
        x = x - mu * g
        mus.append(mu)
        resids.append(float(np.linalg.norm(x)))
        if resids[-1] <= floor * max(resids[0], 1e-300):
            break
    return np.array(resids), np.array(mus)


def two_step_rate(resids: np.ndarray, floor_ratio: float = 1e-12) -> float:
    """Median two-step contraction sqrt(r[k+2] / r[k]) above the noise floor."""
    if len(resids) < 2 or resids[0] == 0.0:
        return 0.0
    if resids[1] <= floor_ratio * resids[0]:
        return 0.0  # converged in one step
    vals = [
        np.sqrt(resids[k + 2] / resids[k])
        for k in range(len(resids) - 2)
        if resids[k] > floor_ratio * resids[0] and resids[k + 2] > 0.0
    ]
    return float(np.median(vals)) if vals else 0.0


def leading_eigvector_angle(q: np.ndarray) -> float:
    """Angle in [0, pi) of the leading eigenvector of a symmetric 2x2 matrix."""
    _, vecs = linalg.sym_eig(q)
    v = vecs[:, 0]
    return float(np.arctan2(v[1], v[0]) % np.pi)


def scenario_quadratic(cfg: ScenarioConfig) -> ScenarioResult:
    params = cfg.params
    q = np.asarray(params.get("q", [[10.0, 1.0], [1.0, 1.0]]), dtype=float)
    points = int(params.get("theta_points", 32))
    max_iters = int(params.get("max_iters", 400))
    if points < 8:
        raise InvalidInputError("theta grid needs at least 8 points")
    lam = np.linalg.eigvalsh(q)
    lam_min, lam_max = float(lam[0]), float(lam[-1])
    alpha = leading_eigvector_angle(q)
    result = ScenarioResult("quadratic")
    worst = 0.0
    for theta in np.linspace(0.0, 2.0 * np.pi, points, endpoint=False):
        g0 = np.array([np.cos(alpha + theta), np.sin(alpha + theta)])
        x0 = np.linalg.solve(q, g0)
        resids, _ = exact_line_search_quadratic(q, x0, max_iters=max_iters)
        fitted = two_step_rate(resids)
        mu_tilde = 1.0 / float(g0 @ (q @ g0))
        predicted = analysis.quadratic_line_search_rate((lam_max, lam_min), mu_tilde)
        worst = max(worst, abs(fitted - predicted))
        result.summary_rows.append(
            {
                "theta": float(theta),
                "fitted": fitted,
                "predicted": predicted,
                "steps": len(resids) - 1,
                "one_step": resids[1] <= 1e-12 * resids[0] if len(resids) > 1 else False,
            }
        )
    result.extras["max_abs_error"] = worst
    result.check(
        "rate_formula_match", worst <= 1e-3, f"max |fitted - predicted| = {worst:.2e}"
    )
    row0 = result.summary_rows[0]
    result.check(
        "eigendirection_one_step",
        bool(row0["one_step"]),
        f"theta=0 residual drop in one step (steps={row0['steps']})",
    )
    kappa = lam_max / lam_min
    bound = (kappa - 1.0) / (kappa + 1.0)
    idx_quarter = points // 8  # theta = pi/4 on an evenly spaced grid
    row_q = result.summary_rows[idx_quarter]
    diff = abs(row_q["fitted"] - bound)
    result.check(
        "equal_mix_hits_worst_case",
        abs(row_q["theta"] - np.pi / 4) < 1e-12 and diff <= 1e-3,
        f"theta=pi/4 fitted {row_q['fitted']:.6f} vs (k-1)/(k+1) {bound:.6f}",
    )
    return result


# ---------------------------------------------------------------------------
# algorithm comparison


def _solver_config_from_spec(
    spec: dict, report: analysis.SpectralReport | None, max_iters: int, stop_tol: float
) -> SolverConfig:
    spec = dict(spec)
    spec.pop("label", None)
    mu = spec.pop("mu", None)
    if isinstance(mu, str):
        if report is None:
            raise InvalidInputError(
                f"stepsize {mu!r} needs explicit spectrum analysis, "
                "but the instance exceeds the assembly guard"
            )
        mu = getattr(report, mu)
    return SolverConfig(
        max_iters=max_iters, stop_tol_resid=stop_tol, mu=mu, **spec
    )


def _late_stepsize(trace: IterationTrace) -> float:
    mus = [rec.mu for rec in trace.records if rec.mu > 0.0]
    return mus[-1] if mus else float("nan")


def _predicted_for(
    label: str, algorithm: str, report: analysis.SpectralReport | None, trace: IterationTrace
) -> float:
    if report is None:
        return float("nan")
    if algorithm == "iht":
        return report.rate_constant_opt
    if algorithm in ("grad", "rgrad"):
        mu_tilde = _late_stepsize(trace)
        if not np.isfinite(mu_tilde):
            return float("nan")
        # clamp into the admissible bracket; measured values sit inside it
        # up to the basin-radius perturbation
        mu_tilde = min(max(mu_tilde, 1.0 / report.lam_max), 1.0 / report.lam_min)
        return analysis.rate_exact_line_search(report, mu_tilde)
    if algorithm == "rnag_restart":
        return report.accel_rate
    return float("nan")


def scenario_compare(cfg: ScenarioConfig) -> ScenarioResult:
    params = cfg.params
    specs = params.get("algorithms", DEFAULT_COMPARE_ALGORITHMS)
    max_iters = int(params.get("max_iters", 1500))
    stop_tol = float(params.get("stop_tol", 1e-8))
    start = params.get("start", "spectral")
    start_scale = float(params.get("start_scale", 0.1))
    result = ScenarioResult("compare")

    def run_seed(seed: int):
        inst = make_instance(cfg, seed)
        try:
            report = spectral_report_for(inst)
        except Exception:
            report = None
        x0 = (
            spectral_init(inst)
            if start == "spectral"
            else basin_start(inst, start_scale, seed)
        )
        out = []
        for spec in specs:
            label = spec.get("label", spec["algorithm"])
            scfg = _solver_config_from_spec(spec, report, max_iters, stop_tol)
            trace = run(inst, scfg, x0)
            fit = fitted_rate(
                trace, skip_restarts=spec["algorithm"] == "rnag_restart"
            )
            out.append(
                {
                    "label": label,
                    "algorithm": spec["algorithm"],
                    "seed": seed,
                    "status": trace.status,
                    "iterations": trace.iterations,
                    "fitted": fit,
                    "predicted": _predicted_for(label, spec["algorithm"], report, trace),
                    "wall_s": _wall_seconds(trace),
                }
            )
            result.traces[f"{label}_seed{seed}"] = trace
        return out

    per_seed = _pool_map(run_seed, cfg.seeds, cfg.threads)
    rows = [row for seed_rows in per_seed for row in seed_rows]
    labels = [spec.get("label", spec["algorithm"]) for spec in specs]
    for label in labels:
        sub = [r for r in rows if r["label"] == label]
        result.summary_rows.append(
            {
                "label": label,
                "median_iterations": _median([r["iterations"] for r in sub]),
                "median_fitted": _median([r["fitted"] for r in sub]),
                "median_predicted": _median([r["predicted"] for r in sub]),
                "median_wall_s": _median([r["wall_s"] for r in sub]),
                "converged": sum(r["status"] == "converged" for r in sub),
                "runs": len(sub),
            }
        )
    result.extras["per_run"] = rows

    summary = {row["label"]: row for row in result.summary_rows}
    for label in ("iht_opt", "grad", "rgrad_proj", "rgrad_orth", "rnag_restart"):
        if label not in summary:
            continue
        row = summary[label]
        diff = abs(row["median_fitted"] - row["median_predicted"])
        result.check(
            f"rate_prediction_{label}",
            np.isfinite(diff) and diff <= 5e-2,
            f"median fitted {row['median_fitted']:.4f} vs predicted "
            f"{row['median_predicted']:.4f}",
        )
    if "rnag_restart" in summary and "rnag_lazy2" in summary:
        result.check(
            "restart_fewer_iterations_than_lazy",
            summary["rnag_restart"]["median_iterations"]
            <= summary["rnag_lazy2"]["median_iterations"],
            f"restart {summary['rnag_restart']['median_iterations']} vs "
            f"lazy {summary['rnag_lazy2']['median_iterations']}",
        )
    return result


# ---------------------------------------------------------------------------
# momentum oscillation study


def scenario_oscillation(cfg: ScenarioConfig) -> ScenarioResult:
    # q positions are multiples of the per-seed optimum q* = 1/kappa, so
    # aggregation goes by sweep position, not by the numeric q.
    params = cfg.params
    d_values = params.get("d_values", [2, 5, 10, 20])
    max_iters = int(params.get("max_iters", 2000))
    start_scale = float(params.get("start_scale", 0.1))
    result = ScenarioResult("oscillation")

    def run_seed(seed: int):
        inst = make_instance(cfg, seed)
        report = spectral_report_for(inst)
        q_star = 1.0 / report.kappa
        positions = [
            ("q_star/4", q_star / 4.0),
            ("q_star", q_star),
            ("4*q_star", min(4.0 * q_star, 1.0)),
            ("1", 1.0),
        ]
        x0 = basin_start(inst, start_scale, seed)
        rows = []
        base = SolverConfig(
            algorithm="rgrad", retraction="orthographic",
            max_iters=max_iters, stop_tol_resid=1e-10,
        )
        rgrad_trace = run(inst, base, x0)
        for label, q in positions:
            scfg = SolverConfig(
                algorithm="rnag", momentum="constant", momentum_q=float(q),
                max_iters=max_iters, stop_tol_resid=1e-10,
            )
            trace = run(inst, scfg, x0)
            rows.append(
                {
                    "sweep": "q", "position": label, "value": float(q), "seed": seed,
                    "fitted": fitted_rate(trace),
                    "predicted_opt": report.accel_rate,
                    "iterations": trace.iterations,
                }
            )
            if label == "1":
                rows[-1]["degenerate_gap"] = _trace_gap(trace, rgrad_trace)
        for d in d_values:
            scfg = SolverConfig(
                algorithm="rnag", momentum="lazy", lazy_d=int(d),
                max_iters=max_iters, stop_tol_resid=1e-10,
            )
            trace = run(inst, scfg, x0)
            rows.append(
                {
                    "sweep": "d", "position": f"d={int(d)}", "value": float(d),
                    "seed": seed,
                    "fitted": fitted_rate(trace),
                    "predicted_opt": report.accel_rate,
                    "iterations": trace.iterations,
                }
            )
        return rows

    per_seed = _pool_map(run_seed, cfg.seeds, cfg.threads)
    rows = [row for seed_rows in per_seed for row in seed_rows]
    result.extras["per_run"] = rows

    positions = []
    for row in rows:
        if row["position"] not in positions:
            positions.append(row["position"])
    med = {
        pos: _median([r["fitted"] for r in rows if r["position"] == pos])
        for pos in positions
    }
    for pos in positions:
        sweep = "q" if not pos.startswith("d=") else "d"
        result.summary_rows.append(
            {"sweep": sweep, "position": pos, "median_fitted": med[pos]}
        )

    others = [med[p] for p in positions if p in ("q_star/4", "4*q_star", "1")]
    result.check(
        "optimal_q_dominates_sweep",
        all(med["q_star"] <= fit + 1e-9 for fit in others),
        f"fitted at q*: {med['q_star']:.4f}, others: {[round(f, 4) for f in others]}",
    )
    opt_pred = _median(
        [r["predicted_opt"] for r in rows if r["position"] == "q_star"]
    )
    result.check(
        "optimal_q_matches_predicted_rate",
        abs(med["q_star"] - opt_pred) <= 5e-2,
        f"fitted {med['q_star']:.4f} vs predicted {opt_pred:.4f}",
    )
    gaps = [r.get("degenerate_gap") for r in rows if "degenerate_gap" in r]
    result.check(
        "unit_q_degenerates_to_plain_descent",
        bool(gaps) and max(gaps) <= 1e-10,
        f"max trace gap {max(gaps):.2e}" if gaps else "missing q=1 runs",
    )
    d_labels = [f"d={int(d)}" for d in sorted(d_values)]
    result.check(
        "largest_d_dominates_smallest",
        med[d_labels[-1]] <= med[d_labels[0]] + 1e-9,
        f"fitted {d_labels[-1]}: {med[d_labels[-1]]:.4f} vs "
        f"{d_labels[0]}: {med[d_labels[0]]:.4f}",
    )
    return result


def _trace_gap(a: IterationTrace, b: IterationTrace) -> float:
    n = min(len(a.records), len(b.records))
    if n == 0:
        return float("inf")
    ra, rb = a.residuals[:n], b.residuals[:n]
    return float(np.max(np.abs(ra - rb) / (1.0 + np.minimum(ra, rb))))


# ---------------------------------------------------------------------------
# spectral-radius validation


def scenario_radius(cfg: ScenarioConfig) -> ScenarioResult:
    params = cfg.params
    mu_points = int(params.get("mu_points", 30))
    grid_points = int(params.get("grid_points", 20))
    stride = int(params.get("full_oracle_stride", 5))
    result = ScenarioResult("radius")
    inst = make_instance(cfg, cfg.seeds[0])
    theta = build_theta(inst.operator)
    report = spectral_report_for(inst)
    xstar = inst.ground_truth

    mu_max = float(params.get("mu_max", report.step_limit))
    mus = np.linspace(mu_max / mu_points, mu_max, mu_points)
    gradient_rows = []
    worst_h = 0.0
    for mu in mus:
        analytic = analysis.rate_constant_step(report, float(mu))
        h = analysis.assemble_gradient_matrix(theta, xstar, float(mu))
        observed = float(np.abs(oracle.dense_eig_general(h)[0]))
        worst_h = max(worst_h, abs(analytic - observed))
        gradient_rows.append(
            {"mu": float(mu), "analytic": analytic, "oracle": observed}
        )
    result.extras["gradient_rows"] = gradient_rows
    result.extras["max_gradient_gap"] = worst_h
    result.check(
        "gradient_radius_matches_oracle",
        worst_h <= 1e-4,
        f"max |analytic - oracle| = {worst_h:.2e} over {mu_points} stepsizes",
    )
    boundary = gradient_rows[-1]
    result.check(
        "radius_is_one_at_limit_stepsize",
        abs(boundary["oracle"] - 1.0) <= 1e-6 and abs(mus[-1] - report.step_limit) < 1e-12,
        f"oracle radius at limit stepsize: {boundary['oracle']:.8f}",
    )

    eta_max = float(params.get("eta_max", 1.0))
    grid_mus = np.linspace(mu_max / grid_points, mu_max, grid_points)
    grid_etas = np.linspace(0.0, eta_max, grid_points)
    # one dense eigensolve of the one-step matrix per stepsize, reused by
    # the exhaustive per-eigenvalue oracle across the momentum axis
    spectra = {
        float(mu): oracle.dense_eig_general(
            analysis.assemble_gradient_matrix(theta, xstar, float(mu))
        )
        for mu in grid_mus
    }
    momentum_rows = []
    worst_spectrum = 0.0
    best = (np.inf, None, None)
    for mu in grid_mus:
        for eta in grid_etas:
            point = analysis.rate_momentum(report, float(mu), float(eta))
            exhaustive = _momentum_radius_from_values(spectra[float(mu)], float(eta))
            worst_spectrum = max(worst_spectrum, abs(point.rho - exhaustive))
            if point.rho < best[0]:
                best = (point.rho, float(mu), float(eta))
            momentum_rows.append(
                {
                    "mu": float(mu), "eta": float(eta),
                    "analytic": point.rho, "spectrum_oracle": exhaustive,
                    "regime": point.regime,
                }
            )
    result.extras["momentum_rows"] = momentum_rows
    result.extras["max_momentum_gap"] = worst_spectrum
    result.check(
        "momentum_radius_matches_spectrum_oracle",
        worst_spectrum <= 1e-4,
        f"max gap {worst_spectrum:.2e} over the {grid_points}x{grid_points} grid",
    )

    subset_idx = sorted(set(range(0, grid_points, stride)) | {grid_points - 1})
    worst_dense = 0.0
    for i in subset_idx:
        for j in subset_idx:
            mu, eta = float(grid_mus[i]), float(grid_etas[j])
            t_mat = analysis.assemble_momentum_matrix(theta, xstar, mu, eta)
            dense = float(np.abs(oracle.dense_eig_general(t_mat)[0]))
            analytic = analysis.rate_momentum(report, mu, eta).rho
            worst_dense = max(worst_dense, abs(analytic - dense))
    result.extras["max_dense_gap"] = worst_dense
    result.check(
        "momentum_radius_matches_dense_oracle",
        worst_dense <= 1e-4,
        f"max gap {worst_dense:.2e} over {len(subset_idx) ** 2} assembled matrices",
    )

    d_mu = grid_mus[1] - grid_mus[0]
    d_eta = grid_etas[1] - grid_etas[0]
    result.check(
        "grid_minimum_at_optimal_pair",
        abs(best[1] - report.accel_step) <= d_mu + 1e-12
        and abs(best[2] - report.accel_momentum) <= d_eta + 1e-12,
        f"grid argmin ({best[1]:.4f}, {best[2]:.4f}) vs closed form "
        f"({report.accel_step:.4f}, {report.accel_momentum:.4f})",
    )
    opt_point = analysis.rate_momentum(report, report.accel_step, report.accel_momentum)
    result.check(
        "optimal_pair_rate_closed_form",
        abs(opt_point.rho - report.accel_rate) <= 1e-10,
        f"root modulus {opt_point.rho!r} vs formula {report.accel_rate!r}",
    )
    t_opt = analysis.assemble_momentum_matrix(
        theta, xstar, report.accel_step, report.accel_momentum
    )
    dense_opt = float(np.abs(oracle.dense_eig_general(t_opt)[0]))
    result.check(
        "optimal_pair_rate_dense_oracle",
        abs(dense_opt - report.accel_rate) <= 1e-4,
        f"dense radius {dense_opt:.8f} vs formula {report.accel_rate:.8f}",
    )
    result.summary_rows = gradient_rows
    return result


def _momentum_radius_from_values(values: np.ndarray, eta: float) -> float:
    radius = 0.0
    for lam in values:
        b = (1.0 + eta) * lam
        sq = np.sqrt(b * b - 4.0 * eta * lam + 0j)
        radius = max(radius, abs((b + sq) / 2.0), abs((b - sq) / 2.0))
    return float(radius)


# ---------------------------------------------------------------------------
# (mu, eta) landscape export


def scenario_landscape(cfg: ScenarioConfig) -> ScenarioResult:
    params = cfg.params
    mu_points = int(params.get("mu_points", 50))
    eta_points = int(params.get("eta_points", 50))
    result = ScenarioResult("landscape")
    inst = make_instance(cfg, cfg.seeds[0])
    report = spectral_report_for(inst)
    mu_max = float(params.get("mu_max", report.step_limit))
    eta_max = float(params.get("eta_max", 1.0))
    mus = np.linspace(mu_max / mu_points, mu_max, mu_points)
    etas = np.linspace(0.0, eta_max, eta_points)
    points = analysis.landscape_sweep(report, mus, etas)
    result.summary_rows = [
        {"mu": p.mu, "eta": p.eta, "rho": p.rho, "regime": p.regime} for p in points
    ]
    crossing = [
        {"mu": float(m), "eta": analysis.momentum_boundary_crossing(report, float(m))}
        for m in np.linspace(report.accel_step, report.step_opt, 25)
    ]
    result.extras["boundary_crossing"] = crossing
    best = min(points, key=lambda p: p.rho)
    result.check(
        "landscape_minimum_not_below_formula",
        best.rho >= report.accel_rate - 1e-10,
        f"grid minimum {best.rho:.6f} vs formula optimum {report.accel_rate:.6f}",
    )
    return result


# ---------------------------------------------------------------------------
# initialization study


def scenario_init_study(cfg: ScenarioConfig) -> ScenarioResult:
    params = cfg.params
    sigmas = [float(s) for s in params.get("sigmas", [0.0, 1.0, 4.0])]
    max_iters = int(params.get("max_iters", 3000))
    if not sigmas:
        raise InvalidInputError("sigma list must be nonempty")
    result = ScenarioResult("init_study")

    def run_seed(seed: int):
        inst = make_instance(cfg, seed)
        basin_radius = 0.5 * inst.sigma_min_truth
        scfg = SolverConfig(
            algorithm="rgrad", retraction="orthographic",
            max_iters=max_iters, stop_tol_resid=1e-9,
        )
        rows = []
        starts = [("spectral", None, spectral_init(inst))] + [
            (f"random_{sigma:g}", sigma, random_init(inst, sigma, seed=seed))
            for sigma in sigmas
        ]
        for label, sigma, x0 in starts:
            trace = run(inst, scfg, x0)
            res = trace.residuals
            inside = np.nonzero(res <= basin_radius)[0]
            rows.append(
                {
                    "init": label,
                    "sigma": float("nan") if sigma is None else sigma,
                    "seed": seed,
                    "status": trace.status,
                    "iters_to_basin": int(inside[0]) if inside.size else -1,
                    "post_basin_rate": fitted_rate(trace, max_residual=basin_radius),
                    "iterations": trace.iterations,
                }
            )
        return rows

    per_seed = _pool_map(run_seed, cfg.seeds, cfg.threads)
    rows = [row for seed_rows in per_seed for row in seed_rows]
    result.extras["per_run"] = rows
    labels = []
    for row in rows:
        if row["init"] not in labels:
            labels.append(row["init"])
    med_rate = {}
    med_basin = {}
    for label in labels:
        sub = [r for r in rows if r["init"] == label and r["iters_to_basin"] >= 0]
        med_rate[label] = _median([r["post_basin_rate"] for r in sub])
        med_basin[label] = _median([r["iters_to_basin"] for r in sub])
        result.summary_rows.append(
            {
                "init": label,
                "median_iters_to_basin": med_basin[label],
                "median_post_basin_rate": med_rate[label],
                "converged": sum(r["status"] == "converged" for r in sub),
                "runs": len([r for r in rows if r["init"] == label]),
            }
        )
    finite = [v for v in med_rate.values() if np.isfinite(v)]
    spread = max(finite) - min(finite) if finite else float("inf")
    result.check(
        "post_basin_rate_init_independent",
        spread <= 5e-2,
        f"median post-basin rate spread {spread:.4f} across {len(finite)} inits",
    )
    if cfg.kind == "mc":
        ordered = ["spectral"] + [f"random_{s:g}" for s in sorted(sigmas)]
        series = [med_basin[l] for l in ordered if l in med_basin and np.isfinite(med_basin[l])]
        monotone = all(series[i] <= series[i + 1] + 1e-9 for i in range(len(series) - 1))
        result.check(
            "basin_entry_nondecreasing_in_noise",
            monotone,
            f"median iterations to basin: {series}",
        )
    else:
        small = [med_basin[f"random_{s:g}"] for s in sorted(sigmas) if s <= 1.0]
        small = [v for v in small if np.isfinite(v) and v > 0]
        ok = bool(small) and max(small) < 2.0 * min(small)
        result.check(
            "basin_entry_insensitive_to_noise",
            ok,
            f"iterations-to-basin across sigma <= 1: {small}",
        )
    return result


# ---------------------------------------------------------------------------
# runtime / iteration-count grid


def scenario_runtime(cfg: ScenarioConfig) -> ScenarioResult:
    params = cfg.params
    cells = params.get(
        "cells",
        [
            {"n": 100, "r": 5, "p": 0.3},
            {"n": 100, "r": 5, "p": 0.5},
            {"n": 200, "r": 10, "p": 0.3},
            {"n": 200, "r": 10, "p": 0.5},
        ],
    )
    max_iters = int(params.get("max_iters", 3000))
    stop_tol = float(params.get("stop_tol", 1e-8))
    seeds = cfg.seeds if len(cfg.seeds) >= 10 else list(range(10))
    result = ScenarioResult("runtime")
    result.extras["seeds"] = seeds

    stats: dict[tuple, dict[str, list]] = {}
    for cell in cells:
        n, r, p = int(cell["n"]), int(cell["r"]), float(cell["p"])
        sampling = p if cfg.kind == "mc" else p * n * r
        for algo in ("rgrad", "rnag_restart"):
            iters, times, statuses = [], [], []
            for seed in seeds:
                inst = generate_instance(cfg.kind, n, n, r, sampling, seed)
                scfg = SolverConfig(
                    algorithm=algo,
                    retraction="orthographic",
                    momentum="restart" if algo == "rnag_restart" else "lazy",
                    max_iters=max_iters,
                    stop_tol_resid=stop_tol,
                )
                trace = run(inst, scfg, spectral_init(inst))
                iters.append(trace.iterations)
                times.append(_wall_seconds(trace))
                statuses.append(trace.status)
            stats[(n, r, p, algo)] = {
                "iters": iters, "times": times, "statuses": statuses
            }
            result.summary_rows.append(
                {
                    "n": n, "r": r, "p": p, "algorithm": algo,
                    "mean_iterations": float(np.mean(iters)),
                    "mean_wall_s": float(np.mean(times)),
                    "converged": statuses.count("converged"),
                    "runs": len(seeds),
                }
            )

    ordering_ok, details = True, []
    for cell in cells:
        key = (int(cell["n"]), int(cell["r"]), float(cell["p"]))
        fast = np.mean(stats[key + ("rnag_restart",)]["iters"])
        slow = np.mean(stats[key + ("rgrad",)]["iters"])
        ordering_ok &= fast < slow
        details.append(f"{key}: {fast:.1f} < {slow:.1f}")
    result.check(
        "restart_fewer_iterations_every_cell", ordering_ok, "; ".join(details)
    )

    trend_ok, trend_details = True, []
    groups: dict[tuple, list] = {}
    for cell in cells:
        groups.setdefault((int(cell["n"]), int(cell["r"])), []).append(float(cell["p"]))
    for (n, r), ps in groups.items():
        ps = sorted(set(ps))
        for lo, hi in zip(ps, ps[1:]):
            for algo in ("rgrad", "rnag_restart"):
                a = np.mean(stats[(n, r, lo, algo)]["iters"])
                b = np.mean(stats[(n, r, hi, algo)]["iters"])
                trend_ok &= b <= a
                trend_details.append(f"{algo} n={n} p{lo}->{hi}: {a:.1f}->{b:.1f}")
    result.check(
        "more_samples_converge_faster", trend_ok, "; ".join(trend_details)
    )

    size_ok, size_details = True, []
    by_shape = {(int(c["n"]), int(c["r"]), float(c["p"])) for c in cells}
    for n, r, p in sorted(by_shape):
        doubled = (2 * n, 2 * r, p)
        if doubled not in by_shape:
            continue
        for algo in ("rgrad", "rnag_restart"):
            a = np.mean(stats[(n, r, p, algo)]["iters"])
            b = np.mean(stats[doubled + (algo,)]["iters"])
            size_ok &= abs(b - a) <= 0.25 * a
            size_details.append(f"{algo} p={p}: n={n}:{a:.1f} vs n={2*n}:{b:.1f}")
    result.check(
        "iteration_count_stable_under_size_doubling", size_ok, "; ".join(size_details)
    )
    return result


# ---------------------------------------------------------------------------
# phase transition


def scenario_phase(cfg: ScenarioConfig) -> ScenarioResult:
    params = cfg.params
    ranks = [int(r) for r in params.get("ranks", list(range(1, 9)))]
    samplings = [float(p) for p in params.get("samplings", np.linspace(0.1, 1.0, 8))]
    trials = int(params.get("trials", 20))
    max_iters = int(params.get("max_iters", 300))
    success_tol = float(params.get("success_tol", 1e-3))
    result = ScenarioResult("phase")
    base_seed = cfg.seeds[0]

    def run_cell(job):
        ri, pi = job
        r, p = ranks[ri], samplings[pi]
        counts = {"rgrad": 0, "rnag_restart": 0}
        for trial in range(trials):
            seed = base_seed + 7919 * ri + 104729 * pi + trial
            sampling = p if cfg.kind == "mc" else max(1, int(round(p * cfg.n1 * r)))
            inst = generate_instance(cfg.kind, cfg.n1, cfg.n2, r, sampling, seed)
            x0 = spectral_init(inst)
            for algo in counts:
                scfg = SolverConfig(
                    algorithm=algo,
                    retraction="orthographic",
                    momentum="restart" if algo == "rnag_restart" else "lazy",
                    max_iters=max_iters,
                    stop_tol_resid=0.1 * success_tol,
                )
                trace = run(inst, scfg, x0)
                if trace.records and trace.final_residual <= success_tol:
                    counts[algo] += 1
        return ri, pi, counts

    jobs = [(ri, pi) for ri in range(len(ranks)) for pi in range(len(samplings))]
    cells = _pool_map(run_cell, jobs, cfg.threads)
    grid = {
        algo: np.zeros((len(ranks), len(samplings)))
        for algo in ("rgrad", "rnag_restart")
    }
    for ri, pi, counts in cells:
        for algo, count in counts.items():
            grid[algo][ri, pi] = count / trials
            result.summary_rows.append(
                {
                    "r": ranks[ri],
                    "sampling": samplings[pi],
                    "algorithm": algo,
                    "success_rate": count / trials,
                }
            )
    result.extras["ranks"] = ranks
    result.extras["samplings"] = samplings
    result.extras["grid"] = {k: v for k, v in grid.items()}

    def violations(series: np.ndarray, increasing: bool) -> int:
        diffs = np.diff(series)
        return int(np.sum(diffs < -1e-12) if increasing else np.sum(diffs > 1e-12))

    mono_ok, mono_details = True, []
    for algo, g in grid.items():
        for ri, r in enumerate(ranks):
            v = violations(g[ri, :], increasing=True)
            mono_ok &= v <= 1
            if v:
                mono_details.append(f"{algo} r={r}: {v} sampling violations")
        for pi, p in enumerate(samplings):
            v = violations(g[:, pi], increasing=False)
            mono_ok &= v <= 1
            if v:
                mono_details.append(f"{algo} p={p:g}: {v} rank violations")
    result.check(
        "success_monotone_up_to_one_cell",
        mono_ok,
        "; ".join(mono_details) or "no violations",
    )

    if cfg.kind == "mc" and any(abs(p - 1.0) < 1e-12 for p in samplings):
        pi = samplings.index(1.0)
        full = all(
            grid[algo][ri, pi] == 1.0 for algo in grid for ri in range(len(ranks))
        )
        result.check(
            "full_sampling_always_recovers",
            full,
            f"success at sampling 1.0: rgrad {grid['rgrad'][:, pi]}, "
            f"restart {grid['rnag_restart'][:, pi]}",
        )

    boundary_misses = int(
        np.sum((grid["rgrad"] >= 0.5) & (grid["rnag_restart"] < 0.5))
    )
    result.check(
        "restart_region_contains_plain_descent",
        boundary_misses <= 2,
        f"{boundary_misses} cells recovered by rgrad but not rnag_restart",
    )
    return result


# ---------------------------------------------------------------------------
# writing helpers shared by the CLI


def write_scenario_outputs(result: ScenarioResult, out_dir) -> None:
    out = result.write(out_dir)
    if result.scenario == "quadratic":
        write_gnuplot(
            out / "rate_vs_angle.gp", "Exact line search on the 2-D quadratic",
            "summary.csv", "theta", "two-step rate",
            [(1, 2, "fitted"), (1, 3, "predicted")],
        )
    elif result.scenario == "radius":
        write_csv(result.extras["momentum_rows"], out / "momentum_grid.csv")
        write_gnuplot(
            out / "gradient_radius.gp", "One-step spectral radius vs stepsize",
            "summary.csv", "mu", "rho",
            [(1, 2, "analytic"), (1, 3, "oracle")],
        )
    elif result.scenario == "landscape":
        write_gnuplot(
            out / "landscape.gp", "Momentum-rate landscape",
            "summary.csv", "mu", "eta",
            [(1, 2, "grid")],
        )
    elif result.scenario == "phase":
        for algo in ("rgrad", "rnag_restart"):
            rows = [r for r in result.summary_rows if r["algorithm"] == algo]
            write_csv(
                [
                    {
                        "r": r["r"],
                        "sampling": r["sampling"],
                        "success_rate": r["success_rate"],
                    }
                    for r in rows
                ],
                out / f"phase_{algo}.csv",
            )
        write_gnuplot(
            out / "phase.gp", "Recovery success grid",
            "phase_rnag_restart.csv", "sampling", "rank",
            [(2, 1, "success")],
        )


SCENARIO_FUNCTIONS = {
    "quadratic": scenario_quadratic,
    "compare": scenario_compare,
    "oscillation": scenario_oscillation,
    "radius": scenario_radius,
    "landscape": scenario_landscape,
    "init_study": scenario_init_study,
    "runtime": scenario_runtime,
    "phase": scenario_phase,
}
