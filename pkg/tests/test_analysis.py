import numpy as np
import pytest

from fixedrank import analysis, build_theta, generate_instance, linalg, oracle
from fixedrank.analysis import SpectralReport
from fixedrank.errors import InvalidInputError
from fixedrank.manifold import FixedRankPoint
from fixedrank.operators import MaskOperator


def report_from_extremes(lam_max: float, lam_min: float) -> SpectralReport:
    """Synthetic report for formula-level tests."""
    accel_step = 4.0 / (lam_min + 3.0 * lam_max)
    root = np.sqrt(accel_step * lam_min)
    return SpectralReport(
        lam_max=lam_max,
        lam_min=lam_min,
        kappa=lam_max / lam_min,
        step_opt=2.0 / (lam_max + lam_min),
        step_limit=2.0 / lam_max,
        accel_step=accel_step,
        accel_momentum=(1.0 - root) / (1.0 + root),
        accel_rate=1.0 - root,
        theta_lam_max=lam_max,
        spectrum=np.array([lam_max, lam_min]),
        nonzero_count=2,
        shape=(2, 1),
        rank=1,
    )


@pytest.fixture(scope="module")
def mc_setup():
    inst = generate_instance("mc", 10, 10, 2, 0.7, seed=21)
    theta = build_theta(inst.operator)
    report = analysis.projected_theta_spectrum(theta, inst.ground_truth)
    return inst, theta, report


class TestProjectedSpectrum:
    def test_full_observation_is_perfectly_conditioned(self):
        inst = generate_instance("mc", 6, 6, 2, 1.0, seed=1)
        report = analysis.projected_theta_spectrum(
            build_theta(inst.operator), inst.ground_truth
        )
        assert report.lam_max == pytest.approx(1.0, abs=1e-10)
        assert report.lam_min == pytest.approx(1.0, abs=1e-10)
        assert report.kappa == pytest.approx(1.0, abs=1e-10)
        assert report.step_opt == pytest.approx(1.0, abs=1e-10)
        assert report.accel_rate == pytest.approx(0.0, abs=1e-10)

    def test_nonzero_spectrum_matches_unsymmetrized_product(self, rng):
        inst = generate_instance("mc", 4, 4, 1, 0.8, seed=3)
        theta = build_theta(inst.operator)
        report = analysis.projected_theta_spectrum(theta, inst.ground_truth)
        proj = analysis.kron_projector(inst.ground_truth)
        raw = oracle.dense_eig_general(proj @ theta)
        raw = np.real(raw[np.abs(raw) > 1e-9 * report.lam_max])
        sym = report.spectrum[report.spectrum > 1e-9 * report.lam_max]
        assert np.allclose(np.sort(raw), np.sort(sym), atol=1e-8)

    def test_mc_extreme_eigenvalue_matches_selection_matrix_form(self):
        # the top of the one-step spectrum comes from the smallest singular
        # value of the unobserved rows of the normal-space basis
        inst = generate_instance("mc", 6, 6, 1, 0.7, seed=5)
        theta = build_theta(inst.operator)
        report = analysis.projected_theta_spectrum(theta, inst.ground_truth)
        x = inst.ground_truth
        u_perp = np.linalg.qr(x.u, mode="complete")[0][:, x.rank:]
        v_perp = np.linalg.qr(x.v, mode="complete")[0][:, x.rank:]
        _, s_unobserved = oracle.selection_matrices(inst.operator.mask)
        block = s_unobserved.T @ np.kron(v_perp, u_perp)
        smin = np.linalg.svd(block, compute_uv=False)[-1]
        mu = 0.8
        h = analysis.assemble_gradient_matrix(theta, x, mu)
        lam_top = np.max(np.real(oracle.dense_eig_general(h)))
        assert lam_top == pytest.approx(1.0 - mu * smin**2, abs=1e-8)

    def test_shape_mismatch_rejected(self, mc_setup):
        inst, theta, _ = mc_setup
        with pytest.raises(InvalidInputError):
            analysis.projected_theta_spectrum(theta[:50, :50], inst.ground_truth)

    def test_report_json_round_trip_fields(self, mc_setup):
        import json

        _, _, report = mc_setup
        doc = json.loads(report.to_json())
        assert doc["lam_max"] == report.lam_max
        assert doc["predicted_rates"]["accelerated_restart"] == report.accel_rate
        assert len(doc["spectrum"]) == 100


class TestConstantStepRate:
    def test_optimal_stepsize(self, mc_setup):
        _, _, report = mc_setup
        rho = analysis.rate_constant_step(report, report.step_opt)
        assert rho == pytest.approx(report.rate_constant_opt, abs=1e-12)

    def test_limit_stepsize_is_unit_rate(self, mc_setup):
        _, _, report = mc_setup
        assert analysis.rate_constant_step(report, report.step_limit) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_unit_stepsize_mask_case(self, mc_setup):
        _, _, report = mc_setup
        rho = analysis.rate_constant_step(report, 1.0)
        assert rho == pytest.approx(1.0 - report.lam_min, abs=1e-12)


class TestExactLineSearchRate:
    def test_midpoint_recovers_constant_step_optimum(self, mc_setup):
        _, _, report = mc_setup
        rho = analysis.rate_exact_line_search(report, report.step_opt)
        assert rho == pytest.approx(report.rate_constant_opt, abs=1e-12)

    def test_bracket_endpoints_are_zero(self):
        # rounding inside the quotient leaves ~1e-16 before the square root
        report = report_from_extremes(5.0, 1.0)
        assert analysis.rate_exact_line_search(report, 1.0 / 5.0) == pytest.approx(
            0.0, abs=1e-7
        )
        assert analysis.rate_exact_line_search(report, 1.0) == pytest.approx(
            0.0, abs=1e-7
        )

    def test_outside_bracket_rejected(self):
        report = report_from_extremes(5.0, 1.0)
        with pytest.raises(InvalidInputError):
            analysis.rate_exact_line_search(report, 2.0)

    def test_always_below_worst_case(self, mc_setup):
        _, _, report = mc_setup
        for mu in np.linspace(1.0 / report.lam_max, 1.0 / report.lam_min, 50):
            assert (
                analysis.rate_exact_line_search(report, float(mu))
                <= report.rate_constant_opt + 1e-12
            )

    def test_interior_value_matches_two_step_power_iteration(self, mc_setup):
        # pair the stepsize with its alternating partner and compare the
        # formula against the measured radius of the two-step product map,
        # restricted to stepsize pairs whose extreme modes dominate the
        # interior spectrum
        inst, theta, report = mc_setup
        lam_sum = report.lam_max + report.lam_min
        checked = 0
        for mu_hat in np.linspace(1.05 / report.lam_max, report.step_opt, 8):
            mu_check = mu_hat / (mu_hat * lam_sum - 1.0)
            spectrum = report.spectrum[report.spectrum > 1e-9 * report.lam_max]
            products = np.abs(
                (1.0 - mu_hat * spectrum) * (1.0 - mu_check * spectrum)
            )
            extreme = abs(
                (1.0 - mu_hat * report.lam_max) * (1.0 - mu_check * report.lam_max)
            )
            if np.max(products) > extreme + 1e-12:
                continue  # interior eigenvalue dominates; formula not applicable
            h1 = analysis.assemble_gradient_matrix(theta, inst.ground_truth, mu_hat)
            h2 = analysis.assemble_gradient_matrix(theta, inst.ground_truth, mu_check)
            est = linalg.power_spectral_radius(
                lambda x: h2 @ (h1 @ x), h1.shape[0], iters=20000, tol=1e-12
            )
            predicted = analysis.rate_exact_line_search(report, float(mu_hat))
            assert abs(np.sqrt(est.value) - predicted) <= 1e-6
            checked += 1
        assert checked >= 3


class TestQuadraticRate:
    def test_equal_mix_is_worst_case(self):
        q = np.array([[10.0, 1.0], [1.0, 1.0]])
        lam = np.linalg.eigvalsh(q)
        kappa = lam[1] / lam[0]
        mu = 2.0 / (lam[0] + lam[1])
        rho = analysis.quadratic_line_search_rate((lam[1], lam[0]), mu)
        assert rho == pytest.approx((kappa - 1) / (kappa + 1), abs=1e-12)

    def test_eigen_direction_is_one_step(self):
        lam = (7.0, 2.0)
        assert analysis.quadratic_line_search_rate(lam, 1.0 / 7.0) == pytest.approx(0.0)

    def test_matches_simulation_at_generic_angle(self):
        from fixedrank.experiments.scenarios import (
            exact_line_search_quadratic,
            leading_eigvector_angle,
            two_step_rate,
        )

        q = np.array([[10.0, 1.0], [1.0, 1.0]])
        lam = np.linalg.eigvalsh(q)
        alpha = leading_eigvector_angle(q)
        g0 = np.array([np.cos(alpha + np.pi / 8), np.sin(alpha + np.pi / 8)])
        resids, _ = exact_line_search_quadratic(q, np.linalg.solve(q, g0))
        fitted = two_step_rate(resids)
        mu = 1.0 / float(g0 @ q @ g0)
        predicted = analysis.quadratic_line_search_rate((lam[1], lam[0]), mu)
        assert abs(fitted - predicted) <= 1e-3


class TestMomentumRate:
    def test_zero_momentum_reduces_to_constant_step(self, mc_setup):
        _, _, report = mc_setup
        for mu in np.linspace(0.2 * report.step_opt, report.step_limit, 20):
            point = analysis.rate_momentum(report, float(mu), 0.0)
            assert point.rho == pytest.approx(
                analysis.rate_constant_step(report, float(mu)), abs=1e-12
            )

    def test_optimal_pair_reaches_closed_form(self, mc_setup):
        _, _, report = mc_setup
        point = analysis.rate_momentum(report, report.accel_step, report.accel_momentum)
        assert point.rho == pytest.approx(report.accel_rate, abs=1e-10)
        assert point.regime == "critical"

    def test_kappa_ten_reference_value(self):
        report = report_from_extremes(10.0, 1.0)
        expected = 1.0 - np.sqrt(4.0 / 31.0)
        assert report.accel_rate == pytest.approx(expected, abs=1e-12)
        assert report.accel_rate == pytest.approx(0.6407, abs=1e-4)
        point = analysis.rate_momentum(report, report.accel_step, report.accel_momentum)
        assert point.rho == pytest.approx(expected, abs=1e-12)

    def test_matches_dense_matrix_radius(self, mc_setup):
        inst, theta, report = mc_setup
        rng = np.random.default_rng(2)
        for _ in range(5):
            mu = float(rng.uniform(0.3, 0.95) * report.step_limit)
            eta = float(rng.uniform(0.0, 0.9))
            t_mat = analysis.assemble_momentum_matrix(theta, inst.ground_truth, mu, eta)
            dense = float(np.abs(oracle.dense_eig_general(t_mat)[0]))
            assert abs(analysis.rate_momentum(report, mu, eta).rho - dense) <= 1e-4

    def test_divergent_region_flagged(self, mc_setup):
        _, _, report = mc_setup
        point = analysis.rate_momentum(report, 1.5 * report.step_limit, 0.9)
        assert point.regime == "divergent"
        assert point.rho > 1.0


class TestOptimalParams:
    def test_perfectly_conditioned(self):
        report = report_from_extremes(2.0, 2.0)
        mu, eta, rho = analysis.optimal_accelerated_params(report)
        assert mu == pytest.approx(0.5, abs=1e-14)
        assert eta == pytest.approx(0.0, abs=1e-14)
        assert rho == pytest.approx(0.0, abs=1e-14)

    def test_large_kappa_asymptotics(self):
        kappa = 1e4
        report = report_from_extremes(kappa, 1.0)
        approx = 1.0 - np.sqrt(4.0 / (3.0 * kappa))
        assert report.accel_rate == pytest.approx(approx, rel=1e-2)

    def test_grid_neighbors_not_better(self, mc_setup):
        _, _, report = mc_setup
        best = report.accel_rate
        for dmu in (-1e-3, 0.0, 1e-3):
            for deta in (-1e-3, 0.0, 1e-3):
                rho = analysis.rate_momentum(
                    report, report.accel_step + dmu, report.accel_momentum + deta
                ).rho
                assert rho >= best - 1e-10


class TestLazyMomentumRate:
    def test_direct_substitution(self):
        report = report_from_extremes(3.0, 1.0)
        value = analysis.lazy_momentum_average_rate(report, t0=2, tn=3, d=0)
        base = np.sqrt(1.0 - report.accel_step * report.lam_min)
        assert value == pytest.approx(0.5**0.25 * base, abs=1e-14)

    def test_long_run_limit(self):
        report = report_from_extremes(3.0, 1.0)
        base = np.sqrt(1.0 - report.accel_step * report.lam_min)
        value = analysis.lazy_momentum_average_rate(report, t0=10, tn=10**6, d=2)
        assert value == pytest.approx(base, rel=1e-4)
        assert value <= base

    def test_per_iteration_bound_holds_on_a_run(self, mc_setup):
        # the lazy-momentum contraction factor bounds the measured
        # stacked-error ratio once the momentum exceeds its critical value
        from fixedrank.solvers import SolverConfig, run

        inst, _, report = mc_setup
        rng = np.random.default_rng(4)
        noise = rng.standard_normal(inst.shape)
        noise *= 1e-3 * inst.sigma_min_truth / np.linalg.norm(noise)
        cfg = SolverConfig(
            algorithm="nag", momentum="lazy", lazy_d=2,
            max_iters=200, stop_tol_resid=1e-11,
        )
        trace = run(inst, cfg, inst.truth_dense + noise)
        res = trace.residuals
        etas = np.array([rec.eta for rec in trace.records])
        stacked = res[1:] + res[:-1]
        ratios = stacked[1:] / stacked[:-1]
        bounds = np.sqrt(etas[2:] * (1.0 - report.accel_step * report.lam_min))
        window = (etas[2:] >= report.accel_momentum) & (res[2:] > 1e-9)
        assert window.sum() > 10
        assert np.all(ratios[window] <= bounds[window] + 5e-2)

    def test_preconditions(self):
        report = report_from_extremes(3.0, 1.0)
        with pytest.raises(InvalidInputError):
            analysis.lazy_momentum_average_rate(report, t0=1, tn=5, d=2)


class TestEigenvalueRelation:
    def test_affine_spectrum_relation(self, rng):
        # mu*Theta*Pperp + P equals I - (I - mu*Theta) Pperp, so the full
        # spectra match as multisets under lam -> 1 - lam
        for _ in range(100):
            n = int(rng.integers(3, 10))
            g = rng.standard_normal((n, n))
            theta = g @ g.T / n
            k = int(rng.integers(1, n))
            basis = np.linalg.qr(rng.standard_normal((n, k)))[0]
            p = basis @ basis.T
            p_perp = np.eye(n) - p
            mu = float(rng.uniform(0.1, 2.0))
            lhs = np.linalg.eigvals(mu * theta @ p_perp + p)
            rhs = 1.0 - np.linalg.eigvals((np.eye(n) - mu * theta) @ p_perp)
            lhs = np.sort_complex(lhs)
            rhs = np.sort_complex(rhs)
            assert np.allclose(lhs, rhs, atol=1e-8)

    def test_projector_symmetrization_keeps_nonzero_spectrum(self, rng):
        for _ in range(100):
            n = int(rng.integers(3, 10))
            g = rng.standard_normal((n, n))
            theta = g @ g.T / n
            k = int(rng.integers(1, n))
            basis = np.linalg.qr(rng.standard_normal((n, k)))[0]
            p = basis @ basis.T
            direct = np.linalg.eigvals(p @ theta)
            sym = np.linalg.eigvalsh(p @ theta @ p)
            top = max(np.abs(direct).max(), 1e-30)
            direct_nz = np.sort(np.real(direct[np.abs(direct) > 1e-9 * top]))
            sym_nz = np.sort(sym[np.abs(sym) > 1e-9 * top])
            assert direct_nz.size == sym_nz.size
            assert np.allclose(direct_nz, sym_nz, atol=1e-8)


class TestGradientMatrixSpectrum:
    def test_radius_matches_formula_below_limit(self, mc_setup):
        inst, theta, report = mc_setup
        for mu in np.linspace(0.1 * report.step_limit, 0.99 * report.step_limit, 12):
            h = analysis.assemble_gradient_matrix(theta, inst.ground_truth, float(mu))
            values = oracle.dense_eig_general(h)
            rho = float(np.abs(values[0]))
            predicted = analysis.rate_constant_step(report, float(mu))
            assert abs(rho - predicted) <= 1e-8
            # no mode sits beyond the predicted radius
            assert np.all(np.abs(values) <= predicted + 1e-8)

    def test_moduli_of_projected_modes_within_bracket_before_crossover(self, mc_setup):
        # below 1/lam_max every projected mode modulus sits between the
        # extreme-mode moduli; past that stepsize interior modes cross zero
        inst, theta, report = mc_setup
        mu = 0.9 / report.lam_max
        h = analysis.assemble_gradient_matrix(theta, inst.ground_truth, mu)
        values = np.abs(oracle.dense_eig_general(h))
        nonzero = values[values > 1e-9]
        lo = min(abs(1 - mu * report.lam_max), abs(1 - mu * report.lam_min))
        hi = analysis.rate_constant_step(report, mu)
        assert np.all(nonzero >= lo - 1e-8)
        assert np.all(nonzero <= hi + 1e-8)


class TestLandscape:
    def test_shape_along_momentum_axis(self, mc_setup):
        # for stepsizes at or below the accelerated optimum the slow mode
        # rules the whole momentum axis: nonincreasing until critical, then
        # the underdamped modulus sqrt(eta (1 - mu lam_min))
        _, _, report = mc_setup
        for mu in np.linspace(0.3 * report.accel_step, report.accel_step, 8):
            mu = float(mu)
            boundary = analysis.critical_momentum(mu * report.lam_min)
            etas = np.linspace(0.0, 1.0, 50)
            rhos = np.array(
                [analysis.rate_momentum(report, mu, float(e)).rho for e in etas]
            )
            below = etas <= boundary + 1e-12
            assert np.all(np.diff(rhos[below]) <= 1e-10)
            above = etas > boundary
            if mu * report.lam_max <= 1.0:
                expected = np.sqrt(etas[above] * (1.0 - mu * report.lam_min))
                assert np.allclose(rhos[above], expected, atol=1e-10)

    def test_regimes_partition_grid(self, mc_setup):
        _, _, report = mc_setup
        points = analysis.landscape_sweep(
            report,
            np.linspace(0.1 * report.step_limit, report.step_limit, 10),
            np.linspace(0.0, 1.0, 10),
        )
        regimes = {p.regime for p in points}
        assert regimes <= {"overdamped", "critical", "underdamped", "divergent"}
        assert "overdamped" in regimes and "underdamped" in regimes

    def test_boundary_crossing_limits(self, mc_setup):
        _, _, report = mc_setup
        at_accel = analysis.momentum_boundary_crossing(report, report.accel_step)
        assert at_accel == pytest.approx(report.accel_momentum, abs=1e-9)
        at_opt = analysis.momentum_boundary_crossing(report, report.step_opt)
        assert at_opt == pytest.approx(0.0, abs=1e-9)

    def test_csv_export(self, mc_setup, tmp_path):
        _, _, report = mc_setup
        points = analysis.landscape_sweep(
            report, np.array([0.5 * report.step_opt]), np.array([0.0, 0.5])
        )
        path = tmp_path / "landscape.csv"
        analysis.landscape_to_csv(points, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "mu,eta,rho,regime"
        assert len(lines) == 3


class TestKantorovich:
    def test_inequality_randomized(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 12))
            g = rng.standard_normal((n, n))
            a = g @ g.T + 0.1 * np.eye(n)
            w = np.linalg.eigvalsh(a)
            kappa = w[-1] / w[0]
            x = rng.standard_normal(n)
            lhs = (x @ x) ** 2 / ((x @ a @ x) * (x @ np.linalg.inv(a) @ x))
            assert lhs >= 4.0 / (kappa + 2.0 + 1.0 / kappa) - 1e-10


class TestMonotoneDegradation:
    def test_rates_increase_with_kappa(self):
        kappas = np.linspace(1.5, 50.0, 30)
        accel = [report_from_extremes(k, 1.0).accel_rate for k in kappas]
        const = [report_from_extremes(k, 1.0).rate_constant_opt for k in kappas]
        assert np.all(np.diff(accel) > 0)
        assert np.all(np.diff(const) > 0)


class TestStepsizeCondition:
    def test_mask_operator_always_admissible_below_two(self, mc_setup):
        _, _, report = mc_setup
        assert report.theta_lam_max == pytest.approx(1.0, abs=1e-9)
        assert report.stepsize_condition_ok(1.9)
        assert not report.stepsize_condition_ok(2.5)

    def test_ensemble_operator_reports_violations(self):
        inst = generate_instance("ms", 8, 8, 2, 40, seed=2)
        report = analysis.projected_theta_spectrum(
            build_theta(inst.operator), inst.ground_truth
        )
        # few measurements: the unprojected spectrum spreads well beyond 1
        assert report.theta_lam_max > 1.0
        assert not report.stepsize_condition_ok(2.0 / report.theta_lam_max * 1.5)
