import numpy as np
import pytest

from glprofile.calibrate import (
    CalibrationConfig,
    CalibrationError,
    calibrate_delta,
    confidence_set,
    empirical_coverage_at,
    quantile_bootstrap_ci,
    validate_coverage,
    wilks_threshold,
)
from glprofile.core import LossModel, ProfileCurve, evaluate_profile, fit_mgle
from glprofile.optim import OptimizerConfig
from glprofile.space import InterestPartition, ParameterSpace, ProfileGrid
from glprofile.stats import RngStream


def gaussian_location_model(scale=1.0):
    """Two-dimensional location family: loss is the mean squared residual.

    The minimiser is the column-mean vector, so every optimisation involved
    in calibration has a known answer.
    """
    space = ParameterSpace(np.array([-5.0, -5.0]), np.array([5.0, 5.0]), names=("m0", "m1"))

    def loss(data, theta):
        return float(np.mean((data - theta) ** 2)) / scale

    def simulate(theta, size, stream):
        return theta + stream.generator().standard_normal((int(size), 2))

    return LossModel(
        space=space,
        loss=loss,
        simulate=simulate,
        size_of=lambda d: d.shape[0],
        name="gauss2",
        default_size=40,
        default_start=lambda d: d.mean(axis=0),
    )


class TestWilksThreshold:
    def test_reference_values(self):
        assert wilks_threshold(0.05, 1) == pytest.approx(1.9207294103543973, abs=1e-9)
        assert wilks_threshold(0.05, 2) == pytest.approx(-np.log(0.05), abs=1e-9)
        assert wilks_threshold(0.32, 1) == pytest.approx(0.4944732407390115, abs=1e-9)

    def test_decreasing_in_alpha(self):
        taus = [wilks_threshold(a, 1) for a in (0.01, 0.05, 0.2, 0.5, 0.9)]
        assert np.all(np.diff(taus) < 0)

    def test_rejects_bad_alpha(self):
        for a in (0.0, 1.0, -1.0, 2.0):
            with pytest.raises(ValueError):
                wilks_threshold(a, 1)


class TestEmpiricalCoverage:
    def test_small_delta_covers_everything(self):
        diffs = np.array([0.5, 3.0, 10.0])
        assert empirical_coverage_at(1e-9, 1.92, diffs, np.zeros(3)) == 1.0

    def test_hand_counts(self):
        prof = np.array([1.0, 2.0, 4.0])
        base = np.zeros(3)
        # delta*(1,2,4) <= 1.92: at delta=1 only the first replicate passes
        assert empirical_coverage_at(1.0, 1.92, prof, base) == pytest.approx(1.0 / 3.0)
        # at delta=0.9 the scaled drops are (0.9, 1.8, 3.6)
        assert empirical_coverage_at(0.9, 1.92, prof, base) == pytest.approx(2.0 / 3.0)

    def test_equal_drops_make_a_step_function(self):
        tau, delta0 = 1.5, 2.0
        prof = np.full(6, tau / delta0)
        base = np.zeros(6)
        for d in (0.2, 1.0, 1.999, 2.0):
            assert empirical_coverage_at(d, tau, prof, base) == 1.0
        for d in (2.0001, 3.0, 50.0):
            assert empirical_coverage_at(d, tau, prof, base) == 0.0

    def test_nonincreasing_in_delta(self):
        rng = np.random.default_rng(0)
        diffs = rng.chisquare(1, size=200) / 2
        curve = [empirical_coverage_at(d, 1.92, diffs, np.zeros(200)) for d in np.linspace(0.01, 30, 300)]
        assert np.all(np.diff(curve) <= 0)

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError):
            empirical_coverage_at(1.0, 1.0, np.ones(3), np.ones(4))


@pytest.fixture(scope="module")
def calibrated():
    model = gaussian_location_model()
    data = model.simulate(np.array([1.0, -1.0]), 40, RngStream(11))
    partition = InterestPartition((0,), (1,))
    grid = ProfileGrid.regular(-5.0, 5.0, 41)
    config = CalibrationConfig(K=40, alpha=0.2, delta_step=0.01, seed=3)
    return calibrate_delta(model, data, partition, grid, config)


@pytest.fixture(scope="module")
def report():
    model = gaussian_location_model()
    return validate_coverage(
        model,
        np.array([0.5, -0.5]),
        InterestPartition((0,), (1,)),
        delta_star=2.0 * 40,
        alphas=(0.05, 0.2, 0.5),
        B=40,
        seed=9,
    )


class TestCalibrateDelta:
    def test_coverage_curve_nonincreasing(self, calibrated):
        assert np.all(np.diff(calibrated.coverages) <= 0)

    def test_coverage_values_are_replicate_fractions(self, calibrated):
        k = calibrated.k_effective
        scaled = calibrated.coverages * k
        assert np.allclose(scaled, np.round(scaled), atol=1e-9)

    def test_achieved_coverage_matches_curve(self, calibrated):
        j = int(np.argmin(np.abs(calibrated.coverages - 0.8)))
        assert calibrated.deltas[j] == calibrated.delta_star
        assert calibrated.coverages[j] == calibrated.achieved_coverage

    def test_delta_star_matches_quantile_oracle(self, calibrated):
        """The grid search lands within one step of the closed-form answer.

        The coverage curve is a step function dropping at tau/diff_(k), so
        the calibrated delta is pinned by the empirical quantile of the
        bootstrap profile drops.
        """
        diffs = calibrated.bootstrap_profile_at_phi_hat - calibrated.bootstrap_mgle_losses
        q = np.quantile(diffs, 0.8, method="higher")
        oracle = calibrated.tau_alpha / q
        assert abs(calibrated.delta_star - oracle) <= 0.01 + 1e-12

    def test_bootstrap_profiles_dominate_mgle_losses(self, calibrated):
        gap = calibrated.bootstrap_profile_at_phi_hat - calibrated.bootstrap_mgle_losses
        assert np.all(gap >= -1e-8)

    def test_all_replicates_kept_on_easy_model(self, calibrated):
        assert calibrated.k_effective == calibrated.k_requested == 40

    def test_worker_count_does_not_change_results(self):
        model = gaussian_location_model()
        data = model.simulate(np.array([0.5, 0.5]), 30, RngStream(5))
        partition = InterestPartition((0,), (1,))
        grid = ProfileGrid.regular(-5.0, 5.0, 21)
        config = CalibrationConfig(K=12, alpha=0.2, seed=1)
        serial = calibrate_delta(model, data, partition, grid, config, n_workers=1)
        threaded = calibrate_delta(model, data, partition, grid, config, n_workers=4)
        assert serial.delta_star == threaded.delta_star
        assert np.array_equal(serial.bootstrap_mgles, threaded.bootstrap_mgles)
        assert np.array_equal(serial.coverages, threaded.coverages)

    def test_degenerate_drops_return_largest_grid_delta(self):
        """A loss that ignores the parameters keeps coverage at one forever."""
        space = ParameterSpace(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
        model = LossModel(
            space=space,
            loss=lambda data, theta: 0.0,
            simulate=lambda theta, size, stream: np.zeros(int(size)),
            size_of=lambda d: d.size,
            default_size=5,
        )
        partition = InterestPartition((0,), (1,))
        grid = ProfileGrid.regular(-1.0, 1.0, 5)
        config = CalibrationConfig(K=8, alpha=0.05, delta_step=0.01, delta_grid_size=50, seed=0)
        result = calibrate_delta(model, np.zeros(5), partition, grid, config)
        assert np.all(result.coverages == 1.0)
        assert result.delta_star == pytest.approx(0.5)

    def test_too_many_failed_replicates_raise(self):
        model = gaussian_location_model()
        stream = RngStream(2)
        data = model.simulate(np.array([0.0, 0.0]), 30, stream)
        partition = InterestPartition((0,), (1,))
        grid = ProfileGrid.regular(-5.0, 5.0, 11)
        good = OptimizerConfig()
        mgle = fit_mgle(model, data, good)
        profile = evaluate_profile(model, data, partition, grid, good, mgle=mgle)
        starved = OptimizerConfig(max_evals=4, restarts=0)
        with pytest.raises(CalibrationError):
            calibrate_delta(
                model,
                data,
                partition,
                grid,
                CalibrationConfig(K=10, alpha=0.2, seed=0),
                optimizer_config=starved,
                mgle=mgle,
                observed_profile=profile,
            )


class TestConfidenceSet:
    @staticmethod
    def curve(phi, loss, mgle_loss=0.0):
        phi = np.asarray(phi, dtype=float)
        return ProfileCurve(
            phi_grid=phi,
            profile_loss=np.asarray(loss, dtype=float),
            converged=np.ones(phi.size, dtype=bool),
            mgle_loss=mgle_loss,
        )

    def test_quadratic_interval(self):
        phi = np.linspace(-5.0, 5.0, 10001)
        cs = confidence_set(self.curve(phi, phi**2), delta_star=1.0, tau_alpha=1.92)
        root = np.sqrt(1.92)
        assert cs.interval[0] == pytest.approx(-root, abs=1e-3)
        assert cs.interval[1] == pytest.approx(root, abs=1e-3)
        assert not cs.hit_lower_bound and not cs.hit_upper_bound

    def test_piecewise_linear_crossing_is_exact(self):
        phi = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
        cs = confidence_set(self.curve(phi, np.abs(phi)), delta_star=2.0, tau_alpha=1.0)
        assert cs.interval == pytest.approx((-0.5, 0.5), abs=1e-12)
        assert list(cs.grid_members) == [2]

    def test_flat_profile_spans_grid_with_flags(self):
        phi = np.linspace(0.0, 4.0, 9)
        cs = confidence_set(self.curve(phi, np.full(9, 3.0), mgle_loss=3.0), 1.0, 1.92)
        assert len(cs.grid_members) == 9
        assert cs.interval == (0.0, 4.0)
        assert cs.hit_lower_bound and cs.hit_upper_bound

    def test_one_sided_boundary_flag(self):
        phi = np.linspace(0.0, 3.0, 31)
        cs = confidence_set(self.curve(phi, phi.copy()), delta_star=1.0, tau_alpha=1.5)
        assert cs.hit_lower_bound and not cs.hit_upper_bound
        assert cs.interval[0] == 0.0
        assert cs.interval[1] == pytest.approx(1.5, abs=1e-9)

    def test_disconnected_set_reports_argmin_component(self):
        phi = np.linspace(0.0, 10.0, 101)
        loss = np.minimum((phi - 2.0) ** 2, (phi - 8.0) ** 2 + 0.05)
        cs = confidence_set(self.curve(phi, loss), delta_star=1.0, tau_alpha=1.0)
        lo, hi = cs.interval
        assert lo == pytest.approx(1.0, abs=0.02)
        assert hi == pytest.approx(3.0, abs=0.02)
        # the far dip still contributes grid members even though the
        # reported interval is the component around the minimiser
        assert np.any(phi[cs.grid_members] > 7.0)

    def test_nesting_across_levels(self):
        phi = np.linspace(-5.0, 5.0, 401)
        curve = self.curve(phi, 0.3 * phi**2 + np.sin(phi) ** 2)
        wide = confidence_set(curve, 1.0, wilks_threshold(0.05, 1))
        narrow = confidence_set(curve, 1.0, wilks_threshold(0.32, 1))
        assert set(narrow.grid_members).issubset(set(wide.grid_members))
        assert wide.interval[0] <= narrow.interval[0]
        assert narrow.interval[1] <= wide.interval[1]

    def test_requires_mgle_loss(self):
        curve = ProfileCurve(
            phi_grid=np.array([0.0, 1.0]),
            profile_loss=np.array([0.0, 1.0]),
            converged=np.ones(2, dtype=bool),
        )
        with pytest.raises(ValueError):
            confidence_set(curve, 1.0, 1.92)

    def test_no_member_is_an_error(self):
        phi = np.linspace(0.0, 1.0, 5)
        cs_curve = self.curve(phi, np.full(5, 10.0), mgle_loss=0.0)
        with pytest.raises(ValueError):
            confidence_set(cs_curve, 1.0, 1.0)


class TestValidateCoverage:
    def test_shapes_and_bounds(self, report):
        assert report.per_replicate_flags.shape == (40, 3)
        assert report.observed.shape == (3,)
        assert np.all(report.observed >= 0) and np.all(report.observed <= 1)
        assert report.b_effective == 40

    def test_observed_equals_flag_means(self, report):
        assert np.array_equal(report.observed, report.per_replicate_flags.mean(axis=0))

    def test_coverage_decreases_with_alpha(self, report):
        assert report.observed[0] >= report.observed[1] >= report.observed[2]

    def test_near_nominal_for_exact_gaussian_scaling(self, report):
        """With loss = mean sq residual, delta = 2n makes the drop chi-square."""
        for obs, alpha in zip(report.observed, report.alphas):
            assert abs(obs - (1 - alpha)) < 0.25

    def test_flags_invariant_to_loss_rescaling(self):
        partition = InterestPartition((0,), (1,))
        truth = np.array([0.0, 1.0])
        base = validate_coverage(
            gaussian_location_model(scale=1.0), truth, partition, 8.0, (0.2,), B=15, seed=4
        )
        scaled = validate_coverage(
            gaussian_location_model(scale=5.0), truth, partition, 40.0, (0.2,), B=15, seed=4
        )
        assert np.array_equal(base.per_replicate_flags, scaled.per_replicate_flags)

    def test_requires_size(self):
        model = gaussian_location_model()
        bare = LossModel(
            space=model.space,
            loss=model.loss,
            simulate=model.simulate,
            size_of=model.size_of,
        )
        with pytest.raises(ValueError):
            validate_coverage(bare, np.zeros(2), InterestPartition((0,), (1,)), 1.0, (0.05,), B=3)

    def test_truth_outside_box_rejected(self):
        model = gaussian_location_model()
        with pytest.raises(ValueError):
            validate_coverage(model, np.array([9.0, 0.0]), InterestPartition((0,), (1,)), 1.0, (0.05,), B=3)


class TestQuantileBootstrapCi:
    def test_interpolated_quantiles(self):
        samples = np.arange(1.0, 101.0)
        lo, hi = quantile_bootstrap_ci(samples, 0.05, 0)
        assert lo == pytest.approx(3.475)
        assert hi == pytest.approx(97.525)

    def test_identical_samples_collapse(self):
        lo, hi = quantile_bootstrap_ci(np.full(17, 2.5), 0.1, 0)
        assert lo == hi == 2.5

    def test_alpha_one_gives_median(self):
        samples = np.arange(1.0, 101.0)
        lo, hi = quantile_bootstrap_ci(samples, 1.0, 0)
        assert lo == hi == pytest.approx(50.5)

    def test_component_selection(self):
        samples = np.column_stack([np.arange(10.0), np.arange(10.0) * 100])
        lo0, hi0 = quantile_bootstrap_ci(samples, 0.5, 0)
        lo1, hi1 = quantile_bootstrap_ci(samples, 0.5, 1)
        assert lo1 == pytest.approx(100 * lo0)
        assert hi1 == pytest.approx(100 * hi0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            quantile_bootstrap_ci(np.array([]), 0.05, 0)
