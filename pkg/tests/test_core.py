import numpy as np
import pytest

from glprofile.core import (
    LossModel,
    ProfileCurve,
    evaluate_profile,
    fit_mgle,
    generalised_log_likelihood,
    profile_loss_at,
    read_profile_csv,
    write_profile_csv,
)
from glprofile.optim import OptimizerConfig
from glprofile.space import InterestPartition, ParameterSpace, ProfileGrid


def quadratic_model(a=2.0, b=-0.5, c=3.0):
    """Separable bowl (t0 - a)^2 + (t1 - b)^2 + c; profile over t0 is exact."""
    space = ParameterSpace(np.array([-10.0, -10.0]), np.array([10.0, 10.0]), names=("t0", "t1"))

    def loss(dataset, theta):
        return float((theta[0] - a) ** 2 + (theta[1] - b) ** 2 + c)

    return LossModel(
        space=space,
        loss=loss,
        simulate=lambda theta, size, stream: None,
        size_of=lambda d: 0,
        name="bowl",
    )


class TestGeneralisedLogLikelihood:
    def test_zero_loss(self):
        assert generalised_log_likelihood(0.0, 2.0) == 0.0

    def test_delta_one_identity(self):
        assert generalised_log_likelihood(1.5, 1.0) == -1.5

    def test_power_identity_is_exact(self):
        # log G at delta equals delta times log G at 1, bit for bit
        for loss in (3.0, 0.017, 123.456):
            for delta in (0.5, 1.0, 2.0, 7.25):
                assert generalised_log_likelihood(loss, delta) == delta * generalised_log_likelihood(loss, 1.0)
        assert generalised_log_likelihood(3.0, 0.5) == -1.5

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            generalised_log_likelihood(float("inf"), 1.0)
        with pytest.raises(ValueError):
            generalised_log_likelihood(float("nan"), 1.0)
        with pytest.raises(ValueError):
            generalised_log_likelihood(1.0, 0.0)
        with pytest.raises(ValueError):
            generalised_log_likelihood(1.0, -2.0)


class TestProfileCurve:
    def test_log_gl_scales_losses(self):
        curve = ProfileCurve(
            phi_grid=np.array([0.0, 1.0, 2.0]),
            profile_loss=np.array([3.0, 1.0, 4.0]),
            converged=np.ones(3, dtype=bool),
        )
        assert np.array_equal(curve.log_gl(2.0), np.array([-6.0, -2.0, -8.0]))
        with pytest.raises(ValueError):
            curve.log_gl(0.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ProfileCurve(
                phi_grid=np.array([0.0, 1.0]),
                profile_loss=np.array([1.0]),
                converged=np.array([True]),
            )

    def test_csv_round_trip(self, tmp_path):
        curve = ProfileCurve(
            phi_grid=np.linspace(1.0, 2.0, 7),
            profile_loss=np.array([0.3, 0.1, 0.05, 0.2, 0.7, 1.9, np.pi]),
            converged=np.array([1, 1, 1, 1, 0, 1, 1], dtype=bool),
            mgle_loss=0.05,
        )
        path = tmp_path / "curve.csv"
        write_profile_csv(curve, path)
        back = read_profile_csv(path)
        assert np.array_equal(back.phi_grid, curve.phi_grid)
        assert np.array_equal(back.profile_loss, curve.profile_loss)
        assert np.array_equal(back.converged, curve.converged)
        # the CSV stores only the curve itself
        assert back.mgle_loss is None

    def test_read_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            read_profile_csv(path)


class TestFitMgle:
    def test_finds_separable_minimum(self):
        model = quadratic_model(a=2.0, b=-0.5, c=3.0)
        res = fit_mgle(model, dataset=None)
        assert res.converged
        assert res.point == pytest.approx([2.0, -0.5], abs=1e-5)
        assert res.value == pytest.approx(3.0, abs=1e-8)

    def test_uses_default_start_when_present(self):
        seen = []
        space = ParameterSpace(np.array([0.0]), np.array([10.0]))

        def loss(dataset, theta):
            seen.append(float(theta[0]))
            return float((theta[0] - 4.0) ** 2)

        model = LossModel(
            space=space,
            loss=loss,
            simulate=lambda theta, size, stream: None,
            size_of=lambda d: 0,
            default_start=lambda d: np.array([9.0]),
        )
        fit_mgle(model, dataset=None)
        assert seen[0] == pytest.approx(9.0)


class TestEvaluateProfile:
    def test_separable_quadratic_profile(self):
        a, b, c = 2.0, -0.5, 3.0
        model = quadratic_model(a, b, c)
        partition = InterestPartition((0,), (1,))
        grid = ProfileGrid(np.linspace(-4.0, 4.0, 33))
        curve = evaluate_profile(model, None, partition, grid)
        expected = (grid.values - a) ** 2 + c
        assert curve.profile_loss == pytest.approx(expected, abs=1e-7)
        assert curve.converged.all()
        # optimised-out nuisance sits at its own minimum everywhere
        assert curve.nuisance_argmins == pytest.approx(np.full((33, 1), b), abs=1e-4)

    def test_profile_never_beats_mgle(self):
        model = quadratic_model()
        partition = InterestPartition((0,), (1,))
        grid = ProfileGrid(np.linspace(-9.0, 9.0, 41))
        curve = evaluate_profile(model, None, partition, grid)
        assert curve.mgle_loss is not None
        assert np.all(curve.profile_loss >= curve.mgle_loss - 1e-9)

    def test_one_dimensional_model_profile_is_raw_loss(self):
        space = ParameterSpace(np.array([-2.0]), np.array([2.0]))
        model = LossModel(
            space=space,
            loss=lambda d, theta: float(np.cosh(theta[0])),
            simulate=lambda theta, size, stream: None,
            size_of=lambda d: 0,
        )
        partition = InterestPartition((0,), ())
        grid = ProfileGrid(np.linspace(-2.0, 2.0, 21))
        curve = evaluate_profile(model, None, partition, grid)
        assert np.array_equal(curve.profile_loss, np.cosh(grid.values))

    def test_single_point_evaluation_matches_curve(self):
        model = quadratic_model(a=1.0, b=0.25, c=0.0)
        partition = InterestPartition((0,), (1,))
        grid = ProfileGrid(np.linspace(-3.0, 3.0, 13))
        curve = evaluate_profile(model, None, partition, grid)
        for j in (0, 4, 9):
            direct = profile_loss_at(model, None, partition, np.array([grid.values[j]]))
            assert direct == pytest.approx(curve.profile_loss[j], abs=1e-6)

    def test_point_outside_interest_box_rejected(self):
        model = quadratic_model()
        partition = InterestPartition((0,), (1,))
        with pytest.raises(ValueError):
            profile_loss_at(model, None, partition, np.array([11.0]))

    def test_worker_count_does_not_change_results(self):
        model = quadratic_model(a=-1.5, b=2.0, c=0.1)
        partition = InterestPartition((1,), (0,))
        grid = ProfileGrid(np.linspace(-5.0, 5.0, 17))
        serial = evaluate_profile(model, None, partition, grid, n_workers=1)
        threaded = evaluate_profile(model, None, partition, grid, n_workers=3)
        assert np.array_equal(serial.profile_loss, threaded.profile_loss)
        assert np.array_equal(serial.converged, threaded.converged)

    def test_regular_grid_constructor(self):
        grid = ProfileGrid.regular(0.0, 1.0, 11)
        assert np.array_equal(grid.values, np.linspace(0.0, 1.0, 11))
        assert grid.size == 11
        # endpoints are pinned exactly, not merely approximately
        assert grid.values[0] == 0.0 and grid.values[-1] == 1.0
        with pytest.raises(ValueError):
            ProfileGrid.regular(0.0, 1.0, 1)
        with pytest.raises(ValueError):
            ProfileGrid.regular(1.0, 0.0, 5)


class TestReparameterization:
    def test_mgle_equivariant_under_log_transform(self):
        """Fitting in log coordinates lands at the log of the original MGLE."""
        target = np.array([3.0, 0.8])

        def base_loss(theta):
            return float(np.sum((theta - target) ** 2))

        direct_space = ParameterSpace(np.array([0.1, 0.1]), np.array([10.0, 10.0]))
        direct = LossModel(
            space=direct_space,
            loss=lambda d, t: base_loss(t),
            simulate=lambda t, s, r: None,
            size_of=lambda d: 0,
        )
        log_space = ParameterSpace(np.log([0.1, 0.1]), np.log([10.0, 10.0]))
        logged = LossModel(
            space=log_space,
            loss=lambda d, u: base_loss(np.exp(u)),
            simulate=lambda t, s, r: None,
            size_of=lambda d: 0,
        )
        fit_direct = fit_mgle(direct, None)
        fit_logged = fit_mgle(logged, None)
        assert np.exp(fit_logged.point) == pytest.approx(fit_direct.point, abs=1e-4)
        assert fit_logged.value == pytest.approx(fit_direct.value, abs=1e-8)
