import math

import numpy as np
import pytest

from robustlogit.definitions import (
    Coefficients,
    PenaltySpec,
    ResidualVariant,
    StandardizationMode,
)
from robustlogit.enet import (
    SolverConfig,
    fit_enet_logistic,
    flag_outliers_classical,
    kkt_violations,
    lambda_grid,
    lambda_max,
    standardize_columns,
)
from robustlogit.errors import (
    ConfigError,
    ConstantColumnWarning,
    DataError,
    PenaltyError,
    ResponseError,
)
from tests.util import logistic_data, make_dataset

TIGHT = SolverConfig(max_outer_iters=500, max_inner_sweeps=100_000, coef_tol=1e-10)


@pytest.fixture(scope="module")
def data():
    return logistic_data(100, 6, seed=11)


class TestSolverConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [{"max_outer_iters": 0}, {"coef_tol": 0.0}, {"weights": np.array([0.5, 2.0])}, {"weights": np.zeros(3)}],
        ids=["iters", "tol", "weight>1", "zero-sum"],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            SolverConfig(**kwargs)


class TestStandardizeColumns:
    def test_classical(self):
        x = np.array([[1.0, 5.0], [3.0, 5.0]])
        std = standardize_columns(x, np.ones(2))
        assert std.center.tolist() == [2.0, 5.0]
        assert std.scale.tolist() == [1.0, 0.0]
        assert std.constant.tolist() == [False, True]

    def test_robust_ignores_outlier(self):
        x = np.array([[1.0], [2.0], [3.0], [4.0], [1000.0]])
        std = standardize_columns(x, np.ones(5), StandardizationMode.Robust)
        assert std.center[0] == 3.0
        assert std.scale[0] == pytest.approx(1.4826)

    def test_zero_weight_rows_excluded(self):
        x = np.array([[0.0], [2.0], [100.0]])
        std = standardize_columns(x, np.array([1.0, 1.0, 0.0]))
        assert std.center[0] == 1.0

    def test_round_trip(self):
        std = standardize_columns(np.random.default_rng(0).standard_normal((20, 3)), np.ones(20))
        coefs = Coefficients(0.4, [1.0, -2.0, 0.5])
        back = std.to_original(*std.to_standardized(coefs))
        assert back.intercept == pytest.approx(0.4)
        np.testing.assert_allclose(back.beta, coefs.beta)


class TestFitEnetLogistic:
    def test_null_fit_at_huge_lambda(self, data):
        fit = fit_enet_logistic(data, PenaltySpec(0.5, 1e6))
        y_bar = data.response.mean()
        assert fit.coefs.n_nonzero == 0
        assert fit.coefs.intercept == pytest.approx(math.log(y_bar / (1 - y_bar)), abs=1e-6)
        assert fit.converged

    def test_unpenalized_column_stays_active(self, data):
        spec = PenaltySpec(1.0, 1e6, (0.0, 1.0, 1.0, 1.0, 1.0, 1.0))
        fit = fit_enet_logistic(data, spec)
        assert fit.coefs.beta[0] != 0.0
        assert fit.coefs.active_set.tolist() == [0]

    def test_objective_path_non_increasing(self, data):
        fit = fit_enet_logistic(data, PenaltySpec(0.7, 0.01))
        path = np.asarray(fit.objective_path)
        assert (np.diff(path) <= 1e-10).all()
        assert fit.objective == path[-1]

    @pytest.mark.parametrize("alpha", [0.0, 0.3, 1.0], ids=["ridge", "enet", "lasso"])
    def test_kkt(self, data, alpha):
        top = lambda_max(data, alpha)
        fit = fit_enet_logistic(data, PenaltySpec(alpha, 0.1 * top), TIGHT)
        assert kkt_violations(data, fit).max() <= 1e-5

    def test_kkt_with_weights(self, data):
        weights = np.ones(data.n)
        weights[::7] = 0.0
        fit = fit_enet_logistic(data, PenaltySpec(0.5, 0.01), TIGHT.with_weights(weights))
        assert fit.n_eff == data.n - weights[::7].shape[0]
        assert kkt_violations(data, fit).max() <= 1e-5

    def test_row_permutation_invariance(self, data):
        spec = PenaltySpec(0.5, 0.02)
        order = np.random.default_rng(5).permutation(data.n)
        a = fit_enet_logistic(data, spec, TIGHT)
        b = fit_enet_logistic(data.take_rows(order), spec, TIGHT)
        np.testing.assert_allclose(a.coefs.beta, b.coefs.beta, atol=1e-6)
        assert a.coefs.intercept == pytest.approx(b.coefs.intercept, abs=1e-6)

    def test_warm_start_reaches_same_optimum(self, data):
        spec = PenaltySpec(0.8, 0.01)
        cold = fit_enet_logistic(data, spec, TIGHT)
        warm = fit_enet_logistic(data, spec, TIGHT, init=fit_enet_logistic(data, spec.with_lambda(0.05)).coefs)
        np.testing.assert_allclose(cold.coefs.beta, warm.coefs.beta, atol=1e-5)

    def test_duplicated_columns_share_weight(self):
        base = logistic_data(150, 3, seed=4, signal=1.5)
        values = np.column_stack((base.values, base.values[:, 0]))
        data = make_dataset(values, base.response)
        fit = fit_enet_logistic(data, PenaltySpec(0.5, 0.01), TIGHT)
        assert fit.coefs.beta[0] != 0.0
        assert fit.coefs.beta[0] == pytest.approx(fit.coefs.beta[3], abs=1e-6)

    def test_constant_column_warns(self, data):
        values = np.column_stack((data.values, np.full(data.n, 2.0)))
        with pytest.warns(ConstantColumnWarning):
            fit = fit_enet_logistic(make_dataset(values, data.response), PenaltySpec(0.5, 0.01))
        assert fit.coefs.beta[-1] == 0.0

    def test_constant_unpenalized_column(self, data):
        values = np.column_stack((data.values, np.full(data.n, 2.0)))
        spec = PenaltySpec(0.5, 0.01, (1.0,) * data.p + (0.0,))
        with pytest.raises(DataError):
            fit_enet_logistic(make_dataset(values, data.response), spec)

    def test_single_class(self):
        data = make_dataset(np.random.default_rng(0).standard_normal((10, 2)), np.ones(10, dtype=int))
        with pytest.raises(ResponseError):
            fit_enet_logistic(data, PenaltySpec(0.5, 0.1))


class TestLambdaGrid:
    @pytest.mark.parametrize("alpha", [1.0, 0.5], ids=["lasso", "enet"])
    def test_lambda_max_is_tight(self, data, alpha):
        top = lambda_max(data, alpha)
        assert fit_enet_logistic(data, PenaltySpec(alpha, 1.01 * top)).coefs.n_nonzero == 0
        assert fit_enet_logistic(data, PenaltySpec(alpha, top)).coefs.n_nonzero == 0
        assert fit_enet_logistic(data, PenaltySpec(alpha, 0.99 * top)).coefs.n_nonzero > 0

    def test_ridge_uses_floored_alpha(self, data):
        assert lambda_max(data, 0.0) == pytest.approx(1000 * lambda_max(data, 1.0), rel=1e-9)

    def test_endpoints(self, data):
        grid = lambda_grid(data, 0.5, n_lambda=10, ratio=0.01)
        assert grid.shape == (10,)
        assert grid[0] == lambda_max(data, 0.5)
        assert grid[-1] == pytest.approx(0.01 * grid[0])
        assert (np.diff(grid) < 0).all()

    def test_unpenalized_columns_partialled_out(self, data):
        factors = (0.0, 1.0, 1.0, 1.0, 1.0, 1.0)
        top = lambda_max(data, 1.0, factors)
        fit = fit_enet_logistic(data, PenaltySpec(1.0, 1.01 * top, factors), TIGHT)
        assert fit.coefs.active_set.tolist() == [0]

    def test_all_unpenalized(self, data):
        with pytest.raises(PenaltyError):
            lambda_max(data, 1.0, (0.0,) * data.p)

    @pytest.mark.parametrize(["n_lambda", "ratio"], [(1, 0.01), (10, 1.0)], ids=["length", "ratio"])
    def test_invalid(self, data, n_lambda, ratio):
        with pytest.raises(ConfigError):
            lambda_grid(data, 0.5, n_lambda=n_lambda, ratio=ratio)


class TestFlagOutliersClassical:
    def test_balanced_null_fit(self):
        data = make_dataset(np.random.default_rng(2).standard_normal((20, 2)), np.array([0, 1] * 10))
        fit = fit_enet_logistic(data, PenaltySpec(1.0, 1e6))
        assert flag_outliers_classical(fit).tolist() == [1] * 20
        assert flag_outliers_classical(fit, variant=ResidualVariant.Sqrt).tolist() == [0] * 20
        assert flag_outliers_classical(fit).dtype == np.int8
