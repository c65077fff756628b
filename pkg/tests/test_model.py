import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from robustlogit.definitions import (
    Coefficients,
    Dataset,
    PenaltySpec,
    ResidualVariant,
    derive_seed,
)
from robustlogit.errors import (
    DataError,
    DimensionMismatchError,
    PenaltyError,
    ResponseError,
)
from robustlogit.model import (
    DEFAULT_CUTOFF,
    deviance,
    deviance_gradient,
    pearson_residual,
    penalty_value,
    sigmoid,
    total_deviance,
)
from tests.util import make_dataset

finite_eta = st.floats(min_value=-30.0, max_value=30.0, allow_nan=False)


class TestDataset:
    def test_shapes(self):
        data = make_dataset(np.zeros((3, 2)), np.array([0, 1, 0]))
        assert (data.n, data.p) == (3, 2)
        assert data.response.dtype == np.int8
        assert not data.values.flags.writeable

    def test_duplicate_column(self):
        with pytest.raises(DataError) as err:
            Dataset(np.zeros((2, 2)), ("a", "a"), ("r0", "r1"))
        assert err.value.column == "a"

    def test_duplicate_row(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((2, 1)), ("a",), ("r0", "r0"))

    @pytest.mark.parametrize("bad", [math.nan, math.inf], ids=["nan", "inf"])
    def test_non_finite(self, bad: float):
        values = np.zeros((2, 2))
        values[1, 0] = bad
        with pytest.raises(DataError) as err:
            make_dataset(values)
        assert err.value.row == "r1" and err.value.column == "c0"

    def test_missing_allowed_for_cellwise_path(self):
        values = np.zeros((2, 2))
        values[0, 1] = math.nan
        assert make_dataset(values, allow_missing=True).n_missing == 1

    def test_non_binary_response(self):
        with pytest.raises(ResponseError):
            make_dataset(np.zeros((2, 1)), np.array([0, 2]))

    def test_response_length(self):
        with pytest.raises(DimensionMismatchError):
            make_dataset(np.zeros((2, 1)), np.array([0, 1, 1]))

    def test_single_class(self):
        data = make_dataset(np.zeros((3, 1)), np.array([1, 1, 1]))
        with pytest.raises(ResponseError) as err:
            data.require_both_classes()
        assert "degenerate response" in str(err.value)

    def test_take_rows_and_select_columns(self):
        data = make_dataset(np.arange(6.0).reshape(3, 2), np.array([0, 1, 1]))
        rows = data.take_rows([2, 0])
        assert rows.row_ids == ("r2", "r0")
        assert rows.response.tolist() == [1, 0]
        cols = data.select_columns(["c1"])
        assert cols.values[:, 0].tolist() == [1.0, 3.0, 5.0]
        with pytest.raises(DataError):
            data.select_columns(["nope"])


class TestPenaltySpec:
    @pytest.mark.parametrize(
        ["alpha", "lambda_", "factors"],
        [(1.5, 0.1, None), (-0.1, 0.1, None), (0.5, -1.0, None), (0.5, 0.1, (1.0, -1.0))],
        ids=["alpha>1", "alpha<0", "lambda<0", "negative-factor"],
    )
    def test_invalid(self, alpha, lambda_, factors):
        with pytest.raises(PenaltyError):
            PenaltySpec(alpha, lambda_, factors)

    def test_default_factors(self):
        assert PenaltySpec(0.5, 0.1).factors(3).tolist() == [1.0, 1.0, 1.0]

    def test_factor_length(self):
        with pytest.raises(DimensionMismatchError):
            PenaltySpec(0.5, 0.1, (1.0, 1.0)).factors(3)


class TestCoefficients:
    def test_active_set(self):
        coefs = Coefficients(0.3, np.array([0.0, 1.0, 0.0, -2.0]))
        assert coefs.active_set.tolist() == [1, 3]
        assert coefs.n_nonzero == 2


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(0.0) == 0.5

    def test_saturation(self):
        value = sigmoid(40.0)
        assert 1.0 - 1e-15 < value <= 1.0
        assert sigmoid(-800.0) >= 0.0

    def test_value(self):
        assert sigmoid(2.0) == pytest.approx(0.8807970779778823, abs=1e-15)

    @given(finite_eta)
    def test_symmetry(self, eta: float):
        assert sigmoid(-eta) == pytest.approx(1.0 - sigmoid(eta), abs=1e-12)


class TestDeviance:
    @pytest.mark.parametrize(
        ["eta", "y", "expected"],
        [(0.0, 1, math.log(2.0)), (2.0, 1, 0.1269280110429725), (2.0, 0, 2.1269280110429727)],
        ids=["zero", "eta2-y1", "eta2-y0"],
    )
    def test_values(self, eta, y, expected):
        assert deviance(eta, y) == pytest.approx(expected, abs=1e-12)

    @given(finite_eta, st.sampled_from([0, 1]))
    def test_matches_log_likelihood(self, eta: float, y: int):
        # log of the probability of the observed class, without forming 1 - sigmoid(eta)
        expected = -math.log(sigmoid(eta)) if y == 1 else -math.log(sigmoid(-eta))
        assert deviance(eta, y) >= 0.0
        assert deviance(eta, y) == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize("y", [0, 1])
    def test_gradient_matches_finite_differences(self, y: int):
        eta = np.arange(-10.0, 11.0)
        step = 1e-5
        numeric = (deviance(eta + step, y) - deviance(eta - step, y)) / (2 * step)
        np.testing.assert_allclose(deviance_gradient(eta, y), numeric, atol=1e-6)


class TestTotalDeviance:
    def test_zero_coefficients(self):
        data = make_dataset(np.random.default_rng(0).standard_normal((7, 3)), np.array([0, 1] * 3 + [1]))
        assert total_deviance(data, Coefficients.zeros(3)) == pytest.approx(7 * math.log(2.0))

    def test_single_term(self):
        data = make_dataset(np.array([[2.0]]), np.array([1]))
        assert total_deviance(data, Coefficients(0.0, [1.0])) == pytest.approx(0.1269280110429725)

    def test_additive(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((10, 2))
        y = np.array([0, 1] * 5)
        coefs = Coefficients(0.2, [0.5, -1.0])
        whole = total_deviance(make_dataset(x, y), coefs)
        parts = total_deviance(make_dataset(x[:4], y[:4]), coefs) + total_deviance(
            make_dataset(x[4:], y[4:]), coefs
        )
        assert whole == pytest.approx(parts, rel=1e-12)

    def test_dimension_mismatch(self):
        data = make_dataset(np.zeros((2, 2)), np.array([0, 1]))
        with pytest.raises(DimensionMismatchError):
            total_deviance(data, Coefficients.zeros(3))


class TestPenaltyValue:
    def test_zero_lambda(self):
        assert penalty_value(PenaltySpec(0.5, 0.0), [3.0, -4.0], 10) == 0.0

    @pytest.mark.parametrize(["alpha", "expected"], [(1.0, 3.0), (0.5, 2.75)], ids=["lasso", "enet"])
    def test_values(self, alpha, expected):
        assert penalty_value(PenaltySpec(alpha, 0.1), [1.0, -2.0], 10) == pytest.approx(expected)

    @given(arrays(np.float64, 5, elements=st.floats(-10, 10)))
    def test_pure_forms(self, beta):
        factors = (1.0, 0.5, 0.0, 2.0, 1.0)
        scaled = np.asarray(factors) * beta
        l1 = penalty_value(PenaltySpec(1.0, 0.3, factors), beta, 7)
        ridge = penalty_value(PenaltySpec(0.0, 0.3, factors), beta, 7)
        assert l1 == pytest.approx(7 * 0.3 * np.abs(scaled).sum(), abs=1e-12)
        assert ridge == pytest.approx(7 * 0.3 * 0.5 * (scaled @ scaled), abs=1e-12)


class TestPearsonResidual:
    @pytest.mark.parametrize(
        ["y", "pi", "variant", "expected"],
        [
            (1, 0.5, ResidualVariant.AsPrinted, 2.0),
            (1, 0.5, ResidualVariant.Sqrt, 1.0),
            (0, 0.5, ResidualVariant.AsPrinted, -2.0),
            (1, 0.9, ResidualVariant.AsPrinted, 0.1 / 0.09),
        ],
        ids=["as-printed", "sqrt", "symmetry", "pi=0.9"],
    )
    def test_values(self, y, pi, variant, expected):
        assert float(pearson_residual(y, pi, variant)) == pytest.approx(expected)

    def test_clamped(self):
        assert np.isfinite(pearson_residual([1, 0], [0.0, 1.0])).all()

    def test_cutoff(self):
        assert DEFAULT_CUTOFF == pytest.approx(1.959963984540054, abs=1e-9)


class TestDeriveSeed:
    def test_deterministic_and_distinct(self):
        assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
        assert derive_seed(7, 1, 2) != derive_seed(7, 2, 1)
        assert 0 <= derive_seed(7) < 2**32
