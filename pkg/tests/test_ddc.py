import math

import numpy as np
import pytest

from robustlogit.ddc import (
    CellFlag,
    DdcConfig,
    detect_deviating_cells,
    flag_cells,
    flag_cutoff,
    predict_cells,
    robust_bivariate_corr,
    robust_standardize,
    select_predictors,
)
from robustlogit.errors import ConfigError, DataError
from robustlogit.synthetic import SyntheticConfig, generate_synthetic
from tests.util import make_dataset


@pytest.fixture(scope="module")
def correlated():
    data, _ = generate_synthetic(SyntheticConfig(n=300, p=10, sparsity=2, block_size=10, block_rho=0.7, seed=11))
    return data


def _inject(data, row, col, shift):
    values = np.array(data.values)
    values[row, col] += shift
    return make_dataset(values)


class TestConfig:
    def test_cutoff(self):
        assert DdcConfig().cutoff == pytest.approx(2.5758, abs=1e-4)
        assert flag_cutoff(0.975) == pytest.approx(2.2414, abs=1e-4)

    @pytest.mark.parametrize(
        "kwargs",
        [{"corr_threshold": 1.0}, {"flag_quantile": 0.5}, {"max_predictors": 0}, {"min_mad": 0.0}],
        ids=["threshold", "quantile", "predictors", "mad"],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            DdcConfig(**kwargs)


class TestRobustStandardize:
    def test_values(self):
        center, scale, z = robust_standardize(np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
        assert center == 3.0
        assert scale == pytest.approx(1.4826)
        assert z[2] == 0.0

    def test_constant(self):
        _, scale, z = robust_standardize(np.full(6, 4.0), min_mad=1e-8)
        assert scale == 1e-8
        assert (z == 0.0).all()

    def test_gross_outlier(self):
        clean = np.random.default_rng(0).standard_normal(99)
        before, _, _ = robust_standardize(clean)
        after, _, _ = robust_standardize(np.append(clean, 1e6))
        assert abs(after - before) < 1.0

    def test_missing_propagates(self):
        _, _, z = robust_standardize(np.array([1.0, math.nan, 2.0, 3.0]))
        assert math.isnan(z[1])

    def test_too_few_values(self):
        with pytest.raises(DataError):
            robust_standardize(np.array([1.0, math.nan, math.nan, 2.0]))


class TestRobustBivariateCorr:
    def test_identical(self):
        z = np.random.default_rng(1).standard_normal(100)
        assert robust_bivariate_corr(z, z) == pytest.approx(1.0)

    def test_independent(self):
        rng = np.random.default_rng(2)
        assert abs(robust_bivariate_corr(rng.standard_normal(1000), rng.standard_normal(1000))) < 0.1

    def test_resists_contamination(self):
        rng = np.random.default_rng(3)
        zk = rng.standard_normal(500)
        zj = 0.8 * zk + 0.6 * rng.standard_normal(500)
        dirty = zj.copy()
        dirty[rng.choice(500, 25, replace=False)] = 10.0
        clean = robust_bivariate_corr(zj, zk)
        assert abs(robust_bivariate_corr(dirty, zk) - clean) < 0.1
        assert abs(np.corrcoef(dirty, zk)[0, 1] - np.corrcoef(zj, zk)[0, 1]) > 0.2

    def test_too_few_pairs(self):
        z = np.arange(9.0) / 9.0
        assert robust_bivariate_corr(z, z) == 0.0


class TestPredictCells:
    def test_twin_column(self):
        z = np.random.default_rng(4).standard_normal(200).clip(-2.5, 2.5)
        matrix = np.column_stack((z, z))
        matrix[5] = 0.3
        matrix[5, 0] += 6.0
        predicted = predict_cells(matrix)
        assert predicted[5, 0] == pytest.approx(0.3)
        assert matrix[5, 0] - predicted[5, 0] == pytest.approx(6.0)
        # the inflated cell is not used to predict its twin
        assert predicted[5, 1] == 0.0

    def test_no_predictors(self):
        rng = np.random.default_rng(5)
        z = rng.standard_normal((300, 3))
        assert (predict_cells(z, DdcConfig(corr_threshold=0.9)) == 0.0).all()

    def test_select_predictors(self):
        corr = np.array([[1.0, 0.6, -0.9, 0.2], [0.6, 1.0, 0.0, 0.0], [-0.9, 0.0, 1.0, 0.0], [0.2, 0.0, 0.0, 1.0]])
        assert select_predictors(corr, 0, 0.5, 10).tolist() == [2, 1]
        assert select_predictors(corr, 0, 0.5, 1).tolist() == [2]
        assert select_predictors(corr, 3, 0.5, 10).tolist() == []


class TestFlagCells:
    def test_exact_prediction(self):
        z = np.random.default_rng(6).standard_normal((20, 3))
        cell_map = flag_cells(z, z)
        assert cell_map.n_flagged == 0
        assert (cell_map.flags == CellFlag.Normal).all()

    @pytest.mark.parametrize(["shift", "flag"], [(6.0, CellFlag.High), (-6.0, CellFlag.Low)], ids=["high", "low"])
    def test_injected_cell(self, correlated, shift, flag):
        cell_map = detect_deviating_cells(_inject(correlated, 17, 4, shift))
        assert cell_map.flags[17, 4] == flag

    def test_row_score(self):
        z = np.zeros((4, 2))
        predicted = np.zeros((4, 2))
        z[0, 0] = math.nan
        cell_map = flag_cells(z, predicted)
        assert cell_map.flags[0, 0] == CellFlag.Missing
        assert cell_map.row_scores.tolist() == [0.0] * 4


class TestDetectDeviatingCells:
    def test_negation_swaps_flags(self, correlated):
        values = np.array(correlated.values)
        values[3, 2] += 7.0
        values[9, 5] -= 7.0
        flags = detect_deviating_cells(make_dataset(values)).flags
        negated = detect_deviating_cells(make_dataset(-values)).flags
        swapped = np.where(flags == CellFlag.High, CellFlag.Low, np.where(flags == CellFlag.Low, CellFlag.High, flags))
        np.testing.assert_array_equal(negated, swapped)

    def test_column_scale_invariance(self, correlated):
        values = np.array(correlated.values)
        values[3, 2] += 7.0
        scaled = values.copy()
        scaled[:, 2] *= 4.0
        np.testing.assert_array_equal(
            detect_deviating_cells(make_dataset(values)).flags,
            detect_deviating_cells(make_dataset(scaled)).flags,
        )

    def test_quantile_monotonicity(self, correlated):
        counts = [
            detect_deviating_cells(correlated, DdcConfig(flag_quantile=q)).n_flagged
            for q in (0.9, 0.95, 0.99, 0.999)
        ]
        assert counts == sorted(counts, reverse=True)

    def test_clean_false_flag_rate(self, correlated):
        cell_map = detect_deviating_cells(correlated)
        assert cell_map.n_flagged / (correlated.n * correlated.p) <= 0.03

    def test_missing_cells(self, correlated):
        values = np.array(correlated.values)
        values[0, 0] = math.nan
        cell_map = detect_deviating_cells(make_dataset(values, allow_missing=True))
        assert cell_map.flags[0, 0] == CellFlag.Missing
        assert (0, 0) not in cell_map.flagged_cells()

    def test_frame_and_subset(self, correlated):
        cell_map = detect_deviating_cells(correlated)
        frame = cell_map.to_frame()
        assert list(frame.columns) == ["row", "col", "flag", "residual"]
        assert frame.shape[0] == correlated.n * correlated.p
        assert set(frame["flag"]) <= {"normal", "high", "low", "missing"}
        part = cell_map.subset([4, 1], [2])
        assert part.shape == (2, 1)
        assert part.row_ids == (correlated.row_ids[4], correlated.row_ids[1])
        assert part.flags[0, 0] == cell_map.flags[4, 2]
