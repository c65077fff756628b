import os
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from robustlogit.ddc import CellFlag, CellMap
from robustlogit.errors import DataError, DimensionMismatchError, UnsupportedFormatError
from robustlogit.protocols import CellMapRenderer
from robustlogit.render import (
    FLAG_COLOURS,
    SvgRenderer,
    TextRenderer,
    render_cell_map,
    renderers,
)


def _cell_map(flags) -> CellMap:
    flags = np.asarray(flags, dtype=np.int8)
    n, p = flags.shape
    return CellMap(
        flags=flags,
        residuals=np.zeros((n, p)),
        predicted=np.zeros((n, p)),
        row_scores=np.zeros(n),
        row_ids=tuple(f"row{i}" for i in range(n)),
        col_names=tuple(f"g{j}" for j in range(p)),
        cutoff=2.5758,
    )


@pytest.fixture
def mixed() -> CellMap:
    return _cell_map([[0, 1, 2], [3, 0, 0], [1, 1, 0]])


class TestRegistry:
    def test_formats(self):
        assert sorted(renderers.keys()) == ["svg", "txt"]
        assert isinstance(renderers.require("SVG"), SvgRenderer)
        for key in renderers.keys():
            assert isinstance(renderers.require(key), CellMapRenderer)

    def test_unknown_format(self, mixed):
        with pytest.raises(UnsupportedFormatError) as err:
            render_cell_map(mixed, fmt="png")
        assert err.value.received == "png"


class TestTextRenderer:
    def test_single_high_cell(self):
        text = render_cell_map(_cell_map([[CellFlag.High]]), fmt="txt").decode()
        assert text.splitlines() == ["# columns: g0", "row0 +"]

    def test_symbols(self, mixed):
        lines = TextRenderer().render(mixed).decode().splitlines()
        assert lines[1:] == ["row0 .+-", "row1 ?..", "row2 ++."]

    def test_rows_keep_given_order(self, mixed):
        lines = render_cell_map(mixed, rows=[2, 0], cols=[1, 0], fmt="txt").decode().splitlines()
        assert lines == ["# columns: g1 g0", "row2 ++", "row0 +."]

    def test_row_groups(self, mixed):
        lines = render_cell_map(mixed, fmt="txt", row_groups=[("nT", 1), ("T", 2)]).decode().splitlines()
        assert lines == ["# columns: g0 g1 g2", "## nT", "row0 .+-", "## T", "row1 ?..", "row2 ++."]

    def test_row_groups_must_cover_rows(self, mixed):
        with pytest.raises(DimensionMismatchError):
            render_cell_map(mixed, fmt="txt", row_groups=[("nT", 1)])


class TestSvgRenderer:
    def test_single_high_cell(self):
        svg = render_cell_map(_cell_map([[CellFlag.High]])).decode()
        assert svg.lstrip().startswith("<?xml")
        assert FLAG_COLOURS[CellFlag.High] in svg
        assert FLAG_COLOURS[CellFlag.Low] not in svg
        assert "row0" in svg and "g0" in svg

    def test_colours(self, mixed):
        svg = render_cell_map(mixed).decode()
        for flag in (CellFlag.Normal, CellFlag.High, CellFlag.Low):
            assert FLAG_COLOURS[flag] in svg

    def test_deterministic(self, mixed):
        assert render_cell_map(mixed, row_groups=[("a", 2), ("b", 1)]) == render_cell_map(
            mixed, row_groups=[("a", 2), ("b", 1)]
        )

    def test_group_labels(self, mixed):
        svg = render_cell_map(mixed, row_groups=[("outliers", 3)]).decode()
        assert "outliers" in svg


@pytest.mark.parametrize("fmt", ["svg", "txt"])
def test_empty_selection(mixed, fmt):
    with pytest.raises(DataError):
        render_cell_map(mixed, rows=[], fmt=fmt)


GOLDEN = Path(__file__).parent / "golden"
# set to rewrite the committed renders after a visual check
UPDATE_GOLDEN = bool(os.environ.get("ROBUSTLOGIT_UPDATE_GOLDEN"))


@pytest.fixture
def cohort() -> CellMap:
    cell_map = _cell_map([[0, 0, 1, 0], [2, 0, 0, 0], [0, 3, 0, 0], [1, 1, 0, 2], [0, 0, 0, 0]])
    return replace(
        cell_map,
        row_ids=("nT-01", "nT-02", "T-1", "T-22", "out-7"),
        col_names=("ESR1", "PGR", "ERBB2", "FOXA1"),
    )


COHORT_GROUPS = [("nT", 2), ("T", 2), ("outlier", 1)]


@pytest.mark.parametrize("fmt", ["txt", "svg"])
def test_matches_golden(cohort, fmt):
    rendered = render_cell_map(cohort, fmt=fmt, row_groups=COHORT_GROUPS)
    golden = GOLDEN / f"cellmap.{fmt}"
    if UPDATE_GOLDEN:
        golden.write_bytes(rendered)
    if not golden.exists():
        pytest.skip(f"No committed {golden.name}; render once with ROBUSTLOGIT_UPDATE_GOLDEN=1")
    assert rendered == golden.read_bytes()
