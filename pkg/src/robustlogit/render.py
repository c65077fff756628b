"""
Cell map renderers: an SVG grid drawn with matplotlib and a plain-text grid.
"""
from __future__ import annotations

import io
from typing import Dict, Generic, List, Optional, Sequence, Tuple, TypeVar

import matplotlib
import numpy as np
from matplotlib.colors import BoundaryNorm, ListedColormap
from matplotlib.figure import Figure

from robustlogit.ddc import CellFlag, CellMap
from robustlogit.errors import DataError, DimensionMismatchError, UnsupportedFormatError
from robustlogit.protocols import CellMapRenderer, RowGroups

TKey = TypeVar("TKey")
TValue = TypeVar("TValue")

FLAG_COLOURS = {
    CellFlag.Normal: "#ffffbf",
    CellFlag.High: "#d7191c",
    CellFlag.Low: "#2c7bb6",
    CellFlag.Missing: "#ffffff",
}
CELL_INCHES = 0.18
SVG_HASH_SALT = "robustlogit"


class Registry(Generic[TKey, TValue]):
    def __init__(self) -> None:
        self._mapping: Dict[TKey, TValue] = {}

    def register(self, key: TKey, value: TValue) -> None:
        self._mapping[key] = value

    def get(self, key: TKey, default: Optional[TValue] = None) -> Optional[TValue]:
        return self._mapping.get(key, default)

    def keys(self) -> List[TKey]:
        return list(self._mapping)


class RendererRegistry(Registry[str, CellMapRenderer]):
    def auto_register(self, value: CellMapRenderer) -> None:
        self.register(value.format, value)

    def require(self, key: str) -> CellMapRenderer:
        renderer = self.get(key.lower())
        if renderer is None:
            raise UnsupportedFormatError(key, self.keys())
        return renderer


def _group_bounds(groups: Optional[RowGroups], n_rows: int) -> List[Tuple[str, int, int]]:
    if not groups:
        return []
    total = sum(size for _, size in groups)
    if total != n_rows:
        raise DimensionMismatchError("Row Groups", total, n_rows)
    bounds = []
    start = 0
    for label, size in groups:
        bounds.append((label, start, start + size))
        start += size
    return bounds


class TextRenderer:
    """
    One line per row: the row id followed by one symbol per cell
    (`+` high, `-` low, `.` normal, `?` missing).
    """

    format = "txt"

    def render(self, cell_map: CellMap, row_groups: Optional[RowGroups] = None) -> bytes:
        n, _ = cell_map.shape
        bounds = _group_bounds(row_groups, n)
        starts = {start: label for label, start, _ in bounds}
        width = max(len(r) for r in cell_map.row_ids)
        lines = ["# columns: " + " ".join(cell_map.col_names)]
        for i, row_id in enumerate(cell_map.row_ids):
            if i in starts:
                lines.append(f"## {starts[i]}")
            symbols = "".join(CellFlag(f).symbol for f in cell_map.flags[i].tolist())
            lines.append(f"{row_id.ljust(width)} {symbols}")
        return ("\n".join(lines) + "\n").encode("utf-8")


class SvgRenderer:
    """
    Coloured grid: red = high, blue = low, yellow = normal, white = missing; rows keep their given order.
    """

    format = "svg"

    def render(self, cell_map: CellMap, row_groups: Optional[RowGroups] = None) -> bytes:
        n, p = cell_map.shape
        bounds = _group_bounds(row_groups, n)
        cmap = ListedColormap([FLAG_COLOURS[f] for f in CellFlag])
        norm = BoundaryNorm(np.arange(len(CellFlag) + 1) - 0.5, cmap.N)

        # fixed hash salt and no date keep repeated renders byte-identical
        with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
            figure = Figure(figsize=(2.0 + CELL_INCHES * p, 1.5 + CELL_INCHES * n))
            axes = figure.add_subplot()
            axes.pcolormesh(
                cell_map.flags.astype(float),
                cmap=cmap,
                norm=norm,
                edgecolors="#bdbdbd",
                linewidth=0.3,
            )
            axes.set_xlim(0, p)
            axes.set_ylim(n, 0)
            axes.set_xticks(np.arange(p) + 0.5)
            axes.set_xticklabels(cell_map.col_names, rotation=90, fontsize=6)
            axes.set_yticks(np.arange(n) + 0.5)
            axes.set_yticklabels(cell_map.row_ids, fontsize=6)
            axes.xaxis.tick_top()
            for label, start, stop in bounds:
                if start > 0:
                    axes.axhline(start, color="black", linewidth=1.2)
                axes.text(p + 0.3, (start + stop) / 2.0, label, va="center", fontsize=7)
            figure.tight_layout()
            buffer = io.BytesIO()
            figure.savefig(buffer, format="svg", metadata={"Date": None})
        return buffer.getvalue()


renderers = RendererRegistry()
renderers.auto_register(SvgRenderer())
renderers.auto_register(TextRenderer())


def render_cell_map(
    cell_map: CellMap,
    rows: Optional[Sequence[int]] = None,
    cols: Optional[Sequence[int]] = None,
    fmt: str = "svg",
    row_groups: Optional[RowGroups] = None,
) -> bytes:
    """
    Render the selected rows and columns of `cell_map`, in the order given.

    :param row_groups: (label, size) bands covering the selected rows top to bottom.
    """
    renderer = renderers.require(fmt)
    view = cell_map.subset(rows, cols)
    if 0 in view.shape:
        raise DataError("Cell map selection is empty")
    return renderer.render(view, row_groups)


__all__ = [
    "FLAG_COLOURS",
    "Registry",
    "RendererRegistry",
    "TextRenderer",
    "SvgRenderer",
    "renderers",
    "render_cell_map",
]
