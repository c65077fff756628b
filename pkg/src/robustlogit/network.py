from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple

import graphviz
import numpy as np

from robustlogit.definitions import Dataset
from robustlogit.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

POSITIVE_COLOUR = "darkgreen"
NEGATIVE_COLOUR = "red"
MIN_ROWS = 3


class ClassFilter(str, Enum):
    All = "all"
    Class0 = "0"
    Class1 = "1"


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    rho: float

    @property
    def positive(self) -> bool:
        return self.rho > 0.0


@dataclass(frozen=True)
class GeneNetwork:
    """
    Undirected correlation graph; an edge joins two genes when |rho| > threshold.
    """

    nodes: Tuple[str, ...]
    edges: Tuple[Edge, ...]
    threshold: float
    class_filter: ClassFilter = ClassFilter.All
    n_rows: int = 0

    def penwidth(self, edge: Edge) -> float:
        """ 1 at the threshold, 5 at |rho| = 1 """
        return 1.0 + 4.0 * (abs(edge.rho) - self.threshold) / (1.0 - self.threshold)

    def has_edge(self, a: str, b: str) -> bool:
        return any({e.source, e.target} == {a, b} for e in self.edges)

    def to_dot(self, name: str = "network") -> str:
        graph = graphviz.Graph(name=name, strict=True, node_attr={"shape": "ellipse"})
        for node in self.nodes:
            graph.node(node)
        for edge in self.edges:
            graph.edge(
                edge.source,
                edge.target,
                color=POSITIVE_COLOUR if edge.positive else NEGATIVE_COLOUR,
                penwidth=f"{self.penwidth(edge):.4f}",
                tooltip=f"{edge.rho:.4f}",
            )
        return str(graph.source)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "threshold": self.threshold,
            "class_filter": self.class_filter.value,
            "n_rows": self.n_rows,
            "nodes": list(self.nodes),
            "edges": [
                {
                    "source": e.source,
                    "target": e.target,
                    "rho": e.rho,
                    "sign": 1 if e.positive else -1,
                    "penwidth": self.penwidth(e),
                }
                for e in self.edges
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def correlation_network(
    data: Dataset,
    genes: Optional[Sequence[str]] = None,
    class_filter: ClassFilter = ClassFilter.All,
    threshold: float = 0.6,
) -> GeneNetwork:
    """
    Pearson correlations among `genes` (all columns by default) over the rows of the chosen class.
    """
    if not 0.0 <= threshold < 1.0:
        raise ConfigError("threshold", threshold, "must lie in [0, 1)")
    class_filter = ClassFilter(class_filter)
    names = tuple(genes) if genes is not None else data.col_names
    columns = [data.column_index(name) for name in names]
    rows = np.arange(data.n)
    if class_filter is not ClassFilter.All:
        y = data.require_response()
        rows = np.flatnonzero(y == int(class_filter.value))
    if rows.shape[0] < MIN_ROWS:
        raise DataError(
            f"Correlation network needs at least {MIN_ROWS} rows; class filter `{class_filter.value}` leaves {rows.shape[0]}"
        )
    values = data.values[np.ix_(rows, columns)]
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.atleast_2d(np.corrcoef(values, rowvar=False))

    edges = []
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            rho = float(np.clip(corr[a, b], -1.0, 1.0))
            if np.isfinite(rho) and abs(rho) > threshold:
                edges.append(Edge(names[a], names[b], rho))
    logger.info(
        "Network over %d genes and %d rows (class %s): %d edges above %.3f",
        len(names), rows.shape[0], class_filter.value, len(edges), threshold,
    )
    return GeneNetwork(names, tuple(edges), threshold, class_filter, int(rows.shape[0]))


__all__ = [
    "ClassFilter",
    "Edge",
    "GeneNetwork",
    "correlation_network",
]
