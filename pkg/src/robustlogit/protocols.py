from __future__ import annotations

from typing import (
    TYPE_CHECKING,
    runtime_checkable,
    Optional,
    Protocol,
    Sequence,
    TextIO,
    Tuple,
    TypeVar,
)

if TYPE_CHECKING:
    from robustlogit.ddc import CellMap

T = TypeVar("T")
T_contra = TypeVar("T_contra", contravariant=True)

RowGroups = Sequence[Tuple[str, int]]


@runtime_checkable
class TableWriter(Protocol[T_contra]):
    """
    Writes one artifact table to a text stream; returns the number of characters written.
    """

    def write(self, stream: TextIO, table: T_contra) -> int:
        raise NotImplementedError(
            f"{self.__class__.__module__}.{self.__class__.__qualname__}.write"
        )


@runtime_checkable
class CellMapRenderer(Protocol):
    format: str

    def render(self, cell_map: CellMap, row_groups: Optional[RowGroups] = None) -> bytes:
        raise NotImplementedError(
            f"{self.__class__.__module__}.{self.__class__.__qualname__}.render"
        )


__all__ = ["T", "RowGroups", "TableWriter", "CellMapRenderer"]
