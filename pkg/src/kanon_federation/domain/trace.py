from dataclasses import dataclass, field
import logging
from typing import Dict, Iterable, List, Optional

from kanon_federation.domain.constants import *

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TraceEvent:
    """One observable event of query processing.

    Attributes:
        node: Plan node id
        kind: ClassEmit, ClassDrop, PairEmit or BinEmit
        class_id: Class the event is about (left class for PairEmit)
        class2: Right class of a PairEmit
        cardinality: Tuples emitted (0 for ClassDrop)
        comparisons: Cost charged by the event
        secure: False for events of Plain nodes, which run outside the sealed execution
    """
    node: int
    kind: str
    class_id: str
    cardinality: int = 0
    comparisons: int = 0
    class2: Optional[str] = None
    secure: bool = True


@dataclass
class NodeTotals:
    comparisons: int = 0
    output_tuples: int = 0


class Trace(List[TraceEvent]):
    """Ordered events of one query execution."""

    def __init__(self, iterable: Optional[Iterable[TraceEvent]] = None, transfer_frames: int = 0):
        self.transfer_frames = transfer_frames
        super().__init__(iterable or [])

    @property
    def totals(self) -> Dict[int, NodeTotals]:
        """Per-node comparison and output-tuple counters."""
        out: Dict[int, NodeTotals] = {}
        for event in self:
            node_totals = out.setdefault(event.node, NodeTotals())
            node_totals.comparisons += event.comparisons
            node_totals.output_tuples += event.cardinality
        return out

    @property
    def comparisons(self) -> int:
        return sum(e.comparisons for e in self)

    @property
    def output_tuples(self) -> int:
        return sum(e.cardinality for e in self)

    def secure(self) -> "Trace":
        return Trace([e for e in self if e.secure])

    def for_node(self, node: int) -> "Trace":
        return Trace([e for e in self if e.node == node])
