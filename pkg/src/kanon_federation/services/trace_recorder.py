import logging
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

from kanon_federation.domain.constants import *
from kanon_federation.domain.trace import Trace, TraceEvent

if TYPE_CHECKING:
    from kanon_federation.domain.anonymization import EquivalenceClass
    from kanon_federation.domain.catalog import Catalog
    from kanon_federation.domain.query_plan import QueryPlan

logger = logging.getLogger(__name__)


def charge(kind: str, sizes: Sequence[int], per_tuple: bool = False) -> int:
    """Comparisons charged for one event.

    Padded events charge the work of evaluating whole classes: |class| for class and bin
    events, |left| * |right| for pair events. Per-tuple events (plain and encrypted
    execution) charge one comparison per tuple examined.
    """
    if per_tuple:
        return sum(sizes)
    if kind == EVENT_PAIR_EMIT:
        return sizes[0] * sizes[1]
    return sizes[0]


class TraceRecorder:
    """Single-writer sink for the events of one query execution.

    Events are kept with a class order key so events recorded out of order (by several
    data owners) sort into plan order, then class order.
    """

    def __init__(self):
        self._events: List[Tuple[int, Tuple, int, TraceEvent]] = []

    def record(
        self,
        node: int,
        kind: str,
        class_id: str,
        cardinality: int,
        sizes: Sequence[int],
        order: Tuple = (),
        class2: Optional[str] = None,
        secure: bool = True,
        per_tuple: bool = False,
    ) -> TraceEvent:
        event = TraceEvent(
            node=node,
            kind=kind,
            class_id=class_id,
            cardinality=cardinality,
            comparisons=charge(kind, sizes, per_tuple),
            class2=class2,
            secure=secure,
        )
        self.add(event, order)
        return event

    def add(self, event: TraceEvent, order: Tuple = ()) -> None:
        self._events.append((event.node, order, len(self._events), event))

    def ordered_events(self) -> List[Tuple[Tuple, TraceEvent]]:
        return [(order, event) for _, order, _, event in sorted(self._events, key=lambda e: (e[0], e[1], e[2]))]

    def trace(self, transfer_frames: int = 0) -> Trace:
        return Trace([event for _, event in self.ordered_events()], transfer_frames=transfer_frames)

    def __len__(self) -> int:
        return len(self._events)


def traces_equal(a: Sequence[TraceEvent], b: Sequence[TraceEvent]) -> Tuple[bool, Optional[Tuple[int, Optional[TraceEvent], Optional[TraceEvent]]]]:
    """Compare two traces event by event.

    Returns:
        Tuple: (True, None) when equal, else (False, (index, event of a, event of b)) at the first divergence
    """
    for i in range(max(len(a), len(b))):
        left = a[i] if i < len(a) else None
        right = b[i] if i < len(b) else None
        if left != right:
            return False, (i, left, right)
    return True, None


def simulate_reference(plan: "QueryPlan", classes: Dict[str, List["EquivalenceClass"]], k: int, catalog: "Catalog") -> Trace:
    """Trace of the k-anonymous operators run over the anonymized view alone.

    Parameters:
        plan (QueryPlan): Moded plan
        classes (Dict[str, List[EquivalenceClass]]): Materialized view classes per relation
        k (int): Anonymity level of the view
        catalog (Catalog): Catalog of the plan's relations

    Returns:
        Trace: Secure events only
    """
    from kanon_federation.services.executor import run_secure

    recorder = TraceRecorder()
    run_secure(plan, classes, k, catalog, recorder)
    return recorder.trace().secure()
