"""JSON forms of tuples, equivalence classes, result shards and ordered trace events.

JSON has no tuples, so class orders and value vectors are turned back into tuples on read.
"""
from typing import Any, Dict, List, Mapping, Tuple

from kanon_federation.domain.anonymization import EquivalenceClass
from kanon_federation.domain.catalog import DataTuple
from kanon_federation.domain.federation import ResultShard
from kanon_federation.domain.trace import TraceEvent
from kanon_federation.exceptions import ProtocolError
from kanon_federation.integrations.storage.mappers.trace_mapper import TraceMapper


def as_tuple(obj: Any) -> Any:
    if isinstance(obj, list):
        return tuple(as_tuple(o) for o in obj)
    return obj


def as_list(obj: Any) -> Any:
    if isinstance(obj, tuple):
        return [as_list(o) for o in obj]
    return obj


def tuple_to_json(t: DataTuple) -> List[Any]:
    return [list(t.values), t.dummy, t.owner]


def tuple_from_json(obj: List[Any]) -> DataTuple:
    values, dummy, owner = obj
    return DataTuple(tuple(values), bool(dummy), int(owner))


class EquivalenceClassMapper:
    def from_json(self, obj: Mapping[str, Any]) -> EquivalenceClass:
        try:
            return EquivalenceClass(
                id=obj["id"],
                relation=obj["relation"],
                tuples=[tuple_from_json(t) for t in obj["tuples"]],
                covered_values={tuple(v) for v in obj["covered"]},
                keys={column: int(g) for column, g in obj["keys"].items()},
                order=as_tuple(obj["order"]),
                lineage={class_id: int(n) for class_id, n in obj["lineage"].items()},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ProtocolError(f"Error processing equivalence class: {e}")

    def to_json(self, c: EquivalenceClass) -> Dict[str, Any]:
        return {
            "id": c.id,
            "relation": c.relation,
            "tuples": [tuple_to_json(t) for t in c.tuples],
            "covered": sorted(list(v) for v in c.covered_values),
            "keys": dict(c.keys),
            "order": as_list(c.order),
            "lineage": dict(c.lineage),
        }


class ResultShardMapper:
    def from_json(self, obj: Mapping[str, Any]) -> ResultShard:
        try:
            return ResultShard(
                host=int(obj["host"]),
                columns=list(obj["columns"]),
                tuples=[tuple_from_json(t) for t in obj["tuples"]],
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ProtocolError(f"Error processing result shard: {e}")

    def to_json(self, shard: ResultShard) -> Dict[str, Any]:
        return {"host": shard.host, "columns": list(shard.columns), "tuples": [tuple_to_json(t) for t in shard.tuples]}


class OrderedEventMapper:
    """Trace events with the class order key the coordinator merges them by."""

    def __init__(self, event_mapper: TraceMapper = None):
        self._events = event_mapper or TraceMapper()

    def from_json(self, obj: Mapping[str, Any]) -> Tuple[Tuple, TraceEvent]:
        try:
            return as_tuple(obj["order"]), self._events.event_from_json(obj)
        except KeyError as e:
            raise ProtocolError(f"Error processing trace event: missing {e}")

    def to_json(self, value: Tuple[Tuple, TraceEvent]) -> Dict[str, Any]:
        order, event = value
        row = self._events.event_to_json(event)
        row["order"] = as_list(order)
        return row
