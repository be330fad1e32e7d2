import json
from typing import Any, Dict, List, Mapping

from kanon_federation.domain.constants import *
from kanon_federation.domain.trace import Trace, TraceEvent
from kanon_federation.exceptions import ParseError
from kanon_federation.integrations.storage.mappers.anonymization_map_mapper import canonical_json


class TraceMapper:
    """JSON lines trace files: one event per line, then a totals line."""

    def event_to_json(self, event: TraceEvent) -> Dict[str, Any]:
        row: Dict[str, Any] = {
            "node": event.node,
            "kind": event.kind,
            "class": event.class_id,
            "card": event.cardinality,
            "cmp": event.comparisons,
        }
        if event.class2 is not None:
            row["class2"] = event.class2
        if not event.secure:
            row["secure"] = False
        return row

    def event_from_json(self, obj: Mapping[str, Any]) -> TraceEvent:
        if obj.get("kind") not in EVENT_KINDS:
            raise ParseError(f"Unknown trace event kind in {obj}")
        try:
            return TraceEvent(
                node=int(obj["node"]),
                kind=obj["kind"],
                class_id=obj["class"],
                cardinality=int(obj["card"]),
                comparisons=int(obj["cmp"]),
                class2=obj.get("class2"),
                secure=bool(obj.get("secure", True)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"Error processing trace event {obj}: {e}")

    def dumps(self, trace: Trace) -> str:
        lines = [canonical_json(self.event_to_json(e)) for e in trace]
        nodes = {str(node): {"card": t.output_tuples, "cmp": t.comparisons} for node, t in sorted(trace.totals.items())}
        totals = {"card": trace.output_tuples, "cmp": trace.comparisons, "nodes": nodes, "transfers": trace.transfer_frames}
        lines.append(canonical_json({"totals": totals}))
        return "".join(line + "\n" for line in lines)

    def loads(self, text: str) -> Trace:
        events: List[TraceEvent] = []
        transfer_frames = 0
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"Error processing trace line {number}: {e.msg}")
            if not isinstance(obj, dict):
                raise ParseError(f"Trace line {number} is not an object")
            if "totals" in obj:
                transfer_frames = int(obj["totals"].get("transfers", 0))
                continue
            events.append(self.event_from_json(obj))
        return Trace(events, transfer_frames=transfer_frames)
