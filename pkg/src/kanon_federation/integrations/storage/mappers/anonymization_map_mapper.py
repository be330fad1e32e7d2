import json
from typing import Any, Dict, List, Mapping, Sequence

from kanon_federation.domain.anonymization import AnonymizationMap, DomainPartition, Violation
from kanon_federation.domain.constants import *
from kanon_federation.domain.control_flow import ControlFlowSet
from kanon_federation.exceptions import ParseError


def canonical_json(obj: Any) -> str:
    """Byte-stable JSON: sorted keys, compact separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class AnonymizationMapMapper:
    """Canonical JSON form of a processing view, used on disk and in ViewMap frames."""

    def from_json(self, obj: Mapping[str, Any]) -> AnonymizationMap:
        try:
            partitions = {
                domain: DomainPartition(domain=domain, blocks=[list(block) for block in blocks])
                for domain, blocks in obj["partitions"].items()
            }
            key_attrs: Dict[str, tuple] = {}
            key_domains: Dict[str, tuple] = {}
            class_of: Dict[str, Dict[tuple, tuple]] = {}
            for relation, row in obj["relations"].items():
                key_attrs[relation] = tuple(row["key_attrs"])
                key_domains[relation] = tuple(row["key_domains"])
                class_of[relation] = {tuple(vector): tuple(key) for vector, key in row["classes"]}
            return AnonymizationMap(
                k=int(obj["k"]),
                c=ControlFlowSet.of((r, a) for r, a in obj["c"]),
                partitions=partitions,
                key_attrs=key_attrs,
                key_domains=key_domains,
                class_of=class_of,
                hash_seed=int(obj.get("hash_seed", DEFAULT_SEED)),
                strategy=obj.get("strategy", VIEW_STRATEGY_GREEDY),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"Error processing anonymization map: {e}")

    def to_json(self, view: AnonymizationMap) -> Dict[str, Any]:
        relations = {}
        for relation in view.relations:
            classes = sorted(view.class_of[relation].items(), key=lambda item: (item[1], item[0]))
            relations[relation] = {
                "key_attrs": list(view.key_attrs[relation]),
                "key_domains": list(view.key_domains[relation]),
                "classes": [[list(vector), list(key)] for vector, key in classes],
            }
        return {
            "k": view.k,
            "c": [list(entry) for entry in view.c],
            "hash_seed": view.hash_seed,
            "strategy": view.strategy,
            "partitions": {domain: [list(b) for b in p.blocks] for domain, p in sorted(view.partitions.items())},
            "relations": relations,
        }

    def dumps(self, view: AnonymizationMap) -> str:
        return canonical_json(self.to_json(view))

    def loads(self, text: str) -> AnonymizationMap:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"Error processing anonymization map: {e.msg}", e.pos)
        return self.from_json(obj)


def dump_violations(violations: Sequence[Violation]) -> str:
    """Violation report, one JSON object per line."""
    lines: List[str] = []
    for v in violations:
        row = {"relation": v.relation, "class": v.class_id, "kind": v.kind}
        if v.host is not None:
            row["host"] = v.host
        lines.append(canonical_json(row))
    return "".join(line + "\n" for line in lines)
