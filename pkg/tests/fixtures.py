"""Shared test data: the six-patient running example and a seeded random instance generator."""
import json
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from kanon_federation.bench.generators import split_rows
from kanon_federation.domain.anonymization import AnonymizationMap, DomainPartition, Histogram
from kanon_federation.domain.catalog import Catalog, RelationShard
from kanon_federation.domain.control_flow import ControlFlowSet
from kanon_federation.services.anonymizer import build_histogram, merge_histograms
from kanon_federation.services.schema import load_catalog

RUNNING_EXAMPLE_CATALOG = """
{
  "relations": [
    {"name": "demographics", "entity_attr": "pid", "attributes": [
      {"name": "pid", "kind": "integer", "policy": "kanon", "domain": "pid"},
      {"name": "sex", "kind": "text", "policy": "kanon"}
    ]},
    {"name": "diagnosis", "entity_attr": "pid", "attributes": [
      {"name": "pid", "kind": "integer", "policy": "kanon", "domain": "pid"},
      {"name": "diag", "kind": "text", "policy": "kanon"}
    ]}
  ]
}
"""

DEMOGRAPHICS_ROWS = [(1, "F"), (2, "F"), (3, "M"), (4, "M"), (11, "F"), (12, "F")]
DIAGNOSIS_ROWS = [(1, "flu"), (3, "flu"), (1, "infection"), (2, "infection"), (21, "cold"), (22, "cold")]

FEMALE_DIAGNOSES = (
    "SELECT g.diag, COUNT(*) AS cnt FROM demographics d, diagnosis g "
    "WHERE d.sex = 'F' AND d.pid = g.pid GROUP BY g.diag"
)
FEMALE_DIAGNOSIS_PAIRS = "SELECT d.pid, g.diag FROM demographics d, diagnosis g WHERE d.sex = 'F' AND d.pid = g.pid"
FEMALE_DIAGNOSES_RESULT = [("flu", 1), ("infection", 2)]


def running_example_catalog() -> Catalog:
    return load_catalog(RUNNING_EXAMPLE_CATALOG)


def running_example_shards(hosts: int = 1) -> Dict[int, List[RelationShard]]:
    """Rows dealt round-robin over the hosts."""
    return split_rows(running_example_catalog(), {"demographics": DEMOGRAPHICS_ROWS, "diagnosis": DIAGNOSIS_ROWS}, hosts)


def all_shards(shards: Dict[int, List[RelationShard]]) -> List[RelationShard]:
    return [s for host in sorted(shards) for s in shards[host]]


def running_example_view() -> AnonymizationMap:
    """Hand-built 2-anonymous view: pids 1-4, 11-12 and 21-22 in three groups, one group per sex and diagnosis."""
    partitions = {
        "pid": DomainPartition("pid", [[1, 2, 3, 4], [11, 12], [21, 22]]),
        "sex": DomainPartition("sex", [["F"], ["M"]]),
        "diag": DomainPartition("diag", [["flu"], ["infection"], ["cold"]]),
    }
    key_domains = {"demographics": ("pid", "sex"), "diagnosis": ("pid", "diag")}
    rows = {"demographics": DEMOGRAPHICS_ROWS, "diagnosis": DIAGNOSIS_ROWS}
    class_of = {
        relation: {row: tuple(partitions[d].group_of(v) for d, v in zip(key_domains[relation], row)) for row in rows[relation]}
        for relation in rows
    }
    return AnonymizationMap(
        k=2,
        c=ControlFlowSet.of([("demographics", "pid"), ("demographics", "sex"), ("diagnosis", "pid"), ("diagnosis", "diag")]),
        partitions=partitions,
        key_attrs={"demographics": ("pid", "sex"), "diagnosis": ("pid", "diag")},
        key_domains=key_domains,
        class_of=class_of,
    )


RANDOM_CATALOG = {
    "relations": [
        {
            "name": name,
            "entity_attr": "key",
            "attributes": [
                {"name": "key", "kind": "integer", "policy": "kanon", "domain": "key"},
                {"name": "grp", "kind": "text", "policy": "kanon", "domain": "grp"},
                {"name": "val", "kind": "integer", "policy": "public"},
            ],
        }
        for name in ("r0", "r1", "r2", "r3")
    ]
}

RANDOM_QUERIES = [
    "SELECT r0.key, r0.val FROM r0 WHERE r0.grp = 'a'",
    "SELECT r0.grp, COUNT(*) AS cnt FROM r0, r1 WHERE r0.key = r1.key GROUP BY r0.grp",
    "SELECT r1.grp, SUM(r0.val) AS total FROM r0, r1, r2 WHERE r0.key = r1.key AND r1.key = r2.key GROUP BY r1.grp",
    "SELECT r2.grp, AVG(r2.val) AS mean FROM r1, r2 WHERE r1.key = r2.key AND r2.grp IN ('a', 'b') GROUP BY r2.grp",
    "SELECT r0.grp, MAX(r3.val) AS top FROM r0, r1, r2, r3 "
    "WHERE r0.key = r1.key AND r0.key = r2.key AND r0.key = r3.key AND r1.val < 5 GROUP BY r0.grp",
    "SELECT r1.key, r2.val FROM r1, r2 WHERE r1.key = r2.key AND r1.val >= 3 ORDER BY r2.val DESC LIMIT 5",
]

RANDOM_KS = (2, 3, 5, 10)


@dataclass
class RandomInstance:
    catalog: Catalog
    shards: Dict[int, List[RelationShard]]
    sql: str
    k: int
    hosts: int


def random_instance(rng: np.random.Generator, queries: Sequence[str] = RANDOM_QUERIES, min_rows: int = 8, max_rows: int = 16) -> RandomInstance:
    """Four small relations over shared key and grp domains, split over 1 to 4 hosts."""

    catalog = load_catalog(json.dumps(RANDOM_CATALOG))
    rows = {}
    for relation in catalog.relations:
        n = int(rng.integers(min_rows, max_rows + 1))
        rows[relation.name] = [
            (int(rng.integers(0, 6)), "abc"[int(rng.integers(0, 3))], int(rng.integers(0, 10)))
            for _ in range(n)
        ]
    hosts = int(rng.integers(1, 5))
    return RandomInstance(
        catalog=catalog,
        shards=split_rows(catalog, rows, hosts),
        sql=queries[int(rng.integers(len(queries)))],
        k=int(RANDOM_KS[int(rng.integers(len(RANDOM_KS)))]),
        hosts=hosts,
    )


def histograms_for(shards: Sequence[RelationShard], c: ControlFlowSet, catalog: Catalog) -> Dict[str, Histogram]:
    """Merged histogram per relation of C, keyed on its C attributes in catalog order."""
    num_hosts = max(s.owner for s in shards) + 1
    out = {}
    for relation in c.relations:
        key_attrs = c.for_relation(relation, catalog)
        parts = [build_histogram(s, key_attrs, catalog, num_hosts) for s in shards if s.relation == relation]
        out[relation] = merge_histograms(parts)
    return out
