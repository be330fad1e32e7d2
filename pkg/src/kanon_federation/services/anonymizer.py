import hashlib
import itertools
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sortedcontainers import SortedList

from kanon_federation.domain.anonymization import (
    AnonymizationMap,
    ClassKey,
    DomainPartition,
    EquivalenceClass,
    Histogram,
    PartitionAssignment,
    ValueVector,
    ViewStats,
    Violation,
    class_id_for,
    frequency_order_key,
)
from kanon_federation.domain.catalog import Catalog, RelationShard, Scalar
from kanon_federation.domain.constants import *
from kanon_federation.domain.control_flow import ControlFlowSet
from kanon_federation.exceptions import SchemaMismatch, UnmappedValue, ValidationError, ViewInfeasible

logger = logging.getLogger(__name__)


def build_histogram(shard: RelationShard, key_attrs: Sequence[str], catalog: Catalog, num_hosts: Optional[int] = None) -> Histogram:
    """Count one host's value vectors over the given attributes.

    Parameters:
        shard (RelationShard): This host's tuples
        key_attrs (Sequence[str]): Attributes of the value vectors
        catalog (Catalog): Catalog resolving attribute positions
        num_hosts (int): Length of the count vectors, at least owner + 1

    Raises:
        UnknownAttribute: if a key attribute is not in the relation
    """
    relation = catalog.relation(shard.relation)
    positions = [relation.index_of(a) for a in key_attrs]
    num_hosts = max(num_hosts or 0, shard.owner + 1)
    counts: Dict[ValueVector, List[int]] = {}
    for t in shard.tuples:
        vector = tuple(t.values[p] for p in positions)
        if vector not in counts:
            counts[vector] = [0] * num_hosts
        counts[vector][shard.owner] += 1
    return Histogram(relation=shard.relation, key_attrs=tuple(key_attrs), num_hosts=num_hosts, counts=counts)


def merge_histograms(parts: Sequence[Histogram]) -> Histogram:
    """Sum per-host count vectors of histograms of the same relation and key attributes.

    Raises:
        SchemaMismatch: if the parts disagree on relation or key attributes
    """
    if not parts:
        raise ValidationError("merge_histograms needs at least one histogram")
    first = parts[0]
    num_hosts = max(p.num_hosts for p in parts)
    counts: Dict[ValueVector, List[int]] = {}
    for part in parts:
        if part.relation != first.relation or part.key_attrs != first.key_attrs:
            raise SchemaMismatch(f"Cannot merge histogram of {part.relation}{list(part.key_attrs)} into {first.relation}{list(first.key_attrs)}")
        for vector, host_counts in part.counts.items():
            merged = counts.setdefault(vector, [0] * num_hosts)
            for host, count in enumerate(host_counts):
                merged[host] += count
    return Histogram(relation=first.relation, key_attrs=first.key_attrs, num_hosts=num_hosts, counts=counts)


def violates(host_counts: np.ndarray, k: int) -> bool:
    """True when a class is smaller than k or some host's subtraction leaves 1..k-1 tuples."""
    total = int(host_counts.sum())
    if total < k:
        return True
    remainder = total - host_counts
    return bool(np.any((remainder > 0) & (remainder < k)))


def check_feasible(histograms: Dict[str, Histogram], k: int) -> None:
    """Raise ViewInfeasible when even one class per relation breaks the constraints."""
    for relation, histogram in histograms.items():
        host_counts = np.zeros(histogram.num_hosts, dtype=np.int64)
        for counts in histogram.counts.values():
            host_counts += np.asarray(counts, dtype=np.int64)
        total = int(host_counts.sum())
        if 0 < total < k:
            raise ViewInfeasible(f"Relation {relation} has {total} tuples, fewer than k={k}", relation=relation)
        for host, count in enumerate(host_counts):
            remainder = total - int(count)
            if 0 < remainder < k:
                raise ViewInfeasible(
                    f"Relation {relation}: removing host {host} leaves {remainder} tuples, fewer than k={k}",
                    relation=relation,
                    host=host,
                )


class _ViewBuilder:
    """Mutable state of the greedy class formation over shared domain partitions."""

    def __init__(self, histograms: Dict[str, Histogram], k: int, catalog: Catalog, blocks: Dict[str, List[List[Scalar]]]):
        self.k = k
        self.relations = [r.name for r in catalog.relations if r.name in histograms]
        self.key_attrs = {r: histograms[r].key_attrs for r in self.relations}
        self.key_domains = {r: tuple(catalog.domain_of(r, a) for a in self.key_attrs[r]) for r in self.relations}
        num_hosts = max((h.num_hosts for h in histograms.values()), default=1)
        self.rows: Dict[str, List[Tuple[ValueVector, np.ndarray]]] = {}
        for r in self.relations:
            padded = []
            for vector, counts in histograms[r].rows:
                array = np.zeros(num_hosts, dtype=np.int64)
                array[:len(counts)] = counts
                padded.append((vector, array))
            self.rows[r] = padded
        self.blocks = {d: [list(b) for b in bs] for d, bs in blocks.items()}
        self.groups = {d: self._group_index(bs) for d, bs in self.blocks.items()}
        self.merge_steps = 0
        self.classes = {r: self._classes(r, self.groups) for r in self.relations}

    @staticmethod
    def _group_index(blocks: List[List[Scalar]]) -> Dict[Scalar, int]:
        return {v: g for g, block in enumerate(blocks) for v in block}

    def _classes(self, relation: str, groups: Dict[str, Dict[Scalar, int]]) -> Dict[ClassKey, np.ndarray]:
        domains = self.key_domains[relation]
        out: Dict[ClassKey, np.ndarray] = {}
        for vector, counts in self.rows[relation]:
            try:
                key = tuple(groups[d][v] for d, v in zip(domains, vector))
            except KeyError:
                raise UnmappedValue(f"Value vector {vector} of relation {relation} is not in the domain partitions")
            if key in out:
                out[key] = out[key] + counts
            else:
                out[key] = counts.copy()
        return out

    def _merged_groups(self, domain: str, group: int) -> Dict[str, Dict[Scalar, int]]:
        """Group indexes after merging block `group` with block `group + 1` of a domain."""
        merged = dict(self.groups)
        merged[domain] = {v: (g if g <= group else g - 1) for v, g in self.groups[domain].items()}
        return merged

    def violations(self) -> SortedList:
        """Violating classes ordered by (size, relation position, class key)."""
        out = SortedList()
        for position, r in enumerate(self.relations):
            for key, counts in self.classes[r].items():
                if violates(counts, self.k):
                    out.add((int(counts.sum()), position, key))
        return out

    def _score(self, domain: str, group: int, attr_position: int, direction: int) -> Tuple:
        groups = self._merged_groups(domain, group)
        max_size = 0
        affected = 0
        for r in self.relations:
            if domain not in self.key_domains[r]:
                classes = self.classes[r]
            else:
                classes = self._classes(r, groups)
                positions = [i for i, d in enumerate(self.key_domains[r]) if d == domain]
                affected += sum(int(c.sum()) for key, c in classes.items() if any(key[i] == group for i in positions))
            if classes:
                max_size = max(max_size, max(int(c.sum()) for c in classes.values()))
        return (max_size, affected, attr_position, direction)

    def merge(self, domain: str, group: int) -> None:
        self.blocks[domain][group] = self.blocks[domain][group] + self.blocks[domain][group + 1]
        del self.blocks[domain][group + 1]
        self.groups[domain] = self._group_index(self.blocks[domain])
        for r in self.relations:
            if domain in self.key_domains[r]:
                self.classes[r] = self._classes(r, self.groups)
        self.merge_steps += 1

    def run(self) -> None:
        while True:
            pending = self.violations()
            if not pending:
                return
            size, position, key = pending[0]
            relation = self.relations[position]
            candidates = []
            for attr_position, (domain, group) in enumerate(zip(self.key_domains[relation], key)):
                if group > 0:
                    candidates.append((self._score(domain, group - 1, attr_position, 0), domain, group - 1))
                if group + 1 < len(self.blocks[domain]):
                    candidates.append((self._score(domain, group, attr_position, 1), domain, group))
            if not candidates:
                # only reachable when the whole relation is one class, which check_feasible rules out
                raise ViewInfeasible(f"Class {class_id_for(relation, key)} of size {size} cannot be merged further", relation=relation)
            _, domain, group = min(candidates)
            logger.debug(f"Merging {domain} groups {group} and {group + 1} to fix class {class_id_for(relation, key)} of size {size}")
            self.merge(domain, group)

    def to_map(self, k: int, seed: int, strategy: str) -> AnonymizationMap:
        class_of: Dict[str, Dict[ValueVector, ClassKey]] = {}
        for r in self.relations:
            domains = self.key_domains[r]
            class_of[r] = {vector: tuple(self.groups[d][v] for d, v in zip(domains, vector)) for vector, _ in self.rows[r]}
        touched = {d for r in self.relations for d in self.key_domains[r]}
        return AnonymizationMap(
            k=k,
            c=ControlFlowSet.of((r, a) for r in self.relations for a in self.key_attrs[r]),
            partitions={d: DomainPartition(domain=d, blocks=[list(b) for b in self.blocks[d]]) for d in sorted(touched)},
            key_attrs=dict(self.key_attrs),
            key_domains=dict(self.key_domains),
            class_of=class_of,
            hash_seed=seed,
            strategy=strategy,
        )

    def stats(self, strategy: str) -> ViewStats:
        return ViewStats(
            strategy=strategy,
            histogram_rows={r: len(self.rows[r]) for r in self.relations},
            merge_steps=self.merge_steps,
            classes={r: len(self.classes[r]) for r in self.relations},
            max_class_size=max((int(c.sum()) for r in self.relations for c in self.classes[r].values()), default=0),
        )


def domain_frequency_order(histograms: Dict[str, Histogram], catalog: Catalog) -> Dict[str, List[Scalar]]:
    """Values of every touched domain by descending total frequency across relations, then value."""
    frequency: Dict[str, Dict[Scalar, int]] = {}
    for relation, histogram in histograms.items():
        domains = [catalog.domain_of(relation, a) for a in histogram.key_attrs]
        for vector, counts in histogram.counts.items():
            total = sum(counts)
            for domain, value in zip(domains, vector):
                frequency.setdefault(domain, {})
                frequency[domain][value] = frequency[domain].get(value, 0) + total
    return {
        domain: sorted(values, key=lambda v: frequency_order_key(v, values[v]))
        for domain, values in frequency.items()
    }


def _sweep_blocks(histograms: Dict[str, Histogram], catalog: Catalog, order: Dict[str, List[Scalar]], k: int) -> Dict[str, List[List[Scalar]]]:
    """Close a block once every relation carrying the domain with tuples in it holds at least k."""
    blocks: Dict[str, List[List[Scalar]]] = {}
    for domain, values in order.items():
        per_relation: Dict[str, Dict[Scalar, int]] = {}
        for relation, histogram in histograms.items():
            positions = [i for i, a in enumerate(histogram.key_attrs) if catalog.domain_of(relation, a) == domain]
            if not positions:
                continue
            counts: Dict[Scalar, int] = {}
            for vector, host_counts in histogram.counts.items():
                value = vector[positions[0]]
                counts[value] = counts.get(value, 0) + sum(host_counts)
            per_relation[relation] = counts
        domain_blocks: List[List[Scalar]] = []
        current: List[Scalar] = []
        sizes = {r: 0 for r in per_relation}
        for value in values:
            current.append(value)
            for r, counts in per_relation.items():
                sizes[r] += counts.get(value, 0)
            if all(size == 0 or size >= k for size in sizes.values()) and any(sizes.values()):
                domain_blocks.append(current)
                current = []
                sizes = {r: 0 for r in per_relation}
        if current:
            if domain_blocks:
                domain_blocks[-1].extend(current)
            else:
                domain_blocks.append(current)
        blocks[domain] = domain_blocks
    return blocks


def generate_view(
    histograms: Dict[str, Histogram],
    k: int,
    catalog: Catalog,
    seed: int = DEFAULT_SEED,
    strategy: str = VIEW_STRATEGY_GREEDY,
) -> Tuple[AnonymizationMap, ViewStats]:
    """Build a federated k-anonymous processing view from merged histograms.

    Every value of a shared domain starts as its own group (greedy) or in a sweep block
    (sorted_sweep); violating classes are then fixed smallest first by merging one of their
    groups with a frequency-adjacent group, choosing the merge with the smallest resulting
    maximum class size.

    Parameters:
        histograms (Dict[str, Histogram]): Merged histogram per relation, keyed on c_i in catalog order
        k (int): Anonymity parameter
        catalog (Catalog): Catalog giving each attribute's domain
        seed (int): Partition hash seed recorded in the map
        strategy (str): greedy or sorted_sweep

    Returns:
        Tuple[AnonymizationMap, ViewStats]: The view and counters describing its generation

    Raises:
        ViewInfeasible: naming the relation and host that make the federated constraint unsatisfiable
    """
    if k < 1:
        raise ValidationError(f"k must be positive, got {k}")
    if strategy not in VIEW_STRATEGIES:
        raise ValidationError(f"Unknown view strategy {strategy}, expected one of {', '.join(VIEW_STRATEGIES)}")
    check_feasible(histograms, k)
    order = domain_frequency_order(histograms, catalog)
    if strategy == VIEW_STRATEGY_SORTED_SWEEP:
        blocks = _sweep_blocks(histograms, catalog, order, k)
    else:
        blocks = {domain: [[v] for v in values] for domain, values in order.items()}
    builder = _ViewBuilder(histograms, k, catalog, blocks)
    builder.run()
    view = builder.to_map(k, seed, strategy)
    stats = builder.stats(strategy)
    logger.info(f"Generated {strategy} view at k={k}: {stats.classes} classes after {stats.merge_steps} merges, max class size {stats.max_class_size}")
    return view, stats


def merge_for_k(view: AnonymizationMap, histograms: Dict[str, Histogram], k_new: int, catalog: Catalog) -> Tuple[AnonymizationMap, ViewStats]:
    """Coarsen a view until it satisfies a larger k; every old class ends up inside one new class.

    Raises:
        ValidationError: if k_new does not exceed the view's k
        ViewInfeasible: as in generate_view
    """
    if k_new <= view.k:
        raise ValidationError(f"merge_for_k needs k_new > {view.k}, got {k_new}")
    check_feasible(histograms, k_new)
    blocks = {domain: [list(b) for b in partition.blocks] for domain, partition in view.partitions.items()}
    builder = _ViewBuilder({r: histograms[r] for r in view.relations}, k_new, catalog, blocks)
    builder.run()
    merged = builder.to_map(k_new, view.hash_seed, view.strategy)
    stats = builder.stats(view.strategy)
    logger.info(f"Merged view from k={view.k} to k={k_new} in {stats.merge_steps} merges")
    return merged, stats


def _class_order(view: AnonymizationMap, relation: str, key: ClassKey) -> Tuple:
    return (view.relations.index(relation), key)


def apply_view(shard: RelationShard, view: AnonymizationMap, catalog: Catalog) -> List[EquivalenceClass]:
    """Route a shard's tuples into the view's equivalence classes.

    Returns:
        List[EquivalenceClass]: Classes in class-key order, tuples in input order

    Raises:
        UnmappedValue: if a tuple's control flow values are absent from the map
    """
    if not view.covers(shard.relation):
        raise UnmappedValue(f"Relation {shard.relation} is not covered by the anonymization map")
    relation = catalog.relation(shard.relation)
    attrs = view.key_attrs[shard.relation]
    positions = [relation.index_of(a) for a in attrs]
    classes: Dict[ClassKey, EquivalenceClass] = {}
    for t in shard.tuples:
        vector = tuple(t.values[p] for p in positions)
        key = view.class_key(shard.relation, vector)
        if key not in classes:
            class_id = class_id_for(shard.relation, key)
            classes[key] = EquivalenceClass(
                id=class_id,
                relation=shard.relation,
                keys={f"{shard.relation}.{a}": g for a, g in zip(attrs, key)},
                order=_class_order(view, shard.relation, key),
            )
        classes[key].tuples.append(t)
        classes[key].covered_values.add(vector)
    out = [classes[key] for key in sorted(classes)]
    for c in out:
        c.lineage = {c.id: len(c.tuples)}
    return out


def combine_class_parts(parts: Sequence[EquivalenceClass]) -> EquivalenceClass:
    """Concatenate the per-host parts of one class in the given order."""
    first = parts[0]
    combined = first.derive([t for p in parts for t in p.tuples])
    for part in parts[1:]:
        combined.covered_values.update(part.covered_values)
    combined.lineage = {first.id: len(combined.tuples)}
    return combined


def materialize_view(shards: Sequence[RelationShard], view: AnonymizationMap, catalog: Catalog) -> Dict[str, List[EquivalenceClass]]:
    """Per relation, the view's classes over all hosts' shards, parts combined in host order."""
    parts: Dict[str, Dict[str, List[EquivalenceClass]]] = {}
    for shard in sorted(shards, key=lambda s: (s.relation, s.owner)):
        if not view.covers(shard.relation):
            continue
        for c in apply_view(shard, view, catalog):
            parts.setdefault(shard.relation, {}).setdefault(c.id, []).append(c)
    out: Dict[str, List[EquivalenceClass]] = {}
    for relation, by_id in parts.items():
        out[relation] = sorted((combine_class_parts(p) for p in by_id.values()), key=lambda c: c.order)
    return out


def check_view(view: AnonymizationMap, shards: Sequence[RelationShard], k: int, catalog: Catalog) -> List[Violation]:
    """Independently validate a view against the data.

    Checks class size, the subtract-one-host rule for every (class, host) and, when a relation
    has at most three control flow attributes, every projection of its class-id-rewritten tuples.

    Returns:
        List[Violation]: Empty when the view is valid at k
    """
    hosts = sorted({s.owner for s in shards})
    classes = materialize_view(shards, view, catalog)
    violations: List[Violation] = []
    for relation in view.relations:
        relation_classes = classes.get(relation, [])
        for c in relation_classes:
            if c.size < k:
                violations.append(Violation(relation=relation, class_id=c.id, kind=VIOLATION_SIZE))
            counts = c.host_counts()
            for host in hosts:
                remainder = c.size - counts.get(host, 0)
                if 0 < remainder < k:
                    violations.append(Violation(relation=relation, class_id=c.id, kind=VIOLATION_FEDERATED, host=host))

        attrs = view.key_attrs[relation]
        if len(attrs) > MAX_ENUMERATED_PROJECTION_ATTRS or not relation_classes:
            continue
        keys = [tuple(c.keys[f"{relation}.{a}"] for a in attrs) for c in relation_classes]
        for width in range(len(attrs)):
            for subset in itertools.combinations(range(len(attrs)), width):
                projected: Dict[Tuple, int] = {}
                for key, c in zip(keys, relation_classes):
                    value = tuple(key[i] for i in subset)
                    projected[value] = projected.get(value, 0) + c.size
                for value, size in sorted(projected.items()):
                    if size < k:
                        label = ",".join(f"{attrs[i]}={g}" for i, g in zip(subset, value)) or "*"
                        violations.append(Violation(relation=relation, class_id=f"{relation}:[{label}]", kind=VIOLATION_PROJECTION))
    if violations:
        logger.warning(f"View check at k={k} found {len(violations)} violations")
    return violations


def partition_host(class_id: str, seed: int, hosts: Sequence[int]) -> int:
    """Seeded 64-bit keyed hash of the class id bytes, mod host count."""
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "big")
    digest = hashlib.blake2b(class_id.encode("utf-8"), digest_size=8, key=key).digest()
    return hosts[int.from_bytes(digest, "big") % len(hosts)]


def assign_partitions(view: AnonymizationMap, hosts: Sequence[int]) -> PartitionAssignment:
    """Assign every class of the view to the data owner that will process it."""
    if not hosts:
        raise ValidationError("assign_partitions needs at least one host")
    assignment = PartitionAssignment(hosts=list(hosts), seed=view.hash_seed)
    for class_id in view.class_ids():
        assignment[class_id] = partition_host(class_id, view.hash_seed, hosts)
    return assignment
