import itertools
import json
import unittest
from dataclasses import replace

import numpy as np

from kanon_federation.bench.generators import gen_uniform_join
from kanon_federation.domain.catalog import RelationShard
from kanon_federation.domain.constants import *
from kanon_federation.domain.control_flow import ControlFlowSet
from kanon_federation.exceptions import SchemaMismatch, UnmappedValue, ValidationError, ViewInfeasible
from kanon_federation.integrations.storage.mappers.anonymization_map_mapper import AnonymizationMapMapper, dump_violations
from kanon_federation.services.anonymizer import (
    apply_view,
    assign_partitions,
    build_histogram,
    check_feasible,
    check_view,
    generate_view,
    materialize_view,
    merge_for_k,
    merge_histograms,
    partition_host,
    violates,
)
from kanon_federation.services.planner import derive_control_flow
from kanon_federation.services.query_parser import parse_query
from kanon_federation.services.schema import load_catalog
from tests.fixtures import all_shards, histograms_for, random_instance, running_example_catalog, running_example_shards, running_example_view

RUNNING_EXAMPLE_C = ControlFlowSet.of([
    ("demographics", "pid"), ("demographics", "sex"), ("diagnosis", "pid"), ("diagnosis", "diag"),
])


SINGLE_RELATION_CATALOG = {
    "relations": [
        {"name": "t", "entity_attr": "x", "attributes": [{"name": "x", "kind": "integer", "policy": "kanon", "domain": "x"}]},
    ]
}


def host_splits(n, hosts):
    """Every way of spreading n tuples over the given number of hosts."""
    return [split for split in itertools.product(range(n + 1), repeat=hosts) if sum(split) == n]


def partition_exists(counts, k, memo=None):
    """Search every split of a per-host count vector into classes that satisfy the federated rule."""
    memo = {} if memo is None else memo
    if not any(counts):
        return True
    if counts not in memo:
        memo[counts] = False
        for part in itertools.product(*(range(c + 1) for c in counts)):
            if not any(part) or violates(np.array(part), k):
                continue
            if partition_exists(tuple(c - p for c, p in zip(counts, part)), k, memo):
                memo[counts] = True
                break
    return memo[counts]


def coarsened_violations(classes, attrs, hosts, k):
    """Group classes by their group ids on attrs only and report groups breaking size or host removal."""
    sizes, host_counts = {}, {}
    for c in classes:
        group = tuple(c.keys[a] for a in attrs)
        sizes[group] = sizes.get(group, 0) + c.size
        for host, count in c.host_counts().items():
            host_counts.setdefault(group, {})
            host_counts[group][host] = host_counts[group].get(host, 0) + count
    bad = []
    for group, size in sizes.items():
        if size < k or any(0 < size - host_counts[group].get(h, 0) < k for h in hosts):
            bad.append(group)
    return bad


class TestHistograms(unittest.TestCase):
    """Test cases for per-host histograms."""

    def setUp(self):
        self.catalog = running_example_catalog()
        self.shards = running_example_shards(2)

    def diagnosis_shard(self, host):
        return [s for s in self.shards[host] if s.relation == "diagnosis"][0]

    def test_counts_land_in_owner_slot(self):
        """Each host counts its own tuples in its own slot."""
        histogram = build_histogram(self.diagnosis_shard(1), ("diag",), self.catalog, 2)
        self.assertEqual(histogram.counts[("flu",)], [0, 1])
        self.assertEqual(histogram.total, 3)

    def test_merge_sums_hosts(self):
        """Merging keeps one count per host and orders rows by total then value."""
        merged = merge_histograms([build_histogram(self.diagnosis_shard(h), ("diag",), self.catalog, 2) for h in (0, 1)])
        self.assertEqual(merged.rows, [(("cold",), (1, 1)), (("flu",), (1, 1)), (("infection",), (1, 1))])

    def test_merge_rejects_other_relation(self):
        """Histograms of different relations do not merge."""
        demographics = [s for s in self.shards[0] if s.relation == "demographics"][0]
        with self.assertRaises(SchemaMismatch):
            merge_histograms([
                build_histogram(self.diagnosis_shard(0), ("pid",), self.catalog, 2),
                build_histogram(demographics, ("pid",), self.catalog, 2),
            ])


class TestViolates(unittest.TestCase):
    """Test cases for the federated class constraint."""

    def test_small_class(self):
        self.assertTrue(violates(np.array([1, 1]), 3))

    def test_host_subtraction(self):
        """Removing a host may not leave between 1 and k-1 tuples."""
        self.assertTrue(violates(np.array([2, 1]), 3))
        self.assertFalse(violates(np.array([3, 0]), 3))
        self.assertFalse(violates(np.array([3, 3]), 3))


class TestGenerateView(unittest.TestCase):
    """Test cases for view generation, checking and merging."""

    def setUp(self):
        self.catalog = running_example_catalog()

    def generate(self, hosts, k, strategy=VIEW_STRATEGY_GREEDY):
        shards = all_shards(running_example_shards(hosts))
        view, stats = generate_view(histograms_for(shards, RUNNING_EXAMPLE_C, self.catalog), k, self.catalog, strategy=strategy)
        return shards, view, stats

    def test_single_host_view_is_valid(self):
        """A generated view passes the independent check at its k."""
        shards, view, stats = self.generate(1, 2)
        self.assertEqual(check_view(view, shards, 2, self.catalog), [])
        self.assertEqual(view.c, RUNNING_EXAMPLE_C)
        self.assertGreaterEqual(stats.max_class_size, 2)

    def test_two_host_views_are_valid(self):
        """With two hosts the federated constraint holds at k=2 and k=3."""
        for k in (2, 3):
            shards, view, _ = self.generate(2, k)
            self.assertEqual(check_view(view, shards, k, self.catalog), [], f"k={k}")

    def test_sorted_sweep_view_is_valid(self):
        """The sweep strategy also yields a valid view."""
        shards, view, _ = self.generate(1, 2, VIEW_STRATEGY_SORTED_SWEEP)
        self.assertEqual(view.strategy, VIEW_STRATEGY_SORTED_SWEEP)
        self.assertEqual(check_view(view, shards, 2, self.catalog), [])

    def test_generation_is_deterministic(self):
        """Equal inputs produce byte-identical maps."""
        mapper = AnonymizationMapMapper()
        self.assertEqual(mapper.dumps(self.generate(2, 2)[1]), mapper.dumps(self.generate(2, 2)[1]))

    def test_infeasible(self):
        """Six tuples cannot form a class of ten."""
        with self.assertRaises(ViewInfeasible) as ctx:
            self.generate(1, 10)
        self.assertEqual(ctx.exception.relation, "demographics")

    def test_bad_arguments(self):
        """k must be positive and the strategy known."""
        with self.assertRaises(ValidationError):
            self.generate(1, 0)
        with self.assertRaises(ValidationError):
            self.generate(1, 2, "random")

    def test_sorted_sweep_forms_exact_classes(self):
        """Unique keys on both sides are cut into classes of exactly k keys."""
        dataset = gen_uniform_join(20)
        c = ControlFlowSet.of([("r", "r_key"), ("s", "s_key")])
        shards = all_shards(dataset.shards)
        view, stats = generate_view(histograms_for(shards, c, dataset.catalog), 5, dataset.catalog, strategy=VIEW_STRATEGY_SORTED_SWEEP)
        self.assertEqual(stats.classes, {"r": 4, "s": 4})
        sizes = [c.size for classes in materialize_view(shards, view, dataset.catalog).values() for c in classes]
        self.assertEqual(sizes, [5] * 8)


class TestFeasibility(unittest.TestCase):
    """View generation fails exactly when no class split of the host counts is valid."""

    def setUp(self):
        self.catalog = load_catalog(json.dumps(SINGLE_RELATION_CATALOG))
        self.c = ControlFlowSet.of([("t", "x")])

    def test_every_small_host_split(self):
        checked = 0
        for n in range(1, 13):
            for hosts in (1, 2, 3):
                for split in host_splits(n, hosts):
                    shards, values = [], itertools.count()
                    for host, count in enumerate(split):
                        shards.append(RelationShard.from_rows("t", host, [(next(values) % 3,) for _ in range(count)]))
                    histograms = histograms_for(shards, self.c, self.catalog)
                    for k in range(1, 6):
                        label = f"split {split} at k={k}"
                        if partition_exists(split, k):
                            view, _ = generate_view(histograms, k, self.catalog)
                            self.assertEqual(check_view(view, shards, k, self.catalog), [], label)
                        else:
                            with self.assertRaises(ViewInfeasible, msg=label):
                                check_feasible(histograms, k)
                            with self.assertRaises(ViewInfeasible, msg=label):
                                generate_view(histograms, k, self.catalog)
                        checked += 1
        self.assertGreater(checked, 2000)

    def test_infeasible_split_names_host(self):
        """Five tuples on host 0 and one on host 1 cannot survive removing host 0 at k=2."""
        shards = [RelationShard.from_rows("t", 0, [(i,) for i in range(5)]), RelationShard.from_rows("t", 1, [(9,)])]
        with self.assertRaises(ViewInfeasible) as ctx:
            check_feasible(histograms_for(shards, self.c, self.catalog), 2)
        self.assertEqual((ctx.exception.relation, ctx.exception.host), ("t", 0))


class TestCoarserControlFlow(unittest.TestCase):
    """A view valid for C stays valid when a query only observes a subset of C."""

    def test_subsets_of_c_stay_valid(self):
        checked = 0
        for seed in range(40):
            instance = random_instance(np.random.default_rng(seed))
            plan = parse_query(instance.sql, instance.catalog)
            c = derive_control_flow(plan, instance.catalog)
            if not c:
                continue
            shards = all_shards(instance.shards)
            try:
                view, _ = generate_view(histograms_for(shards, c, instance.catalog), instance.k, instance.catalog)
            except ViewInfeasible:
                continue
            classes = materialize_view(shards, view, instance.catalog)
            hosts = sorted({s.owner for s in shards})
            entries = list(c)
            for n in range(len(entries) + 1):
                for subset in itertools.combinations(entries, n):
                    for relation, relation_classes in classes.items():
                        attrs = [f"{r}.{a}" for r, a in subset if r == relation]
                        bad = coarsened_violations(relation_classes, attrs, hosts, instance.k)
                        self.assertEqual(bad, [], f"seed {seed}, {relation} on {attrs}")
                        checked += 1
        self.assertGreater(checked, 0)


class TestMergeForK(unittest.TestCase):
    """Test cases for strengthening a view to a larger k."""

    def setUp(self):
        self.catalog = running_example_catalog()
        self.shards = all_shards(running_example_shards())
        self.view = running_example_view()
        self.histograms = histograms_for(self.shards, self.view.c, self.catalog)

    def test_merged_view_is_valid(self):
        """The merged view passes the check at the new k."""
        merged, _ = merge_for_k(self.view, self.histograms, 4, self.catalog)
        self.assertEqual(merged.k, 4)
        self.assertEqual(check_view(merged, self.shards, 4, self.catalog), [])

    def test_old_classes_stay_together(self):
        """Vectors sharing a class before merging share one after."""
        merged, _ = merge_for_k(self.view, self.histograms, 4, self.catalog)
        for relation in self.view.relations:
            for a, key_a in self.view.class_of[relation].items():
                for b, key_b in self.view.class_of[relation].items():
                    if key_a == key_b:
                        self.assertEqual(merged.class_key(relation, a), merged.class_key(relation, b))

    def test_requires_larger_k(self):
        """merge_for_k only strengthens."""
        with self.assertRaises(ValidationError):
            merge_for_k(self.view, self.histograms, 2, self.catalog)


class TestCheckView(unittest.TestCase):
    """Test cases for the independent view checker."""

    def setUp(self):
        self.catalog = running_example_catalog()
        self.view = running_example_view()

    def test_hand_view_is_valid(self):
        """The hand-built view is 2-anonymous on one host."""
        self.assertEqual(check_view(self.view, all_shards(running_example_shards()), 2, self.catalog), [])

    def test_size_violations(self):
        """Classes of two tuples violate k=3."""
        violations = check_view(self.view, all_shards(running_example_shards()), 3, self.catalog)
        self.assertIn(VIOLATION_SIZE, {v.kind for v in violations})
        self.assertIn('"kind":"size"', dump_violations(violations))

    def test_federated_violations(self):
        """Split over two hosts, a class of two leaves one tuple when either host is removed."""
        violations = check_view(self.view, all_shards(running_example_shards(2)), 2, self.catalog)
        federated = [v for v in violations if v.kind == VIOLATION_FEDERATED]
        self.assertIn("demographics:0.0", {v.class_id for v in federated})
        self.assertEqual({v.host for v in federated}, {0, 1})


class TestApplyView(unittest.TestCase):
    """Test cases for routing tuples into classes."""

    def setUp(self):
        self.catalog = running_example_catalog()
        self.view = running_example_view()

    def test_classes_in_key_order(self):
        """Classes come out in class key order with their group ids."""
        shard = [s for s in running_example_shards()[0] if s.relation == "demographics"][0]
        classes = apply_view(shard, self.view, self.catalog)
        self.assertEqual([c.id for c in classes], ["demographics:0.0", "demographics:0.1", "demographics:1.0"])
        self.assertEqual(classes[2].keys, {"demographics.pid": 1, "demographics.sex": 0})

    def test_unmapped_value(self):
        """A value vector outside the map is rejected."""
        shard = RelationShard.from_rows("demographics", 0, [(99, "F")])
        with self.assertRaises(UnmappedValue):
            apply_view(shard, self.view, self.catalog)

    def test_map_file_round_trip(self):
        """A view written to disk loads back unchanged."""
        mapper = AnonymizationMapMapper()
        self.assertEqual(mapper.loads(mapper.dumps(self.view)), self.view)


class TestAssignPartitions(unittest.TestCase):
    """Test cases for class placement."""

    def test_deterministic_and_complete(self):
        """Every class gets a host from the list and the assignment repeats for the same seed."""
        view = running_example_view()
        first = assign_partitions(view, [0, 1, 2])
        self.assertEqual(first, assign_partitions(view, [0, 1, 2]))
        self.assertEqual(set(first), set(view.class_ids()))
        self.assertTrue(set(first.values()) <= {0, 1, 2})

    def test_reference_hosts(self):
        """Seed 42 over four hosts places a on host 0 and b and c on host 3."""
        self.assertEqual([partition_host(i, 42, [0, 1, 2, 3]) for i in ("a", "b", "c")], [0, 3, 3])
        self.assertEqual([partition_host(i, 43, [0, 1, 2, 3]) for i in ("a", "b", "c")], [3, 1, 0])

    def test_seed_changes_assignment(self):
        view = running_example_view()
        demographics = ["demographics:0.0", "demographics:0.1", "demographics:1.0"]
        first = assign_partitions(view, [0, 1, 2, 3])
        second = assign_partitions(replace(view, hash_seed=43), [0, 1, 2, 3])
        self.assertEqual([first[i] for i in demographics], [1, 2, 0])
        self.assertEqual([second[i] for i in demographics], [2, 3, 1])
        self.assertNotEqual(first, second)
        self.assertEqual(second.seed, 43)

    def test_no_hosts(self):
        with self.assertRaises(ValidationError):
            assign_partitions(running_example_view(), [])


if __name__ == '__main__':
    unittest.main()
