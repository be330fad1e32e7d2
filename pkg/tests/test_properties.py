import asyncio
import unittest

import numpy as np

from kanon_federation.domain.catalog import RelationShard
from kanon_federation.domain.class_stream import Mode
from kanon_federation.exceptions import ViewInfeasible
from kanon_federation.services.anonymizer import check_view, generate_view, materialize_view
from kanon_federation.services.coordinator import in_process_federation, run_query
from kanon_federation.services.executor import exec_plan
from kanon_federation.services.planner import assign_modes, derive_control_flow
from kanon_federation.services.query_parser import parse_query
from kanon_federation.services.result_assembler import sort_rows
from kanon_federation.services.trace_recorder import TraceRecorder, simulate_reference, traces_equal
from tests.fixtures import all_shards, histograms_for, random_instance

CASES = 200
MUTATIONS_PER_CASE = 5


async def run_modes(instance, modes):
    client, _ = await in_process_federation(instance.catalog, instance.shards)
    try:
        results = {mode: await run_query(client, instance.sql, instance.k, mode) for mode in modes}
        return results, client.session.workload.cached_view
    finally:
        await client.close()


def moded_plan(instance):
    plan = parse_query(instance.sql, instance.catalog)
    c = derive_control_flow(plan, instance.catalog)
    return assign_modes(plan, c, instance.catalog), c


def mutate(rng, shards, c):
    """Shuffle every shard and redraw the val column wherever val is not a control flow attribute."""
    out = []
    for shard in shards:
        tuples = [shard.tuples[i] for i in rng.permutation(len(shard.tuples))]
        if (shard.relation, "val") not in c:
            tuples = [t._replace(values=t.values[:2] + (int(rng.integers(0, 10)),)) for t in tuples]
        out.append(RelationShard(shard.relation, shard.owner, tuples))
    return out


class TestRandomInstances(unittest.TestCase):
    """Seeded random federations checked against the plain engine and the reference trace."""

    def test_modes_match_plain(self):
        """Rows agree as multisets, views are valid and the distributed trace equals the reference."""
        successes = 0
        for seed in range(CASES):
            instance = random_instance(np.random.default_rng(seed))
            try:
                results, view = asyncio.run(run_modes(instance, list(Mode)))
            except ViewInfeasible:
                continue
            label = f"seed {seed} on {instance.hosts} hosts at k={instance.k}: {instance.sql}"
            plain = results[Mode.PLAIN]
            expected = sort_rows(plain.rows, plain.columns, [])
            for mode, result in results.items():
                self.assertEqual(sort_rows(result.rows, result.columns, []), expected, f"{mode.value}, {label}")

            shards = all_shards(instance.shards)
            self.assertEqual(check_view(view, shards, instance.k, instance.catalog), [], label)
            plan, _ = moded_plan(instance)
            reference = simulate_reference(plan, materialize_view(shards, view, instance.catalog), view.k, instance.catalog)
            equal, info = traces_equal(results[Mode.KANON].trace.secure(), reference)
            self.assertTrue(equal, f"first divergence {info}, {label}")
            successes += 1
        self.assertGreaterEqual(successes, CASES // 2)

    def test_ordered_limit_matches_plain(self):
        """ORDER BY with LIMIT returns the same rows in the same order."""
        sql = "SELECT r1.key, r2.val FROM r1, r2 WHERE r1.key = r2.key AND r1.val >= 3 ORDER BY r2.val DESC LIMIT 5"
        for seed in range(20):
            instance = random_instance(np.random.default_rng(seed), queries=[sql], min_rows=12)
            try:
                results, _ = asyncio.run(run_modes(instance, [Mode.PLAIN, Mode.KANON]))
            except ViewInfeasible:
                continue
            self.assertEqual(results[Mode.KANON].rows, results[Mode.PLAIN].rows, f"seed {seed}")


class TestTraceInvariance(unittest.TestCase):
    """The trace depends only on the view: tuple order and values outside C never show."""

    def test_mutations_keep_trace(self):
        mutations = 0
        for seed in range(2 * CASES):
            if mutations >= 1000:
                break
            rng = np.random.default_rng(seed)
            instance = random_instance(rng)
            plan, c = moded_plan(instance)
            shards = all_shards(instance.shards)
            if not c:
                continue
            try:
                view, _ = generate_view(histograms_for(shards, c, instance.catalog), instance.k, instance.catalog)
            except ViewInfeasible:
                continue
            baseline = TraceRecorder()
            exec_plan(plan, Mode.KANON, shards, instance.catalog, view, baseline)
            for _ in range(MUTATIONS_PER_CASE):
                recorder = TraceRecorder()
                exec_plan(plan, Mode.KANON, mutate(rng, shards, c), instance.catalog, view, recorder)
                equal, info = traces_equal(recorder.trace().secure(), baseline.trace().secure())
                self.assertTrue(equal, f"seed {seed}, first divergence {info}")
                mutations += 1
        self.assertGreaterEqual(mutations, 1000)
