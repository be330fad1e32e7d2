import unittest

from kanon_federation.domain.class_stream import Mode
from kanon_federation.domain.constants import *
from kanon_federation.domain.federation import ResultShard
from kanon_federation.exceptions import MissingView, ValidationError
from kanon_federation.services.executor import exec_plan
from kanon_federation.services.planner import assign_modes, derive_control_flow
from kanon_federation.services.query_parser import parse_query
from kanon_federation.services.result_assembler import assemble_result
from kanon_federation.services.trace_recorder import TraceRecorder
from tests.fixtures import (
    FEMALE_DIAGNOSES,
    FEMALE_DIAGNOSES_RESULT,
    FEMALE_DIAGNOSIS_PAIRS,
    all_shards,
    running_example_catalog,
    running_example_shards,
    running_example_view,
)


class TestExecPlan(unittest.TestCase):
    """Test cases for single-process plan execution over the running example."""

    def setUp(self):
        self.catalog = running_example_catalog()
        self.shards = all_shards(running_example_shards())
        self.view = running_example_view()

    def moded(self, text):
        plan = parse_query(text, self.catalog)
        return assign_modes(plan, derive_control_flow(plan, self.catalog), self.catalog)

    def run_plan(self, text, mode):
        plan = self.moded(text)
        recorder = TraceRecorder()
        out = exec_plan(plan, mode, self.shards, self.catalog, self.view if mode is Mode.KANON else None, recorder)
        return plan, out, recorder.trace()

    def rows(self, plan, out):
        return assemble_result([ResultShard(host=0, columns=out.columns, tuples=out.tuples)], plan)

    def test_kanon_filter_events(self):
        """The filter keeps both female classes and drops the male one."""
        _, _, trace = self.run_plan(FEMALE_DIAGNOSES, Mode.KANON)
        events = [(e.kind, e.class_id, e.cardinality) for e in trace.for_node(2)]
        self.assertEqual(events, [
            (EVENT_CLASS_EMIT, "demographics:0.0", 2),
            (EVENT_CLASS_DROP, "demographics:0.1", 0),
            (EVENT_CLASS_EMIT, "demographics:1.0", 2),
        ])

    def test_kanon_join_events(self):
        """Only pid group 0 meets on both sides, pairing with the flu and infection classes."""
        _, _, trace = self.run_plan(FEMALE_DIAGNOSES, Mode.KANON)
        events = [(e.kind, e.class_id, e.class2, e.cardinality) for e in trace.for_node(3)]
        self.assertEqual(events, [
            (EVENT_PAIR_EMIT, "demographics:0.0", "diagnosis:0.0", 4),
            (EVENT_PAIR_EMIT, "demographics:0.0", "diagnosis:0.1", 4),
        ])
        self.assertEqual(trace.totals[3].output_tuples, 8)

    def test_kanon_aggregate_events(self):
        """The flu bin has one individual and is padded, the infection bin has two and is not."""
        _, _, trace = self.run_plan(FEMALE_DIAGNOSES, Mode.KANON)
        events = [(e.kind, e.class_id, e.cardinality) for e in trace.for_node(4)]
        self.assertEqual(events, [
            (EVENT_BIN_EMIT, "demographics:0.0*diagnosis:0.0#0", 4),
            (EVENT_BIN_EMIT, "demographics:0.0*diagnosis:0.1#0", 1),
        ])

    def test_kanon_pairs_keep_three_real_tuples(self):
        """The pair query emits eight tuples of which three are real."""
        plan, out, _ = self.run_plan(FEMALE_DIAGNOSIS_PAIRS, Mode.KANON)
        self.assertEqual(out.tuple_count, 8)
        self.assertEqual(sorted(t.values for t in out.real_tuples), [(1, "flu"), (1, "infection"), (2, "infection")])

    def test_oblivious_cardinalities(self):
        """Oblivious filtering keeps all six tuples and the join emits the full product."""
        _, _, trace = self.run_plan(FEMALE_DIAGNOSES, Mode.OBLIVIOUS)
        self.assertEqual(trace.totals[2].output_tuples, 6)
        self.assertEqual(trace.totals[3].output_tuples, 36)

    def test_every_mode_returns_the_same_rows(self):
        """Dummy-stripped results agree across modes."""
        for mode in Mode:
            plan, out, _ = self.run_plan(FEMALE_DIAGNOSES, mode)
            self.assertEqual(self.rows(plan, out), FEMALE_DIAGNOSES_RESULT, mode.value)

    def test_plain_events_are_not_secure(self):
        """Plain execution records nothing inside the sealed execution."""
        _, _, trace = self.run_plan(FEMALE_DIAGNOSES, Mode.PLAIN)
        self.assertTrue(len(trace) > 0)
        self.assertEqual(len(trace.secure()), 0)

    def test_kanon_without_view(self):
        """KAnon execution of a plan with secure nodes needs a view."""
        with self.assertRaises(MissingView):
            exec_plan(self.moded(FEMALE_DIAGNOSES), Mode.KANON, self.shards, self.catalog, None)

    def test_unmoded_plan(self):
        """Plans must have modes before execution."""
        with self.assertRaises(ValidationError):
            exec_plan(parse_query(FEMALE_DIAGNOSES, self.catalog), Mode.ENCRYPTED, self.shards, self.catalog)


if __name__ == '__main__':
    unittest.main()
