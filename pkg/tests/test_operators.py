import unittest

from kanon_federation.domain.anonymization import EquivalenceClass
from kanon_federation.domain.catalog import DataTuple
from kanon_federation.domain.class_stream import AggregateSpec, ClassStream, Mode
from kanon_federation.domain.constants import *
from kanon_federation.domain.query_plan import Predicate
from kanon_federation.exceptions import DomainMismatch, MissingView, QueryTypeError
from kanon_federation.services.anonymizer import materialize_view
from kanon_federation.services.operators import aggregate_op, filter_op, join_op, project_op, synthetic_class
from kanon_federation.services.trace_recorder import TraceRecorder
from tests.fixtures import all_shards, running_example_catalog, running_example_shards, running_example_view

DEMOGRAPHICS_COLUMNS = ["demographics.pid", "demographics.sex"]
DIAGNOSIS_COLUMNS = ["diagnosis.pid", "diagnosis.diag"]


def make_class(class_id, relation, rows, keys=None, order=(), dummies=()):
    return EquivalenceClass(
        id=class_id,
        relation=relation,
        tuples=[DataTuple(tuple(r), i in dummies, 0) for i, r in enumerate(rows)],
        keys=keys or {},
        order=order,
    )


class TestFilterOp(unittest.TestCase):
    """Test cases for the filter operator in every mode."""

    def setUp(self):
        self.stream = ClassStream(DEMOGRAPHICS_COLUMNS, [
            make_class("d:0", "demographics", [(1, "F"), (3, "M")], order=(0,)),
            make_class("d:1", "demographics", [(4, "M"), (5, "M")], order=(1,)),
        ])
        self.predicates = [Predicate("demographics.sex", "=", "F")]

    def test_kanon_emits_whole_classes(self):
        """A class with one match is emitted whole, non-matching tuples become dummies."""
        recorder = TraceRecorder()
        out = filter_op(Mode.KANON, self.stream, self.predicates, 2, recorder)
        self.assertEqual(len(out), 1)
        self.assertEqual([t.dummy for t in out[0].tuples], [False, True])
        events = recorder.trace()
        self.assertEqual([(e.kind, e.class_id, e.cardinality) for e in events], [
            (EVENT_CLASS_EMIT, "d:0", 2), (EVENT_CLASS_DROP, "d:1", 0),
        ])
        self.assertEqual(events.comparisons, 4)

    def test_kanon_ignores_matching_dummies(self):
        """A class whose only match is a dummy is dropped."""
        stream = ClassStream(DEMOGRAPHICS_COLUMNS, [make_class("d:0", "demographics", [(1, "F"), (3, "M")], dummies=(0,))])
        self.assertEqual(len(filter_op(Mode.KANON, stream, self.predicates)), 0)

    def test_oblivious_keeps_cardinality(self):
        """Oblivious filtering only flips dummy flags."""
        out = filter_op(Mode.OBLIVIOUS, ClassStream(DEMOGRAPHICS_COLUMNS, [synthetic_class(self.stream.tuples)]), self.predicates)
        self.assertEqual(out.tuple_count, 4)
        self.assertEqual([t.values for t in out.real_tuples], [(1, "F")])

    def test_encrypted_keeps_true_matches(self):
        """Encrypted filtering emits the matching real tuples and charges one comparison per tuple."""
        recorder = TraceRecorder()
        out = filter_op(Mode.ENCRYPTED, ClassStream(DEMOGRAPHICS_COLUMNS, [synthetic_class(self.stream.tuples)]), self.predicates, 0, recorder)
        self.assertEqual([t.values for t in out.tuples], [(1, "F")])
        self.assertEqual(recorder.trace().comparisons, 4)

    def test_type_error(self):
        """Comparing an integer column with a string literal fails."""
        with self.assertRaises(QueryTypeError):
            filter_op(Mode.KANON, self.stream, [Predicate("demographics.pid", "=", "one")])


class TestJoinOp(unittest.TestCase):
    """Test cases for the join operator."""

    def setUp(self):
        self.catalog = running_example_catalog()
        self.left = ClassStream(DEMOGRAPHICS_COLUMNS, [
            make_class("d:0", "demographics", [(1, "F"), (2, "F")], keys={"demographics.pid": 0}, order=(0,)),
            make_class("d:1", "demographics", [(11, "F")], keys={"demographics.pid": 1}, order=(1,)),
        ])
        self.right = ClassStream(DIAGNOSIS_COLUMNS, [
            make_class("g:0", "diagnosis", [(1, "flu"), (3, "flu")], keys={"diagnosis.pid": 0}, order=(0,)),
            make_class("g:2", "diagnosis", [(21, "cold")], keys={"diagnosis.pid": 2}, order=(2,)),
        ])
        self.keys = [("demographics.pid", "diagnosis.pid")]

    def test_kanon_pairs_classes_on_group_ids(self):
        """Only classes with equal group ids pair, each pair emitting |L| * |R| tuples."""
        recorder = TraceRecorder()
        out = join_op(Mode.KANON, self.left, self.right, self.keys, 3, recorder, catalog=self.catalog)
        self.assertEqual([c.id for c in out], ["d:0*g:0"])
        self.assertEqual(out.tuple_count, 4)
        self.assertEqual([t.values for t in out.real_tuples], [(1, "F", 1, "flu")])
        event = recorder.trace()[0]
        self.assertEqual((event.kind, event.class_id, event.class2, event.cardinality, event.comparisons),
                         (EVENT_PAIR_EMIT, "d:0", "g:0", 4, 4))

    def test_lineage_names_base_classes(self):
        """Joined classes carry every base class id with its size, through a second join too."""
        classes = materialize_view(all_shards(running_example_shards(2)), running_example_view(), self.catalog)
        base_sizes = {c.id: c.size for relation in classes.values() for c in relation}
        left = ClassStream(DEMOGRAPHICS_COLUMNS, classes["demographics"])
        right = ClassStream(DIAGNOSIS_COLUMNS, classes["diagnosis"])
        joined = join_op(Mode.KANON, left, right, self.keys, catalog=self.catalog)
        self.assertTrue(len(joined) > 0)
        for c in joined:
            left_id, right_id = c.id.split("*")
            self.assertEqual(c.lineage, {left_id: base_sizes[left_id], right_id: base_sizes[right_id]})

        groups = sorted({c.keys["demographics.pid"] for c in joined})
        vitals = ClassStream(["vitals.pid", "vitals.pulse"], [
            make_class(f"v:{g}", "vitals", [(g, 60), (g, 70), (g, 80)], keys={"vitals.pid": g}, order=(g,)) for g in groups
        ])
        for c in vitals:
            c.lineage = {c.id: c.size}
        three_way = join_op(Mode.KANON, joined, vitals, [("demographics.pid", "vitals.pid")])
        self.assertEqual(len(three_way), len(joined))
        for c in three_way:
            ids = c.id.split("*")
            self.assertEqual(c.lineage, {ids[0]: base_sizes[ids[0]], ids[1]: base_sizes[ids[1]], ids[2]: 3})
            self.assertEqual(c.size, base_sizes[ids[0]] * base_sizes[ids[1]] * 3)

    def test_oblivious_emits_cross_product(self):
        """The oblivious join emits |L| * |R| tuples."""
        left = ClassStream(DEMOGRAPHICS_COLUMNS, [synthetic_class(self.left.tuples)])
        right = ClassStream(DIAGNOSIS_COLUMNS, [synthetic_class(self.right.tuples)])
        out = join_op(Mode.OBLIVIOUS, left, right, self.keys)
        self.assertEqual(out.tuple_count, 9)
        self.assertEqual(len(out.real_tuples), 1)

    def test_encrypted_emits_true_join(self):
        """The encrypted join emits only matching real pairs."""
        left = ClassStream(DEMOGRAPHICS_COLUMNS, [synthetic_class(self.left.tuples)])
        right = ClassStream(DIAGNOSIS_COLUMNS, [synthetic_class(self.right.tuples)])
        out = join_op(Mode.ENCRYPTED, left, right, self.keys)
        self.assertEqual([t.values for t in out.tuples], [(1, "F", 1, "flu")])

    def test_domain_mismatch(self):
        """Keys from different domains are rejected."""
        with self.assertRaises(DomainMismatch):
            join_op(Mode.KANON, self.left, self.right, [("demographics.sex", "diagnosis.pid")], catalog=self.catalog)

    def test_missing_group_id(self):
        """A KAnon join needs group ids for its keys."""
        left = ClassStream(DEMOGRAPHICS_COLUMNS, [make_class("d:0", "demographics", [(1, "F")])])
        with self.assertRaises(MissingView):
            join_op(Mode.KANON, left, self.right, self.keys)


class TestAggregateOp(unittest.TestCase):
    """Test cases for the grouped aggregate."""

    def setUp(self):
        self.columns = ["diagnosis.diag", "diagnosis.pid", "vitals.pulse"]
        self.count = AggregateSpec(group_by=["diagnosis.diag"], fn=AGG_COUNT, target=None, entity_attr="diagnosis.pid", alias="cnt")
        self.stream = ClassStream(self.columns, [
            make_class("c:0", "diagnosis", [("flu", 1, 60), ("flu", 2, 70), ("cold", 3, 80), ("flu", 2, 90)], order=(0,)),
        ])

    def test_kanon_pads_small_bins(self):
        """Bins with fewer than k individuals emit |class| tuples, the true result first."""
        recorder = TraceRecorder()
        out = aggregate_op(Mode.KANON, self.stream, self.count, 2, 4, recorder)
        self.assertEqual([c.id for c in out], ["c:0#0", "c:0#1"])
        # cold is the first bin in value order
        self.assertEqual([t.values for t in out[0].tuples], [("cold", 1)] + [("cold", 0)] * 3)
        self.assertEqual([t.dummy for t in out[0].tuples], [False, True, True, True])
        self.assertEqual([t.values for t in out[1].tuples], [("flu", 3)])
        self.assertEqual([e.cardinality for e in recorder.trace()], [4, 1])

    def test_kanon_bin_without_real_tuples(self):
        """A bin of dummies emits only padding."""
        stream = ClassStream(self.columns, [make_class("c:0", "diagnosis", [("flu", 1, 60), ("flu", 2, 70)], dummies=(0, 1))])
        out = aggregate_op(Mode.KANON, stream, self.count, 2)
        self.assertEqual(out.tuple_count, 2)
        self.assertEqual(out.real_tuples, [])

    def test_avg_carries_sum_and_count(self):
        """AVG emits the sum and the count for the client to divide."""
        spec = AggregateSpec(group_by=["diagnosis.diag"], fn=AGG_AVG, target="vitals.pulse", entity_attr="diagnosis.pid", alias="mean")
        out = aggregate_op(Mode.ENCRYPTED, ClassStream(self.columns, [synthetic_class(self.stream.tuples)]), spec, 1)
        self.assertEqual(out.columns, ["diagnosis.diag", "mean#sum", "mean#count"])
        self.assertEqual([t.values for t in out.tuples], [("cold", 80, 1), ("flu", 220, 3)])

    def test_min_and_max(self):
        """MIN and MAX pick the extreme target value of each group."""
        for fn, expected in [(AGG_MIN, 60), (AGG_MAX, 90)]:
            spec = AggregateSpec(group_by=["diagnosis.diag"], fn=fn, target="vitals.pulse", entity_attr="diagnosis.pid", alias="v")
            out = aggregate_op(Mode.PLAIN, ClassStream(self.columns, [synthetic_class(self.stream.tuples)]), spec, 1)
            self.assertEqual(out.tuples[1].values, ("flu", expected), fn)

    def test_oblivious_emits_dummy_groups(self):
        """Oblivious aggregation emits a dummy row for a group with no real tuple."""
        tuples = [DataTuple(("flu", 1, 60)), DataTuple(("cold", 3, 80), True)]
        out = aggregate_op(Mode.OBLIVIOUS, ClassStream(self.columns, [synthetic_class(tuples)]), self.count, 1)
        self.assertEqual(out.tuple_count, 2)
        self.assertEqual([t.values for t in out.real_tuples], [("flu", 1)])

    def test_sum_over_text(self):
        """SUM over text values is a type error."""
        spec = AggregateSpec(group_by=["diagnosis.pid"], fn=AGG_SUM, target="diagnosis.diag", entity_attr="diagnosis.pid", alias="s")
        with self.assertRaises(QueryTypeError):
            aggregate_op(Mode.ENCRYPTED, ClassStream(self.columns, [synthetic_class(self.stream.tuples)]), spec, 1)


class TestProjectOp(unittest.TestCase):
    """Test cases for projection."""

    def test_keeps_cardinality_and_flags(self):
        """Projection narrows tuples without changing counts or dummy flags."""
        stream = ClassStream(DEMOGRAPHICS_COLUMNS, [make_class("d:0", "demographics", [(1, "F"), (2, "M")], dummies=(1,))])
        out = project_op(Mode.KANON, stream, ["demographics.pid"])
        self.assertEqual([t.values for t in out.tuples], [(1,), (2,)])
        self.assertEqual([t.dummy for t in out.tuples], [False, True])


if __name__ == '__main__':
    unittest.main()
