import json
import unittest

from kanon_federation.domain.constants import *
from kanon_federation.exceptions import ParseError, QueryTypeError, UnknownAttribute, UnsupportedFeature
from kanon_federation.services.query_parser import parse_query, tokenize
from kanon_federation.services.schema import load_catalog
from tests.fixtures import FEMALE_DIAGNOSES, RANDOM_CATALOG, running_example_catalog


class TestTokenize(unittest.TestCase):
    """Test cases for the query tokenizer."""

    def test_keywords_are_case_insensitive(self):
        """Keywords are upper-cased, identifiers keep their spelling."""
        tokens = tokenize("select Pid from demographics")
        self.assertEqual([(t.kind, t.value) for t in tokens], [
            ("keyword", "SELECT"), ("ident", "Pid"), ("keyword", "FROM"), ("ident", "demographics"), ("eof", ""),
        ])

    def test_bang_equals_is_not_equal(self):
        """!= is read as <>."""
        ops = [t.value for t in tokenize("a != 1") if t.kind == "op"]
        self.assertEqual(ops, ["<>"])

    def test_unexpected_character(self):
        """A character outside the grammar is reported with its position."""
        text = "SELECT pid FROM demographics WHERE pid = @"
        with self.assertRaises(ParseError) as ctx:
            tokenize(text)
        self.assertEqual(ctx.exception.position, text.index("@"))

    def test_unsupported_keywords(self):
        """OR, NOT and explicit JOIN are named in the error."""
        for text, construct in [
            ("SELECT a FROM r WHERE a = 1 OR a = 2", "OR"),
            ("SELECT a FROM r WHERE NOT a = 1", "NOT"),
            ("SELECT a FROM r JOIN s", "JOIN"),
        ]:
            with self.assertRaises(UnsupportedFeature, msg=text) as ctx:
                tokenize(text)
            self.assertIn(construct, str(ctx.exception))


class TestParseQuery(unittest.TestCase):
    """Test cases for plan construction."""

    def setUp(self):
        self.catalog = running_example_catalog()

    def test_running_example_plan(self):
        """Scans first, then the pushed filter, the join and the aggregate."""
        plan = parse_query(FEMALE_DIAGNOSES, self.catalog)
        self.assertEqual(plan.kinds, [NODE_SCAN, NODE_SCAN, NODE_FILTER, NODE_JOIN, NODE_AGGREGATE])
        self.assertEqual(plan.relations, ["demographics", "diagnosis"])
        self.assertEqual(plan.root, 4)
        self.assertEqual(plan.node(2).children, [0])
        self.assertEqual([str(p) for p in plan.node(2).predicates], ["demographics.sex = 'F'"])
        self.assertEqual(plan.node(3).children, [2, 1])
        self.assertEqual(plan.node(3).join_keys, [("demographics.pid", "diagnosis.pid")])
        self.assertEqual(plan.result_names, ["diagnosis.diag", "cnt"])
        self.assertEqual(plan.result_columns, ["diagnosis.diag", "cnt"])

    def test_aggregate_entity_comes_from_group_relation(self):
        """The entity attribute of the aggregate belongs to the first group-by relation."""
        spec = parse_query(FEMALE_DIAGNOSES, self.catalog).aggregate
        self.assertEqual(spec.group_by, ["diagnosis.diag"])
        self.assertEqual(spec.fn, AGG_COUNT)
        self.assertIsNone(spec.target)
        self.assertEqual(spec.entity_attr, "diagnosis.pid")
        self.assertEqual(spec.control_inputs, ["diagnosis.diag", "diagnosis.pid"])

    def test_unqualified_columns_resolve_through_catalog(self):
        """Unqualified columns owned by one relation are qualified with it."""
        plan = parse_query(
            "SELECT diag, COUNT(*) AS cnt FROM demographics, diagnosis "
            "WHERE sex = 'F' AND demographics.pid = diagnosis.pid GROUP BY diag",
            self.catalog,
        )
        self.assertEqual(plan.kinds, [NODE_SCAN, NODE_SCAN, NODE_FILTER, NODE_JOIN, NODE_AGGREGATE])
        self.assertEqual(plan.result_columns, ["diagnosis.diag", "cnt"])

    def test_ambiguous_column(self):
        """pid exists in both relations and must be qualified."""
        with self.assertRaises(ParseError):
            parse_query("SELECT pid FROM demographics, diagnosis WHERE demographics.pid = diagnosis.pid", self.catalog)

    def test_order_by_alias_and_limit(self):
        """Sort and Limit sit above the aggregate and run at the client."""
        plan = parse_query(FEMALE_DIAGNOSES + " ORDER BY cnt DESC LIMIT 1", self.catalog)
        self.assertEqual(plan.kinds[-2:], [NODE_SORT, NODE_LIMIT])
        self.assertEqual(plan.node(5).sort_keys, [("cnt", True)])
        self.assertEqual(plan.node(6).limit, 1)
        self.assertEqual(plan.engine_root, 4)

    def test_in_list_and_date_literal(self):
        """IN keeps a literal tuple and DATE literals become days since epoch."""
        plan = parse_query("SELECT x FROM t WHERE x >= DATE '1970-01-11' AND y IN ('a', 'b')")
        predicates = plan.node(1).predicates
        self.assertEqual((predicates[0].op, predicates[0].value), (">=", 10))
        self.assertEqual((predicates[1].op, predicates[1].value), (OP_IN, ("a", "b")))
        self.assertEqual(plan.kinds, [NODE_SCAN, NODE_FILTER, NODE_PROJECT])

    def test_select_star_has_no_projection(self):
        """SELECT * returns every catalog column of every relation."""
        plan = parse_query("SELECT * FROM demographics d, diagnosis g WHERE d.pid = g.pid", self.catalog)
        self.assertNotIn(NODE_PROJECT, plan.kinds)
        self.assertEqual(plan.result_columns, ["demographics.pid", "demographics.sex", "diagnosis.pid", "diagnosis.diag"])

    def test_avg_carries_sum_and_count(self):
        """AVG is evaluated as a sum and a count divided at the client."""
        catalog = load_catalog(json.dumps(RANDOM_CATALOG))
        plan = parse_query("SELECT r0.grp, AVG(r0.val) AS mean FROM r0 GROUP BY r0.grp", catalog)
        self.assertEqual(plan.aggregate.output_columns, ["r0.grp", "mean#sum", "mean#count"])

    def test_parse_error_position(self):
        """A missing select item reports where the parser stopped."""
        with self.assertRaises(ParseError) as ctx:
            parse_query("SELECT pid, FROM demographics")
        self.assertEqual(ctx.exception.position, 12)

    def test_missing_relation(self):
        """An unfinished FROM list reports the end of input."""
        text = "SELECT pid FROM"
        with self.assertRaises(ParseError) as ctx:
            parse_query(text)
        self.assertEqual(ctx.exception.position, len(text))

    def test_unsupported_constructs(self):
        """Self-joins, cross products and double aggregates are rejected."""
        for text in [
            "SELECT d.pid FROM demographics d, demographics e WHERE d.pid = e.pid",
            "SELECT d.pid FROM demographics d, diagnosis g",
            "SELECT COUNT(*), MAX(d.pid) FROM demographics d",
            "SELECT d.pid FROM demographics d WHERE d.pid < g.pid",
        ]:
            with self.assertRaises((UnsupportedFeature, ParseError), msg=text):
                parse_query(text, self.catalog)

    def test_self_join_is_unsupported(self):
        """Self-joins raise UnsupportedFeature."""
        with self.assertRaises(UnsupportedFeature):
            parse_query("SELECT d.pid FROM demographics d, demographics e WHERE d.pid = e.pid", self.catalog)

    def test_unknown_attribute(self):
        """Attributes missing from the catalog are reported."""
        with self.assertRaises(UnknownAttribute):
            parse_query("SELECT d.age FROM demographics d", self.catalog)

    def test_sum_over_text(self):
        """SUM over a text column is a type error."""
        with self.assertRaises(QueryTypeError):
            parse_query("SELECT SUM(d.sex) AS s FROM demographics d", self.catalog)

    def test_non_grouped_column(self):
        """Plain select items next to an aggregate must be grouped."""
        with self.assertRaises(ParseError):
            parse_query("SELECT d.sex, COUNT(*) FROM demographics d", self.catalog)


if __name__ == '__main__':
    unittest.main()
