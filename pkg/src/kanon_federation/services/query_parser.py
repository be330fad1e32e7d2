"""Recursive-descent parser for the supported SQL subset.

SELECT items FROM rel [alias] (, rel [alias])* [WHERE conj] [GROUP BY cols]
    [ORDER BY col [ASC|DESC] (, ...)*] [LIMIT n]

Conjuncts are `col op literal`, `col = col` (equi-join) and `col IN (literal, ...)`.
The plan is built left-deep in FROM order with one Filter per relation pushed onto its Scan.
"""
from dataclasses import dataclass, field
from datetime import date
import logging
import re
from typing import Dict, List, NamedTuple, Optional, Tuple

from kanon_federation.domain.catalog import Catalog
from kanon_federation.domain.class_stream import AggregateSpec
from kanon_federation.domain.constants import *
from kanon_federation.domain.query_plan import PlanNode, Predicate, QueryPlan, split_column
from kanon_federation.exceptions import ParseError, QueryTypeError, UnknownAttribute, UnsupportedFeature

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
   |(?P<string>'(?:[^']|'')*')
   |(?P<number>\d+)
   |(?P<op><>|!=|<=|>=|=|<|>)
   |(?P<punct>[(),.*;-])
   |(?P<ident>[A-Za-z_][A-Za-z0-9_]*)
""", re.VERBOSE)

_KEYWORDS = {
    "SELECT", "FROM", "WHERE", "AND", "IN", "GROUP", "BY", "ORDER", "ASC", "DESC", "LIMIT", "AS", "DATE",
}
# Recognised so the error can name the construct
_UNSUPPORTED_KEYWORDS = {
    "OR": "OR predicates",
    "NOT": "NOT predicates",
    "JOIN": "explicit JOIN syntax",
    "UNION": "set operations",
    "INTERSECT": "set operations",
    "EXCEPT": "set operations",
    "HAVING": "HAVING",
    "DISTINCT": "DISTINCT",
    "EXISTS": "subqueries",
    "LIKE": "LIKE predicates",
    "BETWEEN": "BETWEEN predicates",
    "IS": "NULL predicates",
    "NULL": "NULL literals",
    "OVER": "window functions",
}


class Token(NamedTuple):
    kind: str  # keyword, ident, string, number, op, punct, eof
    value: str
    position: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    position = 0
    while position < len(text):
        match = _TOKEN.match(text, position)
        if match is None:
            raise ParseError(f"Unexpected character {text[position]!r}", position)
        kind = match.lastgroup
        value = match.group()
        if kind == "ident" and value.upper() in _KEYWORDS:
            tokens.append(Token("keyword", value.upper(), position))
        elif kind == "ident" and value.upper() in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(f"{_UNSUPPORTED_KEYWORDS[value.upper()]} are not supported (at position {position})")
        elif kind == "op" and value == "!=":
            tokens.append(Token("op", "<>", position))
        elif kind != "ws":
            tokens.append(Token(kind, value, position))
        position = match.end()
    tokens.append(Token("eof", "", len(text)))
    return tokens


@dataclass
class _SelectItem:
    column: Optional[Tuple[Optional[str], str]] = None  # (qualifier, attribute)
    fn: Optional[str] = None
    alias: Optional[str] = None
    star: bool = False


@dataclass
class _Statement:
    items: List[_SelectItem] = field(default_factory=list)
    relations: List[Tuple[str, Optional[str]]] = field(default_factory=list)  # (relation, alias)
    filters: List[Tuple[Tuple[Optional[str], str], str, object, int]] = field(default_factory=list)
    joins: List[Tuple[Tuple[Optional[str], str], Tuple[Optional[str], str], int]] = field(default_factory=list)
    group_by: List[Tuple[Optional[str], str]] = field(default_factory=list)
    order_by: List[Tuple[Tuple[Optional[str], str], bool, int]] = field(default_factory=list)
    limit: Optional[int] = None
    select_star: bool = False


class _Parser:
    def __init__(self, tokens: List[Token]):
        self._tokens = tokens
        self._pos = 0

    def _peek(self, offset: int = 0) -> Token:
        return self._tokens[min(self._pos + offset, len(self._tokens) - 1)]

    def _advance(self) -> Token:
        token = self._peek()
        self._pos += 1
        return token

    def _match_keyword(self, keyword: str) -> bool:
        if self._peek().kind == "keyword" and self._peek().value == keyword:
            self._pos += 1
            return True
        return False

    def _match_punct(self, punct: str) -> bool:
        if self._peek().kind == "punct" and self._peek().value == punct:
            self._pos += 1
            return True
        return False

    def _expect_keyword(self, keyword: str) -> Token:
        if not self._match_keyword(keyword):
            raise ParseError(f"Expected {keyword}, found {self._describe(self._peek())}", self._peek().position)
        return self._tokens[self._pos - 1]

    def _expect_punct(self, punct: str) -> Token:
        if not self._match_punct(punct):
            raise ParseError(f"Expected '{punct}', found {self._describe(self._peek())}", self._peek().position)
        return self._tokens[self._pos - 1]

    def _expect_ident(self, what: str) -> Token:
        token = self._peek()
        if token.kind != "ident":
            raise ParseError(f"Expected {what}, found {self._describe(token)}", token.position)
        return self._advance()

    @staticmethod
    def _describe(token: Token) -> str:
        return "end of input" if token.kind == "eof" else repr(token.value)

    def parse(self) -> _Statement:
        statement = _Statement()
        self._expect_keyword("SELECT")
        self._parse_select_list(statement)
        self._expect_keyword("FROM")
        self._parse_from_list(statement)
        if self._match_keyword("WHERE"):
            self._parse_conjunction(statement)
        if self._match_keyword("GROUP"):
            self._expect_keyword("BY")
            statement.group_by.append(self._parse_column())
            while self._match_punct(","):
                statement.group_by.append(self._parse_column())
        if self._match_keyword("ORDER"):
            self._expect_keyword("BY")
            self._parse_order_item(statement)
            while self._match_punct(","):
                self._parse_order_item(statement)
        if self._match_keyword("LIMIT"):
            token = self._advance()
            if token.kind != "number":
                raise ParseError(f"Expected a row count after LIMIT, found {self._describe(token)}", token.position)
            statement.limit = int(token.value)
        self._match_punct(";")
        if self._peek().kind != "eof":
            raise ParseError(f"Unexpected {self._describe(self._peek())} after statement", self._peek().position)
        return statement

    def _parse_select_list(self, statement: _Statement) -> None:
        if self._match_punct("*"):
            statement.select_star = True
            return
        statement.items.append(self._parse_select_item())
        while self._match_punct(","):
            statement.items.append(self._parse_select_item())

    def _parse_select_item(self) -> _SelectItem:
        token = self._peek()
        if token.kind == "ident" and token.value.upper() in AGGREGATE_FUNCTIONS and self._peek(1).value == "(":
            self._advance()
            self._expect_punct("(")
            if self._peek().kind == "keyword" and self._peek().value == "SELECT":
                raise UnsupportedFeature(f"subqueries are not supported (at position {self._peek().position})")
            item = _SelectItem(fn=token.value.upper())
            if self._match_punct("*"):
                if item.fn != AGG_COUNT:
                    raise ParseError(f"{item.fn}(*) is not valid", token.position)
                item.star = True
            else:
                item.column = self._parse_column()
            self._expect_punct(")")
        else:
            item = _SelectItem(column=self._parse_column())
        item.alias = self._parse_alias()
        return item

    def _parse_alias(self) -> Optional[str]:
        if self._match_keyword("AS"):
            return self._expect_ident("an alias").value
        if self._peek().kind == "ident":
            return self._advance().value
        return None

    def _parse_from_list(self, statement: _Statement) -> None:
        while True:
            if self._peek().kind == "punct" and self._peek().value == "(":
                raise UnsupportedFeature(f"subqueries are not supported (at position {self._peek().position})")
            name = self._expect_ident("a relation name").value
            statement.relations.append((name, self._parse_alias()))
            if not self._match_punct(","):
                return

    def _parse_column(self) -> Tuple[Optional[str], str]:
        first = self._expect_ident("a column name")
        if self._match_punct("."):
            second = self._expect_ident("a column name after '.'")
            return first.value, second.value
        return None, first.value

    def _parse_literal(self):
        token = self._advance()
        if token.kind == "string":
            return token.value[1:-1].replace("''", "'")
        if token.kind == "number":
            return int(token.value)
        if token.kind == "punct" and token.value == "-" and self._peek().kind == "number":
            return -int(self._advance().value)
        if token.kind == "keyword" and token.value == "DATE":
            literal = self._advance()
            if literal.kind != "string":
                raise ParseError("Expected a quoted date after DATE", literal.position)
            try:
                # dates are days since epoch
                return (date.fromisoformat(literal.value[1:-1]) - date(1970, 1, 1)).days
            except ValueError:
                raise ParseError(f"Invalid date {literal.value}", literal.position)
        raise ParseError(f"Expected a literal, found {self._describe(token)}", token.position)

    def _parse_conjunction(self, statement: _Statement) -> None:
        self._parse_predicate(statement)
        while self._match_keyword("AND"):
            self._parse_predicate(statement)

    def _parse_predicate(self, statement: _Statement) -> None:
        if self._peek().kind == "punct" and self._peek().value == "(":
            raise UnsupportedFeature(f"parenthesised predicates are not supported (at position {self._peek().position})")
        position = self._peek().position
        column = self._parse_column()
        if self._match_keyword("IN"):
            self._expect_punct("(")
            if self._peek().kind == "keyword" and self._peek().value == "SELECT":
                raise UnsupportedFeature(f"subqueries are not supported (at position {self._peek().position})")
            values = [self._parse_literal()]
            while self._match_punct(","):
                values.append(self._parse_literal())
            self._expect_punct(")")
            statement.filters.append((column, OP_IN, tuple(values), position))
            return
        op = self._advance()
        if op.kind != "op":
            raise ParseError(f"Expected a comparison operator, found {self._describe(op)}", op.position)
        if self._peek().kind == "ident":
            if op.value != "=":
                raise UnsupportedFeature(f"non-equality column comparisons are not supported (at position {op.position})")
            statement.joins.append((column, self._parse_column(), position))
            return
        statement.filters.append((column, op.value, self._parse_literal(), position))

    def _parse_order_item(self, statement: _Statement) -> None:
        position = self._peek().position
        column = self._parse_column()
        descending = False
        if self._match_keyword("DESC"):
            descending = True
        else:
            self._match_keyword("ASC")
        statement.order_by.append((column, descending, position))


class _Resolver:
    """Qualifies column references against the FROM list and the catalog."""

    def __init__(self, statement: _Statement, catalog: Optional[Catalog]):
        self.catalog = catalog
        self.relations = [name for name, _ in statement.relations]
        self.by_alias: Dict[str, str] = {}
        self.referenced: Dict[str, List[str]] = {name: [] for name in self.relations}
        for name, alias in statement.relations:
            if name in self.by_alias.values() or name in self.by_alias:
                raise UnsupportedFeature(f"self-join of relation {name} is not supported")
            if catalog is not None and not catalog.has_relation(name):
                raise UnknownAttribute(f"Relation {name} not found in catalog")
            self.by_alias[name] = name
            if alias:
                self.by_alias[alias] = name

    def resolve(self, column: Tuple[Optional[str], str], position: Optional[int] = None) -> str:
        qualifier, attribute = column
        if qualifier is not None:
            if qualifier not in self.by_alias:
                raise ParseError(f"Unknown relation or alias {qualifier}", position)
            relation = self.by_alias[qualifier]
            if self.catalog is not None and not self.catalog.relation(relation).has_attribute(attribute):
                raise UnknownAttribute(f"Attribute {attribute} not found in relation {relation}")
        elif self.catalog is None:
            if len(self.relations) != 1:
                raise ParseError(f"Column {attribute} must be qualified when no catalog is given", position)
            relation = self.relations[0]
        else:
            owners = [r for r in self.relations if self.catalog.relation(r).has_attribute(attribute)]
            if not owners:
                raise UnknownAttribute(f"Attribute {attribute} not found in relations {', '.join(self.relations)}")
            if len(owners) > 1:
                raise ParseError(f"Column {attribute} is ambiguous between {', '.join(owners)}", position)
            relation = owners[0]
        qualified = f"{relation}.{attribute}"
        if qualified not in self.referenced[relation]:
            self.referenced[relation].append(qualified)
        return qualified

    def relation_columns(self, relation: str) -> List[str]:
        if self.catalog is not None:
            return [f"{relation}.{a}" for a in self.catalog.relation(relation).attribute_names]
        return list(self.referenced[relation])

    def entity_column(self, relation: str) -> str:
        if self.catalog is None:
            raise UnsupportedFeature("aggregate queries need a catalog to resolve the entity attribute")
        return f"{relation}.{self.catalog.entity_attr(relation)}"

    def check_numeric(self, fn: str, column: str) -> None:
        if self.catalog is None or fn not in (AGG_SUM, AGG_AVG):
            return
        relation, attribute = split_column(column)
        if self.catalog.attribute(relation, attribute).kind not in NUMERIC_KINDS:
            raise QueryTypeError(f"{fn} over text column {column}")


def parse_query(text: str, catalog: Optional[Catalog] = None) -> QueryPlan:
    """Parse a query into an unmoded plan.

    Parameters:
        text (str): Query text
        catalog (Catalog): Catalog used to resolve unqualified columns and expand SELECT *

    Returns:
        QueryPlan: Node ids increase from leaves to root

    Raises:
        ParseError: with the offending position
        UnsupportedFeature: naming the construct
        UnknownAttribute: for relations or attributes missing from the catalog
    """
    statement = _Parser(tokenize(text)).parse()
    resolver = _Resolver(statement, catalog)
    nodes: List[PlanNode] = []

    def add(node_kind: str, **kwargs) -> int:
        nodes.append(PlanNode(id=len(nodes), kind=node_kind, **kwargs))
        return nodes[-1].id

    # resolve every reference before building scans so scan columns are complete without a catalog
    filters = [(resolver.resolve(c, p), op, v) for c, op, v, p in statement.filters]
    joins = [(resolver.resolve(l, p), resolver.resolve(r, p), p) for l, r, p in statement.joins]
    group_by = [resolver.resolve(c) for c in statement.group_by]
    items = []
    for item in statement.items:
        column = resolver.resolve(item.column) if item.column is not None else None
        items.append((item, column))

    aggregates = [(item, column) for item, column in items if item.fn is not None]
    if len(aggregates) > 1:
        raise UnsupportedFeature("more than one aggregate per query is not supported")
    if group_by and not aggregates:
        raise UnsupportedFeature("GROUP BY without an aggregate is not supported")

    tops: Dict[str, int] = {}
    for relation in resolver.relations:
        tops[relation] = add(NODE_SCAN, relation=relation, columns=resolver.relation_columns(relation))
    for relation in resolver.relations:
        predicates = [Predicate(c, op, v) for c, op, v in filters if split_column(c)[0] == relation]
        if predicates:
            tops[relation] = add(NODE_FILTER, children=[tops[relation]], predicates=predicates)

    for left, right, position in joins:
        if split_column(left)[0] == split_column(right)[0]:
            raise UnsupportedFeature(f"comparing two columns of one relation is not supported (at position {position})")

    current = tops[resolver.relations[0]]
    joined = {resolver.relations[0]}
    pending = list(joins)
    for relation in resolver.relations[1:]:
        keys = []
        remaining = []
        for left, right, position in pending:
            sides = (split_column(left)[0], split_column(right)[0])
            if sides[0] in joined and sides[1] == relation:
                keys.append((left, right))
            elif sides[1] in joined and sides[0] == relation:
                keys.append((right, left))
            else:
                remaining.append((left, right, position))
        if not keys:
            raise UnsupportedFeature(f"cross product with relation {relation} is not supported, add a join predicate")
        current = add(NODE_JOIN, children=[current, tops[relation]], join_keys=keys)
        joined.add(relation)
        pending = remaining

    result_columns: List[str] = []
    result_names: List[str] = []
    if aggregates:
        item, target = aggregates[0]
        for other, column in items:
            if other.fn is None and column not in group_by:
                raise ParseError(f"Column {column} must appear in GROUP BY")
        if target is not None:
            resolver.check_numeric(item.fn, target)
        if group_by:
            entity_relation = split_column(group_by[0])[0]
        elif target is not None:
            entity_relation = split_column(target)[0]
        else:
            entity_relation = resolver.relations[0]
        alias = item.alias or item.fn.lower()
        spec = AggregateSpec(
            group_by=group_by,
            fn=item.fn,
            target=target,
            entity_attr=resolver.entity_column(entity_relation),
            alias=alias,
        )
        current = add(NODE_AGGREGATE, children=[current], aggregate=spec)
        for other, column in items:
            result_columns.append(alias if other.fn is not None else column)
            result_names.append(other.alias or (alias if other.fn is not None else column))
    elif statement.select_star:
        result_columns = [c for relation in resolver.relations for c in resolver.relation_columns(relation)]
        result_names = list(result_columns)
    else:
        columns = [column for _, column in items]
        current = add(NODE_PROJECT, children=[current], columns=list(dict.fromkeys(columns)))
        result_columns = columns
        result_names = [item.alias or column for item, column in items]

    if statement.order_by:
        sort_keys = []
        for (qualifier, attribute), descending, position in statement.order_by:
            if qualifier is None and attribute in result_names:
                column = result_columns[result_names.index(attribute)]
            else:
                column = resolver.resolve((qualifier, attribute), position)
            if column not in result_columns:
                raise UnsupportedFeature(f"ORDER BY {attribute} is not in the select list (at position {position})")
            sort_keys.append((column, descending))
        current = add(NODE_SORT, children=[current], sort_keys=sort_keys)
    if statement.limit is not None:
        current = add(NODE_LIMIT, children=[current], limit=statement.limit)

    plan = QueryPlan(nodes=nodes, root=current, result_columns=result_columns, result_names=result_names, text=text)
    plan.validate()
    logger.debug(f"Parsed query into {len(nodes)} nodes:\n{plan.describe()}")
    return plan
