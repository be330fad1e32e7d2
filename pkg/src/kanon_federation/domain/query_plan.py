from dataclasses import dataclass, field
import logging
from typing import Any, Dict, List, Optional, Tuple

from kanon_federation.domain.class_stream import AggregateSpec
from kanon_federation.domain.constants import *
from kanon_federation.exceptions import QueryTypeError, UnknownAttribute, ValidationError

logger = logging.getLogger(__name__)

JoinKey = Tuple[str, str]  # (left column, right column)
SortKey = Tuple[str, bool]  # (result column, descending)


def split_column(column: str) -> Tuple[str, str]:
    """Split a qualified column name into (relation, attribute)."""
    relation, _, attribute = column.partition(".")
    if not attribute:
        raise UnknownAttribute(f"Column {column} is not qualified with a relation")
    return relation, attribute


def _check_comparable(column: str, value: Any, literal: Any) -> None:
    if isinstance(value, str) != isinstance(literal, str):
        raise QueryTypeError(f"Cannot compare {column} value {value!r} with literal {literal!r}")


@dataclass(frozen=True)
class Predicate:
    """A WHERE conjunct comparing one column with a literal or a literal list.

    Attributes:
        column: Qualified column
        op: One of =, <>, <, <=, >, >= or IN
        value: Literal, or tuple of literals for IN
    """
    column: str
    op: str
    value: Any

    @property
    def attribute(self) -> Tuple[str, str]:
        return split_column(self.column)

    def matches(self, value: Any) -> bool:
        """Evaluate the predicate on a column value.

        Raises:
            QueryTypeError: if the literal and value kinds differ
        """
        if self.op == OP_IN:
            for literal in self.value:
                _check_comparable(self.column, value, literal)
            return value in self.value
        _check_comparable(self.column, value, self.value)
        if self.op == "=":
            return value == self.value
        if self.op == "<>":
            return value != self.value
        if self.op == "<":
            return value < self.value
        if self.op == "<=":
            return value <= self.value
        if self.op == ">":
            return value > self.value
        if self.op == ">=":
            return value >= self.value
        raise ValidationError(f"Unknown comparison operator {self.op}")

    def __str__(self) -> str:
        if self.op == OP_IN:
            return f"{self.column} IN ({', '.join(repr(v) for v in self.value)})"
        return f"{self.column} {self.op} {self.value!r}"


@dataclass
class PlanNode:
    """One operator of a query plan.

    Attributes:
        id: Node id, children always have smaller ids than their parents
        kind: Scan, Filter, Join, Aggregate, Project, Sort or Limit
        children: Child node ids (left child first for joins)
        relation: Scanned relation (Scan)
        predicates: Conjuncts evaluated together (Filter)
        join_keys: Equi-join column pairs (Join)
        aggregate: Aggregate description (Aggregate)
        columns: Relation columns (Scan) or kept columns (Project)
        sort_keys: Result columns with descending flags (Sort)
        limit: Row limit (Limit)
        mode: Plain or Secure once modes are assigned
        drop_columns: KAnon columns a Plain scan projects out before any data movement
    """
    id: int
    kind: str
    children: List[int] = field(default_factory=list)
    relation: Optional[str] = None
    predicates: List[Predicate] = field(default_factory=list)
    join_keys: List[JoinKey] = field(default_factory=list)
    aggregate: Optional[AggregateSpec] = None
    columns: List[str] = field(default_factory=list)
    sort_keys: List[SortKey] = field(default_factory=list)
    limit: Optional[int] = None
    mode: Optional[str] = None
    drop_columns: List[str] = field(default_factory=list)

    def control_inputs(self) -> List[str]:
        """Qualified columns whose values alter this operator's observable behavior."""
        if self.kind == NODE_FILTER:
            return _unique([p.column for p in self.predicates])
        if self.kind == NODE_JOIN:
            return _unique([c for pair in self.join_keys for c in pair])
        if self.kind == NODE_AGGREGATE and self.aggregate is not None:
            return self.aggregate.control_inputs
        return []

    def referenced_columns(self) -> List[str]:
        if self.kind == NODE_PROJECT:
            return list(self.columns)
        if self.kind == NODE_AGGREGATE and self.aggregate is not None:
            columns = self.aggregate.control_inputs
            if self.aggregate.target and self.aggregate.target not in columns:
                columns = columns + [self.aggregate.target]
            return columns
        return self.control_inputs()

    @property
    def is_secure(self) -> bool:
        return self.mode == PLAN_MODE_SECURE

    @property
    def client_side(self) -> bool:
        return self.kind in CLIENT_SIDE_NODE_KINDS

    def describe(self) -> str:
        if self.kind == NODE_SCAN:
            detail = self.relation
        elif self.kind == NODE_FILTER:
            detail = " AND ".join(str(p) for p in self.predicates)
        elif self.kind == NODE_JOIN:
            detail = ", ".join(f"{l} = {r}" for l, r in self.join_keys)
        elif self.kind == NODE_AGGREGATE:
            detail = f"{self.aggregate.fn}({self.aggregate.target or '*'}) BY {', '.join(self.aggregate.group_by)}"
        elif self.kind == NODE_PROJECT:
            detail = ", ".join(self.columns)
        elif self.kind == NODE_SORT:
            detail = ", ".join(f"{c} {'DESC' if d else 'ASC'}" for c, d in self.sort_keys)
        else:
            detail = str(self.limit)
        return f"#{self.id} {self.kind}[{detail}]" + (f" {self.mode}" if self.mode else "")


def _unique(columns: List[str]) -> List[str]:
    out: List[str] = []
    for column in columns:
        if column not in out:
            out.append(column)
    return out


@dataclass
class QueryPlan:
    """Operator DAG of one query.

    Attributes:
        nodes: Plan nodes indexed by id
        root: Root node id
        result_columns: Columns of the client-facing result, in SELECT order
        result_names: Display names of the result columns
        text: Query text the plan was parsed from
    """
    nodes: List[PlanNode]
    root: int
    result_columns: List[str] = field(default_factory=list)
    result_names: List[str] = field(default_factory=list)
    text: str = ""

    def node(self, node_id: int) -> PlanNode:
        return self.nodes[node_id]

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def kinds(self) -> List[str]:
        return [n.kind for n in self.nodes]

    @property
    def scans(self) -> List[PlanNode]:
        return [n for n in self.nodes if n.kind == NODE_SCAN]

    @property
    def relations(self) -> List[str]:
        return [n.relation for n in self.scans]

    def parents(self) -> Dict[int, List[int]]:
        out: Dict[int, List[int]] = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            for child in n.children:
                out[child].append(n.id)
        return out

    def topological_order(self) -> List[int]:
        """Node ids with every child before its parent (post-order from the root)."""
        order: List[int] = []
        seen = set()

        def visit(node_id: int, path: Tuple[int, ...]) -> None:
            if node_id in path:
                raise ValidationError(f"Plan has a cycle through node {node_id}")
            if node_id in seen:
                return
            for child in self.nodes[node_id].children:
                visit(child, path + (node_id,))
            seen.add(node_id)
            order.append(node_id)

        visit(self.root, ())
        return order

    def subtree(self, node_id: int) -> List[int]:
        out = [node_id]
        for child in self.nodes[node_id].children:
            out.extend(self.subtree(child))
        return out

    def descendants(self, node_id: int) -> List[int]:
        return self.subtree(node_id)[1:]

    def output_columns(self, node_id: int) -> List[str]:
        node = self.nodes[node_id]
        if node.kind == NODE_SCAN:
            return [c for c in node.columns if c not in node.drop_columns]
        if node.kind == NODE_JOIN:
            return self.output_columns(node.children[0]) + self.output_columns(node.children[1])
        if node.kind == NODE_AGGREGATE:
            return node.aggregate.output_columns
        if node.kind == NODE_PROJECT:
            return list(node.columns)
        return self.output_columns(node.children[0])

    @property
    def engine_root(self) -> int:
        """Highest node evaluated by the data owners; Sort and Limit above it run at the client."""
        node_id = self.root
        while self.nodes[node_id].client_side:
            node_id = self.nodes[node_id].children[0]
        return node_id

    def find(self, kind: str) -> Optional[PlanNode]:
        for n in self.nodes:
            if n.kind == kind:
                return n
        return None

    @property
    def aggregate(self) -> Optional[AggregateSpec]:
        node = self.find(NODE_AGGREGATE)
        return node.aggregate if node else None

    @property
    def is_moded(self) -> bool:
        return all(n.mode is not None for n in self.nodes)

    @property
    def secure_nodes(self) -> List[PlanNode]:
        return [n for n in self.nodes if n.is_secure]

    def validate(self) -> None:
        """Check the DAG shape: acyclic, single root, scans are leaves."""
        order = self.topological_order()
        if len(order) != len(self.nodes):
            raise ValidationError(f"Plan has {len(self.nodes) - len(order)} nodes unreachable from root {self.root}")
        parents = self.parents()
        roots = [node_id for node_id, ps in parents.items() if not ps]
        if roots != [self.root]:
            raise ValidationError(f"Plan must have the single root {self.root}, found {roots}")
        for n in self.nodes:
            if n.kind == NODE_SCAN and n.children:
                raise ValidationError(f"Scan node {n.id} has children")
            if n.kind != NODE_SCAN and not n.children:
                raise ValidationError(f"{n.kind} node {n.id} has no input")

    def describe(self) -> str:
        return "\n".join(self.nodes[i].describe() for i in self.topological_order())
