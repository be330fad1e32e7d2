import logging
from typing import Callable, Dict, List, Optional, Sequence

from kanon_federation.domain.anonymization import AnonymizationMap, EquivalenceClass
from kanon_federation.domain.catalog import Catalog, DataTuple, RelationShard
from kanon_federation.domain.class_stream import ClassStream, Mode
from kanon_federation.domain.constants import *
from kanon_federation.domain.query_plan import PlanNode, QueryPlan, split_column
from kanon_federation.exceptions import MissingView, ValidationError
from kanon_federation.services.anonymizer import materialize_view
from kanon_federation.services.operators import aggregate_op, filter_op, join_op, project_op, synthetic_class
from kanon_federation.services.trace_recorder import TraceRecorder

logger = logging.getLogger(__name__)

ScanSource = Callable[[PlanNode], List[DataTuple]]
ClassSource = Callable[[str], List[EquivalenceClass]]
RightStreamHook = Callable[[PlanNode], Optional[ClassStream]]


def _projection(catalog: Catalog, relation: str, columns: Sequence[str]) -> List[int]:
    relation_def = catalog.relation(relation)
    return [relation_def.index_of(split_column(c)[1]) for c in columns]


def project_scan(plan: QueryPlan, catalog: Catalog, node: PlanNode, tuples: Sequence[DataTuple]) -> List[DataTuple]:
    """Restrict a relation's tuples to the scan's output columns, dropping unreferenced KAnon columns."""
    positions = _projection(catalog, node.relation, plan.output_columns(node.id))
    return [t._replace(values=tuple(t.values[p] for p in positions)) for t in tuples]


class PlanEvaluator:
    """Evaluates a moded plan bottom-up in one execution mode.

    Plain nodes run the plain operators over true tuples. At the Plain to Secure frontier
    the input becomes view classes (KAnon) or a single synthetic class (encrypted and
    oblivious). Secure nodes run the mode's operators and every emission is recorded.

    Parameters:
        plan (QueryPlan): Moded plan
        mode (Mode): Execution mode of the secure nodes
        catalog (Catalog): Catalog of the plan's relations
        k (int): Anonymity level used by k-anonymous aggregates
        recorder (TraceRecorder): Event sink
        scan_source (ScanSource): Scan node -> true tuples projected to the scan columns, in host order
        class_source (ClassSource): Relation -> view classes, in class order (KAnon only)
        right_stream (RightStreamHook): Optional override of a join's right input, used when
            the right side was evaluated elsewhere and exchanged
    """

    def __init__(
        self,
        plan: QueryPlan,
        mode: Mode,
        catalog: Catalog,
        k: int,
        recorder: TraceRecorder,
        scan_source: ScanSource,
        class_source: Optional[ClassSource] = None,
        right_stream: Optional[RightStreamHook] = None,
    ):
        if not plan.is_moded:
            raise ValidationError("Plan has no execution modes, run assign_modes first")
        self.plan = plan
        self.mode = mode
        self.catalog = catalog
        self.k = k
        self.recorder = recorder
        self._scan_source = scan_source
        self._class_source = class_source
        self._right_stream = right_stream

    def is_secure(self, node: PlanNode) -> bool:
        return node.is_secure and self.mode is not Mode.PLAIN

    def run(self) -> ClassStream:
        return self.evaluate(self.plan.engine_root)

    def evaluate(self, node_id: int) -> ClassStream:
        node = self.plan.node(node_id)
        secure = self.is_secure(node)
        op_mode = self.mode if secure else Mode.PLAIN

        if node.kind == NODE_SCAN:
            return self._scan(node)
        if node.kind == NODE_FILTER:
            return filter_op(op_mode, self.input(node, 0), node.predicates, node.id, self.recorder, secure)
        if node.kind == NODE_JOIN:
            left = self.input(node, 0)
            right = self._right_stream(node) if self._right_stream else None
            if right is None:
                right = self.input(node, 1)
            return join_op(op_mode, left, right, node.join_keys, node.id, self.recorder, secure, self.catalog)
        if node.kind == NODE_AGGREGATE:
            return aggregate_op(op_mode, self.input(node, 0), node.aggregate, self.k, node.id, self.recorder, secure)
        if node.kind == NODE_PROJECT:
            return project_op(op_mode, self.input(node, 0), node.columns, node.id, self.recorder, secure)
        # Sort and Limit run at the client
        return self.input(node, 0)

    def input(self, node: PlanNode, position: int) -> ClassStream:
        """Input stream of a node, converted to classes when it crosses the secure frontier."""
        child = self.plan.node(node.children[position])
        if self.is_secure(node) and not self.is_secure(child):
            return self._frontier(child)
        return self.evaluate(child.id)

    def _scan(self, node: PlanNode) -> ClassStream:
        return ClassStream(self.plan.output_columns(node.id), [synthetic_class(self._scan_source(node), node.relation)])

    def _frontier(self, child: PlanNode) -> ClassStream:
        columns = self.plan.output_columns(child.id)
        if self.mode is not Mode.KANON:
            return ClassStream(columns, [synthetic_class(self.evaluate(child.id).tuples)])
        if child.kind != NODE_SCAN:
            raise ValidationError(f"K-anonymous execution needs the secure frontier directly above scans, found {child.describe()}")
        if self._class_source is None:
            raise MissingView(f"No anonymized view to route relation {child.relation} into classes")
        positions = _projection(self.catalog, child.relation, columns)
        classes = [
            c.derive([t._replace(values=tuple(t.values[p] for p in positions)) for t in c.tuples])
            for c in self._class_source(child.relation)
        ]
        logger.debug(f"Frontier above scan {child.id}: {len(classes)} classes of {child.relation}")
        return ClassStream(columns, classes)


def check_view_covers(plan: QueryPlan, view: Optional[AnonymizationMap]) -> None:
    """Raise MissingView unless the view protects every control input of the secure nodes."""
    if plan.secure_nodes and view is None:
        raise MissingView("K-anonymous execution needs an anonymization map")
    for node in plan.secure_nodes:
        for column in node.control_inputs():
            if split_column(column) not in view.c:
                raise MissingView(f"Column {column} of {node.describe()} is not protected by the view (C = {view.c})")
        for child_id in node.children:
            child = plan.node(child_id)
            if child.kind == NODE_SCAN and not view.covers(child.relation):
                raise MissingView(f"Relation {child.relation} is not covered by the view")


def exec_plan(
    plan: QueryPlan,
    mode: Mode,
    shards: Sequence[RelationShard],
    catalog: Catalog,
    view: Optional[AnonymizationMap] = None,
    recorder: Optional[TraceRecorder] = None,
) -> ClassStream:
    """Execute a moded plan over the shards of all hosts in one process.

    Parameters:
        plan (QueryPlan): Plan with modes assigned
        mode (Mode): Execution mode of the secure nodes
        shards (Sequence[RelationShard]): Every host's shards
        catalog (Catalog): Catalog of the shards
        view (AnonymizationMap): Processing view, required for KAnon plans with secure nodes
        recorder (TraceRecorder): Event sink, a fresh one when omitted

    Returns:
        ClassStream: Output of the plan's engine root, dummies included

    Raises:
        MissingView: if KAnon execution lacks a view covering the secure nodes
    """
    mode = Mode(mode)
    recorder = recorder if recorder is not None else TraceRecorder()
    ordered = sorted(shards, key=lambda s: (s.relation, s.owner))

    def scan_source(node: PlanNode) -> List[DataTuple]:
        return [t for s in ordered if s.relation == node.relation for t in project_scan(plan, catalog, node, s.tuples)]

    class_source = None
    k = 1
    if mode is Mode.KANON and plan.secure_nodes:
        check_view_covers(plan, view)
        classes = materialize_view(ordered, view, catalog)
        k = view.k

        def class_source(relation: str) -> List[EquivalenceClass]:
            return classes.get(relation, [])

    evaluator = PlanEvaluator(plan, mode, catalog, k, recorder, scan_source, class_source)
    out = evaluator.run()
    logger.debug(f"Executed plan in {mode.value} mode: {out.tuple_count} tuples, {len(recorder)} events")
    return out


def run_secure(
    plan: QueryPlan,
    classes: Dict[str, List[EquivalenceClass]],
    k: int,
    catalog: Catalog,
    recorder: TraceRecorder,
) -> ClassStream:
    """Run the k-anonymous operators over materialized view classes alone."""

    def no_tuples(node: PlanNode) -> List[DataTuple]:
        return []

    def class_source(relation: str) -> List[EquivalenceClass]:
        return classes.get(relation, [])

    return PlanEvaluator(plan, Mode.KANON, catalog, k, recorder, no_tuples, class_source).run()
