import copy
import logging
from typing import Optional, Set

from kanon_federation.domain.catalog import Catalog
from kanon_federation.domain.constants import *
from kanon_federation.domain.control_flow import ControlFlowSet
from kanon_federation.domain.query_plan import QueryPlan, split_column
from kanon_federation.domain.workload import (
    AdmissionDecision,
    AugmentView,
    MergeClasses,
    ObliviousFallback,
    ReuseView,
    WorkloadState,
)
from kanon_federation.exceptions import UnknownAttribute, ValidationError

logger = logging.getLogger(__name__)


def tainted_nodes(plan: QueryPlan, catalog: Catalog) -> Set[int]:
    """Nodes that compute on a quasi-identifier, have such a node below them, or sit below one.

    Raises:
        UnknownAttribute: if a control input is missing from the catalog
    """
    tainted: Set[int] = set()
    for node_id in plan.topological_order():
        node = plan.node(node_id)
        touches_kanon = False
        for column in node.control_inputs():
            relation, attribute = split_column(column)
            if catalog.attribute(relation, attribute).is_kanon:
                touches_kanon = True
        if touches_kanon or any(child in tainted for child in node.children):
            tainted.add(node_id)
    # a plain operator below a tainted one would change class membership before anonymization
    for node_id in list(tainted):
        tainted.update(plan.descendants(node_id))
    return tainted


def derive_control_flow(plan: QueryPlan, catalog: Catalog) -> ControlFlowSet:
    """Derive the control flow attribute set C of a plan.

    Parameters:
        plan (QueryPlan): Parsed plan
        catalog (Catalog): Catalog with the security policy

    Returns:
        ControlFlowSet: Control inputs of every tainted node (empty when no quasi-identifier is touched)

    Raises:
        UnknownAttribute: if the plan references an attribute missing from the catalog
    """
    for node in plan.nodes:
        for column in node.referenced_columns():
            relation, attribute = split_column(column)
            if not catalog.has_relation(relation) or not catalog.relation(relation).has_attribute(attribute):
                raise UnknownAttribute(f"Plan node {node.id} references {column}, which is not in the catalog")

    entries = set()
    for node_id in tainted_nodes(plan, catalog):
        for column in plan.node(node_id).control_inputs():
            entries.add(split_column(column))
    c = ControlFlowSet.of(entries)
    logger.debug(f"Derived control flow set {c}")
    return c


def assign_modes(plan: QueryPlan, c: ControlFlowSet, catalog: Optional[Catalog] = None) -> QueryPlan:
    """Mark each node Plain or Secure.

    A node is Secure when its subtree holds an operator with a control input in c, which makes
    the secure part upward closed. With a catalog, Plain scans also project out KAnon columns
    that nothing above them reads.

    Returns:
        QueryPlan: Moded copy of the plan
    """
    moded = copy.deepcopy(plan)
    for node_id in moded.topological_order():
        node = moded.node(node_id)
        in_c = any(split_column(column) in c for column in node.control_inputs())
        secure = in_c or any(moded.node(child).is_secure for child in node.children)
        node.mode = PLAN_MODE_SECURE if secure else PLAN_MODE_PLAIN

    if catalog is not None:
        referenced = set(moded.result_columns)
        for node in moded.nodes:
            referenced.update(node.referenced_columns())
        for scan in moded.scans:
            relation = catalog.relation(scan.relation)
            scan.drop_columns = [
                f"{relation.name}.{a.name}" for a in relation.attributes
                if a.is_kanon and f"{relation.name}.{a.name}" not in referenced
            ]
    logger.debug(f"Assigned modes:\n{moded.describe()}")
    return moded


def admit(c_q: ControlFlowSet, k_q: int, state: WorkloadState) -> AdmissionDecision:
    """Decide how a query runs against the workload protection state.

    Rules in precedence order: subset with k_q <= k_system reuses the view, subset with a
    larger k merges classes, a disjoint set augments the view, anything else runs obliviously.

    Raises:
        ValidationError: if k_q < 1
    """
    if k_q < 1:
        raise ValidationError(f"k must be positive, got {k_q}")
    if c_q.issubset(state.c_system):
        if k_q <= state.k_system:
            return ReuseView()
        return MergeClasses(k_q)
    if c_q.isdisjoint(state.c_system):
        return AugmentView(state.c_system.union(c_q))
    return ObliviousFallback()
