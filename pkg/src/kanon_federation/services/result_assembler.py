import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

from kanon_federation.domain.catalog import DataTuple
from kanon_federation.domain.class_stream import AggregateSpec
from kanon_federation.domain.constants import *
from kanon_federation.domain.federation import ResultShard
from kanon_federation.domain.query_plan import QueryPlan
from kanon_federation.exceptions import MissingShard, ValidationError

logger = logging.getLogger(__name__)

Row = Tuple[Any, ...]


def _merge_partials(spec: AggregateSpec, rows: List[Row]) -> Tuple[List[str], List[Row]]:
    """Combine per-class partial aggregates of the same group and finish AVG."""
    width = len(spec.group_by)
    merged: Dict[Row, List[Any]] = {}
    for row in rows:
        group, values = row[:width], list(row[width:])
        if group not in merged:
            merged[group] = values
            continue
        current = merged[group]
        if spec.fn == AGG_MIN:
            current[0] = min(current[0], values[0])
        elif spec.fn == AGG_MAX:
            current[0] = max(current[0], values[0])
        else:
            merged[group] = [a + b for a, b in zip(current, values)]

    columns = list(spec.group_by) + [spec.alias]
    out = []
    for group, values in merged.items():
        if spec.fn == AGG_AVG:
            total, count = values
            values = [total / count]
        out.append(group + tuple(values))
    return columns, out


def _row_key(row: Row) -> Tuple:
    # text sorts after numbers so mixed columns still order deterministically
    return tuple((isinstance(v, str), v) for v in row)


def sort_rows(rows: List[Row], columns: Sequence[str], sort_keys: Sequence[Tuple[str, bool]]) -> List[Row]:
    """Order rows by the sort keys, then by the full row as a tiebreak."""
    out = sorted(rows, key=_row_key)
    for column, descending in reversed(list(sort_keys)):
        position = list(columns).index(column)
        out.sort(key=lambda r: _row_key((r[position],)), reverse=descending)
    return out


def assemble_result(shards: Sequence[Optional[ResultShard]], plan: QueryPlan) -> List[Row]:
    """Turn the hosts' result shards into client rows.

    Concatenates the shards, drops dummy tuples, merges partial aggregates (dividing AVG
    pairs), keeps the SELECT columns, then applies ORDER BY and LIMIT.

    Parameters:
        shards (Sequence[Optional[ResultShard]]): One entry per expected shard, None when it never arrived
        plan (QueryPlan): Plan the shards were produced for

    Returns:
        List[Tuple]: Result rows in their final order

    Raises:
        MissingShard: if any expected shard is absent
    """
    missing = [i for i, s in enumerate(shards) if s is None]
    if missing:
        raise MissingShard(f"Result shards {missing} never arrived for query: {plan.text}")
    present = [s for s in shards if s is not None]
    columns = list(present[0].columns) if present else plan.output_columns(plan.engine_root)
    for shard in present:
        if list(shard.columns) != columns:
            raise ValidationError(f"Result shard of host {shard.host} has columns {shard.columns}, expected {columns}")

    tuples: List[DataTuple] = [t for s in present for t in s.tuples]
    rows = [tuple(t.values) for t in tuples if not t.dummy]
    logger.debug(f"Assembling {len(rows)} real tuples out of {len(tuples)}")

    if plan.aggregate is not None:
        columns, rows = _merge_partials(plan.aggregate, rows)

    positions = [columns.index(c) for c in plan.result_columns]
    rows = [tuple(row[p] for p in positions) for row in rows]

    sort_node = plan.find(NODE_SORT)
    rows = sort_rows(rows, plan.result_columns, sort_node.sort_keys if sort_node else [])
    limit_node = plan.find(NODE_LIMIT)
    if limit_node is not None:
        rows = rows[:limit_node.limit]
    return rows
