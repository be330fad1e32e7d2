"""Secure operators over class streams.

KAnon operators work one equivalence class at a time with all-or-nothing outcomes; the
oblivious operators pad to data-independent cardinalities; encrypted and plain operators
emit true results only.
"""
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

from kanon_federation.domain.anonymization import EquivalenceClass
from kanon_federation.domain.catalog import Catalog, DataTuple
from kanon_federation.domain.class_stream import AggregateSpec, ClassStream, Mode
from kanon_federation.domain.constants import *
from kanon_federation.domain.query_plan import JoinKey, Predicate, split_column
from kanon_federation.exceptions import DomainMismatch, MissingView, QueryTypeError
from kanon_federation.services.trace_recorder import TraceRecorder

logger = logging.getLogger(__name__)


def synthetic_class(tuples: List[DataTuple], relation: str = SYNTHETIC_CLASS_ID) -> EquivalenceClass:
    """The single class holding a whole encrypted or oblivious stream."""
    return EquivalenceClass(id=SYNTHETIC_CLASS_ID, relation=relation, tuples=tuples)


def _record(recorder: Optional[TraceRecorder], node: int, kind: str, class_id: str, cardinality: int, sizes: Sequence[int],
            order: Tuple = (), class2: Optional[str] = None, secure: bool = True, per_tuple: bool = False) -> None:
    if recorder is not None:
        recorder.record(node, kind, class_id, cardinality, sizes, order=order, class2=class2, secure=secure, per_tuple=per_tuple)


def _single(stream: ClassStream) -> List[DataTuple]:
    return [t for c in stream for t in c.tuples]


def filter_op(mode: Mode, stream: ClassStream, predicates: Sequence[Predicate], node: int = 0,
              recorder: Optional[TraceRecorder] = None, secure: bool = True) -> ClassStream:
    """Filter a stream on a conjunction of predicates.

    KAnon emits a class whole when one of its real tuples matches, with non-matching tuples
    turned into dummies, and drops it otherwise. Oblivious keeps every tuple and only updates
    dummy flags. Encrypted and plain keep the matching real tuples.

    Raises:
        QueryTypeError: if a literal's kind differs from the column's
    """
    positions = [(stream.index_of(p.column), p) for p in predicates]

    def matches(t: DataTuple) -> bool:
        return all(p.matches(t.values[i]) for i, p in positions)

    out = ClassStream(stream.columns)
    if mode is Mode.KANON:
        for c in stream:
            flags = [matches(t) for t in c.tuples]
            if any(m and not t.dummy for m, t in zip(flags, c.tuples)):
                out.append(c.derive([t._replace(dummy=t.dummy or not m) for m, t in zip(flags, c.tuples)]))
                _record(recorder, node, EVENT_CLASS_EMIT, c.id, len(c), [len(c)], order=c.order, secure=secure)
            else:
                _record(recorder, node, EVENT_CLASS_DROP, c.id, 0, [len(c)], order=c.order, secure=secure)
        return out

    tuples = _single(stream)
    if mode is Mode.OBLIVIOUS:
        kept = [t._replace(dummy=t.dummy or not matches(t)) for t in tuples]
        out.append(synthetic_class(kept))
        _record(recorder, node, EVENT_CLASS_EMIT, SYNTHETIC_CLASS_ID, len(kept), [len(tuples)], secure=secure)
        return out

    kept = []
    for t in tuples:
        # dummies are still evaluated so type errors surface uniformly
        if matches(t) and not t.dummy:
            kept.append(t)
    out.append(synthetic_class(kept))
    _record(recorder, node, EVENT_CLASS_EMIT, SYNTHETIC_CLASS_ID, len(kept), [len(tuples)], secure=secure, per_tuple=True)
    return out


def check_join_domains(keys: Sequence[JoinKey], catalog: Catalog) -> None:
    """Raise DomainMismatch unless every key pair shares a semantic domain."""
    for left, right in keys:
        left_domain = catalog.domain_of(*split_column(left))
        right_domain = catalog.domain_of(*split_column(right))
        if left_domain != right_domain:
            raise DomainMismatch(f"Join key {left} (domain {left_domain}) does not share a domain with {right} (domain {right_domain})")


def join_op(mode: Mode, left: ClassStream, right: ClassStream, keys: Sequence[JoinKey], node: int = 0,
            recorder: Optional[TraceRecorder] = None, secure: bool = True, catalog: Optional[Catalog] = None) -> ClassStream:
    """Equi-join two streams.

    KAnon pairs classes whose group ids agree on every key and emits |L| * |R| tuples per
    pair, marking tuples with unequal raw keys as dummies. Oblivious emits the full cross
    product. Encrypted and plain emit the true join of real tuples.

    Raises:
        DomainMismatch: if key pairs do not share a domain
        MissingView: if a class carries no group id for a key column
    """
    if catalog is not None:
        check_join_domains(keys, catalog)
    positions = [(left.index_of(l), right.index_of(r)) for l, r in keys]
    out = ClassStream(left.columns + right.columns)

    def equal_keys(l: DataTuple, r: DataTuple) -> bool:
        return all(l.values[i] == r.values[j] for i, j in positions)

    def pair(l: DataTuple, r: DataTuple) -> DataTuple:
        return DataTuple(l.values + r.values, l.dummy or r.dummy or not equal_keys(l, r), l.owner)

    if mode is Mode.KANON:
        try:
            right_by_key: Dict[Tuple, List[EquivalenceClass]] = {}
            for rc in right:
                right_by_key.setdefault(tuple(rc.keys[r] for _, r in keys), []).append(rc)
            for lc in left:
                for rc in right_by_key.get(tuple(lc.keys[l] for l, _ in keys), []):
                    joined = EquivalenceClass(
                        id=f"{lc.id}*{rc.id}",
                        relation=f"{lc.relation}*{rc.relation}",
                        tuples=[pair(l, r) for l in lc.tuples for r in rc.tuples],
                        keys={**lc.keys, **rc.keys},
                        order=lc.order + rc.order,
                        lineage={**lc.lineage, **rc.lineage},
                    )
                    out.append(joined)
                    _record(recorder, node, EVENT_PAIR_EMIT, lc.id, len(joined), [len(lc), len(rc)],
                            order=joined.order, class2=rc.id, secure=secure)
        except KeyError as e:
            raise MissingView(f"Class has no group id for join column {e}, the view does not cover the join keys")
        return out

    left_tuples = _single(left)
    right_tuples = _single(right)
    if mode is Mode.OBLIVIOUS:
        tuples = [pair(l, r) for l in left_tuples for r in right_tuples]
        out.append(synthetic_class(tuples))
        _record(recorder, node, EVENT_PAIR_EMIT, SYNTHETIC_CLASS_ID, len(tuples), [len(left_tuples), len(right_tuples)],
                class2=SYNTHETIC_CLASS_ID, secure=secure)
        return out

    by_key: Dict[Tuple, List[DataTuple]] = {}
    for r in right_tuples:
        if not r.dummy:
            by_key.setdefault(tuple(r.values[j] for _, j in positions), []).append(r)
    tuples = [
        DataTuple(l.values + r.values, False, l.owner)
        for l in left_tuples if not l.dummy
        for r in by_key.get(tuple(l.values[i] for i, _ in positions), [])
    ]
    out.append(synthetic_class(tuples))
    _record(recorder, node, EVENT_PAIR_EMIT, SYNTHETIC_CLASS_ID, len(tuples), [len(left_tuples), len(right_tuples)],
            class2=SYNTHETIC_CLASS_ID, secure=secure, per_tuple=True)
    return out


def _aggregate_values(spec: AggregateSpec, target: Optional[int], rows: List[DataTuple]) -> Tuple[Any, ...]:
    if spec.fn == AGG_COUNT:
        return (len(rows),)
    values = [t.values[target] for t in rows]
    if spec.fn in (AGG_SUM, AGG_AVG):
        for v in values:
            if isinstance(v, str):
                raise QueryTypeError(f"{spec.fn} over text column {spec.target}")
        if spec.fn == AGG_SUM:
            return (sum(values),)
        return (sum(values), len(values))
    if spec.fn == AGG_MIN:
        return (min(values),)
    return (max(values),)


def _dummy_values(spec: AggregateSpec) -> Tuple[Any, ...]:
    return tuple(0 for _ in spec.value_columns)


def aggregate_op(mode: Mode, stream: ClassStream, spec: AggregateSpec, k: int, node: int = 0,
                 recorder: Optional[TraceRecorder] = None, secure: bool = True) -> ClassStream:
    """Grouped aggregate with partial results per class.

    KAnon evaluates every distinct group value (bin) of a class on its own: a bin with at
    least k distinct real individuals emits one tuple with the true aggregate, any other bin
    emits exactly |class| tuples, the true result first and dummies after. Oblivious emits one
    tuple per distinct group value in the input, dummy when no real tuple has it. Encrypted
    and plain emit one tuple per group of real tuples.

    Raises:
        QueryTypeError: for SUM or AVG over text
    """
    group_positions = [stream.index_of(c) for c in spec.group_by]
    target = stream.index_of(spec.target) if spec.target is not None else None
    entity = stream.index_of(spec.entity_attr)
    out = ClassStream(spec.output_columns)

    def group_of(t: DataTuple) -> Tuple:
        return tuple(t.values[i] for i in group_positions)

    def bins_of(tuples: List[DataTuple]) -> List[Tuple]:
        return sorted({group_of(t) for t in tuples})

    if mode is Mode.KANON:
        for c in stream:
            for i, group in enumerate(bins_of(c.tuples)):
                real = [t for t in c.tuples if not t.dummy and group_of(t) == group]
                individuals = {t.values[entity] for t in real}
                owner = c.tuples[0].owner
                if len(individuals) >= k:
                    tuples = [DataTuple(group + _aggregate_values(spec, target, real), False, owner)]
                else:
                    tuples = []
                    if real:
                        tuples.append(DataTuple(group + _aggregate_values(spec, target, real), False, owner))
                    padding = DataTuple(group + _dummy_values(spec), True, owner)
                    tuples.extend([padding] * (len(c) - len(tuples)))
                bin_class = c.derive(tuples, id=f"{c.id}#{i}")
                bin_class.order = c.order + (i,)
                out.append(bin_class)
                _record(recorder, node, EVENT_BIN_EMIT, bin_class.id, len(tuples), [len(c)], order=bin_class.order, secure=secure)
        return out

    tuples = _single(stream)
    owner = tuples[0].owner if tuples else 0
    results = []
    for group in bins_of(tuples):
        real = [t for t in tuples if not t.dummy and group_of(t) == group]
        if real:
            results.append(DataTuple(group + _aggregate_values(spec, target, real), False, owner))
        elif mode is Mode.OBLIVIOUS:
            results.append(DataTuple(group + _dummy_values(spec), True, owner))
    out.append(synthetic_class(results))
    _record(recorder, node, EVENT_BIN_EMIT, SYNTHETIC_CLASS_ID, len(results), [len(tuples)], secure=secure,
            per_tuple=mode is not Mode.OBLIVIOUS)
    return out


def project_op(mode: Mode, stream: ClassStream, columns: Sequence[str], node: int = 0,
               recorder: Optional[TraceRecorder] = None, secure: bool = True) -> ClassStream:
    """Restrict tuples to columns; cardinalities and dummy flags are unchanged in every mode.

    Raises:
        UnknownAttribute: if a column is not in the stream
    """
    positions = [stream.index_of(c) for c in columns]
    out = ClassStream(list(columns))
    for c in stream:
        out.append(c.derive([t._replace(values=tuple(t.values[i] for i in positions)) for t in c.tuples]))
        _record(recorder, node, EVENT_CLASS_EMIT, c.id, len(c), [len(c)], order=c.order, secure=secure,
                per_tuple=mode not in (Mode.KANON, Mode.OBLIVIOUS))
    return out
