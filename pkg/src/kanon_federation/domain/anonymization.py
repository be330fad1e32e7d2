from dataclasses import dataclass, field
import logging
from typing import Dict, Iterable, List, Optional, Set, Tuple

from sortedcontainers import SortedKeyList

from kanon_federation.domain.catalog import DataTuple, Scalar
from kanon_federation.domain.constants import *
from kanon_federation.domain.control_flow import ControlFlowSet
from kanon_federation.exceptions import UnmappedValue

logger = logging.getLogger(__name__)

ValueVector = Tuple[Scalar, ...]
ClassKey = Tuple[int, ...]


def frequency_order_key(vector: ValueVector, total: int) -> Tuple:
    """Sort key for descending frequency with a lexicographic tiebreak."""
    return (-total, vector)


@dataclass
class Histogram:
    """Per-host counts of control flow value vectors for one relation.

    Attributes:
        relation: Relation name
        key_attrs: Ordered subset of the relation's control flow attributes
        num_hosts: Length of every count vector
        counts: Value vector -> per-host counts
    """
    relation: str
    key_attrs: Tuple[str, ...]
    num_hosts: int
    counts: Dict[ValueVector, List[int]] = field(default_factory=dict)

    @property
    def rows(self) -> List[Tuple[ValueVector, Tuple[int, ...]]]:
        """Rows by descending total count, then value vector."""
        ordered = SortedKeyList(self.counts.items(), key=lambda item: frequency_order_key(item[0], sum(item[1])))
        return [(vector, tuple(host_counts)) for vector, host_counts in ordered]

    @property
    def total(self) -> int:
        return sum(sum(c) for c in self.counts.values())

    def __len__(self) -> int:
        return len(self.counts)


@dataclass
class DomainPartition:
    """Grouping of one shared domain's values into contiguous blocks of the frequency order.

    Attributes:
        domain: Domain name
        blocks: Value blocks in frequency order; the block index is the group id
    """
    domain: str
    blocks: List[List[Scalar]] = field(default_factory=list)

    def __post_init__(self):
        self._groups: Dict[Scalar, int] = {}
        for group_id, block in enumerate(self.blocks):
            for value in block:
                self._groups[value] = group_id

    @property
    def groups(self) -> Dict[Scalar, int]:
        return dict(self._groups)

    @property
    def order(self) -> List[Scalar]:
        return [value for block in self.blocks for value in block]

    def group_of(self, value: Scalar) -> Optional[int]:
        return self._groups.get(value)

    def __contains__(self, value: object) -> bool:
        return value in self._groups


@dataclass
class AnonymizationMap:
    """The k-anonymous processing view: value vectors -> equivalence class keys, per relation.

    Attributes:
        k: Anonymity parameter the view satisfies
        c: Control flow set the view was generated for
        partitions: One DomainPartition per domain touched by c
        key_attrs: Per relation, c_i in catalog attribute order
        key_domains: Per relation, the domain of each c_i attribute
        class_of: Per relation, value vector -> class key (one group id per c_i attribute)
        hash_seed: Seed of the class-to-host hash
        strategy: View generation strategy that produced the map
    """
    k: int
    c: ControlFlowSet
    partitions: Dict[str, DomainPartition]
    key_attrs: Dict[str, Tuple[str, ...]]
    key_domains: Dict[str, Tuple[str, ...]]
    class_of: Dict[str, Dict[ValueVector, ClassKey]]
    hash_seed: int = DEFAULT_SEED
    strategy: str = VIEW_STRATEGY_GREEDY

    @property
    def relations(self) -> List[str]:
        return list(self.key_attrs.keys())

    def covers(self, relation: str) -> bool:
        return relation in self.key_attrs

    def class_key(self, relation: str, vector: ValueVector) -> ClassKey:
        """Look up the class key of a value vector.

        Raises:
            UnmappedValue: if the relation or the vector is absent from the map
        """
        try:
            return self.class_of[relation][vector]
        except KeyError:
            raise UnmappedValue(f"Value vector {vector} of relation {relation} is not in the anonymization map")

    def class_keys(self, relation: str) -> List[ClassKey]:
        return sorted(set(self.class_of.get(relation, {}).values()))

    def class_ids(self) -> List[str]:
        return [class_id_for(relation, key) for relation in self.relations for key in self.class_keys(relation)]


def class_id_for(relation: str, key: ClassKey) -> str:
    return f"{relation}:{'.'.join(str(g) for g in key)}"


@dataclass
class EquivalenceClass:
    """A group of tuples processed as one unit by secure operators.

    Attributes:
        id: Class id
        relation: Relation (or joined relations) the class belongs to
        tuples: Tuples with dummy flags, duplicates allowed
        covered_values: Raw control flow value vectors of the class's base tuples
        keys: Column -> group id, used to pair classes on join keys
        order: Sort key giving the deterministic class order of a stream
        lineage: Base class id -> size of that base class
    """
    id: str
    relation: str
    tuples: List[DataTuple] = field(default_factory=list)
    covered_values: Set[ValueVector] = field(default_factory=set)
    keys: Dict[str, int] = field(default_factory=dict)
    order: Tuple = ()
    lineage: Dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tuples)

    @property
    def size(self) -> int:
        return len(self.tuples)

    @property
    def real_tuples(self) -> List[DataTuple]:
        return [t for t in self.tuples if not t.dummy]

    def host_counts(self) -> Dict[int, int]:
        counts: Dict[int, int] = {}
        for t in self.tuples:
            counts[t.owner] = counts.get(t.owner, 0) + 1
        return counts

    def derive(self, tuples: List[DataTuple], id: Optional[str] = None) -> "EquivalenceClass":
        """Copy of this class carrying new tuples and the same metadata."""
        return EquivalenceClass(
            id=id or self.id,
            relation=self.relation,
            tuples=tuples,
            covered_values=set(self.covered_values),
            keys=dict(self.keys),
            order=self.order,
            lineage=dict(self.lineage),
        )


class PartitionAssignment(Dict[str, int]):
    """Class id -> host id of the data owner that processes the class."""

    def __init__(self, hosts: List[int], seed: int, iterable: Optional[Iterable[Tuple[str, int]]] = None):
        self.hosts = list(hosts)
        self.seed = seed
        super().__init__(iterable or [])


@dataclass
class ViewStats:
    """Counters describing one view generation run."""
    strategy: str
    histogram_rows: Dict[str, int] = field(default_factory=dict)
    merge_steps: int = 0
    classes: Dict[str, int] = field(default_factory=dict)
    max_class_size: int = 0


@dataclass(frozen=True)
class Violation:
    """One failed check of a processing view.

    Attributes:
        relation: Relation of the offending class
        class_id: Offending class id (or projected value for projection violations)
        kind: size, federated or projection
        host: Host whose subtraction leaves fewer than k tuples (federated only)
    """
    relation: str
    class_id: str
    kind: str
    host: Optional[int] = None
