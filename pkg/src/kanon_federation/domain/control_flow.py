from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, Iterator, List, Optional, Tuple

from kanon_federation.domain.catalog import Catalog

AttributeRef = Tuple[str, str]  # (relation, attribute)


@dataclass(frozen=True)
class ControlFlowSet:
    """Set C of (relation, attribute) pairs whose values alter an operator's observable behavior.

    Attributes:
        entries: The (relation, attribute) pairs
    """
    entries: FrozenSet[AttributeRef] = field(default_factory=frozenset)

    @classmethod
    def of(cls, entries: Iterable[AttributeRef]) -> "ControlFlowSet":
        return cls(frozenset((r, a) for r, a in entries))

    def __iter__(self) -> Iterator[AttributeRef]:
        return iter(sorted(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, item: object) -> bool:
        return item in self.entries

    def __bool__(self) -> bool:
        return bool(self.entries)

    @property
    def relations(self) -> List[str]:
        return sorted({r for r, _ in self.entries})

    def for_relation(self, relation: str, catalog: Optional[Catalog] = None) -> Tuple[str, ...]:
        """c_i: the entries of one relation, in catalog attribute order when a catalog is given."""
        names = {a for r, a in self.entries if r == relation}
        if catalog is not None:
            return tuple(a for a in catalog.relation(relation).attribute_names if a in names)
        return tuple(sorted(names))

    def issubset(self, other: "ControlFlowSet") -> bool:
        return self.entries <= other.entries

    def isdisjoint(self, other: "ControlFlowSet") -> bool:
        return self.entries.isdisjoint(other.entries)

    def union(self, other: "ControlFlowSet") -> "ControlFlowSet":
        return ControlFlowSet(self.entries | other.entries)

    def __str__(self) -> str:
        return "{" + ", ".join(f"{r}.{a}" for r, a in self) + "}"
