from dataclasses import dataclass, field
import logging
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

from kanon_federation.domain.constants import *
from kanon_federation.exceptions import UnknownAttribute, ValidationError

logger = logging.getLogger(__name__)

Scalar = Any  # int for integer/date attributes, str for text attributes


@dataclass(frozen=True)
class AttributeDef:
    """Data class representing one attribute of a shared table definition.

    Attributes:
        name: Attribute name, unique within its relation
        kind: Scalar kind (integer, text or date-as-integer)
        policy: Security policy label (public or kanon)
        domain: Semantic domain name; attributes sharing a domain are join compatible
    """
    name: str
    kind: str = KIND_INTEGER
    policy: str = POLICY_PUBLIC
    domain: Optional[str] = None

    @property
    def domain_name(self) -> str:
        """Domain name, defaulting to the attribute name when none was declared."""
        return self.domain or self.name

    @property
    def is_kanon(self) -> bool:
        return self.policy == POLICY_KANON


@dataclass(frozen=True)
class RelationDef:
    """Data class representing a shared table definition and its security policy.

    Attributes:
        name: Relation name, unique in the catalog
        attributes: Ordered attribute definitions
        entity_attr: Attribute naming the individual a tuple is about
    """
    name: str
    attributes: Tuple[AttributeDef, ...]
    entity_attr: str

    @property
    def attribute_names(self) -> List[str]:
        return [a.name for a in self.attributes]

    @property
    def arity(self) -> int:
        return len(self.attributes)

    def attribute(self, name: str) -> AttributeDef:
        for attribute in self.attributes:
            if attribute.name == name:
                return attribute
        raise UnknownAttribute(f"Attribute {name} not found in relation {self.name}")

    def index_of(self, name: str) -> int:
        for i, attribute in enumerate(self.attributes):
            if attribute.name == name:
                return i
        raise UnknownAttribute(f"Attribute {name} not found in relation {self.name}")

    def has_attribute(self, name: str) -> bool:
        return any(a.name == name for a in self.attributes)


@dataclass(frozen=True)
class FunctionalDependency:
    """Data class representing a declared functional dependency lhs -> rhs over domain names."""
    lhs: Tuple[str, ...]
    rhs: Tuple[str, ...]

    def __str__(self) -> str:
        return f"{','.join(self.lhs)} -> {','.join(self.rhs)}"


@dataclass
class Catalog:
    """The federation's shared table definitions, security policy and functional dependencies.

    Immutable after load_catalog validates it; shared read-only by every node.
    """
    relations: List[RelationDef] = field(default_factory=list)
    fds: List[FunctionalDependency] = field(default_factory=list)

    def relation(self, name: str) -> RelationDef:
        for relation in self.relations:
            if relation.name == name:
                return relation
        raise UnknownAttribute(f"Relation {name} not found in catalog")

    def has_relation(self, name: str) -> bool:
        return any(r.name == name for r in self.relations)

    def attribute(self, relation: str, name: str) -> AttributeDef:
        return self.relation(relation).attribute(name)

    def domain_of(self, relation: str, name: str) -> str:
        return self.attribute(relation, name).domain_name

    def entity_attr(self, relation: str) -> str:
        return self.relation(relation).entity_attr

    @property
    def domains(self) -> List[str]:
        """Every domain name in declaration order, without duplicates."""
        out: List[str] = []
        for relation in self.relations:
            for attribute in relation.attributes:
                if attribute.domain_name not in out:
                    out.append(attribute.domain_name)
        return out

    def attributes_in_domain(self, domain: str) -> List[Tuple[str, str]]:
        """(relation, attribute) pairs declared in a domain."""
        return [
            (relation.name, attribute.name)
            for relation in self.relations
            for attribute in relation.attributes
            if attribute.domain_name == domain
        ]

    def kanon_attributes(self) -> List[Tuple[str, str]]:
        return [
            (relation.name, attribute.name)
            for relation in self.relations
            for attribute in relation.attributes
            if attribute.is_kanon
        ]

    def validate(self) -> None:
        """Check the catalog invariants.

        Raises:
            ValidationError: naming the offending relation, attribute, domain or dependency
        """
        if not self.relations:
            raise ValidationError("no relations")
        seen_relations = set()
        domain_kinds: Dict[str, str] = {}
        for relation in self.relations:
            if relation.name in seen_relations:
                raise ValidationError(f"duplicate relation {relation.name}")
            seen_relations.add(relation.name)
            if not relation.attributes:
                raise ValidationError(f"relation {relation.name} has no attributes")
            seen_attributes = set()
            for attribute in relation.attributes:
                if attribute.name in seen_attributes:
                    raise ValidationError(f"duplicate attribute {attribute.name} in relation {relation.name}")
                seen_attributes.add(attribute.name)
                if attribute.kind not in SCALAR_KINDS:
                    raise ValidationError(f"attribute {relation.name}.{attribute.name} has unknown kind {attribute.kind}")
                if attribute.policy not in POLICIES:
                    raise ValidationError(f"attribute {relation.name}.{attribute.name} has no valid policy (got {attribute.policy})")
                # join compatible attributes must agree on their scalar kind
                known_kind = domain_kinds.setdefault(attribute.domain_name, attribute.kind)
                if known_kind != attribute.kind:
                    raise ValidationError(f"domain {attribute.domain_name} mixes kinds {known_kind} and {attribute.kind} (at {relation.name}.{attribute.name})")
            if not relation.entity_attr or relation.entity_attr not in seen_attributes:
                raise ValidationError(f"entity_attr {relation.entity_attr} missing from relation {relation.name}")
        for fd in self.fds:
            if not fd.lhs or not fd.rhs:
                raise ValidationError(f"functional dependency {fd} has an empty side")
            for name in fd.lhs + fd.rhs:
                if name not in domain_kinds:
                    raise ValidationError(f"functional dependency {fd} references unknown attribute {name}")


class DataTuple(NamedTuple):
    """One tuple flowing through the federation.

    Attributes:
        values: Scalar values in column order
        dummy: True for padding tuples, which never reach client results
        owner: Host id of the data owner that contributed the tuple
    """
    values: Tuple[Scalar, ...]
    dummy: bool = False
    owner: int = 0


@dataclass
class RelationShard:
    """One host's tuples for one relation (horizontal partition).

    Attributes:
        relation: Relation name
        owner: Host id
        tuples: Ordered base tuples (never dummy)
    """
    relation: str
    owner: int
    tuples: List[DataTuple] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tuples)

    def validate(self, catalog: Catalog) -> None:
        relation = catalog.relation(self.relation)
        for i, t in enumerate(self.tuples):
            if len(t.values) != relation.arity:
                raise ValidationError(f"tuple {i} of {self.relation} on host {self.owner} has arity {len(t.values)}, expected {relation.arity}")
            if t.dummy:
                raise ValidationError(f"base tuple {i} of {self.relation} on host {self.owner} is marked dummy")

    @classmethod
    def from_rows(cls, relation: str, owner: int, rows: List[Tuple[Scalar, ...]]) -> "RelationShard":
        return cls(relation=relation, owner=owner, tuples=[DataTuple(tuple(r), False, owner) for r in rows])


@dataclass
class DecompositionReport:
    """Outcome of the lossless-join chase and the dependency preservation check.

    Attributes:
        lossless: True when the chase produces an all-distinguished row
        witness: When lossy, the tableau row (one symbol per domain) closest to all-distinguished
        tableau: Final chase tableau, one row per relation
        universe: Domain names, the tableau's column order
        preserved: Functional dependency -> whether some relation carries lhs and rhs together
    """
    lossless: bool
    universe: List[str] = field(default_factory=list)
    tableau: List[List[str]] = field(default_factory=list)
    witness: Optional[List[str]] = None
    preserved: Dict[str, bool] = field(default_factory=dict)

    @property
    def dependency_preserving(self) -> bool:
        return all(self.preserved.values())
