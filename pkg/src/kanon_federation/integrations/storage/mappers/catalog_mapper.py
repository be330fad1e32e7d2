from typing import Any, Dict, Mapping

from kanon_federation.domain.catalog import AttributeDef, Catalog, FunctionalDependency, RelationDef
from kanon_federation.exceptions import ParseError


class CatalogMapper:
    def from_json(self, obj: Mapping[str, Any]) -> Catalog:
        if not isinstance(obj, Mapping):
            raise ParseError(f"Catalog document must be an object, got {type(obj).__name__}")

        def _parse_attribute(relation_name: str, row: Mapping[str, Any]) -> AttributeDef:
            try:
                return AttributeDef(
                    name=row["name"],
                    kind=row["kind"],
                    policy=row.get("policy"),
                    domain=row.get("domain"),
                )
            except (KeyError, TypeError, AttributeError) as e:
                raise ParseError(f"Error processing attribute of relation {relation_name}: missing {e}")

        relations = []
        for i, row in enumerate(obj.get("relations", [])):
            try:
                name = row["name"]
                attributes = tuple(_parse_attribute(name, a) for a in row["attributes"])
                relations.append(RelationDef(name=name, attributes=attributes, entity_attr=row.get("entity_attr")))
            except (KeyError, TypeError) as e:
                raise ParseError(f"Error processing relation {i}: missing {e}")

        fds = []
        for i, row in enumerate(obj.get("fds", [])):
            try:
                fds.append(FunctionalDependency(lhs=tuple(row["lhs"]), rhs=tuple(row["rhs"])))
            except (KeyError, TypeError) as e:
                raise ParseError(f"Error processing functional dependency {i}: missing {e}")

        return Catalog(relations=relations, fds=fds)

    def to_json(self, catalog: Catalog) -> Dict[str, Any]:
        relations = []
        for relation in catalog.relations:
            attributes = []
            for attribute in relation.attributes:
                row = {"name": attribute.name, "kind": attribute.kind, "policy": attribute.policy}
                if attribute.domain is not None:
                    row["domain"] = attribute.domain
                attributes.append(row)
            relations.append({"name": relation.name, "attributes": attributes, "entity_attr": relation.entity_attr})
        return {
            "relations": relations,
            "fds": [{"lhs": list(fd.lhs), "rhs": list(fd.rhs)} for fd in catalog.fds],
        }
