import json
import logging
from typing import Dict, List, Tuple

from kanon_federation.domain.catalog import Catalog, DecompositionReport
from kanon_federation.exceptions import ParseError
from kanon_federation.integrations.storage.mappers.catalog_mapper import CatalogMapper

logger = logging.getLogger(__name__)

# Chase symbols: ("a", domain) is distinguished, ("b", row, domain) is not
Symbol = Tuple


def load_catalog(text: str, mapper: CatalogMapper = None) -> Catalog:
    """Parse and validate a catalog document.

    Parameters:
        text (str): JSON catalog document
        mapper (CatalogMapper): Document mapper, defaults to CatalogMapper

    Returns:
        Catalog: Validated catalog

    Raises:
        ParseError: if the document is malformed
        ValidationError: if the catalog violates an invariant
    """
    mapper = mapper or CatalogMapper()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"Catalog document is not valid JSON: {e.msg}", e.pos)
    catalog = mapper.from_json(obj)
    catalog.validate()
    logger.debug(f"Loaded catalog with {len(catalog.relations)} relations and {len(catalog.kanon_attributes())} KAnon attributes")
    return catalog


def dump_catalog(catalog: Catalog, mapper: CatalogMapper = None) -> str:
    mapper = mapper or CatalogMapper()
    return json.dumps(mapper.to_json(catalog), indent=2)


def _symbol_name(symbol: Symbol) -> str:
    if symbol[0] == "a":
        return f"a_{symbol[1]}"
    return f"b{symbol[1]}_{symbol[2]}"


def _preferred(x: Symbol, y: Symbol) -> Symbol:
    if x[0] == "a":
        return x
    if y[0] == "a":
        return y
    return min(x, y)


def _chase(rows: List[Dict[str, Symbol]], catalog: Catalog) -> None:
    changed = True
    while changed:
        changed = False
        for fd in catalog.fds:
            for i in range(len(rows)):
                for j in range(i + 1, len(rows)):
                    if not all(rows[i][d] == rows[j][d] for d in fd.lhs):
                        continue
                    for d in fd.rhs:
                        x, y = rows[i][d], rows[j][d]
                        if x == y:
                            continue
                        keep = _preferred(x, y)
                        drop = y if keep == x else x
                        # equating symbols renames every occurrence in the column
                        for row in rows:
                            if row[d] == drop:
                                row[d] = keep
                        changed = True


def validate_decomposition(catalog: Catalog) -> DecompositionReport:
    """Run the chase test for a lossless join and check dependency preservation.

    Relations are compared through their domain names, so pid in two relations is one
    attribute of the universal relation.

    Parameters:
        catalog (Catalog): Catalog with declared functional dependencies

    Returns:
        DecompositionReport: Negative findings are reported, never raised
    """
    universe = catalog.domains
    relation_domains = [{a.domain_name for a in r.attributes} for r in catalog.relations]

    rows: List[Dict[str, Symbol]] = []
    for i, domains in enumerate(relation_domains):
        rows.append({d: ("a", d) if d in domains else ("b", i, d) for d in universe})
    _chase(rows, catalog)

    distinguished = [sum(1 for d in universe if row[d][0] == "a") for row in rows]
    lossless = any(count == len(universe) for count in distinguished)
    tableau = [[_symbol_name(row[d]) for d in universe] for row in rows]
    witness = None
    if not lossless:
        witness = tableau[distinguished.index(max(distinguished))]
        logger.warning(f"Catalog decomposition is not lossless, chase witness row: {witness}")

    preserved = {}
    for fd in catalog.fds:
        needed = set(fd.lhs) | set(fd.rhs)
        preserved[str(fd)] = any(needed <= domains for domains in relation_domains)
        if not preserved[str(fd)]:
            logger.warning(f"Functional dependency {fd} is not preserved by any relation")

    return DecompositionReport(lossless=lossless, universe=universe, tableau=tableau, witness=witness, preserved=preserved)
