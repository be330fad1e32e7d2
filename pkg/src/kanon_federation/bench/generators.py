"""Deterministic synthetic datasets: a TPC-H-like schema, a health records surrogate with
skewed per-patient record counts, a uniform unique-key join pair and the small running example.

Every generator is a pure function of its parameters and seed.
"""
import logging
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np

from kanon_federation.bench.constants import *
from kanon_federation.domain.bench import GeneratedDataset
from kanon_federation.domain.catalog import AttributeDef, Catalog, DataTuple, RelationDef, RelationShard
from kanon_federation.domain.constants import *
from kanon_federation.exceptions import ValidationError

logger = logging.getLogger(__name__)


def _attr(name: str, kind: str = KIND_INTEGER, kanon: bool = False, domain: str = None) -> AttributeDef:
    return AttributeDef(name=name, kind=kind, policy=POLICY_KANON if kanon else POLICY_PUBLIC, domain=domain)


def split_rows(catalog: Catalog, rows: Dict[str, List[Tuple[Any, ...]]], hosts: int) -> Dict[int, List[RelationShard]]:
    """Deal each relation's rows round-robin over the hosts."""
    if hosts < 1:
        raise ValidationError(f"A dataset needs at least one host, got {hosts}")
    shards: Dict[int, List[RelationShard]] = {}
    for host in range(hosts):
        shards[host] = []
        for relation in catalog.relations:
            host_rows = rows.get(relation.name, [])[host::hosts]
            shards[host].append(RelationShard(relation.name, host, [DataTuple(tuple(r), False, host) for r in host_rows]))
    return shards


def _dataset(relations: List[RelationDef], rows: Dict[str, List[Tuple[Any, ...]]], hosts: int) -> GeneratedDataset:
    catalog = Catalog(relations=relations, fds=[])
    catalog.validate()
    dataset = GeneratedDataset(catalog=catalog, shards=split_rows(catalog, rows, hosts))
    logger.info(f"Generated {', '.join(f'{r}={len(v)}' for r, v in rows.items())} over {hosts} hosts")
    return dataset


def gen_tpch_like(scale: float, seed: int = DEFAULT_SEED, hosts: int = 1) -> GeneratedDataset:
    """customer, orders, lineitem and supplier with TPC-H-like cardinality ratios.

    Parameters:
        scale (float): rows(orders) = round(15000 * scale)
        seed (int): Generator seed
        hosts (int): Number of data owners

    Raises:
        ValidationError: if scale is not positive
    """
    if scale <= 0:
        raise ValidationError(f"Scale must be positive, got {scale}")
    rng = np.random.default_rng(seed)
    n_orders = max(1, round(ORDERS_PER_SCALE * scale))
    n_customers = max(1, round(CUSTOMERS_PER_SCALE * scale))
    n_suppliers = max(1, round(SUPPLIERS_PER_SCALE * scale))

    customers = [
        (c, int(rng.integers(NATIONS)), MARKET_SEGMENTS[int(rng.integers(len(MARKET_SEGMENTS)))])
        for c in range(1, n_customers + 1)
    ]
    suppliers = [(s, int(rng.integers(NATIONS))) for s in range(1, n_suppliers + 1)]
    orders = []
    lineitems = []
    for o in range(1, n_orders + 1):
        custkey = int(rng.integers(1, n_customers + 1))
        orderdate = int(rng.integers(ORDER_DATE_RANGE[0], ORDER_DATE_RANGE[1] + 1))
        lines = int(rng.integers(LINES_PER_ORDER[0], LINES_PER_ORDER[1] + 1))
        total = 0
        for _ in range(lines):
            suppkey = int(rng.integers(1, n_suppliers + 1))
            quantity = int(rng.integers(1, 51))
            price = quantity * int(rng.integers(900, 2100))
            total += price
            lineitems.append((o, suppkey, quantity, price))
        orders.append((o, custkey, orderdate, total))

    relations = [
        RelationDef("customer", (
            _attr("c_custkey", kanon=True, domain="custkey"),
            _attr("c_nationkey", domain="nationkey"),
            _attr("c_mktsegment", KIND_TEXT),
        ), entity_attr="c_custkey"),
        RelationDef("orders", (
            _attr("o_orderkey", domain="orderkey"),
            _attr("o_custkey", kanon=True, domain="custkey"),
            _attr("o_orderdate", KIND_DATE),
            _attr("o_totalprice"),
        ), entity_attr="o_custkey"),
        RelationDef("lineitem", (
            _attr("l_orderkey", kanon=True, domain="orderkey"),
            _attr("l_suppkey", kanon=True, domain="suppkey"),
            _attr("l_quantity"),
            _attr("l_extendedprice"),
        ), entity_attr="l_orderkey"),
        RelationDef("supplier", (
            _attr("s_suppkey", kanon=True, domain="suppkey"),
            _attr("s_nationkey", domain="nationkey"),
        ), entity_attr="s_suppkey"),
    ]
    rows = {"customer": customers, "orders": orders, "lineitem": lineitems, "supplier": suppliers}
    return _dataset(relations, rows, hosts)


def zipf_record_counts(patients: int, zipf_s: float, per_patient: int = RECORDS_PER_PATIENT) -> np.ndarray:
    """Records per patient, proportional to rank^-zipf_s with mean per_patient and at least one each."""
    weights = np.arange(1, patients + 1, dtype=float) ** -float(zipf_s)
    return np.maximum(1, np.rint(per_patient * weights / weights.mean())).astype(int)


def gen_health(patients: int, seed: int = DEFAULT_SEED, zipf_s: float = 1.0, hosts: int = 1) -> GeneratedDataset:
    """Health records surrogate: demographics, diagnoses, medications, vitals and cohort lists.

    Parameters:
        patients (int): Number of patients
        seed (int): Generator seed
        zipf_s (float): Skew exponent of the per-patient record counts, 0 for uniform
        hosts (int): Number of data owners

    Raises:
        ValidationError: if patients < 1
    """
    if patients < 1:
        raise ValidationError(f"Need at least one patient, got {patients}")
    rng = np.random.default_rng(seed)
    counts = zipf_record_counts(patients, zipf_s)
    # the most active patients are not always the lowest ids
    order = rng.permutation(patients)

    demographics, diagnoses, medications, vitals, cohort = [], [], [], [], []
    for pid in range(1, patients + 1):
        demographics.append((pid, SEXES[int(rng.integers(2))], int(rng.integers(BIRTH_YEAR_RANGE[0], BIRTH_YEAR_RANGE[1] + 1))))
    for i, pid in enumerate(order + 1):
        pid = int(pid)
        for _ in range(int(counts[i])):
            diagnoses.append((pid, DIAGNOSES[int(rng.integers(len(DIAGNOSES)))], int(rng.integers(2006, 2016))))
            medications.append((pid, MEDICATIONS[int(rng.integers(len(MEDICATIONS)))], int(rng.integers(1, 6)) * 100))
            vitals.append((pid, int(rng.integers(50, 121))))
    for pid in range(1, patients + 1):
        for name in COHORTS:
            if rng.random() < 0.5:
                cohort.append((pid, name))

    relations = [
        RelationDef("demographics", (
            _attr("pid", kanon=True, domain="pid"),
            _attr("sex", KIND_TEXT, kanon=True),
            _attr("birth_year", kanon=True),
        ), entity_attr="pid"),
        RelationDef("diagnoses", (
            _attr("pid", kanon=True, domain="pid"),
            _attr("diag", KIND_TEXT, kanon=True),
            _attr("year"),
        ), entity_attr="pid"),
        RelationDef("medications", (
            _attr("pid", kanon=True, domain="pid"),
            _attr("med", KIND_TEXT),
            _attr("dosage"),
        ), entity_attr="pid"),
        RelationDef("vitals", (
            _attr("pid", kanon=True, domain="pid"),
            _attr("pulse"),
        ), entity_attr="pid"),
        RelationDef("cohort", (
            _attr("pid", kanon=True, domain="pid"),
            _attr("cohort", KIND_TEXT),
        ), entity_attr="pid"),
    ]
    rows = {"demographics": demographics, "diagnoses": diagnoses, "medications": medications, "vitals": vitals, "cohort": cohort}
    return _dataset(relations, rows, hosts)


def gen_uniform_join(n: int, seed: int = DEFAULT_SEED, hosts: int = 1) -> GeneratedDataset:
    """Two relations of n tuples each with unique keys 0..n-1 on a shared domain.

    Every left key matches exactly one right key, so a view of classes of exactly k keys
    makes the k-anonymous join emit n * k tuples and the oblivious join n * n.
    """
    if n < 1:
        raise ValidationError(f"Need at least one tuple per side, got {n}")
    rng = np.random.default_rng(seed)
    left = [(i, int(v)) for i, v in enumerate(rng.integers(0, 1000, size=n))]
    right = [(i, int(v)) for i, v in enumerate(rng.integers(0, 1000, size=n))]
    relations = [
        RelationDef("r", (_attr("r_key", kanon=True, domain="key"), _attr("r_val")), entity_attr="r_key"),
        RelationDef("s", (_attr("s_key", kanon=True, domain="key"), _attr("s_val")), entity_attr="s_key"),
    ]
    return _dataset(relations, {"r": left, "s": right}, hosts)


def gen_running_example(hosts: int = 1) -> GeneratedDataset:
    """Six demographic and six diagnosis tuples whose pids share one domain."""
    relations = [
        RelationDef("demographics", (
            _attr("pid", kanon=True, domain="pid"),
            _attr("sex", KIND_TEXT, kanon=True),
        ), entity_attr="pid"),
        RelationDef("diagnosis", (
            _attr("pid", kanon=True, domain="pid"),
            _attr("diag", KIND_TEXT, kanon=True),
        ), entity_attr="pid"),
    ]
    rows = {
        "demographics": [(1, "F"), (2, "F"), (3, "M"), (4, "M"), (11, "F"), (12, "F")],
        "diagnosis": [(1, "flu"), (3, "flu"), (1, "infection"), (2, "infection"), (21, "cold"), (22, "cold")],
    }
    return _dataset(relations, rows, hosts)


GENERATORS: Dict[str, Callable[..., GeneratedDataset]] = {
    GENERATOR_TPCH: gen_tpch_like,
    GENERATOR_HEALTH: gen_health,
    GENERATOR_UNIFORM_JOIN: gen_uniform_join,
    GENERATOR_RUNNING_EXAMPLE: gen_running_example,
}


def generate(generator: str, params: Dict[str, Any], seed: int = DEFAULT_SEED, hosts: int = 1) -> GeneratedDataset:
    """Run a generator by name.

    Raises:
        ValidationError: for an unknown generator name
    """
    if generator not in GENERATORS:
        raise ValidationError(f"Unknown generator {generator}, expected one of {', '.join(GENERATORS)}")
    if generator == GENERATOR_RUNNING_EXAMPLE:
        return gen_running_example(hosts=hosts)
    return GENERATORS[generator](seed=seed, hosts=hosts, **params)
