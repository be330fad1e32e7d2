from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from kanon_federation.domain.catalog import Catalog, RelationShard
from kanon_federation.domain.constants import *


@dataclass
class ScenarioQuery:
    """One query of a scenario and its (k, mode) grid.

    Attributes:
        name: Short query name used in reports
        sql: Query text
        ks: Anonymity levels to run
        modes: Execution modes to run
    """
    name: str
    sql: str
    ks: List[int] = field(default_factory=lambda: [DEFAULT_K])
    modes: List[str] = field(default_factory=lambda: list(MODES))


@dataclass
class Scenario:
    """Data class describing one benchmark scenario.

    Attributes:
        name: Scenario name
        generator: tpch, health, uniform_join or running_example
        params: Generator parameters (scale, patients, zipf_s, n, ...)
        hosts: Number of data owners the dataset is split over
        queries: Query grid
        seed: Generator and federation seed
        output: Report directory
        strategy: View generation strategy
        timed: Record wall clock per cell; off keeps reports byte-reproducible
    """
    name: str
    generator: str
    params: Dict[str, Any] = field(default_factory=dict)
    hosts: int = 1
    queries: List[ScenarioQuery] = field(default_factory=list)
    seed: int = DEFAULT_SEED
    output: Optional[str] = None
    strategy: str = VIEW_STRATEGY_GREEDY
    timed: bool = False


@dataclass
class ReportRow:
    """One (query, mode, k) cell of a scenario run."""
    scenario: str
    query: str
    mode: str
    k: int
    output_tuples: int = 0
    comparisons: int = 0
    wall_millis: float = 0.0
    trace_hash: str = ""
    error: str = ""


@dataclass
class BreakdownRow:
    """Per-operator counters of one report cell."""
    scenario: str
    query: str
    mode: str
    k: int
    node: int
    node_kind: str
    output_tuples: int = 0
    comparisons: int = 0
    transfer_frames: int = 0


@dataclass
class GeneratedDataset:
    """Catalog plus per-host shards produced by a generator.

    Attributes:
        catalog: Generated schema and policy
        shards: Host id -> one shard per relation
    """
    catalog: Catalog
    shards: Dict[int, List[RelationShard]] = field(default_factory=dict)

    @property
    def all_shards(self) -> List[RelationShard]:
        return [s for host in sorted(self.shards) for s in self.shards[host]]

    def rows(self, relation: str) -> int:
        return sum(len(s) for s in self.all_shards if s.relation == relation)


@dataclass
class LinearFit:
    """Least-squares line of comparisons against k."""
    slope: float
    intercept: float
    r_squared: float


class ScenarioReport(List[ReportRow]):
    """Report rows of one scenario run plus the per-operator breakdown and the trace files."""

    def __init__(self, name: str, rows: Optional[List[ReportRow]] = None):
        self.name = name
        self.breakdown: List[BreakdownRow] = []
        self.traces: Dict[str, str] = {}
        super().__init__(rows or [])

    @property
    def errors(self) -> List[ReportRow]:
        return [r for r in self if r.error]
