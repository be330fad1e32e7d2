from dataclasses import dataclass, field
from enum import IntEnum
import logging
from typing import Any, Dict, List, Optional, Tuple

from kanon_federation.domain.anonymization import AnonymizationMap, Histogram, PartitionAssignment, ViewStats
from kanon_federation.domain.constants import *
from kanon_federation.domain.catalog import DataTuple
from kanon_federation.domain.trace import Trace
from kanon_federation.domain.workload import AdmissionDecision, WorkloadState

logger = logging.getLogger(__name__)


class FrameType(IntEnum):
    """Wire frame type codes."""
    HELLO = 1
    ATTEST_STUB = 2
    HISTOGRAM_REQUEST = 3
    HISTOGRAM_RESPONSE = 4
    VIEW_MAP = 5
    CLASS_TRANSFER = 6
    EXECUTE = 7
    RESULT_SHARD = 8
    SUBMIT_QUERY = 9
    QUERY_RESULT = 10
    ERROR = 11
    ACK = 12


# Every request type has exactly one response type; any request may also be answered by ERROR
RESPONSE_TYPES: Dict[FrameType, FrameType] = {
    FrameType.HELLO: FrameType.ACK,
    FrameType.ATTEST_STUB: FrameType.ACK,
    FrameType.HISTOGRAM_REQUEST: FrameType.HISTOGRAM_RESPONSE,
    FrameType.VIEW_MAP: FrameType.ACK,
    FrameType.CLASS_TRANSFER: FrameType.ACK,
    FrameType.EXECUTE: FrameType.RESULT_SHARD,
    FrameType.SUBMIT_QUERY: FrameType.QUERY_RESULT,
}


@dataclass
class NodeConfig:
    """Data class describing one data owner node.

    Attributes:
        host_id: Dense host id in 0..N-1
        listen: host:port for the TCP transport, None in process
        channel: In-process channel id
        data_dir: Directory holding the catalog and this host's shards
        seed: Seed for coordinator election and the partition hash
    """
    host_id: int
    listen: Optional[str] = None
    channel: Optional[str] = None
    data_dir: Optional[str] = None
    seed: int = DEFAULT_SEED

    @property
    def address(self) -> str:
        return self.listen or self.channel or f"host{self.host_id}"


@dataclass
class Message:
    """One protocol frame.

    Attributes:
        frame_type: Frame type
        query_id: 64-bit id of the query (or setup round) the frame belongs to
        payload: JSON-compatible body
    """
    frame_type: FrameType
    query_id: int = 0
    payload: Dict[str, Any] = field(default_factory=dict)


@dataclass
class SessionState:
    """Coordinator state persisted across the queries of one federation session.

    Attributes:
        workload: Current (C_system, k_system) and cached view
        assignment: Class to host assignment of the cached view
        histograms: Merged histograms gathered for the cached view, reused by class merging
        rounds: Per-query barrier round counter
        coordinator: Elected coordinator host id
    """
    workload: WorkloadState = field(default_factory=WorkloadState)
    assignment: Optional[PartitionAssignment] = None
    histograms: Dict[str, Histogram] = field(default_factory=dict)
    rounds: Dict[int, int] = field(default_factory=dict)
    coordinator: int = 0
    next_query_id: int = 1

    def advance(self, query_id: int) -> int:
        self.rounds[query_id] = self.rounds.get(query_id, 0) + 1
        return self.rounds[query_id]

    def new_query_id(self) -> int:
        query_id = self.next_query_id
        self.next_query_id += 1
        return query_id


@dataclass
class ResultShard:
    """Final-stage output of one host for one query.

    Attributes:
        host: Host that produced the shard
        columns: Columns of the engine root output
        tuples: Output tuples, dummies included
    """
    host: int
    columns: List[str]
    tuples: List[DataTuple] = field(default_factory=list)


@dataclass
class QueryResult:
    """What the client gets back for one query.

    Attributes:
        query_id: Protocol query id
        columns: Display names of the result columns
        rows: Result rows after dummy removal, ORDER BY and LIMIT
        trace: Observable events of the run, merged across hosts
        mode: Mode the query actually ran in (an oblivious fallback changes it)
        decision: Admission decision for k-anonymous queries
    """
    query_id: int
    columns: List[str]
    rows: List[Tuple[Any, ...]]
    trace: Trace
    mode: str
    decision: Optional[AdmissionDecision] = None


@dataclass
class ViewSetup:
    """Outcome of generating (or merging) and distributing a view.

    Attributes:
        view: The distributed view
        stats: Generation counters
        assignment: Class to partition owner assignment
        transfer_frames: ClassTransfer frames sent while shuffling classes
        histogram_frames: HistogramRequest frames sent (0 when classes were merged)
    """
    view: AnonymizationMap
    stats: ViewStats
    assignment: PartitionAssignment
    transfer_frames: int = 0
    histogram_frames: int = 0
