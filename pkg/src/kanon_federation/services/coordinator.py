import asyncio
import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from kanon_federation.domain.anonymization import AnonymizationMap, Histogram, PartitionAssignment, ViewStats
from kanon_federation.domain.catalog import Catalog, RelationShard
from kanon_federation.domain.class_stream import Mode
from kanon_federation.domain.constants import *
from kanon_federation.domain.control_flow import ControlFlowSet
from kanon_federation.domain.federation import NodeConfig, QueryResult, SessionState, ViewSetup
from kanon_federation.domain.query_plan import QueryPlan
from kanon_federation.domain.workload import AugmentView, MergeClasses, ObliviousFallback, WorkloadState
from kanon_federation.exceptions import MissingView, UnsupportedFeature, ValidationError
from kanon_federation.integrations.storage.mappers.anonymization_map_mapper import AnonymizationMapMapper
from kanon_federation.integrations.wire.endpoints.execute import ExecuteResponse, execute
from kanon_federation.integrations.wire.endpoints.handshake import attest, hello
from kanon_federation.integrations.wire.endpoints.histograms import request_histograms
from kanon_federation.integrations.wire.endpoints.view_map import send_view_map
from kanon_federation.integrations.wire.in_process_transport import InProcessTransport
from kanon_federation.integrations.wire.mappers.class_mapper import OrderedEventMapper, ResultShardMapper
from kanon_federation.integrations.wire.mappers.histogram_mapper import HistogramMapper
from kanon_federation.integrations.wire.protocols import Transport
from kanon_federation.services.anonymizer import assign_partitions, generate_view, merge_for_k, merge_histograms
from kanon_federation.services.data_owner_node import STAGE_CENTRAL, STAGE_EXCHANGE, STAGE_FINAL, STAGE_GATHER, DataOwnerNode
from kanon_federation.services.executor import check_view_covers
from kanon_federation.services.planner import admit, assign_modes, derive_control_flow
from kanon_federation.services.query_parser import parse_query
from kanon_federation.services.result_assembler import assemble_result
from kanon_federation.services.trace_recorder import TraceRecorder

logger = logging.getLogger(__name__)


def elect_coordinator(hosts: Sequence[int], seed: Optional[int] = None) -> int:
    """Pick the coordinator among the data owners.

    Parameters:
        hosts (Sequence[int]): Host ids
        seed (int): Election seed, None picks the lowest host id

    Returns:
        int: Coordinator host id

    Raises:
        ValidationError: if there are no hosts
    """
    if not hosts:
        raise ValidationError("Coordinator election needs at least one host")
    ordered = sorted(hosts)
    if seed is None:
        return ordered[0]
    rng = np.random.default_rng(seed)
    return ordered[int(rng.integers(len(ordered)))]


class FederationClient:
    """Client session driving the protocol; the elected coordinator's role runs inside it.

    Parameters:
        transport (Transport): Channel to every data owner
        catalog (Catalog): Federation catalog
        hosts (Sequence[int]): Dense host ids
        seed (int): Partition hash seed
        election_seed (int): Coordinator election seed, None for host 0
        strategy (str): View generation strategy
        timeout (float): Seconds to wait for a result shard
    """

    def __init__(
        self,
        transport: Transport,
        catalog: Catalog,
        hosts: Sequence[int],
        seed: int = DEFAULT_SEED,
        election_seed: Optional[int] = None,
        strategy: str = VIEW_STRATEGY_GREEDY,
        timeout: float = SHARD_TIMEOUT_SECONDS,
    ):
        if sorted(hosts) != list(range(len(hosts))):
            raise ValidationError(f"Host ids must be dense 0..N-1, got {sorted(hosts)}")
        self.transport = transport
        self.catalog = catalog
        self.hosts = sorted(hosts)
        self.seed = seed
        self.election_seed = election_seed
        self.strategy = strategy
        self.timeout = timeout
        self.session = SessionState()
        self.view_mapper = AnonymizationMapMapper()
        self.histogram_mapper = HistogramMapper()
        self.event_mapper = OrderedEventMapper()
        self.shard_mapper = ResultShardMapper()
        self.last_setup: Optional[ViewSetup] = None

    @property
    def coordinator(self) -> int:
        return self.session.coordinator

    async def connect(self) -> None:
        """Greet and attest every host, then elect the coordinator."""
        for host in self.hosts:
            info = await hello(self.transport, host, len(self.hosts))
            if int(info["host_id"]) != host:
                raise ValidationError(f"Channel {host} is served by host {info['host_id']}")
            await attest(self.transport, host, f"{self.seed}:{host}")
        self.session.coordinator = elect_coordinator(self.hosts, self.election_seed)
        logger.info(f"Connected to {len(self.hosts)} hosts, coordinator is host {self.coordinator}")

    async def close(self) -> None:
        await self.transport.close()


async def _distribute(client: FederationClient, query_id: int, view: AnonymizationMap) -> Tuple[int, PartitionAssignment]:
    assignment = assign_partitions(view, client.hosts)
    transfers = 0
    for host in client.hosts:
        transfers += await send_view_map(client.transport, client.view_mapper, host, query_id, view, assignment)
    return transfers, assignment


async def _gather_histograms(client: FederationClient, query_id: int, c: ControlFlowSet) -> Dict[str, Histogram]:
    key_attrs = {relation: list(c.for_relation(relation, client.catalog)) for relation in c.relations}
    parts: Dict[str, List[Histogram]] = {}
    for host in client.hosts:
        for histogram in await request_histograms(client.transport, client.histogram_mapper, host, query_id, key_attrs, len(client.hosts)):
            parts.setdefault(histogram.relation, []).append(histogram)
    return {relation: merge_histograms(p) for relation, p in sorted(parts.items())}


async def setup_views(client: FederationClient, c: ControlFlowSet, k: int) -> ViewSetup:
    """Gather histograms, generate the view, and shuffle classes to their partition owners.

    Parameters:
        client (FederationClient): Connected session
        c (ControlFlowSet): Control flow set to protect
        k (int): Anonymity level

    Returns:
        ViewSetup: The installed view and its setup counters

    Raises:
        ViewInfeasible: if the data's host split admits no valid view
    """
    query_id = client.session.new_query_id()
    histograms = await _gather_histograms(client, query_id, c)

    view, stats = generate_view(histograms, k, client.catalog, seed=client.seed, strategy=client.strategy)
    transfers, assignment = await _distribute(client, query_id, view)

    client.session.workload = WorkloadState(c_system=c, k_system=k, cached_view=view)
    client.session.histograms = histograms
    client.session.assignment = assignment
    setup = ViewSetup(view=view, stats=stats, assignment=assignment, transfer_frames=transfers, histogram_frames=len(client.hosts))
    client.last_setup = setup
    logger.info(f"View for C={c} at k={k} installed on {len(client.hosts)} hosts with {transfers} class transfers")
    return setup


async def install_view(client: FederationClient, view: AnonymizationMap) -> ViewSetup:
    """Distribute a previously generated view and make it the session's cached view.

    Histograms over the view's control flow set are still gathered so later queries can
    merge its classes for a larger k.

    Raises:
        UnmappedValue: if a host holds a value vector the view does not map
    """
    query_id = client.session.new_query_id()
    histograms = await _gather_histograms(client, query_id, view.c)
    transfers, assignment = await _distribute(client, query_id, view)
    client.session.workload = WorkloadState(c_system=view.c, k_system=view.k, cached_view=view)
    client.session.histograms = histograms
    client.session.assignment = assignment
    stats = ViewStats(
        strategy=view.strategy,
        histogram_rows={r: len(h) for r, h in histograms.items()},
        classes={r: len(view.class_keys(r)) for r in view.relations},
    )
    setup = ViewSetup(view=view, stats=stats, assignment=assignment, transfer_frames=transfers, histogram_frames=len(client.hosts))
    client.last_setup = setup
    logger.info(f"Installed view for C={view.c} at k={view.k} on {len(client.hosts)} hosts with {transfers} class transfers")
    return setup


async def merge_views(client: FederationClient, k_new: int) -> ViewSetup:
    """Strengthen the cached view to k_new by combining classes, without new histograms."""
    workload = client.session.workload
    if workload.cached_view is None:
        raise MissingView("No cached view to merge")
    query_id = client.session.new_query_id()
    view, stats = merge_for_k(workload.cached_view, client.session.histograms, k_new, client.catalog)
    transfers, assignment = await _distribute(client, query_id, view)
    client.session.workload = WorkloadState(c_system=workload.c_system, k_system=k_new, cached_view=view)
    client.session.assignment = assignment
    setup = ViewSetup(view=view, stats=stats, assignment=assignment, transfer_frames=transfers)
    client.last_setup = setup
    return setup


def _check_left_deep(plan: QueryPlan) -> None:
    for node in plan.secure_nodes:
        if node.kind != NODE_JOIN:
            continue
        right = plan.subtree(node.children[1])
        if any(plan.node(n).kind == NODE_JOIN for n in right):
            raise UnsupportedFeature(f"Distributed k-anonymous execution needs left-deep joins, {node.describe()} has a join on its right")


async def _stage(client: FederationClient, host: int, query_id: int, payload: Dict) -> ExecuteResponse:
    return await execute(client.transport, client.event_mapper, client.shard_mapper, host, query_id, payload)


async def _final_stage(client: FederationClient, host: int, query_id: int, payload: Dict) -> ExecuteResponse:
    try:
        return await asyncio.wait_for(_stage(client, host, query_id, payload), client.timeout)
    except asyncio.TimeoutError:
        logger.warning(f"Host {host} sent no result shard for query {query_id} within {client.timeout}s")
        return ExecuteResponse(host=host)


async def run_query(client: FederationClient, text: str, k_q: int = DEFAULT_K, mode: Union[Mode, str] = Mode.KANON) -> QueryResult:
    """Run one query through admission, distributed execution and result assembly.

    Parameters:
        client (FederationClient): Connected session
        text (str): Query text
        k_q (int): Anonymity level the query asks for
        mode (Mode): Requested execution mode

    Returns:
        QueryResult: Rows after dummy removal plus the merged trace

    Raises:
        FederationException: planner, anonymizer and executor errors, re-raised from Error frames
    """
    mode = mode if isinstance(mode, Mode) else Mode.parse(mode)
    plan = parse_query(text, client.catalog)
    c_q = derive_control_flow(plan, client.catalog)

    decision = None
    if mode is Mode.KANON and c_q:
        workload = client.session.workload
        decision = admit(c_q, k_q, workload)
        logger.info(f"Admission for C={c_q}, k={k_q}: {decision}")
        if isinstance(decision, MergeClasses):
            await merge_views(client, decision.k_new)
        elif isinstance(decision, AugmentView):
            k = k_q if workload.cached_view is None else max(k_q, workload.k_system)
            await setup_views(client, decision.c_union, k)
        elif isinstance(decision, ObliviousFallback):
            mode = Mode.OBLIVIOUS

    moded = assign_modes(plan, c_q, client.catalog)
    query_id = client.session.new_query_id()
    base = {"sql": text, "mode": mode.value, "c": [list(e) for e in c_q]}
    responses: List[ExecuteResponse] = []
    finals: List[ExecuteResponse] = []

    if mode is Mode.KANON and moded.secure_nodes:
        check_view_covers(moded, client.session.workload.cached_view)
        _check_left_deep(moded)
        for node in moded.secure_nodes:
            if node.kind != NODE_JOIN:
                continue
            client.session.advance(query_id)
            for host in client.hosts:
                payload = dict(base, stage=STAGE_EXCHANGE, node=node.id, hosts=client.hosts)
                responses.append(await _stage(client, host, query_id, payload))
        client.session.advance(query_id)
        for host in client.hosts:
            finals.append(await _final_stage(client, host, query_id, dict(base, stage=STAGE_FINAL)))
    else:
        client.session.advance(query_id)
        for host in client.hosts:
            payload = dict(base, stage=STAGE_GATHER, coordinator=client.coordinator)
            responses.append(await _stage(client, host, query_id, payload))
        client.session.advance(query_id)
        finals.append(await _final_stage(client, client.coordinator, query_id, dict(base, stage=STAGE_CENTRAL)))

    recorder = TraceRecorder()
    for response in responses + finals:
        for order, event in response.events:
            recorder.add(event, order)
    trace = recorder.trace(transfer_frames=sum(r.transfers for r in responses + finals))
    rows = assemble_result([r.shard for r in finals], moded)
    logger.info(f"Query {query_id} finished in {mode.value} mode: {len(rows)} rows, {trace.comparisons} comparisons")
    return QueryResult(query_id=query_id, columns=list(plan.result_names), rows=rows, trace=trace, mode=mode.value, decision=decision)


async def run_workload(client: FederationClient, queries: Sequence[Tuple[str, int]], mode: Union[Mode, str] = Mode.KANON) -> List[QueryResult]:
    """Run (query text, k) pairs in order against one session."""
    results = []
    for text, k_q in queries:
        results.append(await run_query(client, text, k_q, mode))
    return results


async def in_process_federation(
    catalog: Catalog,
    shards: Dict[int, List[RelationShard]],
    seed: int = DEFAULT_SEED,
    election_seed: Optional[int] = None,
    strategy: str = VIEW_STRATEGY_GREEDY,
) -> Tuple[FederationClient, InProcessTransport]:
    """Start one data owner per host on an in-process transport and connect a client to them."""
    transport = InProcessTransport()
    for host, host_shards in sorted(shards.items()):
        node = DataOwnerNode(NodeConfig(host_id=host, channel=f"host{host}", seed=seed), catalog, host_shards, peers=transport)
        transport.register(host, node)
    client = FederationClient(transport, catalog, sorted(shards), seed=seed, election_seed=election_seed, strategy=strategy)
    await client.connect()
    return client, transport
