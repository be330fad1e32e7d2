import asyncio
import logging
from typing import Any, Dict, List, Optional, Tuple

from kanon_federation.domain.anonymization import AnonymizationMap, EquivalenceClass, PartitionAssignment
from kanon_federation.domain.catalog import Catalog, DataTuple, RelationShard
from kanon_federation.domain.class_stream import ClassStream, Mode
from kanon_federation.domain.constants import *
from kanon_federation.domain.control_flow import ControlFlowSet
from kanon_federation.domain.federation import FrameType, Message, NodeConfig, ResultShard
from kanon_federation.domain.query_plan import PlanNode, QueryPlan
from kanon_federation.exceptions import FederationException, ProtocolError
from kanon_federation.integrations.storage.mappers.anonymization_map_mapper import AnonymizationMapMapper
from kanon_federation.integrations.wire.mappers.class_mapper import (
    EquivalenceClassMapper,
    OrderedEventMapper,
    ResultShardMapper,
    tuple_from_json,
    tuple_to_json,
)
from kanon_federation.integrations.wire.mappers.histogram_mapper import HistogramMapper
from kanon_federation.integrations.wire.mappers.message_mapper import error_message
from kanon_federation.integrations.wire.protocols import Transport
from kanon_federation.services.anonymizer import apply_view, build_histogram, combine_class_parts
from kanon_federation.services.executor import PlanEvaluator, project_scan
from kanon_federation.services.planner import assign_modes
from kanon_federation.services.query_parser import parse_query
from kanon_federation.services.trace_recorder import TraceRecorder

logger = logging.getLogger(__name__)

# Execute stages
STAGE_EXCHANGE = "exchange"
STAGE_FINAL = "final"
STAGE_GATHER = "gather"
STAGE_CENTRAL = "central"

# Class transfer kinds
TRANSFER_SHUFFLE = "shuffle"
TRANSFER_EXCHANGE = "exchange"
TRANSFER_GATHER = "gather"


def plan_for(payload: Dict[str, Any], catalog: Catalog) -> QueryPlan:
    """Rebuild the moded plan described by an Execute frame."""
    c = ControlFlowSet.of((r, a) for r, a in payload["c"])
    return assign_modes(parse_query(payload["sql"], catalog), c, catalog)


class DataOwnerNode:
    """One data owner: answers protocol frames over its local shards.

    Frames are handled one at a time. Partition-owned classes arrive by ClassTransfer from
    the other owners during view setup; the originating copies stay in the local shards.

    The handler lock stays held while a frame's ClassTransfer sends to peers are awaited.
    This relies on the coordinator driving one stage at a time and waiting for every host's
    reply before the next request, so no two owners ever wait on each other's lock.

    Parameters:
        config (NodeConfig): Host id and seed of this node
        catalog (Catalog): Federation catalog
        shards (List[RelationShard]): This host's shards
        peers (Transport): Transport reaching the other data owners
    """

    def __init__(self, config: NodeConfig, catalog: Catalog, shards: List[RelationShard], peers: Optional[Transport] = None):
        self.config = config
        self.catalog = catalog
        self.shards = {s.relation: s for s in shards}
        self.peers = peers
        self._lock = asyncio.Lock()
        self._class_mapper = EquivalenceClassMapper()
        self._event_mapper = OrderedEventMapper()
        self._view: Optional[AnonymizationMap] = None
        self._assignment: Optional[PartitionAssignment] = None
        self._epoch: Optional[int] = None
        # class id -> source host -> part
        self._owned: Dict[str, Dict[int, EquivalenceClass]] = {}
        self._pending: Dict[int, Dict[str, Dict[int, EquivalenceClass]]] = {}
        # (query id, join node) -> source host -> stream
        self._exchanged: Dict[Tuple[int, int], Dict[int, ClassStream]] = {}
        # query id -> scan node -> source host -> tuples
        self._gathered: Dict[int, Dict[int, Dict[int, List[DataTuple]]]] = {}
        self._handlers = {
            FrameType.HELLO: self._hello,
            FrameType.ATTEST_STUB: self._attest,
            FrameType.HISTOGRAM_REQUEST: self._histograms,
            FrameType.VIEW_MAP: self._install_view,
            FrameType.CLASS_TRANSFER: self._receive_classes,
            FrameType.EXECUTE: self._execute,
        }

    @property
    def host_id(self) -> int:
        return self.config.host_id

    @property
    def source(self) -> str:
        return f"host{self.host_id}"

    async def handle(self, message: Message) -> Message:
        async with self._lock:
            handler = self._handlers.get(message.frame_type)
            try:
                if handler is None:
                    raise ProtocolError(f"Host {self.host_id} does not accept {message.frame_type.name} frames")
                return await handler(message)
            except FederationException as e:
                logger.warning(f"Host {self.host_id} failed {message.frame_type.name} for query {message.query_id}: {e}")
                return error_message(e, message.query_id)
            except (KeyError, TypeError, ValueError) as e:
                return error_message(ProtocolError(f"Malformed {message.frame_type.name} payload: {e}"), message.query_id)

    def _reply(self, request: Message, frame_type: FrameType, payload: Dict[str, Any]) -> Message:
        return Message(frame_type=frame_type, query_id=request.query_id, payload=payload)

    async def _hello(self, message: Message) -> Message:
        return self._reply(message, FrameType.ACK, {"host_id": self.host_id, "relations": sorted(self.shards)})

    async def _attest(self, message: Message) -> Message:
        # attestation is a stub, the quote only echoes the nonce
        quote = f"stub:{self.host_id}:{message.payload.get('nonce', '')}"
        return self._reply(message, FrameType.ACK, {"host_id": self.host_id, "quote": quote})

    def _shard(self, relation: str) -> RelationShard:
        return self.shards.get(relation) or RelationShard(relation=relation, owner=self.host_id)

    async def _histograms(self, message: Message) -> Message:
        num_hosts = int(message.payload["num_hosts"])
        mapper = HistogramMapper()
        histograms = []
        for relation, attrs in sorted(message.payload["key_attrs"].items()):
            histogram = build_histogram(self._shard(relation), attrs, self.catalog, num_hosts)
            histograms.append(mapper.to_json(histogram))
        logger.debug(f"Host {self.host_id} built {len(histograms)} histograms")
        return self._reply(message, FrameType.HISTOGRAM_RESPONSE, {"histograms": histograms})

    async def _send(self, host: int, query_id: int, payload: Dict[str, Any]) -> None:
        if self.peers is None:
            raise ProtocolError(f"Host {self.host_id} has no peer transport to reach host {host}")
        await self.peers.request(host, Message(FrameType.CLASS_TRANSFER, query_id, payload), source=self.source)

    async def _install_view(self, message: Message) -> Message:
        view = AnonymizationMapMapper().from_json(message.payload["map"])
        hosts = [int(h) for h in message.payload["hosts"]]
        self._view = view
        self._assignment = PartitionAssignment(hosts=hosts, seed=view.hash_seed, iterable=((c, int(h)) for c, h in message.payload["assignment"].items()))
        self._epoch = message.query_id
        self._owned = self._pending.pop(message.query_id, {})
        self._pending = {epoch: parts for epoch, parts in self._pending.items() if epoch > message.query_id}

        outgoing: Dict[int, List[EquivalenceClass]] = {}
        local = 0
        for relation in view.relations:
            for c in apply_view(self._shard(relation), view, self.catalog):
                owner = self._assignment[c.id]
                if owner == self.host_id:
                    self._owned.setdefault(c.id, {})[self.host_id] = c
                    local += 1
                else:
                    outgoing.setdefault(owner, []).append(c)
        for host in sorted(outgoing):
            payload = {
                "kind": TRANSFER_SHUFFLE,
                "source": self.host_id,
                "classes": [self._class_mapper.to_json(c) for c in outgoing[host]],
            }
            await self._send(host, message.query_id, payload)
        logger.info(f"Host {self.host_id} installed view k={view.k}: kept {local} class parts, sent {len(outgoing)} transfers")
        return self._reply(message, FrameType.ACK, {"host_id": self.host_id, "transfers": len(outgoing)})

    async def _receive_classes(self, message: Message) -> Message:
        kind = message.payload["kind"]
        source = int(message.payload["source"])
        if kind == TRANSFER_SHUFFLE:
            target = self._owned if message.query_id == self._epoch else self._pending.setdefault(message.query_id, {})
            for obj in message.payload["classes"]:
                c = self._class_mapper.from_json(obj)
                target.setdefault(c.id, {})[source] = c
        elif kind == TRANSFER_EXCHANGE:
            stream = ClassStream(message.payload["columns"], [self._class_mapper.from_json(o) for o in message.payload["classes"]])
            self._exchanged.setdefault((message.query_id, int(message.payload["node"])), {})[source] = stream
        elif kind == TRANSFER_GATHER:
            by_scan = self._gathered.setdefault(message.query_id, {})
            for node_id, tuples in message.payload["scans"].items():
                by_scan.setdefault(int(node_id), {})[source] = [tuple_from_json(t) for t in tuples]
        else:
            raise ProtocolError(f"Unknown class transfer kind {kind}")
        return self._reply(message, FrameType.ACK, {"host_id": self.host_id})

    def owned_classes(self, relation: str) -> List[EquivalenceClass]:
        """Classes this host processes, parts combined in host order."""
        classes = [
            combine_class_parts([parts[h] for h in sorted(parts)])
            for parts in self._owned.values()
            if next(iter(parts.values())).relation == relation
        ]
        return sorted(classes, key=lambda c: c.order)

    def _local_scan(self, plan: QueryPlan, node: PlanNode) -> List[DataTuple]:
        return project_scan(plan, self.catalog, node, self._shard(node.relation).tuples)

    async def _execute(self, message: Message) -> Message:
        payload = message.payload
        stage = payload["stage"]
        mode = Mode.parse(payload["mode"])
        plan = plan_for(payload, self.catalog)
        recorder = TraceRecorder()
        transfers = 0
        shard: Optional[ResultShard] = None

        if stage == STAGE_EXCHANGE:
            transfers = await self._exchange(message.query_id, plan, mode, int(payload["node"]), [int(h) for h in payload["hosts"]], recorder)
        elif stage == STAGE_FINAL:
            shard = self._final(message.query_id, plan, mode, recorder)
        elif stage == STAGE_GATHER:
            coordinator = int(payload["coordinator"])
            if coordinator != self.host_id:
                scans = {str(n.id): [tuple_to_json(t) for t in self._local_scan(plan, n)] for n in plan.scans}
                await self._send(coordinator, message.query_id, {"kind": TRANSFER_GATHER, "source": self.host_id, "scans": scans})
                transfers = 1
        elif stage == STAGE_CENTRAL:
            shard = self._central(message.query_id, plan, mode, recorder)
        else:
            raise ProtocolError(f"Unknown execute stage {stage}")

        response: Dict[str, Any] = {
            "host_id": self.host_id,
            "events": [self._event_mapper.to_json(e) for e in recorder.ordered_events()],
            "transfers": transfers,
        }
        if shard is not None:
            response["shard"] = ResultShardMapper().to_json(shard)
        return self._reply(message, FrameType.RESULT_SHARD, response)

    def _evaluator(self, query_id: int, plan: QueryPlan, mode: Mode, recorder: TraceRecorder) -> PlanEvaluator:
        if self._view is None:
            raise ProtocolError(f"Host {self.host_id} has no view installed")

        def right_stream(node: PlanNode) -> Optional[ClassStream]:
            parts = self._exchanged.get((query_id, node.id))
            if parts is None:
                return None
            streams = [parts[h] for h in sorted(parts)]
            classes = sorted((c for s in streams for c in s), key=lambda c: c.order)
            return ClassStream(streams[0].columns, classes)

        return PlanEvaluator(plan, mode, self.catalog, self._view.k, recorder,
                             lambda node: self._local_scan(plan, node), self.owned_classes, right_stream)

    async def _exchange(self, query_id: int, plan: QueryPlan, mode: Mode, node_id: int, hosts: List[int], recorder: TraceRecorder) -> int:
        """Evaluate a join's right input over owned classes and send it to every other host."""
        evaluator = self._evaluator(query_id, plan, mode, recorder)
        stream = evaluator.input(plan.node(node_id), 1)
        self._exchanged.setdefault((query_id, node_id), {})[self.host_id] = stream
        transfers = 0
        for host in hosts:
            if host == self.host_id:
                continue
            payload = {
                "kind": TRANSFER_EXCHANGE,
                "source": self.host_id,
                "node": node_id,
                "columns": stream.columns,
                "classes": [self._class_mapper.to_json(c) for c in stream],
            }
            await self._send(host, query_id, payload)
            transfers += 1
        return transfers

    def _final(self, query_id: int, plan: QueryPlan, mode: Mode, recorder: TraceRecorder) -> ResultShard:
        out = self._evaluator(query_id, plan, mode, recorder).run()
        for key in [key for key in self._exchanged if key[0] == query_id]:
            del self._exchanged[key]
        return ResultShard(host=self.host_id, columns=out.columns, tuples=out.tuples)

    def _central(self, query_id: int, plan: QueryPlan, mode: Mode, recorder: TraceRecorder) -> ResultShard:
        gathered = self._gathered.pop(query_id, {})

        def scan_source(node: PlanNode) -> List[DataTuple]:
            by_host = dict(gathered.get(node.id, {}))
            by_host[self.host_id] = self._local_scan(plan, node)
            return [t for h in sorted(by_host) for t in by_host[h]]

        out = PlanEvaluator(plan, mode, self.catalog, 1, recorder, scan_source).run()
        return ResultShard(host=self.host_id, columns=out.columns, tuples=out.tuples)
