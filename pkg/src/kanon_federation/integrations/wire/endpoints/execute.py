from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from kanon_federation.domain.federation import FrameType, Message, ResultShard
from kanon_federation.domain.trace import TraceEvent
from kanon_federation.integrations.wire.protocols import Mapper, Transport


@dataclass
class ExecuteResponse:
    """Decoded ResultShard frame.

    Attributes:
        host: Responding host
        events: Trace events with their class order keys
        shard: Result shard, only for final stages
        transfers: ClassTransfer frames the host sent during the stage
    """
    host: int
    events: List[Tuple[Tuple, TraceEvent]] = field(default_factory=list)
    shard: Optional[ResultShard] = None
    transfers: int = 0


async def execute(
    transport: Transport,
    event_mapper: Mapper[Tuple[Tuple, TraceEvent]],
    shard_mapper: Mapper[ResultShard],
    host: int,
    query_id: int,
    payload: Dict[str, Any],
) -> ExecuteResponse:
    """Run one execution stage of a query on a host."""
    response = await transport.request(host, Message(FrameType.EXECUTE, query_id, payload))
    shard = response.payload.get("shard")
    return ExecuteResponse(
        host=host,
        events=[event_mapper.from_json(e) for e in response.payload.get("events", [])],
        shard=shard_mapper.from_json(shard) if shard is not None else None,
        transfers=int(response.payload.get("transfers", 0)),
    )
