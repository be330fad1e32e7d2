import logging

from kanon_federation.domain.anonymization import AnonymizationMap, PartitionAssignment
from kanon_federation.domain.federation import FrameType, Message
from kanon_federation.integrations.wire.protocols import Mapper, Transport

logger = logging.getLogger(__name__)


async def send_view_map(
    transport: Transport,
    mapper: Mapper[AnonymizationMap],
    host: int,
    query_id: int,
    view: AnonymizationMap,
    assignment: PartitionAssignment,
) -> int:
    """Install a view on a host, which then ships its class parts to their partition owners.

    Returns:
        int: ClassTransfer frames the host sent
    """
    payload = {
        "map": mapper.to_json(view),
        "hosts": list(assignment.hosts),
        "assignment": dict(sorted(assignment.items())),
    }
    response = await transport.request(host, Message(FrameType.VIEW_MAP, query_id, payload))
    transfers = int(response.payload.get("transfers", 0))
    logger.debug(f"Host {host} installed the view and sent {transfers} class transfers")
    return transfers
