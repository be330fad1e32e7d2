from typing import Any, Dict

from kanon_federation.domain.federation import FrameType, Message
from kanon_federation.integrations.wire.protocols import Transport


async def hello(transport: Transport, host: int, num_hosts: int) -> Dict[str, Any]:
    """Open the session with a data owner.

    Returns:
        Dict: host id and relations the host holds shards of
    """
    response = await transport.request(host, Message(FrameType.HELLO, 0, {"hosts": num_hosts}))
    return response.payload


async def attest(transport: Transport, host: int, nonce: str) -> str:
    """Stub attestation round trip, returns the host's quote."""
    response = await transport.request(host, Message(FrameType.ATTEST_STUB, 0, {"nonce": nonce}))
    return response.payload["quote"]
