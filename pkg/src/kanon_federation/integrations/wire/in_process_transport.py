import logging
from typing import Dict, List, Optional

from kanon_federation.domain.federation import RESPONSE_TYPES, FrameType, Message
from kanon_federation.exceptions import ProtocolError, TransportError
from kanon_federation.integrations.wire.mappers.message_mapper import MessageMapper, raise_for_error
from kanon_federation.integrations.wire.protocols import MessageHandler

logger = logging.getLogger(__name__)


def check_response(request: Message, response: Message) -> None:
    expected = RESPONSE_TYPES.get(request.frame_type)
    if expected is None:
        raise ProtocolError(f"{request.frame_type.name} is not a request frame")
    if response.frame_type not in (expected, FrameType.ERROR):
        raise ProtocolError(f"{request.frame_type.name} answered by {response.frame_type.name}, expected {expected.name}")
    if response.query_id != request.query_id:
        raise ProtocolError(f"Response for query {response.query_id} to a request for query {request.query_id}")


class InProcessTransport:
    """Delivers frames to handlers in the same process.

    Every request and response is encoded to wire bytes and decoded again, and the bytes are
    kept per channel so runs can be compared frame by frame.

    Attributes:
        frames: Channel ("client->host0", "host1->host0", ...) -> frames in send order
    """

    def __init__(self, mapper: Optional[MessageMapper] = None):
        self._mapper = mapper or MessageMapper()
        self._handlers: Dict[int, MessageHandler] = {}
        self.frames: Dict[str, List[bytes]] = {}

    def register(self, host: int, handler: MessageHandler) -> None:
        self._handlers[host] = handler

    @property
    def hosts(self) -> List[int]:
        return sorted(self._handlers)

    def _carry(self, channel: str, message: Message) -> Message:
        data = self._mapper.to_bytes(message)
        self.frames.setdefault(channel, []).append(data)
        return self._mapper.from_bytes(data)

    async def request(self, host: int, message: Message, source: str = "client") -> Message:
        """Send a request and wait for its response.

        Raises:
            TransportError: if no handler is registered for the host
            ProtocolError: if the response type does not answer the request
            FederationException: re-raised from an Error response
        """
        handler = self._handlers.get(host)
        if handler is None:
            raise TransportError(f"No in-process channel for host {host}")
        channel = f"{source}->host{host}"
        logger.debug(f"{channel}: {message.frame_type.name} for query {message.query_id}")
        response = await handler.handle(self._carry(channel, message))
        response = self._carry(f"host{host}->{source}", response)
        check_response(message, response)
        return raise_for_error(response)

    def frame_types(self, channel: Optional[str] = None) -> List[FrameType]:
        """Types of the frames sent, on one channel or on all channels in channel order."""
        channels = [channel] if channel is not None else sorted(self.frames)
        return [FrameType(data[4]) for c in channels for data in self.frames.get(c, [])]

    def count(self, frame_type: FrameType) -> int:
        return self.frame_types().count(frame_type)

    async def close(self) -> None:
        self._handlers.clear()
