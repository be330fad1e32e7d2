import json
import logging
from typing import Any, Dict

from kanon_federation.domain.federation import FrameType, Message
from kanon_federation.exceptions import ProtocolError, RemoteError, ViewInfeasible, exception_registry
from kanon_federation.integrations.storage.mappers.anonymization_map_mapper import canonical_json
from kanon_federation.integrations.wire.framing import decode_frame, encode_frame

logger = logging.getLogger(__name__)

MAX_QUERY_ID = 2 ** 64 - 1


class MessageMapper:
    """Messages to and from complete wire frames."""

    def to_bytes(self, message: Message) -> bytes:
        if not 0 <= message.query_id <= MAX_QUERY_ID:
            raise ProtocolError(f"Query id {message.query_id} does not fit in 64 bits")
        body = canonical_json({"query_id": message.query_id, "payload": message.payload})
        return encode_frame(message.frame_type, body.encode("utf-8"))

    def from_bytes(self, data: bytes) -> Message:
        frame_type, body = decode_frame(data)
        return self.from_body(frame_type, body)

    def from_body(self, frame_type: FrameType, body: bytes) -> Message:
        try:
            obj = json.loads(body.decode("utf-8"))
            query_id = int(obj["query_id"])
            payload = obj["payload"]
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ProtocolError(f"Error processing {frame_type.name} frame: {e}")
        if not isinstance(payload, dict):
            raise ProtocolError(f"{frame_type.name} frame payload must be an object")
        if not 0 <= query_id <= MAX_QUERY_ID:
            raise ProtocolError(f"Query id {query_id} does not fit in 64 bits")
        return Message(frame_type=frame_type, query_id=query_id, payload=payload)


def error_message(error: Exception, query_id: int) -> Message:
    """Error frame carrying the exception's class name and message."""
    payload: Dict[str, Any] = {"type": type(error).__name__, "message": str(error), "query_id": query_id}
    if isinstance(error, ViewInfeasible):
        payload["relation"] = error.relation
        payload["host"] = error.host
    return Message(frame_type=FrameType.ERROR, query_id=query_id, payload=payload)


def raise_for_error(message: Message) -> Message:
    """Re-raise an Error frame as the exception class it names.

    Raises:
        FederationException: the remote error, RemoteError when its type is unknown here
    """
    if message.frame_type != FrameType.ERROR:
        return message
    name = message.payload.get("type", "")
    text = message.payload.get("message", "")
    cls = exception_registry().get(name)
    if cls is None:
        raise RemoteError(f"{name} on remote host: {text}")
    if cls is ViewInfeasible:
        raise ViewInfeasible(text, relation=message.payload.get("relation"), host=message.payload.get("host"))
    raise cls(text)
