"""Length-prefixed frames: 4-byte big-endian body length, 1-byte frame type, then the body.

The body is the envelope marker byte followed by the JSON payload.
"""
import asyncio
import logging
import struct
from typing import Tuple

from kanon_federation.domain.constants import *
from kanon_federation.domain.federation import FrameType
from kanon_federation.exceptions import ProtocolError, TransportError

logger = logging.getLogger(__name__)

HEADER_SIZE = struct.calcsize(FRAME_HEADER_FORMAT)


def encode_frame(frame_type: FrameType, payload: bytes) -> bytes:
    body = bytes([ENVELOPE_MARKER]) + payload
    if len(body) > MAX_FRAME_BYTES:
        raise ProtocolError(f"Frame of {len(body)} bytes exceeds the {MAX_FRAME_BYTES} byte limit")
    return struct.pack(FRAME_HEADER_FORMAT, len(body), int(frame_type)) + body


def _frame_type(code: int) -> FrameType:
    try:
        return FrameType(code)
    except ValueError:
        raise ProtocolError(f"Unknown frame type {code}")


def _open_envelope(body: bytes) -> bytes:
    if not body or body[0] != ENVELOPE_MARKER:
        raise ProtocolError("Frame body does not start with the envelope marker")
    return body[1:]


def decode_frame(data: bytes) -> Tuple[FrameType, bytes]:
    """Split one complete frame into its type and JSON payload.

    Raises:
        ProtocolError: on a short or oversized frame, an unknown type or a missing envelope marker
    """
    if len(data) < HEADER_SIZE:
        raise ProtocolError(f"Frame of {len(data)} bytes is shorter than its header")
    length, code = struct.unpack(FRAME_HEADER_FORMAT, data[:HEADER_SIZE])
    if length > MAX_FRAME_BYTES:
        raise ProtocolError(f"Frame length {length} exceeds the {MAX_FRAME_BYTES} byte limit")
    body = data[HEADER_SIZE:]
    if len(body) != length:
        raise ProtocolError(f"Frame announces {length} body bytes, got {len(body)}")
    return _frame_type(code), _open_envelope(body)


async def read_frame(reader: asyncio.StreamReader) -> Tuple[FrameType, bytes]:
    """Read one frame from a stream.

    Raises:
        TransportError: if the stream closes mid-frame
        ProtocolError: if the frame is malformed
    """
    try:
        header = await reader.readexactly(HEADER_SIZE)
        length, code = struct.unpack(FRAME_HEADER_FORMAT, header)
        if length > MAX_FRAME_BYTES:
            raise ProtocolError(f"Frame length {length} exceeds the {MAX_FRAME_BYTES} byte limit")
        body = await reader.readexactly(length)
    except asyncio.IncompleteReadError as e:
        raise TransportError(f"Connection closed after {len(e.partial)} bytes of a frame")
    return _frame_type(code), _open_envelope(body)


async def write_frame(writer: asyncio.StreamWriter, frame: bytes) -> None:
    try:
        writer.write(frame)
        await writer.drain()
    except (ConnectionError, OSError) as e:
        raise TransportError(f"Error writing frame: {e}")
