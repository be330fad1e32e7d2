import asyncio
import struct
import unittest

from kanon_federation.domain.constants import *
from kanon_federation.domain.federation import FrameType, Message
from kanon_federation.exceptions import ParseError, ProtocolError, RemoteError, TransportError, ViewInfeasible
from kanon_federation.integrations.wire.framing import decode_frame, encode_frame, read_frame
from kanon_federation.integrations.wire.in_process_transport import InProcessTransport
from kanon_federation.integrations.wire.mappers.histogram_mapper import HistogramMapper
from kanon_federation.integrations.wire.mappers.message_mapper import MessageMapper, error_message, raise_for_error
from kanon_federation.services.anonymizer import build_histogram
from tests.fixtures import running_example_catalog, running_example_shards


class TestFraming(unittest.TestCase):
    """Test cases for length-prefixed frames."""

    def test_header_layout(self):
        """Four length bytes, one type byte, then the envelope marker and payload."""
        frame = encode_frame(FrameType.EXECUTE, b'{"a":1}')
        self.assertEqual(struct.unpack("!I", frame[:4])[0], 8)
        self.assertEqual(frame[4], int(FrameType.EXECUTE))
        self.assertEqual(frame[5], ENVELOPE_MARKER)
        self.assertEqual(decode_frame(frame), (FrameType.EXECUTE, b'{"a":1}'))

    def test_unknown_type(self):
        """An unassigned type code is a protocol error."""
        frame = struct.pack(FRAME_HEADER_FORMAT, 1, 99) + bytes([ENVELOPE_MARKER])
        with self.assertRaises(ProtocolError):
            decode_frame(frame)

    def test_missing_envelope_marker(self):
        frame = struct.pack(FRAME_HEADER_FORMAT, 2, int(FrameType.ACK)) + b"{}"
        with self.assertRaises(ProtocolError):
            decode_frame(frame)

    def test_truncated_body(self):
        """The announced length must match the body."""
        frame = encode_frame(FrameType.ACK, b"{}")
        with self.assertRaises(ProtocolError):
            decode_frame(frame[:-1])

    def test_read_frame_from_stream(self):
        """Frames are read one at a time off a stream."""

        async def read_two():
            reader = asyncio.StreamReader()
            reader.feed_data(encode_frame(FrameType.HELLO, b"{}") + encode_frame(FrameType.ACK, b"[]"))
            reader.feed_eof()
            return await read_frame(reader), await read_frame(reader)

        self.assertEqual(asyncio.run(read_two()), ((FrameType.HELLO, b"{}"), (FrameType.ACK, b"[]")))

    def test_read_frame_closed_mid_frame(self):
        """A stream that ends inside a frame is a transport error."""

        async def read_partial():
            reader = asyncio.StreamReader()
            reader.feed_data(encode_frame(FrameType.HELLO, b"{}")[:-1])
            reader.feed_eof()
            return await read_frame(reader)

        with self.assertRaises(TransportError):
            asyncio.run(read_partial())


class TestMessageMapper(unittest.TestCase):
    """Test cases for message encoding and error frames."""

    def setUp(self):
        self.mapper = MessageMapper()

    def test_message_survives_the_wire(self):
        message = Message(FrameType.VIEW_MAP, 7, {"round": 1, "classes": [["a", 1]]})
        self.assertEqual(self.mapper.from_bytes(self.mapper.to_bytes(message)), message)

    def test_query_id_range(self):
        """Query ids are unsigned 64-bit."""
        with self.assertRaises(ProtocolError):
            self.mapper.to_bytes(Message(FrameType.HELLO, -1))

    def test_payload_must_be_object(self):
        with self.assertRaises(ProtocolError):
            self.mapper.from_bytes(encode_frame(FrameType.HELLO, b'{"query_id": 1, "payload": []}'))

    def test_error_frame_reraises_known_type(self):
        """Error frames come back as the exception class they name."""
        with self.assertRaises(ParseError) as ctx:
            raise_for_error(error_message(ParseError("bad query", 3), 5))
        self.assertIn("bad query", str(ctx.exception))

    def test_error_frame_keeps_infeasibility_details(self):
        """ViewInfeasible keeps the offending relation and host."""
        message = self.mapper.from_bytes(self.mapper.to_bytes(error_message(ViewInfeasible("too few", relation="r", host=1), 2)))
        with self.assertRaises(ViewInfeasible) as ctx:
            raise_for_error(message)
        self.assertEqual((ctx.exception.relation, ctx.exception.host), ("r", 1))

    def test_unknown_error_type(self):
        """Error types unknown locally become RemoteError."""
        message = Message(FrameType.ERROR, 1, {"type": "KeyError", "message": "x"})
        with self.assertRaises(RemoteError):
            raise_for_error(message)

    def test_non_error_passes_through(self):
        message = Message(FrameType.ACK, 1, {})
        self.assertIs(raise_for_error(message), message)


class TestHistogramMapper(unittest.TestCase):
    """Test cases for histogram payloads."""

    def test_counts_survive_the_wire(self):
        catalog = running_example_catalog()
        shard = [s for s in running_example_shards(2)[1] if s.relation == "diagnosis"][0]
        histogram = build_histogram(shard, ("pid", "diag"), catalog, 2)
        mapper = HistogramMapper()
        self.assertEqual(mapper.from_json(mapper.to_json(histogram)), histogram)

    def test_malformed(self):
        with self.assertRaises(ProtocolError):
            HistogramMapper().from_json({"relation": "r"})


class EchoHandler:
    def __init__(self, response_type: FrameType):
        self.response_type = response_type

    async def handle(self, message: Message) -> Message:
        return Message(self.response_type, message.query_id, {"echo": message.payload})


class TestInProcessTransport(unittest.TestCase):
    """Test cases for the in-process channel."""

    def test_records_frames_per_channel(self):
        """Requests and responses are kept as wire bytes on their channels."""
        transport = InProcessTransport()
        transport.register(0, EchoHandler(FrameType.ACK))
        response = asyncio.run(transport.request(0, Message(FrameType.HELLO, 1, {"n": 1})))
        self.assertEqual(response.payload, {"echo": {"n": 1}})
        self.assertEqual(transport.frame_types("client->host0"), [FrameType.HELLO])
        self.assertEqual(transport.frame_types("host0->client"), [FrameType.ACK])
        self.assertEqual(transport.count(FrameType.ACK), 1)

    def test_wrong_response_type(self):
        """A response type that does not answer the request is rejected."""
        transport = InProcessTransport()
        transport.register(0, EchoHandler(FrameType.RESULT_SHARD))
        with self.assertRaises(ProtocolError):
            asyncio.run(transport.request(0, Message(FrameType.HELLO, 1)))

    def test_unknown_host(self):
        with self.assertRaises(TransportError):
            asyncio.run(InProcessTransport().request(3, Message(FrameType.HELLO, 1)))


if __name__ == '__main__':
    unittest.main()
