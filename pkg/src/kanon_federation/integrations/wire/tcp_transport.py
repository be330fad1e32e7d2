import asyncio
import logging
from typing import Dict, Optional, Tuple

from kanon_federation.domain.constants import *
from kanon_federation.domain.federation import Message
from kanon_federation.exceptions import FederationException, TransportError
from kanon_federation.integrations.wire.framing import read_frame, write_frame
from kanon_federation.integrations.wire.in_process_transport import check_response
from kanon_federation.integrations.wire.mappers.message_mapper import MessageMapper, error_message, raise_for_error
from kanon_federation.integrations.wire.protocols import MessageHandler

logger = logging.getLogger(__name__)

Address = Tuple[str, int]


def parse_address(text: str) -> Address:
    """host:port, or a bare port on localhost."""
    host, _, port = text.rpartition(":")
    try:
        return (host or "127.0.0.1", int(port))
    except ValueError:
        raise TransportError(f"Invalid address {text}, expected host:port")


class TcpTransport:
    """Request/response over one asyncio stream connection per host.

    Parameters:
        addresses (Dict[int, Address]): Host id -> (host, port)
        timeout (float): Seconds to wait for a response
    """

    def __init__(self, addresses: Dict[int, Address], mapper: Optional[MessageMapper] = None, timeout: float = SHARD_TIMEOUT_SECONDS):
        self._addresses = dict(addresses)
        self._mapper = mapper or MessageMapper()
        self._timeout = timeout
        self._connections: Dict[int, Tuple[asyncio.StreamReader, asyncio.StreamWriter]] = {}
        self._locks: Dict[int, asyncio.Lock] = {}

    async def _connection(self, host: int) -> Tuple[asyncio.StreamReader, asyncio.StreamWriter]:
        if host not in self._connections:
            if host not in self._addresses:
                raise TransportError(f"No address for host {host}")
            address = self._addresses[host]
            try:
                self._connections[host] = await asyncio.open_connection(*address)
            except OSError as e:
                raise TransportError(f"Failed to connect to host {host} at {address[0]}:{address[1]}: {e}")
            logger.debug(f"Connected to host {host} at {address[0]}:{address[1]}")
        return self._connections[host]

    async def request(self, host: int, message: Message, source: str = "client") -> Message:
        lock = self._locks.setdefault(host, asyncio.Lock())
        async with lock:
            reader, writer = await self._connection(host)
            await write_frame(writer, self._mapper.to_bytes(message))
            try:
                frame_type, body = await asyncio.wait_for(read_frame(reader), self._timeout)
            except asyncio.TimeoutError:
                raise TransportError(f"Host {host} did not answer {message.frame_type.name} within {self._timeout}s")
        response = self._mapper.from_body(frame_type, body)
        check_response(message, response)
        return raise_for_error(response)

    async def close(self) -> None:
        for _, writer in self._connections.values():
            writer.close()
            try:
                await writer.wait_closed()
            except OSError:
                pass
        self._connections.clear()


async def serve_node(handler: MessageHandler, address: Address, mapper: Optional[MessageMapper] = None) -> asyncio.AbstractServer:
    """Start a TCP server answering every frame of a connection with the handler's response."""
    mapper = mapper or MessageMapper()

    async def on_connection(reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        logger.info(f"Connection from {peer}")
        try:
            while not reader.at_eof():
                try:
                    frame_type, body = await read_frame(reader)
                except TransportError:
                    break
                try:
                    request = mapper.from_body(frame_type, body)
                except FederationException as e:
                    await write_frame(writer, mapper.to_bytes(error_message(e, 0)))
                    continue
                response = await handler.handle(request)
                await write_frame(writer, mapper.to_bytes(response))
        except Exception as e:
            logger.error(f"Connection from {peer} failed: {e}", exc_info=True)
        finally:
            writer.close()

    server = await asyncio.start_server(on_connection, *address)
    logger.info(f"Listening on {address[0]}:{address[1]}")
    return server
