from typing import Any, Mapping, Protocol, TypeVar

from kanon_federation.domain.federation import Message

T = TypeVar("T")

class Transport(Protocol):
    async def request(self, host: int, message: Message, source: str = "client") -> Message: ...
    async def close(self) -> None: ...

class MessageHandler(Protocol):
    async def handle(self, message: Message) -> Message: ...

class Mapper(Protocol[T]):
    def from_json(self, obj: Any) -> T: ...
    def to_json(self, value: T) -> Any: ...
