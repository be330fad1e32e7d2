from typing import Dict, List, Sequence

from kanon_federation.domain.anonymization import Histogram
from kanon_federation.domain.federation import FrameType, Message
from kanon_federation.integrations.wire.protocols import Mapper, Transport


async def request_histograms(
    transport: Transport,
    mapper: Mapper[Histogram],
    host: int,
    query_id: int,
    key_attrs: Dict[str, Sequence[str]],
    num_hosts: int,
) -> List[Histogram]:
    """Get one host's histograms over the control flow attributes of each relation.

    Parameters:
        key_attrs (Dict[str, Sequence[str]]): Relation -> c_i in catalog order
        num_hosts (int): Length of the per-host count vectors

    Returns:
        List[Histogram]: One histogram per relation, in relation name order
    """
    payload = {"key_attrs": {r: list(a) for r, a in key_attrs.items()}, "num_hosts": num_hosts}
    response = await transport.request(host, Message(FrameType.HISTOGRAM_REQUEST, query_id, payload))
    return [mapper.from_json(h) for h in response.payload["histograms"]]
