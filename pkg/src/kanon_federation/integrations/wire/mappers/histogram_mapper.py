from typing import Any, Dict, Mapping

from kanon_federation.domain.anonymization import Histogram
from kanon_federation.exceptions import ProtocolError


class HistogramMapper:
    def from_json(self, obj: Mapping[str, Any]) -> Histogram:
        try:
            return Histogram(
                relation=obj["relation"],
                key_attrs=tuple(obj["key_attrs"]),
                num_hosts=int(obj["num_hosts"]),
                counts={tuple(vector): list(counts) for vector, counts in obj["counts"]},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ProtocolError(f"Error processing histogram: {e}")

    def to_json(self, histogram: Histogram) -> Dict[str, Any]:
        return {
            "relation": histogram.relation,
            "key_attrs": list(histogram.key_attrs),
            "num_hosts": histogram.num_hosts,
            "counts": [[list(vector), list(counts)] for vector, counts in histogram.rows],
        }
