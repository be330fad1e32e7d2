import csv
import io
import logging
from typing import Any, List, Union

import pandas as pd

from kanon_federation.domain.catalog import DataTuple, RelationDef, RelationShard
from kanon_federation.domain.constants import *
from kanon_federation.exceptions import ParseError

logger = logging.getLogger(__name__)


class ShardCsvMapper:
    """Reads and writes headerless per-(relation, host) CSV shards."""

    def from_csv(self, source: Union[str, io.TextIOBase], relation: RelationDef, owner: int) -> RelationShard:
        """Parse a shard.

        Parameters:
            source: CSV text or an open text stream
            relation (RelationDef): Relation the shard belongs to
            owner (int): Host id of the shard

        Raises:
            ParseError: on wrong arity, absent values or non-integer values in integer columns
        """
        buffer = io.StringIO(source) if isinstance(source, str) else source
        try:
            frame = pd.read_csv(buffer, header=None, dtype=str, keep_default_na=False, na_values=[])
        except pd.errors.EmptyDataError:
            return RelationShard(relation=relation.name, owner=owner)
        except pd.errors.ParserError as e:
            raise ParseError(f"Error processing shard {relation.name} of host {owner}: {e}")

        if frame.shape[1] != relation.arity:
            raise ParseError(f"Shard {relation.name} of host {owner} has {frame.shape[1]} columns, expected {relation.arity}")
        if frame.isna().to_numpy().any() or (frame == "").to_numpy().any():
            raise ParseError(f"Shard {relation.name} of host {owner} has absent values")

        columns: List[List[Any]] = []
        for i, attribute in enumerate(relation.attributes):
            if attribute.kind in NUMERIC_KINDS:
                try:
                    columns.append(pd.to_numeric(frame[i], errors="raise").astype("int64").tolist())
                except (ValueError, TypeError) as e:
                    raise ParseError(f"Error processing column {attribute.name} of shard {relation.name} on host {owner}: {e}")
            else:
                columns.append(frame[i].tolist())

        tuples = [DataTuple(tuple(values), False, owner) for values in zip(*columns)]
        logger.debug(f"Read {len(tuples)} tuples of {relation.name} for host {owner}")
        return RelationShard(relation=relation.name, owner=owner, tuples=tuples)

    def to_csv(self, shard: RelationShard, relation: RelationDef) -> str:
        if not shard.tuples:
            return ""
        frame = pd.DataFrame([list(t.values) for t in shard.tuples], columns=relation.attribute_names)
        return frame.to_csv(header=False, index=False, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
