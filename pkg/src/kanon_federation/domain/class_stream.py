from dataclasses import dataclass, field
from enum import Enum
import logging
from typing import Iterable, List, Optional

from kanon_federation.domain.anonymization import EquivalenceClass
from kanon_federation.domain.catalog import DataTuple
from kanon_federation.domain.constants import *
from kanon_federation.exceptions import UnknownAttribute, ValidationError

logger = logging.getLogger(__name__)


class Mode(str, Enum):
    """Execution mode of a query's secure operators."""
    PLAIN = MODE_PLAIN
    ENCRYPTED = MODE_ENCRYPTED
    KANON = MODE_KANON
    OBLIVIOUS = MODE_OBLIVIOUS

    @classmethod
    def parse(cls, value: str) -> "Mode":
        try:
            return cls(value.lower())
        except ValueError:
            raise ValidationError(f"Unknown mode {value}, expected one of {', '.join(MODES)}")


@dataclass
class AggregateSpec:
    """Data class describing a grouped aggregate.

    Attributes:
        group_by: Qualified group-by columns
        fn: COUNT, SUM, AVG, MIN or MAX
        target: Qualified aggregated column (None for COUNT(*))
        entity_attr: Qualified column naming the individuals of the aggregate
        alias: Output column name of the aggregate value
    """
    group_by: List[str]
    fn: str
    target: Optional[str]
    entity_attr: str
    alias: str

    @property
    def value_columns(self) -> List[str]:
        if self.fn == AGG_AVG:
            return [self.alias + AVG_SUM_SUFFIX, self.alias + AVG_COUNT_SUFFIX]
        return [self.alias]

    @property
    def output_columns(self) -> List[str]:
        return list(self.group_by) + self.value_columns

    @property
    def control_inputs(self) -> List[str]:
        columns = list(self.group_by)
        if self.entity_attr not in columns:
            columns.append(self.entity_attr)
        return columns


class ClassStream(List[EquivalenceClass]):
    """Ordered equivalence classes flowing between secure operators.

    In the encrypted and oblivious modes the stream holds a single synthetic class.
    """

    def __init__(self, columns: List[str], iterable: Optional[Iterable[EquivalenceClass]] = None):
        self.columns = list(columns)
        super().__init__(iterable or [])

    def index_of(self, column: str) -> int:
        try:
            return self.columns.index(column)
        except ValueError:
            raise UnknownAttribute(f"Column {column} not in stream columns {self.columns}")

    @property
    def tuple_count(self) -> int:
        return sum(len(c) for c in self)

    @property
    def tuples(self) -> List[DataTuple]:
        return [t for c in self for t in c.tuples]

    @property
    def real_tuples(self) -> List[DataTuple]:
        return [t for c in self for t in c.tuples if not t.dummy]
