import dataclasses
import io
from typing import List, Sequence, Type, TypeVar, Union

import pandas as pd

from kanon_federation.domain.bench import BreakdownRow, ReportRow
from kanon_federation.domain.constants import *
from kanon_federation.exceptions import ParseError

R = TypeVar("R", ReportRow, BreakdownRow)


class ReportMapper:
    """CSV reports with a header line, one row per scenario cell (or per operator)."""

    def to_csv(self, rows: Sequence[Union[ReportRow, BreakdownRow]], columns: Sequence[str] = REPORT_COLUMNS) -> str:
        frame = pd.DataFrame([dataclasses.asdict(r) for r in rows], columns=list(columns))
        if "wall_millis" in frame.columns:
            frame["wall_millis"] = frame["wall_millis"].astype(float).round(3)
        return frame.to_csv(index=False, lineterminator="\n")

    def from_csv(self, source: Union[str, io.TextIOBase], row_type: Type[R] = ReportRow) -> List[R]:
        buffer = io.StringIO(source) if isinstance(source, str) else source
        try:
            frame = pd.read_csv(buffer, keep_default_na=False, dtype={"trace_hash": str, "error": str})
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ParseError(f"Error processing report: {e}")
        fields = [f.name for f in dataclasses.fields(row_type)]
        missing = [f for f in fields if f not in frame.columns]
        if missing:
            raise ParseError(f"Report is missing columns {missing}")
        return [row_type(**{f: record[f] for f in fields}) for record in frame.to_dict(orient="records")]
