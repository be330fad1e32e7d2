import hashlib
import logging
import os
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from kanon_federation.bench.constants import *
from kanon_federation.bench.generators import generate
from kanon_federation.domain.bench import BreakdownRow, GeneratedDataset, LinearFit, ReportRow, Scenario, ScenarioQuery, ScenarioReport
from kanon_federation.domain.class_stream import Mode
from kanon_federation.domain.constants import *
from kanon_federation.domain.federation import QueryResult
from kanon_federation.exceptions import FederationException, OracleMismatch, ValidationError
from kanon_federation.integrations.storage.mappers.report_mapper import ReportMapper
from kanon_federation.integrations.storage.mappers.scenario_mapper import ScenarioMapper
from kanon_federation.integrations.storage.mappers.trace_mapper import TraceMapper
from kanon_federation.services.coordinator import in_process_federation, run_query
from kanon_federation.services.query_parser import parse_query
from kanon_federation.services.result_assembler import sort_rows

logger = logging.getLogger(__name__)


def load_scenario(path: str, mapper: ScenarioMapper = None) -> Scenario:
    mapper = mapper or ScenarioMapper()
    with open(path, "r", encoding="utf-8") as f:
        return mapper.loads(f.read())


def validate_scenario(scenario: Scenario, dataset: GeneratedDataset) -> None:
    """Check the grid and that every query parses against the generated catalog.

    Raises:
        ValidationError: for an empty grid, an unknown mode or a non-positive k
        ParseError, UnknownAttribute, UnsupportedFeature: for a query the catalog rejects
    """
    if not scenario.queries:
        raise ValidationError(f"Scenario {scenario.name} has no queries")
    for query in scenario.queries:
        for mode in query.modes:
            Mode.parse(mode)
        if not query.ks or any(k < 1 for k in query.ks):
            raise ValidationError(f"Query {query.name} needs positive k values, got {query.ks}")
        parse_query(query.sql, dataset.catalog)


def trace_hash(trace_text: str) -> str:
    return hashlib.sha256(trace_text.encode("utf-8")).hexdigest()


def _comparable(rows: List[Tuple], columns: Sequence[str]) -> List[Tuple]:
    return sort_rows(list(rows), columns, [])


async def _run_cell(scenario: Scenario, dataset: GeneratedDataset, query: ScenarioQuery, mode: Mode, k: int) -> Tuple[QueryResult, float, int]:
    client, _ = await in_process_federation(dataset.catalog, dataset.shards, seed=scenario.seed, strategy=scenario.strategy)
    try:
        started = time.perf_counter()
        result = await run_query(client, query.sql, k, mode)
        wall = (time.perf_counter() - started) * 1000.0
        setup_transfers = client.last_setup.transfer_frames if client.last_setup is not None else 0
        return result, wall, setup_transfers
    finally:
        await client.close()


def _breakdown(scenario: Scenario, dataset: GeneratedDataset, query: ScenarioQuery, mode: Mode, k: int, result: QueryResult, transfers: int) -> List[BreakdownRow]:
    plan = parse_query(query.sql, dataset.catalog)
    rows = [
        BreakdownRow(scenario.name, query.name, mode.value, k, node, plan.node(node).kind, totals.output_tuples, totals.comparisons)
        for node, totals in sorted(result.trace.totals.items())
    ]
    rows.append(BreakdownRow(scenario.name, query.name, mode.value, k, TRANSFER_BREAKDOWN_NODE, TRANSFER_BREAKDOWN_KIND, transfer_frames=transfers))
    return rows


async def run_scenario(scenario: Scenario) -> ScenarioReport:
    """Run a scenario's (query, mode, k) grid, one fresh federation per cell.

    Every cell's rows are checked against the plain run of the same query; a mismatch or any
    execution error is recorded in the row's error column and the grid continues.

    Parameters:
        scenario (Scenario): Scenario to run

    Returns:
        ScenarioReport: One ReportRow per cell, plus the operator breakdown and trace files

    Raises:
        ValidationError: if the scenario is malformed or a query does not parse
    """
    dataset = generate(scenario.generator, scenario.params, seed=scenario.seed, hosts=scenario.hosts)
    validate_scenario(scenario, dataset)
    report = ScenarioReport(scenario.name)
    trace_mapper = TraceMapper()

    for query in scenario.queries:
        oracle_client, _ = await in_process_federation(dataset.catalog, dataset.shards, seed=scenario.seed)
        try:
            oracle = await run_query(oracle_client, query.sql, DEFAULT_K, Mode.PLAIN)
        finally:
            await oracle_client.close()
        expected = _comparable(oracle.rows, oracle.columns)

        for mode_name in query.modes:
            mode = Mode.parse(mode_name)
            for k in query.ks:
                row = ReportRow(scenario.name, query.name, mode.value, k)
                try:
                    result, wall, setup_transfers = await _run_cell(scenario, dataset, query, mode, k)
                    if _comparable(result.rows, result.columns) != expected:
                        raise OracleMismatch(f"{mode.value} rows differ from plain rows ({len(result.rows)} vs {len(oracle.rows)})")
                    text = trace_mapper.dumps(result.trace)
                    row.output_tuples = result.trace.output_tuples
                    row.comparisons = result.trace.comparisons
                    row.wall_millis = wall if scenario.timed else 0.0
                    row.trace_hash = trace_hash(text)
                    report.traces[TRACE_FILENAME_TEMPLATE.format(query=query.name, mode=mode.value, k=k)] = text
                    report.breakdown.extend(_breakdown(scenario, dataset, query, mode, k, result, result.trace.transfer_frames + setup_transfers))
                except FederationException as e:
                    logger.error(f"Cell {query.name}/{mode.value}/k={k} of {scenario.name} failed: {e}", exc_info=True)
                    row.error = f"{type(e).__name__}: {e}"
                report.append(row)
                logger.info(f"{scenario.name} {query.name} {mode.value} k={k}: {row.output_tuples} tuples, {row.comparisons} comparisons")

    for (query_name, mode_name), fit in fit_comparisons(report).items():
        logger.info(f"{scenario.name} {query_name} {mode_name}: comparisons ~ {fit.slope:.2f}*k + {fit.intercept:.2f} (R^2 {fit.r_squared:.4f})")
    return report


def fit_linear(xs: Sequence[float], ys: Sequence[float]) -> LinearFit:
    """Least-squares line through (xs, ys) and its coefficient of determination.

    Raises:
        ValidationError: with fewer than two distinct x values
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(np.unique(x)) < 2:
        raise ValidationError("A linear fit needs at least two distinct x values")
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sum((y - (slope * x + intercept)) ** 2))
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if total == 0 else 1.0 - residual / total
    return LinearFit(float(slope), float(intercept), r_squared)


def fit_comparisons(rows: Sequence[ReportRow]) -> Dict[Tuple[str, str], LinearFit]:
    """Fit comparisons against k for every (query, mode) swept over several k values."""
    fits = {}
    frame = pd.DataFrame([(r.query, r.mode, r.k, r.comparisons) for r in rows if not r.error], columns=["query", "mode", "k", "comparisons"])
    for (query, mode), group in frame.groupby(["query", "mode"], sort=True):
        if group["k"].nunique() < 2:
            continue
        fits[(query, mode)] = fit_linear(group["k"].tolist(), group["comparisons"].tolist())
    return fits


def totals_by_kind(breakdown: Sequence[BreakdownRow]) -> Dict[str, Tuple[int, int]]:
    """(output tuples, comparisons) summed per operator kind."""
    frame = pd.DataFrame(
        [(b.node_kind, b.output_tuples, b.comparisons) for b in breakdown if b.node != TRANSFER_BREAKDOWN_NODE],
        columns=["node_kind", "output_tuples", "comparisons"],
    )
    grouped = frame.groupby("node_kind", sort=True).sum()
    return {kind: (int(r["output_tuples"]), int(r["comparisons"])) for kind, r in grouped.iterrows()}


def write_report(report: ScenarioReport, out_dir: str, mapper: Optional[ReportMapper] = None) -> List[str]:
    """Write the report CSV, the breakdown CSV and one trace file per cell.

    Returns:
        List[str]: Paths written
    """
    mapper = mapper or ReportMapper()
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, REPORT_FILENAME_TEMPLATE.format(scenario=report.name))
    breakdown_path = os.path.join(out_dir, BREAKDOWN_FILENAME_TEMPLATE.format(scenario=report.name))
    with open(report_path, "w", encoding="utf-8", newline="") as f:
        f.write(mapper.to_csv(report))
    with open(breakdown_path, "w", encoding="utf-8", newline="") as f:
        f.write(mapper.to_csv(report.breakdown, BREAKDOWN_COLUMNS))
    written = [report_path, breakdown_path]

    trace_dir = os.path.join(out_dir, TRACE_DIRNAME_TEMPLATE.format(scenario=report.name))
    os.makedirs(trace_dir, exist_ok=True)
    for name, text in sorted(report.traces.items()):
        path = os.path.join(trace_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        written.append(path)
    logger.info(f"Wrote {len(report)} report rows and {len(report.traces)} traces to {out_dir}")
    return written
