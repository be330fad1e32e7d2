import argparse
import asyncio
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Tuple

from kanon_federation.bench.generators import GENERATORS, generate
from kanon_federation.bench.scenarios import load_scenario, run_scenario, write_report
from kanon_federation.domain.catalog import Catalog, RelationShard
from kanon_federation.domain.class_stream import Mode
from kanon_federation.domain.constants import *
from kanon_federation.domain.control_flow import ControlFlowSet
from kanon_federation.domain.federation import NodeConfig
from kanon_federation.domain.query_plan import split_column
from kanon_federation.exceptions import FederationException, ValidationError
from kanon_federation.integrations.storage.data_directory import DataDirectory
from kanon_federation.integrations.storage.mappers.anonymization_map_mapper import AnonymizationMapMapper, dump_violations
from kanon_federation.integrations.storage.mappers.trace_mapper import TraceMapper
from kanon_federation.integrations.wire.tcp_transport import Address, TcpTransport, parse_address, serve_node
from kanon_federation.services.anonymizer import check_view
from kanon_federation.services.coordinator import FederationClient, in_process_federation, install_view, run_query, setup_views
from kanon_federation.services.data_owner_node import DataOwnerNode

logger = logging.getLogger(__name__)

LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO, "warning": logging.WARNING, "error": logging.ERROR}


def parse_addresses(text: str) -> Dict[int, Address]:
    """Comma separated host:port list, host ids in list order."""
    return {host: parse_address(part.strip()) for host, part in enumerate(text.split(",")) if part.strip()}


def parse_control_flow(text: str) -> ControlFlowSet:
    entries = []
    for part in text.split(","):
        if part.strip():
            entries.append(split_column(part.strip()))
    if not entries:
        raise ValidationError("Control flow set is empty, expected relation.attribute[,relation.attribute...]")
    return ControlFlowSet.of(entries)


def load_data(data_dir: str) -> Tuple[Catalog, Dict[int, List[RelationShard]]]:
    if not data_dir:
        raise ValidationError("No data directory, pass --data-dir or set KANON_DATA_DIR")
    directory = DataDirectory(data_dir)
    catalog = directory.load_catalog()
    return catalog, directory.load_shards(catalog)


async def serve(args: argparse.Namespace) -> None:
    """Run one data owner until interrupted."""
    directory = DataDirectory(args.data_dir)
    catalog = directory.load_catalog()
    shards = directory.load_shards(catalog, host=args.host_id)[args.host_id]
    peers = TcpTransport(parse_addresses(args.peers)) if args.peers else None
    config = NodeConfig(host_id=args.host_id, listen=args.listen, data_dir=args.data_dir, seed=args.seed)
    node = DataOwnerNode(config, catalog, shards, peers=peers)
    server = await serve_node(node, parse_address(args.listen))
    logger.info(f"Data owner {args.host_id} serving {len(shards)} shards on {config.address}")
    try:
        async with server:
            await server.serve_forever()
    finally:
        if peers is not None:
            await peers.close()


async def _client(args: argparse.Namespace) -> FederationClient:
    if args.connect:
        addresses = parse_addresses(args.connect)
        catalog = DataDirectory(args.data_dir).load_catalog()
        client = FederationClient(TcpTransport(addresses), catalog, sorted(addresses), seed=args.seed, strategy=args.strategy)
        await client.connect()
        return client
    catalog, shards = load_data(args.data_dir)
    client, _ = await in_process_federation(catalog, shards, seed=args.seed, strategy=args.strategy)
    return client


async def query(args: argparse.Namespace) -> None:
    if args.query_file:
        with open(args.query_file, "r", encoding="utf-8") as f:
            text = f.read()
    elif args.sql:
        text = args.sql
    else:
        raise ValidationError("No query, pass --query-file or --sql")
    client = await _client(args)
    try:
        if args.map:
            with open(args.map, "r", encoding="utf-8") as f:
                await install_view(client, AnonymizationMapMapper().loads(f.read()))
        result = await run_query(client, text, args.k, Mode.parse(args.mode))
    finally:
        await client.close()

    if args.trace_out:
        with open(args.trace_out, "w", encoding="utf-8", newline="\n") as f:
            f.write(TraceMapper().dumps(result.trace))
        logger.info(f"Wrote {len(result.trace)} trace events to {args.trace_out}")
    print(json.dumps({"columns": result.columns, "rows": [list(r) for r in result.rows], "mode": result.mode}))


async def setup(args: argparse.Namespace) -> None:
    client = await _client(args)
    try:
        view_setup = await setup_views(client, parse_control_flow(args.control_flow), args.k)
    finally:
        await client.close()
    text = AnonymizationMapMapper().dumps(view_setup.view)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        logger.info(f"Wrote anonymization map to {args.out}")
    else:
        print(text)
    logger.info(f"View statistics: {view_setup.stats}")


def check_view_command(args: argparse.Namespace) -> int:
    catalog, shards = load_data(args.data_dir)
    with open(args.map, "r", encoding="utf-8") as f:
        view = AnonymizationMapMapper().loads(f.read())
    k = args.k if args.k is not None else view.k
    violations = check_view(view, [s for host in sorted(shards) for s in shards[host]], k, catalog)
    text = dump_violations(violations)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    logger.info(f"{len(violations)} violations of {args.map} at k={k}")
    return 1 if violations else 0


async def bench(args: argparse.Namespace) -> int:
    failed = 0
    for path in args.scenario:
        scenario = load_scenario(path)
        report = await run_scenario(scenario)
        write_report(report, args.out or scenario.output or ".")
        failed += len(report.errors)
    return 1 if failed else 0


def generate_command(args: argparse.Namespace) -> None:
    if not args.out:
        raise ValidationError("No output directory, pass --out or set KANON_DATA_DIR")
    params = json.loads(args.params) if args.params else {}
    dataset = generate(args.generator, params, seed=args.seed, hosts=args.hosts)
    DataDirectory(args.out).write(dataset.catalog, dataset.shards)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kanon-federation", description="K-anonymous federated query engine")
    parser.add_argument("--log-level", type=str, default=os.getenv("KANON_LOG_LEVEL", "info"), choices=list(LOG_LEVELS), required=False)
    parser.add_argument("--seed", type=int, default=int(os.getenv("KANON_SEED", DEFAULT_SEED)), required=False)
    subparsers = parser.add_subparsers(dest="command", required=True)

    serve_parser = subparsers.add_parser("serve", help="Run a data owner node")
    serve_parser.add_argument("--host-id", type=int, required=True)
    serve_parser.add_argument("--listen", type=str, default=f"127.0.0.1:{DEFAULT_LISTEN_PORT}", required=False)
    serve_parser.add_argument("--data-dir", type=str, default=os.getenv("KANON_DATA_DIR"), required=False)
    serve_parser.add_argument("--peers", type=str, default=None, required=False, help="host:port of every data owner, in host id order")

    def add_client_arguments(p: argparse.ArgumentParser) -> None:
        p.add_argument("--data-dir", type=str, default=os.getenv("KANON_DATA_DIR"), required=False)
        p.add_argument("--connect", type=str, default=None, required=False, help="host:port of every data owner; in process when omitted")
        p.add_argument("--strategy", type=str, default=VIEW_STRATEGY_GREEDY, choices=list(VIEW_STRATEGIES), required=False)
        p.add_argument("--k", type=int, default=int(os.getenv("KANON_K", DEFAULT_K)), required=False)

    query_parser = subparsers.add_parser("query", help="Run one query against the federation")
    add_client_arguments(query_parser)
    query_parser.add_argument("--mode", type=str, default=MODE_KANON, choices=list(MODES), required=False)
    query_parser.add_argument("--query-file", type=str, default=None, required=False)
    query_parser.add_argument("--sql", type=str, default=None, required=False)
    query_parser.add_argument("--trace-out", type=str, default=None, required=False)
    query_parser.add_argument("--map", type=str, default=None, required=False, help="Anonymization map written by setup, installed before the query")

    setup_parser = subparsers.add_parser("setup", help="Generate and distribute an anonymized view")
    add_client_arguments(setup_parser)
    setup_parser.add_argument("--control-flow", type=str, required=True, help="relation.attribute[,relation.attribute...]")
    setup_parser.add_argument("--out", type=str, default=None, required=False)

    check_parser = subparsers.add_parser("check-view", help="List the violations of an anonymization map")
    check_parser.add_argument("--map", type=str, required=True)
    check_parser.add_argument("--data-dir", type=str, default=os.getenv("KANON_DATA_DIR"), required=False)
    check_parser.add_argument("--k", type=int, default=None, required=False)
    check_parser.add_argument("--out", type=str, default=None, required=False)

    bench_parser = subparsers.add_parser("bench", help="Run benchmark scenarios")
    bench_parser.add_argument("--scenario", type=str, action="append", required=True)
    bench_parser.add_argument("--out", type=str, default=None, required=False)

    generate_parser = subparsers.add_parser("generate", help="Write a synthetic dataset to a data directory")
    generate_parser.add_argument("--generator", type=str, required=True, choices=list(GENERATORS))
    generate_parser.add_argument("--params", type=str, default=None, required=False, help="Generator parameters as JSON")
    generate_parser.add_argument("--hosts", type=int, default=1, required=False)
    generate_parser.add_argument("--out", type=str, default=os.getenv("KANON_DATA_DIR"), required=False)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=LOG_LEVELS.get(args.log_level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    try:
        if args.command == "serve":
            asyncio.run(serve(args))
        elif args.command == "query":
            asyncio.run(query(args))
        elif args.command == "setup":
            asyncio.run(setup(args))
        elif args.command == "check-view":
            return check_view_command(args)
        elif args.command == "bench":
            return asyncio.run(bench(args))
        elif args.command == "generate":
            generate_command(args)
    except FederationException as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 2
    except KeyboardInterrupt:
        logger.info("Interrupted")
    return 0


if __name__ == "__main__":
    sys.exit(main())
