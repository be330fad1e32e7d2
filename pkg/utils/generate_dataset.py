#!/usr/bin/env python3
"""
Write a synthetic federation dataset to a data directory.

The directory gets catalog.json plus one <relation>.host<N>.csv shard per relation and host,
ready for `kanon-federation serve --data-dir` or an in-process `query`.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

# Add src directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from kanon_federation.bench.generators import GENERATORS, generate
from kanon_federation.domain.constants import DEFAULT_SEED
from kanon_federation.integrations.storage.data_directory import DataDirectory

logger = logging.getLogger(__name__)


def generate_dataset(output_dir: str, generator: str, params: dict, hosts: int = 1, seed: int = DEFAULT_SEED) -> str:
    """
    Generate a dataset and write it to output_dir.

    Returns:
        Path of the written catalog
    """
    dataset = generate(generator, params, seed=seed, hosts=hosts)
    directory = DataDirectory(output_dir)
    directory.write(dataset.catalog, dataset.shards)
    for relation in dataset.catalog.relations:
        logger.info(f"{relation.name}: {dataset.rows(relation.name)} rows over {hosts} hosts")
    return directory.catalog_path


def main():
    parser = argparse.ArgumentParser(description="Write a synthetic dataset for the federation")
    parser.add_argument("--out", type=str, default=os.getenv("KANON_DATA_DIR", "data"))
    parser.add_argument("--generator", type=str, default="running_example", choices=list(GENERATORS))
    parser.add_argument("--params", type=str, default="{}", help="Generator parameters as JSON, e.g. '{\"scale\": 0.01}'")
    parser.add_argument("--hosts", type=int, default=2)
    parser.add_argument("--seed", type=int, default=int(os.getenv("KANON_SEED", DEFAULT_SEED)))
    args = parser.parse_args()

    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    catalog_path = generate_dataset(args.out, args.generator, json.loads(args.params), args.hosts, args.seed)
    print(f"Dataset written, catalog at {catalog_path}")


if __name__ == "__main__":
    main()
