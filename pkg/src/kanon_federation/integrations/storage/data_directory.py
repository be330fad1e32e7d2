import logging
import os
import re
from typing import Dict, List, Optional

from kanon_federation.domain.catalog import Catalog, RelationShard
from kanon_federation.domain.constants import *
from kanon_federation.exceptions import ValidationError
from kanon_federation.integrations.storage.mappers.shard_csv_mapper import ShardCsvMapper
from kanon_federation.services.schema import dump_catalog, load_catalog

logger = logging.getLogger(__name__)

_SHARD_FILE = re.compile(r"^(?P<relation>.+)\.host(?P<host>\d+)\.csv$")


class DataDirectory:
    """A directory holding catalog.json and <relation>.host<N>.csv shards."""

    def __init__(self, path: str, shard_mapper: Optional[ShardCsvMapper] = None):
        self.path = path
        self.shard_mapper = shard_mapper or ShardCsvMapper()

    @property
    def catalog_path(self) -> str:
        return os.path.join(self.path, CATALOG_FILENAME)

    def shard_path(self, relation: str, host: int) -> str:
        return os.path.join(self.path, SHARD_FILENAME_TEMPLATE.format(relation=relation, host=host))

    def load_catalog(self) -> Catalog:
        with open(self.catalog_path, "r", encoding="utf-8") as f:
            return load_catalog(f.read())

    def hosts(self) -> List[int]:
        """Host ids found in shard file names.

        Raises:
            ValidationError: if the ids are not dense 0..N-1
        """
        found = set()
        for name in os.listdir(self.path):
            match = _SHARD_FILE.match(name)
            if match:
                found.add(int(match.group("host")))
        hosts = sorted(found)
        if hosts != list(range(len(hosts))):
            raise ValidationError(f"Host ids in {self.path} must be dense 0..N-1, found {hosts}")
        return hosts

    def load_shards(self, catalog: Catalog, host: Optional[int] = None) -> Dict[int, List[RelationShard]]:
        """Load shards per host; a relation without a file on a host gets an empty shard."""
        hosts = self.hosts() if host is None else [host]
        out: Dict[int, List[RelationShard]] = {}
        for h in hosts:
            shards = []
            for relation in catalog.relations:
                path = self.shard_path(relation.name, h)
                if os.path.exists(path):
                    with open(path, "r", encoding="utf-8", newline="") as f:
                        shard = self.shard_mapper.from_csv(f, relation, h)
                else:
                    shard = RelationShard(relation=relation.name, owner=h)
                shard.validate(catalog)
                shards.append(shard)
            out[h] = shards
        logger.info(f"Loaded shards for hosts {hosts} from {self.path}")
        return out

    def write(self, catalog: Catalog, shards: Dict[int, List[RelationShard]]) -> None:
        os.makedirs(self.path, exist_ok=True)
        with open(self.catalog_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(dump_catalog(catalog))
        for host, host_shards in sorted(shards.items()):
            for shard in host_shards:
                with open(self.shard_path(shard.relation, host), "w", encoding="utf-8", newline="") as f:
                    f.write(self.shard_mapper.to_csv(shard, catalog.relation(shard.relation)))
        logger.info(f"Wrote catalog and {sum(len(s) for s in shards.values())} shards to {self.path}")
