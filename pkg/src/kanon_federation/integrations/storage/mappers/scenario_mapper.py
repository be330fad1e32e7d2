import json
from typing import Any, Dict, Mapping

from kanon_federation.domain.bench import Scenario, ScenarioQuery
from kanon_federation.domain.constants import *
from kanon_federation.exceptions import ParseError


class ScenarioMapper:
    def from_json(self, obj: Mapping[str, Any]) -> Scenario:
        if not isinstance(obj, Mapping):
            raise ParseError(f"Scenario document must be an object, got {type(obj).__name__}")
        queries = []
        for i, row in enumerate(obj.get("queries", [])):
            try:
                queries.append(ScenarioQuery(
                    name=row["name"],
                    sql=row["sql"],
                    ks=[int(k) for k in row.get("ks", [DEFAULT_K])],
                    modes=[str(m) for m in row.get("modes", MODES)],
                ))
            except (KeyError, TypeError, ValueError) as e:
                raise ParseError(f"Error processing scenario query {i}: {e}")
        try:
            return Scenario(
                name=obj["name"],
                generator=obj["generator"],
                params=dict(obj.get("params", {})),
                hosts=int(obj.get("hosts", 1)),
                queries=queries,
                seed=int(obj.get("seed", DEFAULT_SEED)),
                output=obj.get("output"),
                strategy=obj.get("strategy", VIEW_STRATEGY_GREEDY),
                timed=bool(obj.get("timed", False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"Error processing scenario: {e}")

    def to_json(self, scenario: Scenario) -> Dict[str, Any]:
        obj = {
            "name": scenario.name,
            "generator": scenario.generator,
            "params": scenario.params,
            "hosts": scenario.hosts,
            "seed": scenario.seed,
            "strategy": scenario.strategy,
            "timed": scenario.timed,
            "queries": [{"name": q.name, "sql": q.sql, "ks": q.ks, "modes": q.modes} for q in scenario.queries],
        }
        if scenario.output is not None:
            obj["output"] = scenario.output
        return obj

    def loads(self, text: str) -> Scenario:
        try:
            return self.from_json(json.loads(text))
        except json.JSONDecodeError as e:
            raise ParseError(f"Error processing scenario file: {e.msg}", e.pos)
