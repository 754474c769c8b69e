"""JSON and CSV formats for instances, query families, releases, and reports."""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ParseError
from .pipelines import ReleaseReport
from .pmw import SyntheticDistribution
from .queries import (
    LinearQuery,
    QueryFamily,
    counting_family,
    interval_family,
    prefix_interval_family,
    random_sign_family,
)
from .relational import Attribute, Instance, JoinQuery, Relation


def instance_to_json(instance: Instance) -> dict:
    return {
        "attributes": [
            {"name": a.name, "domain_size": a.domain_size}
            for a in instance.query.attributes
        ],
        "relations": [
            {
                "schema": list(schema),
                "tuples": [list(t) + [f] for t, f in sorted(rel.support.items())],
            }
            for schema, rel in zip(instance.query.relations, instance.relations)
        ],
        "meta": _jsonable(instance.meta),
    }


def instance_from_json(doc: dict) -> Instance:
    try:
        attributes = tuple(
            Attribute(a["name"], int(a["domain_size"])) for a in doc["attributes"])
        schemas = tuple(tuple(r["schema"]) for r in doc["relations"])
        query = JoinQuery(attributes, schemas)
        relations = tuple(
            Relation(schema, {tuple(int(v) for v in row[:-1]): int(row[-1])
                              for row in r["tuples"]})
            for schema, r in zip(schemas, doc["relations"]))
        return Instance(query, relations, dict(doc.get("meta", {})))
    except (IndexError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed instance document: {exc}") from exc


def load_instance(path: str | Path) -> Instance:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read instance from {path}: {exc}") from exc
    return instance_from_json(doc)


def save_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_json(instance), indent=2) + "\n")


def family_to_json(family: QueryFamily) -> dict:
    if family.spec.get("kind") in {"counting", "random_sign", "interval"}:
        return dict(family.spec)
    return {
        "kind": "explicit",
        "queries": [
            {"relation_vectors": [v.tolist() for v in q.relation_vectors]}
            for q in family.queries
        ],
    }


def family_from_json(query: JoinQuery, doc: dict) -> QueryFamily:
    try:
        kind = doc["kind"]
        if kind == "counting":
            return counting_family(query)
        if kind == "random_sign":
            return random_sign_family(query, int(doc["num_queries"]), int(doc["seed"]))
        if kind == "interval":
            if "intervals" in doc:
                return interval_family(query, [
                    {a: (int(lo), int(hi)) for a, (lo, hi) in spec.items()}
                    for spec in doc["intervals"]])
            return prefix_interval_family(
                query, doc["attribute"], int(doc["num_queries"]))
        if kind == "explicit":
            queries = tuple(
                LinearQuery(tuple(np.asarray(v, dtype=np.float64)
                                  for v in q["relation_vectors"]))
                for q in doc["queries"])
            return QueryFamily(queries, spec={"kind": "explicit"})
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed family document: {exc}") from exc
    raise ParseError(f"unknown family kind {doc.get('kind')!r}")


def load_family(query: JoinQuery, path: str | Path) -> QueryFamily:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read family from {path}: {exc}") from exc
    return family_from_json(query, doc)


def save_family(family: QueryFamily, path: str | Path) -> None:
    Path(path).write_text(json.dumps(family_to_json(family), indent=2) + "\n")


def synthetic_to_csv(
    dist: SyntheticDistribution,
    path: str | Path,
    sparse_threshold: float = 0.0,
) -> int:
    """Write one row per joined cell with mass above the threshold.

    Returns the number of rows written.
    """
    query = dist.query
    rows = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(query.attribute_names) + ["mass"])
        (indices,) = np.nonzero(dist.mass > sparse_threshold)
        for idx in indices:
            writer.writerow(list(query.decode(int(idx))) + [repr(float(dist.mass[idx]))])
            rows += 1
    return rows


def report_to_json(report: ReleaseReport) -> dict:
    return _jsonable(dataclasses.asdict(report))


def save_report(report: ReleaseReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report_to_json(report), indent=2) + "\n")


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, frozenset):
        return sorted(value)
    return value
