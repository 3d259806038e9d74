"""Dated stock-relation graph snapshots from entity-relation records.

Edges are undirected.  First-order: a whitelisted record directly links two
universe entities (either direction).  Second-order: both entities link to a
common intermediate entity via whitelisted properties.  Every node carries a
self-loop.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field

import numpy as np

# ownership / control / part-of / contract property whitelist
DEFAULT_WHITELIST = ("P127", "P355", "P836", "P1553", "PContract")


class GraphConfigError(ValueError):
    """Bad universe mapping or records."""


class NoSnapshotError(LookupError):
    """Queried date precedes every available snapshot."""


@dataclass(frozen=True)
class RelationRecord:
    subject_entity: str
    property: str
    object_entity: str
    valid_from: dt.date


@dataclass
class EdgeInfo:
    order: str            # "first" | "second" | "self"
    chain: tuple          # property ids along the connecting path


@dataclass
class StockGraph:
    """Immutable snapshot of stock nodes and undirected relation edges."""

    snapshot_date: dt.date
    nodes: list                    # tickers, canonical sorted order
    neighbors: dict                # ticker -> set of tickers (incl. self)
    edge_meta: dict = field(default_factory=dict)   # (a, b) sorted pair -> EdgeInfo
    ignored_records: int = 0

    def adjacency_matrix(self, symbols=None) -> np.ndarray:
        """Boolean N x N mask for the given symbol ordering (default: nodes)."""
        symbols = list(self.nodes) if symbols is None else list(symbols)
        n = len(symbols)
        adj = np.zeros((n, n), dtype=bool)
        index = {s: i for i, s in enumerate(symbols)}
        for i, s in enumerate(symbols):
            adj[i, i] = True
            for t in self.neighbors.get(s, ()):
                j = index.get(t)
                if j is not None:
                    adj[i, j] = True
        return adj

    def export(self, path):
        """Human-readable adjacency list with edge metadata."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# stock graph snapshot {self.snapshot_date.isoformat()}\n")
            fh.write(f"# nodes {len(self.nodes)} ignored_records {self.ignored_records}\n")
            for a in self.nodes:
                peers = sorted(self.neighbors[a] - {a})
                fh.write(f"{a}:")
                for b in peers:
                    info = self.edge_meta.get(tuple(sorted((a, b))))
                    tag = f"{info.order}/{'+'.join(info.chain)}" if info else "?"
                    fh.write(f" {b}[{tag}]")
                fh.write("\n")


def load_universe(path) -> dict:
    """ticker -> entity id map; duplicate tickers or entities are config errors."""
    mapping, seen_entities = {}, {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"ticker", "entity_id"}.issubset(reader.fieldnames):
            raise GraphConfigError(f"{path}: expected header ticker,entity_id")
        for row in reader:
            ticker, entity = row["ticker"].strip(), row["entity_id"].strip()
            if ticker in mapping:
                raise GraphConfigError(f"duplicate ticker mapping for {ticker}")
            if entity in seen_entities:
                raise GraphConfigError(
                    f"entity {entity} mapped by both {seen_entities[entity]} and {ticker}")
            mapping[ticker] = entity
            seen_entities[entity] = ticker
    return mapping


def load_relations(path):
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"subject", "property", "object", "valid_from"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise GraphConfigError(f"{path}: expected header {sorted(required)}")
        for row in reader:
            records.append(RelationRecord(
                subject_entity=row["subject"].strip(),
                property=row["property"].strip(),
                object_entity=row["object"].strip(),
                valid_from=dt.date.fromisoformat(row["valid_from"].strip()),
            ))
    return records


def write_relations_csv(path, relations):
    """relations: iterable of (subject, property, object, valid_from)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject", "property", "object", "valid_from"])
        for subj, prop, obj, valid_from in relations:
            writer.writerow([subj, prop, obj, valid_from.isoformat()])


def write_universe_csv(path, universe: dict):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ticker", "entity_id"])
        for ticker in sorted(universe):
            writer.writerow([ticker, universe[ticker]])


def build_graph(records, universe: dict, snapshot_date: dt.date,
                whitelist=DEFAULT_WHITELIST) -> StockGraph:
    """Snapshot graph from records effective on snapshot_date.

    Non-whitelisted properties never create edges (counted as ignored);
    records with valid_from after the snapshot date are excluded.
    """
    entities = set(universe.values())
    if len(entities) != len(universe):
        raise GraphConfigError("universe maps multiple tickers to one entity")
    ticker_of = {e: t for t, e in universe.items()}
    whitelist = set(whitelist)

    ignored = 0
    # entity-level undirected links: entity -> {peer: property}
    links: dict[str, dict] = {}
    for rec in records:
        if rec.property not in whitelist:
            ignored += 1
            continue
        if rec.valid_from > snapshot_date:
            continue
        links.setdefault(rec.subject_entity, {})[rec.object_entity] = rec.property
        links.setdefault(rec.object_entity, {})[rec.subject_entity] = rec.property

    nodes = sorted(universe)
    neighbors = {t: {t} for t in nodes}
    edge_meta = {}
    for t in nodes:
        edge_meta[(t, t)] = EdgeInfo(order="self", chain=())

    def connect(a, b, order, chain):
        key = tuple(sorted((a, b)))
        neighbors[a].add(b)
        neighbors[b].add(a)
        prev = edge_meta.get(key)
        if prev is None or (prev.order == "second" and order == "first"):
            edge_meta[key] = EdgeInfo(order=order, chain=chain)

    # first-order: direct whitelisted link between two universe entities
    for ea, peers in links.items():
        if ea not in ticker_of:
            continue
        for eb, prop in peers.items():
            if eb in ticker_of and eb != ea:
                connect(ticker_of[ea], ticker_of[eb], "first", (prop,))

    # second-order: shared intermediate entity, whitelisted on both hops
    universe_entities = [e for e in links if e in ticker_of]
    for i, ea in enumerate(universe_entities):
        for eb in universe_entities[i + 1:]:
            shared = (set(links[ea]) & set(links[eb])) - {ea, eb}
            for mid in sorted(shared):
                connect(ticker_of[ea], ticker_of[eb], "second",
                        (links[ea][mid], links[eb][mid]))

    return StockGraph(snapshot_date=snapshot_date, nodes=nodes,
                      neighbors=neighbors, edge_meta=edge_meta,
                      ignored_records=ignored)


def snapshot_for_date(snapshots, date: dt.date) -> StockGraph:
    """Latest snapshot with snapshot_date <= date (snapshots sorted ascending)."""
    chosen = None
    for snap in snapshots:
        if snap.snapshot_date <= date:
            chosen = snap
        else:
            break
    if chosen is None:
        raise NoSnapshotError(f"no graph snapshot on or before {date.isoformat()}")
    return chosen
