import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stockgat.relation_graph import (DEFAULT_WHITELIST, GraphConfigError,
                                     NoSnapshotError, RelationRecord,
                                     build_graph, load_relations,
                                     load_universe, snapshot_for_date,
                                     write_relations_csv, write_universe_csv)

D = dt.date(2020, 1, 1)


def rec(subj, prop, obj, valid=dt.date(2019, 1, 1)):
    return RelationRecord(subject_entity=subj, property=prop,
                          object_entity=obj, valid_from=valid)


def test_direct_owned_by_edge_is_first_order():
    g = build_graph([rec("EA", "P127", "EB")], {"A": "EA", "B": "EB"}, D)
    assert "B" in g.neighbors["A"] and "A" in g.neighbors["B"]
    assert g.edge_meta[("A", "B")].order == "first"
    assert g.edge_meta[("A", "B")].chain == ("P127",)


def test_empty_records_gives_isolated_self_loops():
    g = build_graph([], {"A": "EA", "B": "EB"}, D)
    assert g.neighbors["A"] == {"A"}
    assert g.neighbors["B"] == {"B"}
    adj = g.adjacency_matrix()
    assert np.array_equal(adj, np.eye(2, dtype=bool))


def test_shared_intermediate_gives_second_order_edge():
    # A -> X <- B with X outside the universe
    records = [rec("EA", "P355", "EX"), rec("EB", "P1553", "EX")]
    g = build_graph(records, {"A": "EA", "B": "EB"}, D)
    info = g.edge_meta[("A", "B")]
    assert info.order == "second"
    assert set(info.chain) == {"P355", "P1553"}


def _brute_force_edges(records, universe, snapshot_date,
                       whitelist=DEFAULT_WHITELIST):
    """Enumerate whitelisted paths of length <= 2 between universe entities."""
    active = [r for r in records
              if r.property in set(whitelist) and r.valid_from <= snapshot_date]
    link = set()
    for r in active:
        link.add((r.subject_entity, r.object_entity))
        link.add((r.object_entity, r.subject_entity))
    by_ticker = universe
    entities = list(universe.values())
    ticker_of = {e: t for t, e in universe.items()}
    edges = set()
    for ea in entities:
        for eb in entities:
            if ea >= eb:
                continue
            if (ea, eb) in link:
                edges.add(frozenset((ticker_of[ea], ticker_of[eb])))
                continue
            mids = {y for x, y in link if x == ea} & {y for x, y in link if x == eb}
            if mids - {ea, eb}:
                edges.add(frozenset((ticker_of[ea], ticker_of[eb])))
    return edges


def test_six_entity_fixture_matches_path_enumeration():
    universe = {"A": "E0", "B": "E1", "C": "E2"}
    records = [
        rec("E0", "P127", "E9"),       # A - x
        rec("E1", "P836", "E9"),       # B - x  => A~B second order
        rec("E0", "P355", "E1"),       # A - B direct (stays first order)
        rec("E2", "P1553", "E8"),      # C - y, no partner
        rec("E1", "IGNORED", "E2"),    # non-whitelisted, no edge
    ]
    g = build_graph(records, universe, D)
    got = {frozenset((a, b)) for (a, b), info in g.edge_meta.items()
           if info.order != "self"}
    assert got == _brute_force_edges(records, universe, D)
    assert g.edge_meta[("A", "B")].order == "first"
    assert g.ignored_records == 1
    assert "C" not in g.neighbors["A"]


entity_st = st.sampled_from([f"N{i}" for i in range(10)])
prop_st = st.sampled_from(list(DEFAULT_WHITELIST) + ["P999", "P000"])
record_st = st.builds(rec, entity_st, prop_st, entity_st)


@given(st.lists(record_st, max_size=25))
@settings(max_examples=150, deadline=None)
def test_random_records_symmetry_idempotence_and_closure(records):
    universe = {"T0": "N0", "T1": "N1", "T2": "N2", "T3": "N3"}
    g1 = build_graph(records, universe, D)
    g2 = build_graph(records, universe, D)
    # symmetry
    for a in g1.nodes:
        for b in g1.neighbors[a]:
            assert a in g1.neighbors[b]
    # idempotence
    assert g1.nodes == g2.nodes and g1.neighbors == g2.neighbors
    # second-order closure equals brute-force path enumeration
    got = {frozenset((a, b)) for (a, b), info in g1.edge_meta.items()
           if info.order != "self"}
    assert got == _brute_force_edges(records, universe, D)


def test_whitelisted_filtering_never_creates_edges():
    records = [rec("EA", "P999", "EB"), rec("EA", "Pxx", "EX"),
               rec("EB", "Pyy", "EX")]
    g = build_graph(records, {"A": "EA", "B": "EB"}, D)
    assert g.neighbors["A"] == {"A"}
    assert g.ignored_records == 3


def test_valid_from_after_snapshot_is_excluded():
    records = [rec("EA", "P127", "EB", valid=dt.date(2021, 6, 1))]
    g = build_graph(records, {"A": "EA", "B": "EB"}, dt.date(2021, 1, 1))
    assert "B" not in g.neighbors["A"]
    g2 = build_graph(records, {"A": "EA", "B": "EB"}, dt.date(2021, 6, 1))
    assert "B" in g2.neighbors["A"]


def test_duplicate_universe_mapping_is_config_error(tmp_path):
    path = tmp_path / "universe.csv"
    path.write_text("ticker,entity_id\nA,E1\nA,E2\n")
    with pytest.raises(GraphConfigError):
        load_universe(path)
    path.write_text("ticker,entity_id\nA,E1\nB,E1\n")
    with pytest.raises(GraphConfigError):
        load_universe(path)


def test_snapshot_selection():
    snaps = [build_graph([], {"A": "EA"}, dt.date(y, 1, 1))
             for y in (2019, 2020, 2021)]
    assert snapshot_for_date(snaps, dt.date(2019, 6, 1)).snapshot_date.year == 2019
    assert snapshot_for_date(snaps, dt.date(2020, 1, 1)).snapshot_date.year == 2020
    assert snapshot_for_date(snaps, dt.date(2021, 12, 31)).snapshot_date.year == 2021
    with pytest.raises(NoSnapshotError):
        snapshot_for_date(snaps, dt.date(2018, 12, 31))


def test_adjacency_matrix_for_symbol_subset():
    g = build_graph([rec("EA", "P127", "EB")],
                    {"A": "EA", "B": "EB", "C": "EC"}, D)
    adj = g.adjacency_matrix(["B", "C", "A"])
    assert adj.diagonal().all()
    assert adj[0, 2] and adj[2, 0]          # A ~ B
    assert not adj[1, 0] and not adj[1, 2]  # C isolated


def test_csv_round_trip_and_export(tmp_path):
    relations = [("EA", "P127", "EB", dt.date(2019, 3, 1))]
    universe = {"A": "EA", "B": "EB"}
    write_relations_csv(tmp_path / "rel.csv", relations)
    write_universe_csv(tmp_path / "uni.csv", universe)
    records = load_relations(tmp_path / "rel.csv")
    assert records == [rec("EA", "P127", "EB", valid=dt.date(2019, 3, 1))]
    assert load_universe(tmp_path / "uni.csv") == universe
    g = build_graph(records, universe, D)
    g.export(tmp_path / "graph.txt")
    text = (tmp_path / "graph.txt").read_text()
    assert "A: B[first/P127]" in text
