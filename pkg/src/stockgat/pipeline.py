"""Wiring between ingestion, graph snapshots, and model-ready day sections."""

from __future__ import annotations

import datetime as dt
import hashlib

import numpy as np

from .market_data import IngestReport, build_windows, load_market_data, split_dataset
from .relation_graph import build_graph, snapshot_for_date


def load_sections(prices_path, sentiment_path, lookback: int = 5):
    """(days_by_symbol, split, ingest report) straight from the two CSVs."""
    days_by_symbol, report = load_market_data(prices_path, sentiment_path)
    windows = build_windows(days_by_symbol, lookback=lookback, report=report)
    split = split_dataset(windows)
    return days_by_symbol, split, report


def yearly_snapshots(records, universe, first: dt.date, last: dt.date):
    """One graph snapshot per January 1st covering [first, last]."""
    return [build_graph(records, universe, dt.date(year, 1, 1))
            for year in range(first.year, last.year + 1)]


def attach_adjacency(sections, snapshots=None) -> None:
    """Fill each section's boolean neighborhood mask in place.

    Without snapshots every stock gets a self-loop only (edge-free ablation).
    """
    for section in sections:
        n = len(section.symbols)
        if snapshots is None:
            section.adj = np.eye(n, dtype=bool)
        else:
            snap = snapshot_for_date(snapshots, section.date)
            section.adj = snap.adjacency_matrix(section.symbols)


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path, entries: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(entries):
            fh.write(f"{key}={entries[key]}\n")


def read_manifest(path) -> dict:
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and "=" in line:
                key, value = line.split("=", 1)
                entries[key] = value
    return entries
