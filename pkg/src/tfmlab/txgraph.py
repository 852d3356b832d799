"""Undirected multigraph of sanctioned transactions.

A transaction joins the graph when its sender or receiver is on the sanction
list; the edge connects the two endpoint addresses and keeps the transaction
hash as a label.  Repeated address pairs stay as parallel edges so edge counts
match transaction counts, and self-transfers are self-loops.  An era filter
("pre"/"post" a cutoff block) restricts by block number.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import networkx as nx

from .errors import InputError
from .ingest import TxRecord
from .metrics import MERGE_CUTOFF_BLOCK


@dataclass(frozen=True)
class GraphEdge:
    from_address: str
    to_address: str
    hash: str
    block_number: int


@dataclass
class TxGraph:
    era: str  # "pre", "post" or "combined"
    cutoff: int
    nodes: frozenset[str]
    edges: tuple[GraphEdge, ...]

    def to_networkx(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        g.add_nodes_from(self.nodes)
        for e in self.edges:
            g.add_edge(e.from_address, e.to_address, hash=e.hash)
        return g


def build_graph(txs: Sequence[TxRecord], sanctions: Iterable[str],
                era: str = "combined",
                cutoff: int = MERGE_CUTOFF_BLOCK) -> TxGraph:
    """Graph of the transactions touching a sanctioned address in the era."""
    if era not in ("pre", "post", "combined"):
        raise InputError(f"era must be pre/post/combined, got {era!r}")
    sanction_set = frozenset(a.lower() for a in sanctions)
    nodes: set[str] = set()
    edges = []
    for t in txs:
        if era == "pre" and t.block_number >= cutoff:
            continue
        if era == "post" and t.block_number < cutoff:
            continue
        if t.from_address in sanction_set or t.to_address in sanction_set:
            nodes.add(t.from_address)
            nodes.add(t.to_address)
            edges.append(GraphEdge(t.from_address, t.to_address, t.hash,
                                   t.block_number))
    return TxGraph(era=era, cutoff=cutoff, nodes=frozenset(nodes),
                   edges=tuple(edges))


def graph_summary(g: TxGraph) -> dict:
    """Node/edge counts, degree histogram, components, top-degree addresses."""
    nxg = g.to_networkx()
    degrees = dict(nxg.degree())  # self-loops count twice
    hist = Counter(degrees.values())
    top = sorted(degrees.items(), key=lambda kv: (-kv[1], kv[0]))[:10]
    return {
        "era": g.era,
        "nodes": nxg.number_of_nodes(),
        "edges": nxg.number_of_edges(),
        "self_loops": sum(1 for e in g.edges if e.from_address == e.to_address),
        "connected_components": nx.number_connected_components(nxg) if nxg else 0,
        "degree_histogram": {str(k): v for k, v in sorted(hist.items())},
        "top_degree_nodes": [{"address": a, "degree": d} for a, d in top],
    }


def flow_table(g: TxGraph) -> list[tuple[str, str, int]]:
    """Sender -> receiver transaction counts, for bipartite flow views."""
    counts = Counter((e.from_address, e.to_address) for e in g.edges)
    return [(a, b, n) for (a, b), n in sorted(counts.items())]


def write_edge_list(g: TxGraph, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["from", "to", "hash", "era"])
        for e in g.edges:
            w.writerow([e.from_address, e.to_address, e.hash, g.era])


def write_flow_table(g: TxGraph, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["from", "to", "tx_count"])
        for a, b, n in flow_table(g):
            w.writerow([a, b, n])


def write_summary(g: TxGraph, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(graph_summary(g), fh, indent=2)
        fh.write("\n")
