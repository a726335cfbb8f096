"""Window graphs: one graph per recording.

Nodes are windows carrying their feature vectors. Edges combine a temporal
chain over consecutive windows with k-nearest-neighbor links among the
rest, so both adjacency in time and similarity in feature space are
represented. Raw cosine similarity c in [-1, 1] is mapped affinely to a
weight w = (1 + c) / 2 in [0, 1]; clamping at zero would erase ordering
among dissimilar pairs.

Edges are stored once with i < j; the graph is undirected throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfigValue, ShapeMismatch, TooFewWindows, ZeroVector
from .features import WindowFeatures
from .simulate import FaultSpec

TYPE_CLASSES = ("eccentricity", "bar_breakage", "bearing")

# FaultSpec.kind -> classification target; healthy recordings have none.
KIND_TO_CLASS = {
    "eccentricity": "eccentricity",
    "broken_bars": "bar_breakage",
    "bearing": "bearing",
}

DEFAULT_NEIGHBORS = 4


@dataclass(frozen=True)
class NodeTargets:
    """Ground truth broadcast to every node of a recording's graph."""

    anomaly: int
    severity: float
    fault_type: str | None

    def __post_init__(self):
        if self.anomaly not in (0, 1):
            raise InvalidConfigValue(f"anomaly flag must be 0 or 1, got {self.anomaly}")
        if self.fault_type is not None and self.fault_type not in TYPE_CLASSES:
            raise InvalidConfigValue(f"unknown fault type {self.fault_type!r}")


@dataclass
class SignalGraph:
    """Undirected weighted graph over one recording's windows.

    edges holds unique (i, j, weight) triples with i < j; weights always
    lie in [0, 1]. Self-loops are never stored here; the model adds them
    during aggregation.
    """

    nodes: list[WindowFeatures]
    edges: list[tuple[int, int, float]]
    node_targets: list[NodeTargets]
    feature_names: list[str] = field(default_factory=list)
    source: str = ""

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def feature_matrix(self) -> np.ndarray:
        return np.stack([node.x for node in self.nodes])

    def degrees(self) -> np.ndarray:
        """Unweighted degree per node, self-loops excluded."""
        deg = np.zeros(self.n_nodes, dtype=int)
        for i, j, _ in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg


def fault_targets(label: FaultSpec) -> NodeTargets:
    """Node-level ground truth for a recording-level label."""
    if label.kind == "healthy":
        return NodeTargets(anomaly=0, severity=0.0, fault_type=None)
    return NodeTargets(anomaly=1, severity=label.severity, fault_type=KIND_TO_CLASS[label.kind])


def cosine_similarity(x, y) -> float:
    """Inner product over the product of norms, clamped into [-1, 1].

    Raises:
        ZeroVector: If either vector's norm is at most 1e-12.
        ShapeMismatch: If dimensions differ.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ShapeMismatch(f"vectors differ in shape: {x.shape} vs {y.shape}")
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(y))
    if nx <= 1e-12 or ny <= 1e-12:
        raise ZeroVector("cosine similarity is undefined for near-zero vectors")
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def edge_weight(x, y) -> float:
    """Cosine mapped into [0, 1]: w = (1 + c) / 2."""
    return (1.0 + cosine_similarity(x, y)) / 2.0


def build_graph(
    windows: list[WindowFeatures],
    label: FaultSpec,
    k: int = DEFAULT_NEIGHBORS,
    feature_names: list[str] | None = None,
) -> SignalGraph:
    """Connect windows by a temporal chain plus k-nearest-neighbor links.

    Every consecutive pair (i, i+1) is connected. Each node additionally
    proposes links to its k most-similar nodes among the non-adjacent
    ones; proposals from either endpoint are kept (union), so degrees stay
    within 2 + 2k. All weights are (1 + cosine) / 2.

    Args:
        windows: At least two featurized windows in temporal order.
        label: Recording label; broadcast to all nodes as targets.
        k: Neighbor proposals per node, >= 0.
        feature_names: Optional column names stored on the graph.

    Returns:
        Connected undirected SignalGraph.

    Raises:
        TooFewWindows: If fewer than two windows are given.
    """
    n = len(windows)
    if n < 2:
        raise TooFewWindows(f"a graph needs at least 2 windows, got {n}")
    if k < 0:
        raise InvalidConfigValue(f"k must be >= 0, got {k}")

    # Pairwise cosine once; similarity ordering reuses it for kNN picks.
    cos = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            cos[i, j] = cos[j, i] = cosine_similarity(windows[i].x, windows[j].x)

    pairs: set[tuple[int, int]] = {(i, i + 1) for i in range(n - 1)}
    for i in range(n):
        candidates = [j for j in range(n) if j != i and abs(j - i) > 1]
        # Descending similarity, index ascending on ties.
        candidates.sort(key=lambda j: (-cos[i, j], j))
        for j in candidates[:k]:
            pairs.add((min(i, j), max(i, j)))

    edges = [(i, j, (1.0 + cos[i, j]) / 2.0) for i, j in sorted(pairs)]
    targets = fault_targets(label)
    return SignalGraph(
        nodes=list(windows),
        edges=edges,
        node_targets=[targets] * n,
        feature_names=list(feature_names or []),
        source=windows[0].source,
    )


def graph_stats(graph: SignalGraph) -> dict:
    """Deterministic summary: counts, degree range, weight histogram."""
    weights = np.array([w for _, _, w in graph.edges], dtype=float)
    hist, _ = np.histogram(weights, bins=10, range=(0.0, 1.0)) if weights.size else (np.zeros(10, dtype=int), None)
    deg = graph.degrees()
    return {
        "nodes": graph.n_nodes,
        "edges": len(graph.edges),
        "degree_min": int(deg.min()) if graph.n_nodes else 0,
        "degree_max": int(deg.max()) if graph.n_nodes else 0,
        "weight_histogram": [int(c) for c in hist],
    }


def graph_to_json(graph: SignalGraph) -> dict:
    return {
        "source": graph.source,
        "feature_names": graph.feature_names,
        "nodes": [
            {"x": [float(v) for v in node.x], "window_index": node.window_index, "source": node.source}
            for node in graph.nodes
        ],
        "edges": [[i, j, float(w)] for i, j, w in graph.edges],
        "targets": [
            {"anomaly": t.anomaly, "severity": t.severity, "fault_type": t.fault_type}
            for t in graph.node_targets
        ],
    }


def graph_from_json(blob: dict) -> SignalGraph:
    return SignalGraph(
        nodes=[
            WindowFeatures(
                x=np.array(node["x"], dtype=float),
                window_index=node["window_index"],
                source=node["source"],
            )
            for node in blob["nodes"]
        ],
        edges=[(int(i), int(j), float(w)) for i, j, w in blob["edges"]],
        node_targets=[
            NodeTargets(anomaly=t["anomaly"], severity=t["severity"], fault_type=t["fault_type"])
            for t in blob["targets"]
        ],
        feature_names=list(blob["feature_names"]),
        source=blob["source"],
    )


def save_graphs(graphs: list[SignalGraph], path: str | Path) -> None:
    """Write a list of graphs to one JSON file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump([graph_to_json(g) for g in graphs], fh)
        fh.write("\n")


def load_graphs(path: str | Path) -> list[SignalGraph]:
    with open(path) as fh:
        return [graph_from_json(blob) for blob in json.load(fh)]
