"""Graph-dataset accounting: edge totals, simple/complex splits, subsampling, FLOPs.

Only per-graph counts are consumed (a manifest); raw graph files are never read.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import AllZeroEdges, ClassTooSmall, ValidationError


@dataclass(frozen=True)
class GraphRecord:
    graph_id: str
    class_label: str
    num_nodes: int
    num_edges: int

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValidationError(f"graph {self.graph_id!r}: num_nodes must be >= 1")
        if self.num_edges < 0:
            raise ValidationError(f"graph {self.graph_id!r}: num_edges must be >= 0")


@dataclass(frozen=True)
class GraphManifest:
    records: tuple[GraphRecord, ...] = ()
    source_name: str = ""

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        seen = set()
        for rec in records:
            if rec.graph_id in seen:
                raise ValidationError(f"duplicate graph_id {rec.graph_id!r} in manifest")
            seen.add(rec.graph_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __add__(self, other: "GraphManifest") -> "GraphManifest":
        name = "+".join(n for n in (self.source_name, other.source_name) if n)
        return GraphManifest(self.records + other.records, name)

    @property
    def total_graphs(self) -> int:
        return len(self.records)

    @property
    def total_edges(self) -> int:
        return total_edges(self)

    @property
    def total_nodes(self) -> int:
        return sum(r.num_nodes for r in self.records)

    def by_class(self) -> dict[str, list[GraphRecord]]:
        """Records grouped by class, classes in order of first appearance."""
        groups: dict[str, list[GraphRecord]] = {}
        for rec in self.records:
            groups.setdefault(rec.class_label, []).append(rec)
        return groups


def total_edges(manifest: GraphManifest) -> int:
    return sum(r.num_edges for r in manifest.records)


@dataclass(frozen=True)
class SplitResult:
    mode: str
    simple: tuple[str, ...]
    complex: tuple[str, ...]
    simple_edges: int
    complex_edges: int
    simple_graphs: int
    complex_graphs: int
    per_class_cuts: dict[str, int] = field(default_factory=dict)


def _sorted_classes(manifest: GraphManifest) -> dict[str, list[GraphRecord]]:
    groups = manifest.by_class()
    for label, recs in groups.items():
        if len(recs) < 2:
            raise ClassTooSmall(label, len(recs))
        # sorted() is stable, so equal edge counts keep manifest order
        groups[label] = sorted(recs, key=lambda r: r.num_edges)
    return groups


def _assemble(mode: str, groups: dict[str, list[GraphRecord]], cuts: dict[str, int]) -> SplitResult:
    simple: list[GraphRecord] = []
    complex_: list[GraphRecord] = []
    for label, recs in groups.items():
        m = cuts[label]
        simple.extend(recs[:m])
        complex_.extend(recs[m:])
    return SplitResult(
        mode=mode,
        simple=tuple(r.graph_id for r in simple),
        complex=tuple(r.graph_id for r in complex_),
        simple_edges=sum(r.num_edges for r in simple),
        complex_edges=sum(r.num_edges for r in complex_),
        simple_graphs=len(simple),
        complex_graphs=len(complex_),
        per_class_cuts=dict(cuts),
    )


def split_equal_graphs(manifest: GraphManifest) -> SplitResult:
    """Per class, the floor(k/2) graphs with fewest edges are "simple", the rest "complex".

    Both halves hold (nearly) the same number of graphs, while the complex half
    carries at least as many edges.
    """
    groups = _sorted_classes(manifest)
    cuts = {label: len(recs) // 2 for label, recs in groups.items()}
    return _assemble("equal-graphs", groups, cuts)


def best_edge_cut(edges: Sequence[int]) -> int:
    """Cut index m in [1, k-1] minimising |sum(edges[:m]) - sum(edges[m:])|; ties to smaller m."""
    total = sum(edges)
    best_m, best_gap = 1, None
    prefix = 0
    for m in range(1, len(edges)):
        prefix += edges[m - 1]
        gap = abs(2 * prefix - total)
        if best_gap is None or gap < best_gap:
            best_m, best_gap = m, gap
    return best_m


def split_equal_edges(manifest: GraphManifest) -> SplitResult:
    """Per class, cut the ascending edge list where the two sides' edge totals are closest.

    Exact equality is usually impossible with integer counts, so the cut with
    the smallest absolute difference is taken (smaller m on ties). When every
    graph in a class has at least one edge and the counts are not all equal,
    the simple side holds at least as many graphs as the complex side.
    """
    groups = _sorted_classes(manifest)
    cuts = {}
    for label, recs in groups.items():
        edges = [r.num_edges for r in recs]
        if sum(edges) == 0:
            raise AllZeroEdges(label)
        cuts[label] = best_edge_cut(edges)
    return _assemble("equal-edges", groups, cuts)


def _subset_size(ratio: float, n: int) -> int:
    # round away float noise such as 0.1 * 30 = 3.0000000000000004
    return math.ceil(round(ratio * n, 9))


def fisher_yates(n: int, rng: np.random.Generator) -> list[int]:
    """Uniform random permutation of range(n), drawing j in [0, i] for i = n-1..1."""
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def subsample_fraction(manifest: GraphManifest, ratio: float, seed: int = 0) -> GraphManifest:
    """Uniformly random ceil(ratio * n) graphs, kept in manifest order.

    Class balance is not preserved; every graph is equally likely.
    """
    if not 0 < ratio <= 1:
        raise ValidationError(f"ratio must lie in (0, 1], got {ratio!r}")
    n = len(manifest)
    if ratio == 1:
        return manifest
    k = _subset_size(ratio, n)
    order = fisher_yates(n, np.random.default_rng(seed))
    chosen = sorted(order[:k])
    name = f"{manifest.source_name}[ratio={ratio!r},seed={seed}]"
    return GraphManifest(tuple(manifest.records[i] for i in chosen), name)


@dataclass(frozen=True)
class MessagePassingCost:
    """Add-multiply counts for one message-passing layer.

    ``ops_per_message`` (y) is the cost of one message function call,
    ``ops_per_update`` (x) the cost of one node update.
    """

    ops_per_message: int
    ops_per_update: int = 0
    layers: int = 1

    def __post_init__(self):
        if self.ops_per_message < 1:
            raise ValidationError("ops_per_message must be >= 1")
        if self.ops_per_update < 0:
            raise ValidationError("ops_per_update must be >= 0")
        if self.layers < 1:
            raise ValidationError("layers must be >= 1")


FLOPS_MODES = ("exact", "paper_approx")
EDGE_CONVENTIONS = ("undirected", "directed")


def flops_forward(
    total_edges: int,
    total_nodes: int,
    cost: MessagePassingCost,
    mode: str = "exact",
    edge_convention: str = "undirected",
) -> int:
    """Add-multiply operations for one forward pass over a whole dataset.

    Node i costs ``x + y * d_i`` per layer. With each undirected edge counted
    once the degrees sum to ``2E``, so exact mode gives ``L * (N*x + 2*y*E)``
    and ``paper_approx`` drops the node-update term: ``2*y*E*L``. For a
    directed edge count every edge delivers one message and the factor 2
    becomes 1.
    """
    mode = mode.replace("-", "_")
    if mode not in FLOPS_MODES:
        raise ValidationError(f"mode must be one of {FLOPS_MODES}, got {mode!r}")
    if edge_convention not in EDGE_CONVENTIONS:
        raise ValidationError(f"edge_convention must be one of {EDGE_CONVENTIONS}")
    if total_edges < 0:
        raise ValidationError("total_edges must be >= 0")
    if total_nodes < 1:
        raise ValidationError("total_nodes must be >= 1")
    per_edge = 2 if edge_convention == "undirected" else 1
    messages = per_edge * cost.ops_per_message * total_edges
    if mode == "paper_approx":
        return messages * cost.layers
    return cost.layers * (total_nodes * cost.ops_per_update + messages)


def manifest_flops(manifest: GraphManifest, cost: MessagePassingCost, mode: str = "exact", edge_convention: str = "undirected") -> int:
    return flops_forward(manifest.total_edges, manifest.total_nodes, cost, mode, edge_convention)


def concat(manifests: Iterable[GraphManifest], source_name: Optional[str] = None) -> GraphManifest:
    records: tuple[GraphRecord, ...] = ()
    names = []
    for m in manifests:
        records += m.records
        if m.source_name:
            names.append(m.source_name)
    return GraphManifest(records, source_name if source_name is not None else "+".join(names))
