"""Conditioning graphs for the two GNN modules.

The box-layout graph connects one salient-region node with every layout
element node (complete graph on N+1 nodes). The image-layout graph joins a
4-neighborhood patch grid, patch-to-element edges, and a complete element
subgraph. Element counts are the padded maximum; padding elements take part
in the graphs and are masked downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KIND_SALBOX = "salbox"
KIND_ELEMENT = "element"
KIND_PATCH = "patch"


@dataclass(frozen=True)
class LayoutGraph:
    """Undirected graph with node-kind tags and dense indices."""

    num_nodes: int
    node_kind: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    adjacency: tuple[tuple[int, ...], ...] = field(repr=False)

    def __post_init__(self):
        if len(self.node_kind) != self.num_nodes:
            raise ValueError("node_kind length must equal num_nodes")
        seen = set()
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            if not (0 <= a < b < self.num_nodes):
                raise ValueError(f"edge ({a},{b}) not a sorted pair of valid indices")
            if (a, b) in seen:
                raise ValueError(f"duplicate edge ({a},{b})")
            seen.add((a, b))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def element_indices(self) -> list[int]:
        return [i for i, k in enumerate(self.node_kind) if k == KIND_ELEMENT]

    def directed_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Each undirected edge as two directed messages, sorted by receiver.

        Returns (src, dst) index arrays; sorted dst enables segment-sum
        aggregation without a per-call sort.
        """
        if not self.edges:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        e = np.asarray(self.edges, dtype=np.int64)
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.argsort(dst, kind="stable")
        return src[order], dst[order]


def _finish(num_nodes: int, kinds: list[str], edge_set: list[tuple[int, int]]) -> LayoutGraph:
    edges = sorted(edge_set)
    adj: list[list[int]] = [[] for _ in range(num_nodes)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    return LayoutGraph(
        num_nodes=num_nodes,
        node_kind=tuple(kinds),
        edges=tuple(edges),
        adjacency=tuple(tuple(sorted(n)) for n in adj),
    )


def build_blm_graph(n_elements: int) -> LayoutGraph:
    """Complete graph on one salbox node (index 0) plus n element nodes."""
    if n_elements < 0:
        raise ValueError("n_elements must be >= 0")
    n = n_elements + 1
    kinds = [KIND_SALBOX] + [KIND_ELEMENT] * n_elements
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return _finish(n, kinds, edges)


def build_ilm_graph(grid_rows: int, grid_cols: int, n_elements: int) -> LayoutGraph:
    """Patch grid nodes (row-major, first) plus element nodes.

    Edges: 4-neighborhood within the grid, every patch to every element,
    and all element pairs.
    """
    if grid_rows < 1 or grid_cols < 1:
        raise ValueError("grid must be at least 1x1")
    if n_elements < 0:
        raise ValueError("n_elements must be >= 0")
    m = grid_rows * grid_cols
    kinds = [KIND_PATCH] * m + [KIND_ELEMENT] * n_elements
    edges: list[tuple[int, int]] = []
    for r in range(grid_rows):
        for c in range(grid_cols):
            i = r * grid_cols + c
            if c + 1 < grid_cols:
                edges.append((i, i + 1))
            if r + 1 < grid_rows:
                edges.append((i, i + grid_cols))
    for p in range(m):
        for e in range(n_elements):
            edges.append((p, m + e))
    for a in range(n_elements):
        for b in range(a + 1, n_elements):
            edges.append((m + a, m + b))
    return _finish(m + n_elements, kinds, edges)


def ilm_edge_count(grid_rows: int, grid_cols: int, n_elements: int) -> int:
    """Closed-form edge count of the image-layout graph."""
    grid = grid_rows * (grid_cols - 1) + grid_cols * (grid_rows - 1)
    cross = grid_rows * grid_cols * n_elements
    elem = n_elements * (n_elements - 1) // 2
    return grid + cross + elem
