"""Part-whole adjacency graph of the source object."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedGraph, EmptyPart
from .geometry import PointCloud, RigidTransform, SpatialIndex, median_nn_spacing


@dataclass(frozen=True)
class Part:
    id: int
    point_ids: np.ndarray

    @property
    def size(self) -> int:
        return len(self.point_ids)


@dataclass(frozen=True)
class Junction:
    """Contact between two parts; ``part_a < part_b``."""

    part_a: int
    part_b: int
    anchor_ids_a: np.ndarray
    anchor_ids_b: np.ndarray

    def anchors_of(self, p: int) -> np.ndarray:
        if p == self.part_a:
            return self.anchor_ids_a
        if p == self.part_b:
            return self.anchor_ids_b
        raise KeyError(p)

    def other(self, p: int) -> int:
        return self.part_b if p == self.part_a else self.part_a


@dataclass(frozen=True)
class PartGraph:
    parts: list[Part]
    edges: list[Junction]
    adjacency_delta: float
    _adj: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        adj: dict[int, dict[int, Junction]] = {p.id: {} for p in self.parts}
        for j in self.edges:
            adj[j.part_a][j.part_b] = j
            adj[j.part_b][j.part_a] = j
        object.__setattr__(self, "_adj", adj)

    def __len__(self) -> int:
        return len(self.parts)

    def part(self, p: int) -> Part:
        return self.parts[p]

    def neighbors(self, p: int) -> list[int]:
        return sorted(self._adj[p])

    def junction(self, a: int, b: int) -> Junction:
        return self._adj[a][b]

    def junctions_of(self, p: int) -> list[Junction]:
        return [self._adj[p][q] for q in self.neighbors(p)]


def build_graph(source: PointCloud, labels, delta: float | None = None) -> PartGraph:
    """Build the adjacency graph of labelled parts.

    Two parts are adjacent when some point of one lies within ``delta`` of
    some point of the other; the points doing so become the junction anchors.
    ``delta`` defaults to twice the median nearest-neighbour spacing.
    """
    labels = np.asarray(labels)
    if labels.shape != (len(source),):
        raise ValueError("labels must give one part id per source point")
    if len(labels) == 0:
        raise EmptyPart("source cloud has no points")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
    if labels.min() < 0:
        raise ValueError("part ids must be non-negative")
    k = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=k)
    missing = np.flatnonzero(counts == 0)
    if len(missing):
        raise EmptyPart(f"part {int(missing[0])} has no points")

    if delta is None:
        delta = 2.0 * median_nn_spacing(source) if len(source) > 1 else 0.0
    delta = float(delta)

    parts = []
    for p in range(k):
        ids = np.flatnonzero(labels == p)
        ids.setflags(write=False)
        parts.append(Part(p, ids))

    pts = source.points
    indices = [SpatialIndex(pts[part.point_ids]) for part in parts]
    near: dict[tuple[int, int], np.ndarray] = {}
    for a in range(k):
        for b in range(k):
            if a == b:
                continue
            _, d = indices[b].nearest_batch(pts[parts[a].point_ids])
            near[a, b] = parts[a].point_ids[d <= delta]

    edges = []
    for a in range(k):
        for b in range(a + 1, k):
            ia, ib = near[a, b], near[b, a]
            if len(ia) and len(ib):
                ia.setflags(write=False)
                ib.setflags(write=False)
                edges.append(Junction(a, b, ia, ib))

    graph = PartGraph(parts, edges, delta)
    _check_connected(graph)
    return graph


def _check_connected(g: PartGraph) -> None:
    seen = {0}
    todo = deque([0])
    while todo:
        p = todo.popleft()
        for q in g.neighbors(p):
            if q not in seen:
                seen.add(q)
                todo.append(q)
    if len(seen) != len(g.parts):
        lost = sorted(set(range(len(g.parts))) - seen)
        raise DisconnectedGraph(f"parts {lost} are not connected to part 0")


def part_order(g: PartGraph) -> list[int]:
    """Part ids by decreasing size, ties by ascending id."""
    return sorted((p.id for p in g.parts), key=lambda p: (-g.parts[p].size, p))


def larger_neighbor(g: PartGraph, p: int) -> int | None:
    """Largest neighbour that precedes ``p`` in :func:`part_order`, if any.

    Equal-sized neighbours only count when their id is lower, so the anchor
    neighbour of a part has always been tuned before it.
    """
    key = (-g.parts[p].size, p)
    cands = [q for q in g.neighbors(p) if (-g.parts[q].size, q) < key]
    if not cands:
        return None
    return min(cands, key=lambda q: (-g.parts[q].size, q))


def anchor_tree(g: PartGraph) -> dict[int, list[int]]:
    """Children of each part in the forest linking parts to their larger neighbour."""
    kids: dict[int, list[int]] = {p.id: [] for p in g.parts}
    for p in g.parts:
        q = larger_neighbor(g, p.id)
        if q is not None:
            kids[q].append(p.id)
    return kids


def descendants(tree: dict[int, list[int]], p: int) -> list[int]:
    out, todo = [], list(tree[p])
    while todo:
        q = todo.pop()
        out.append(q)
        todo.extend(tree[q])
    return sorted(out)


def junction_gap(
    g: PartGraph,
    source: PointCloud,
    a: int,
    ta: RigidTransform,
    b: int,
    tb: RigidTransform,
) -> float:
    """Largest distance from a placed anchor of either part to the other placed part."""
    j = g.junction(a, b)
    pts = source.points
    gap = 0.0
    for p, tp, q, tq in ((a, ta, b, tb), (b, tb, a, ta)):
        anchors = tp.apply_points(pts[j.anchors_of(p)])
        index = SpatialIndex(tq.apply_points(pts[g.parts[q].point_ids]))
        _, d = index.nearest_batch(anchors)
        gap = max(gap, float(d.max()))
    return gap


def joint_intact(
    g: PartGraph,
    source: PointCloud,
    p: int,
    candidate: RigidTransform,
    placed: dict[int, RigidTransform],
    tau_joint: float,
    default: RigidTransform | None = None,
) -> bool:
    """True when placing ``p`` at ``candidate`` keeps every junction of ``p`` within ``tau_joint``.

    Neighbours missing from ``placed`` sit at ``default`` (the global fit).
    """
    for q in g.neighbors(p):
        tq = placed.get(q, default)
        if tq is None:
            raise KeyError(f"no placement for neighbour {q}")
        if junction_gap(g, source, p, candidate, q, tq) > tau_joint:
            return False
    return True
