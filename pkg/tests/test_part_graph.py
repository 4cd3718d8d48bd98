import numpy as np
import pytest
from hypothesis import given

from conftest import cube_surface, seeds
from pwralign.errors import DisconnectedGraph, EmptyPart
from pwralign.geometry import PointCloud, RigidTransform, compose, median_nn_spacing
from pwralign.part_graph import (
    anchor_tree,
    build_graph,
    descendants,
    joint_intact,
    junction_gap,
    larger_neighbor,
    part_order,
)


def two_cubes(gap=0.0, n=1500, seed=0):
    rng = np.random.default_rng(seed)
    a = cube_surface(n, rng)
    b = cube_surface(n, rng, origin=(1.0 + gap, 0, 0))
    labels = np.repeat([0, 1], n)
    return PointCloud(np.vstack([a, b])), labels


def chain(sizes, seed=0, spacing=1.0):
    """Parts laid out as touching unit-cube shells along x, one per size."""
    rng = np.random.default_rng(seed)
    pts = [cube_surface(n, rng, origin=(i * spacing, 0, 0)) for i, n in enumerate(sizes)]
    labels = np.concatenate([np.full(n, i) for i, n in enumerate(sizes)])
    return PointCloud(np.vstack(pts)), labels


class TestBuildGraph:
    def test_two_cubes_sharing_a_face(self):
        cloud, labels = two_cubes()
        g = build_graph(cloud, labels)
        assert len(g.parts) == 2 and len(g.edges) == 1
        j = g.edges[0]
        delta = g.adjacency_delta
        pts = cloud.points
        for p, q in ((0, 1), (1, 0)):
            mine, other = np.flatnonzero(labels == p), np.flatnonzero(labels == q)
            d = np.linalg.norm(pts[mine][:, None] - pts[other][None], axis=2).min(axis=1)
            assert j.anchors_of(p).tolist() == mine[d <= delta].tolist()
            # anchors hug the shared face at x = 1
            assert np.all(np.abs(pts[j.anchors_of(p), 0] - 1.0) <= delta)

    def test_default_delta(self):
        cloud, labels = two_cubes()
        assert build_graph(cloud, labels).adjacency_delta == pytest.approx(2 * median_nn_spacing(cloud))

    def test_single_part(self):
        cloud = PointCloud(cube_surface(200, np.random.default_rng(0)))
        g = build_graph(cloud, np.zeros(200, dtype=int))
        assert len(g.parts) == 1 and g.edges == [] and part_order(g) == [0]

    def test_disconnected(self):
        cloud, labels = two_cubes()
        delta = build_graph(cloud, labels).adjacency_delta
        far, labels = two_cubes(gap=10 * delta)
        with pytest.raises(DisconnectedGraph):
            build_graph(far, labels, delta)

    def test_missing_label_is_empty_part(self):
        cloud, labels = two_cubes()
        labels = np.where(labels == 1, 2, 0)
        with pytest.raises(EmptyPart):
            build_graph(cloud, labels)

    def test_label_length_mismatch(self):
        cloud, labels = two_cubes()
        with pytest.raises(ValueError):
            build_graph(cloud, labels[:-1])

    def test_deterministic(self):
        cloud, labels = two_cubes(seed=3)
        a, b = build_graph(cloud, labels), build_graph(cloud, labels)
        assert a.adjacency_delta == b.adjacency_delta
        for ja, jb in zip(a.edges, b.edges):
            assert np.array_equal(ja.anchor_ids_a, jb.anchor_ids_a)
            assert np.array_equal(ja.anchor_ids_b, jb.anchor_ids_b)

    def test_edges_symmetric(self):
        cloud, labels = chain([300, 200, 100])
        g = build_graph(cloud, labels, delta=0.2)
        for j in g.edges:
            assert j.part_b in g.neighbors(j.part_a) and j.part_a in g.neighbors(j.part_b)
            assert g.junction(j.part_a, j.part_b) is g.junction(j.part_b, j.part_a)


class TestOrder:
    def test_decreasing_size(self):
        cloud, labels = chain([100, 300, 200])
        assert part_order(build_graph(cloud, labels, 0.2)) == [1, 2, 0]

    def test_tie_by_id(self):
        cloud, labels = chain([100, 100])
        assert part_order(build_graph(cloud, labels, 0.2)) == [0, 1]

    @given(seeds)
    def test_is_permutation_with_non_increasing_sizes(self, seed):
        rng = np.random.default_rng(seed)
        sizes = rng.integers(60, 200, size=int(rng.integers(1, 5))).tolist()
        cloud, labels = chain(sizes, seed)
        g = build_graph(cloud, labels, 0.25)
        order = part_order(g)
        assert sorted(order) == list(range(len(sizes)))
        s = [g.parts[p].size for p in order]
        assert s == sorted(s, reverse=True)


class TestLargerNeighbor:
    def setup_method(self):
        cloud, labels = chain([300, 200, 100])
        self.g = build_graph(cloud, labels, 0.2)

    def test_chain(self):
        assert larger_neighbor(self.g, 2) == 1
        assert larger_neighbor(self.g, 1) == 0
        assert larger_neighbor(self.g, 0) is None

    def test_middle_with_two_neighbors(self):
        cloud, labels = chain([200, 300, 100])
        g = build_graph(cloud, labels, 0.2)
        # part 1 is the largest: it has no larger neighbour
        assert larger_neighbor(g, 1) is None
        assert larger_neighbor(g, 0) == 1 and larger_neighbor(g, 2) == 1

    def test_equal_size_prefers_lower_id(self):
        cloud, labels = chain([150, 150])
        g = build_graph(cloud, labels, 0.2)
        assert larger_neighbor(g, 1) == 0
        assert larger_neighbor(g, 0) is None

    def test_tree_and_descendants(self):
        tree = anchor_tree(self.g)
        assert tree == {0: [1], 1: [2], 2: []}
        assert descendants(tree, 0) == [1, 2]
        assert descendants(tree, 2) == []


class TestJointIntact:
    def setup_method(self):
        self.cloud, labels = two_cubes()
        self.g = build_graph(self.cloud, labels)
        self.tau = 3 * self.g.adjacency_delta
        self.ident = RigidTransform.identity()

    def test_current_placement(self):
        assert joint_intact(self.g, self.cloud, 1, self.ident, {0: self.ident}, self.tau)

    def test_default_placement(self):
        assert joint_intact(self.g, self.cloud, 1, self.ident, {}, self.tau, default=self.ident)

    def test_detached(self):
        away = RigidTransform.from_translation([10 * self.tau, 0, 0])
        assert not joint_intact(self.g, self.cloud, 1, away, {0: self.ident}, self.tau)

    def test_small_rotation_about_junction_centroid(self):
        j = self.g.edges[0]
        anchors = self.cloud.points[j.anchors_of(1)]
        c = anchors.mean(axis=0)
        radius = np.linalg.norm(anchors - c, axis=1).max()
        # displacement of every anchor is at most angle * radius
        angle = 0.5 * self.tau / radius
        rot = RigidTransform.from_axis_angle([1, 0, 0], angle, about=c)
        assert joint_intact(self.g, self.cloud, 1, rot, {0: self.ident}, self.tau)

    def test_rigid_motion_of_everything_is_intact(self):
        t = compose(RigidTransform.from_axis_angle([1, 1, 0], 0.7), RigidTransform.from_translation([3, 0, 1]))
        assert joint_intact(self.g, self.cloud, 1, t, {0: t}, self.tau)

    def test_gap_is_symmetric(self):
        t = RigidTransform.from_translation([0.05, 0.02, 0])
        a = junction_gap(self.g, self.cloud, 0, self.ident, 1, t)
        b = junction_gap(self.g, self.cloud, 1, t, 0, self.ident)
        assert a == b

    @given(seeds)
    def test_fresh_graph_is_intact(self, seed):
        sizes = list(np.random.default_rng(seed).integers(80, 200, size=3))
        cloud, labels = chain(sizes, seed)
        g = build_graph(cloud, labels, 0.2)
        ident = RigidTransform.identity()
        for p in range(3):
            assert joint_intact(g, cloud, p, ident, {}, 3 * g.adjacency_delta, default=ident)
