"""Set algebra: affine transforms, intersection, gridding, volumes."""

import numpy as np
import pytest

from symreach.geom import (AffineMap, CellSet, ConvexPolytope, GeometryError,
                           Grid, HyperRect, Region, SingularMap,
                           UnboundedRegion, box, contains, fm_feasible,
                           intersect, occupied_cells, region_volume,
                           transform_region)


def unit_grid(n=2):
    return Grid(np.zeros(n), np.ones(n))


def rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


class TestTransformRegion:
    def test_identity(self):
        r = Region.from_boxes([box([1.0, 2.0], [2.0, 3.0])])
        out = transform_region(r, AffineMap.identity(2))
        bx = out.polys[0].as_box()
        assert np.allclose(bx.lo, [0.0, 0.5])
        assert np.allclose(bx.hi, [2.0, 3.5])

    def test_translation_centers_guard_box(self):
        # translating by the waypoint sends B(w2, eps1) to B(0, eps1)
        w2 = np.array([0.6, 3.6])
        r = Region.from_boxes([box(w2, [0.6, 1.0])])
        out = transform_region(r, AffineMap.translation(-w2))
        bx = out.polys[0].as_box()
        assert np.allclose(bx.lo, [-0.3, -0.5])
        assert np.allclose(bx.hi, [0.3, 0.5])

    def test_quarter_turn_preserves_unit_square(self):
        sq = Region.from_boxes([box([0.0, 0.0], [2.0, 2.0])])
        m = AffineMap(rot(np.pi / 2), np.zeros(2))
        out = transform_region(sq, m)
        bx = out.polys[0].as_box()
        assert bx is not None
        assert np.allclose(bx.lo, [-1, -1], atol=1e-12)
        assert np.allclose(bx.hi, [1, 1], atol=1e-12)

    def test_singular_map_rejected(self):
        r = Region.from_boxes([box([0, 0], [1, 1])])
        with pytest.raises(SingularMap):
            transform_region(r, AffineMap(np.zeros((2, 2)), np.zeros(2)))

    def test_round_trip_random_affine(self):
        # image followed by preimage recovers the set up to 1e-7
        rng = np.random.default_rng(3)
        for _ in range(20):
            A = rng.normal(size=(2, 2))
            while abs(np.linalg.det(A)) < 0.3:
                A = rng.normal(size=(2, 2))
            m = AffineMap(A, rng.normal(size=2))
            r = Region.from_boxes([box(rng.normal(size=2), [1.0, 1.5])])
            back = transform_region(transform_region(r, m), m.inverse())
            # compare H-representations on sampled points of the original
            pts = rng.uniform(-0.5, 0.5, size=(64, 2)) * [1.0, 1.5] \
                + r.polys[0].bounding_box().center
            for p in pts:
                assert back.contains_point(p, tol=1e-7) == \
                    r.contains_point(p, tol=1e-7)

    def test_volume_preserved_by_rigid_maps(self):
        r = Region.from_boxes([box([2.0, -1.0], [1.0, 1.4])])
        m = AffineMap(rot(np.pi / 2), np.array([3.0, 4.0]))
        out = transform_region(r, m)
        vol = region_volume(Region.from_boxes([out.polys[0].as_box()]))
        assert abs(vol - 1.4) < 1e-6 * 1.4


class TestIntersect:
    def test_disjoint_boxes_empty(self):
        a = Region.from_boxes([box([0, 0], [1, 1])])
        b = Region.from_boxes([box([10, 10], [1, 1])])
        assert intersect(a, b).is_empty

    def test_closed_form_overlap(self):
        a = Region.from_boxes([HyperRect(np.zeros(2), 2 * np.ones(2))])
        b = Region.from_boxes([HyperRect(np.ones(2), 3 * np.ones(2))])
        out = intersect(a, b)
        bx = out.polys[0].as_box()
        assert np.allclose(bx.lo, [1, 1]) and np.allclose(bx.hi, [2, 2])

    def test_universal_member_is_identity(self):
        a = Region.from_boxes([box([0, 0], [2, 2])])
        univ = Region((ConvexPolytope(np.zeros((0, 2)), np.zeros(0)),), 2)
        out = intersect(a, univ)
        bx = out.polys[0].as_box()
        assert np.allclose(bx.lo, [-1, -1]) and np.allclose(bx.hi, [1, 1])

    def test_commutative_and_idempotent(self):
        a = Region.from_boxes([box([0, 0], [2, 2]), box([5, 5], [2, 2])])
        b = Region.from_boxes([box([0.5, 0.5], [2, 2])])
        ab = intersect(a, b)
        ba = intersect(b, a)
        assert len(ab.polys) == len(ba.polys)
        for p, q in zip(ab.polys, ba.polys):
            assert p.bounding_box().contains_point(q.bounding_box().center)
        aa = intersect(a, a)
        for p in a.polys:
            c = p.bounding_box().center
            assert aa.contains_point(c)


class TestOccupiedCells:
    def test_point_like_box_single_cell(self):
        g = unit_grid()
        r = Region.from_boxes([box([0.5, 0.5], [0.0, 0.0])])
        cs = occupied_cells(r, g)
        assert cs.cells.tolist() == [[0, 0]]

    def test_interval_covers_three_cells(self):
        g = unit_grid()
        r = Region.from_boxes([HyperRect(np.array([0.0, 0.0]),
                                         np.array([2.5, 0.5]))])
        cs = occupied_cells(r, g)
        assert cs.cells.tolist() == [[0, 0], [1, 0], [2, 0]]

    def test_rotated_square_four_cells(self):
        # diamond of diagonal 2 centered at a grid vertex
        sq = ConvexPolytope(np.array([[1.0, 1], [1, -1], [-1, 1], [-1, -1]]),
                            np.ones(4))
        got = occupied_cells(Region((sq,), 2), unit_grid())
        # oracle: brute-force point sampling inside the diamond
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, size=(20000, 2))
        pts = pts[np.abs(pts).sum(axis=1) < 0.999]
        want = sorted({(int(np.floor(x)), int(np.floor(y))) for x, y in pts})
        assert sorted(map(tuple, got.cells.tolist())) == want
        assert len(got) == 4

    def test_monotone_in_nested_boxes(self):
        g = unit_grid()
        rng = np.random.default_rng(5)
        for _ in range(20):
            c = rng.uniform(-3, 3, size=2)
            w_in = rng.uniform(0.2, 2.0, size=2)
            w_out = w_in + rng.uniform(0.0, 2.0, size=2)
            inner = occupied_cells(Region.from_boxes([box(c, w_in)]), g)
            outer = occupied_cells(Region.from_boxes([box(c, w_out)]), g)
            assert inner.issubset(outer)

    def test_unbounded_region_raises(self):
        g = unit_grid()
        r = Region.from_boxes([HyperRect(np.array([0.0, -np.inf]),
                                         np.array([1.0, np.inf]))])
        with pytest.raises(UnboundedRegion):
            occupied_cells(r, g)

    def test_wrapped_dimension_canonicalizes(self):
        g = Grid(np.zeros(1), np.array([np.pi / 16]),
                 wrap=np.array([2 * np.pi]))
        r = Region.from_boxes([box([np.pi + 0.1], [0.05])])
        cs = occupied_cells(r, g)
        assert all(-16 <= c < 16 for (c,) in cs.cells.tolist())


class TestVolume:
    def test_full_side_length_convention(self):
        assert abs(region_volume(Region.from_boxes([box([0, 0], [1, 1.4])]))
                   - 1.4) < 1e-12

    def test_empty_region(self):
        assert region_volume(Region.empty(2)) == 0.0

    def test_two_disjoint_unit_boxes(self):
        r = Region.from_boxes([box([0, 0], [1, 1]), box([5, 5], [1, 1])])
        assert abs(region_volume(r) - 2.0) < 1e-12

    def test_overlap_needs_grid(self):
        r = Region.from_boxes([box([0, 0], [2, 2]), box([1, 1], [2, 2])])
        with pytest.raises(GeometryError):
            region_volume(r)
        v = region_volume(r, Grid(np.zeros(2), 0.25 * np.ones(2)))
        assert v > 4.0  # union strictly exceeds one box


class TestCellSets:
    def test_contains_trivials(self):
        empty = CellSet(dim=2)
        a = CellSet(np.array([[0, 0]]))
        ab = CellSet(np.array([[0, 0], [1, 0]]))
        c = CellSet(np.array([[2, 2]]))
        assert contains(ab, empty)
        assert contains(ab, a)
        assert not contains(a, c)

    def test_set_algebra(self):
        a = CellSet(np.array([[0, 0], [1, 1], [2, 2]]))
        b = CellSet(np.array([[1, 1], [3, 3]]))
        assert len(a.union(b)) == 4
        assert a.difference(b).cells.tolist() == [[0, 0], [2, 2]]
        assert a.intersection(b).cells.tolist() == [[1, 1]]


class TestFeasibility:
    def test_random_boxes_against_sampling(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            lo1, lo2 = rng.uniform(-2, 2, size=(2, 2))
            w1, w2 = rng.uniform(0.5, 2.0, size=(2, 2))
            p = HyperRect(lo1, lo1 + w1).to_polytope()
            q = HyperRect(lo2, lo2 + w2).to_polytope()
            stacked_A = np.vstack([p.A, q.A])
            stacked_b = np.concatenate([p.b, q.b])
            want = bool(np.all(np.maximum(lo1, lo2)
                               <= np.minimum(lo1 + w1, lo2 + w2)))
            assert fm_feasible(stacked_A, stacked_b) == want

    def test_empty_diamond_intersection(self):
        sq = ConvexPolytope(np.array([[1.0, 1], [1, -1], [-1, 1], [-1, -1]]),
                            np.ones(4))
        far = HyperRect(np.array([5.0, 5.0]), np.array([6.0, 6.0])).to_polytope()
        assert not fm_feasible(np.vstack([sq.A, far.A]),
                               np.concatenate([sq.b, far.b]))

    def test_three_dim_slab(self):
        A = np.array([[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0]])
        b = np.array([1.0, -2.0])  # x+y+z <= 1 and >= 2: empty
        assert not fm_feasible(A, b)
        b2 = np.array([2.0, -1.0])
        assert fm_feasible(A, b2)
