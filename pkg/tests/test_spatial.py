import numpy as np
import pytest

from semedit.mesh import PointCloud
from semedit.rng import make_rng
from semedit.spatial import SpatialIndex, chamfer, knn

from conftest import brute_force_chamfer, brute_force_knn


def test_knn_query_point_itself():
    pts = make_rng(0).normal(size=(20, 3))
    idx = SpatialIndex(pts)
    result = knn(idx, pts[7], 1)
    assert result == [(7, 0.0)]


def test_knn_matches_brute_force_property():
    # 1000 random instances against a sorted linear scan
    rng = make_rng(1)
    for trial in range(100):
        n = int(rng.integers(2, 60))
        pts = rng.normal(size=(n, 3))
        index = SpatialIndex(pts)
        for _ in range(10):
            q = rng.normal(size=3)
            k = int(rng.integers(1, 8))
            got = knn(index, q, k)
            want = brute_force_knn(pts, q, k)
            assert [i for i, _ in got] == [i for i, _ in want]
            assert got == want  # squared distances bit-identical too


def test_knn_ties_break_by_index():
    # four points equidistant from the origin, inserted out of order
    pts = np.array([[1.0, 0, 0], [0, 1.0, 0], [-1.0, 0, 0], [0, -1.0, 0]])
    index = SpatialIndex(pts)
    got = knn(index, np.zeros(3), 3)
    assert [i for i, _ in got] == [0, 1, 2]


def test_knn_clamps_k():
    pts = make_rng(2).normal(size=(5, 3))
    got = knn(SpatialIndex(pts), np.zeros(3), 99)
    assert len(got) == 5


def test_knn_empty_index_errors():
    with pytest.raises(ValueError, match="empty"):
        SpatialIndex(np.zeros((0, 3)))


def test_chamfer_identity():
    pts = make_rng(3).normal(size=(40, 3))
    assert chamfer(PointCloud(pts), PointCloud(pts)) == 0.0


def test_chamfer_single_points():
    a = PointCloud(np.array([[0.0, 0, 0]]))
    b = PointCloud(np.array([[1.0, 0, 0]]))
    assert chamfer(a, b) == 2.0  # 1^2 forward + 1^2 backward


def test_chamfer_asymmetric_counts():
    # brute-force oracle: forward 1^2 + 1^2 (both a-points are distance 1
    # from the single b-point), backward 1^2, total 3
    a = np.array([[0.0, 0, 0], [2.0, 0, 0]])
    b = np.array([[1.0, 0, 0]])
    assert brute_force_chamfer(a, b) == 3.0
    assert chamfer(PointCloud(a), PointCloud(b)) == 3.0
    assert chamfer(PointCloud(b), PointCloud(a)) == 3.0


def test_chamfer_symmetric_nonnegative():
    rng = make_rng(4)
    for _ in range(25):
        a = PointCloud(rng.normal(size=(int(rng.integers(1, 50)), 3)))
        b = PointCloud(rng.normal(size=(int(rng.integers(1, 50)), 3)))
        v = chamfer(a, b)
        assert v >= 0
        assert v == chamfer(b, a)


def test_chamfer_bit_exact_vs_brute_force():
    rng = make_rng(5)
    for _ in range(100):
        na, nb = int(rng.integers(1, 257)), int(rng.integers(1, 257))
        a = rng.normal(size=(na, 3))
        b = rng.normal(size=(nb, 3))
        assert chamfer(PointCloud(a), PointCloud(b)) == brute_force_chamfer(a, b)


def test_chamfer_correspondences():
    rng = make_rng(6)
    a = rng.normal(size=(30, 3))
    b = rng.normal(size=(20, 3))
    v, ab, ba = chamfer(PointCloud(a), PointCloud(b), return_correspondence=True)
    manual = ((a - b[ab]) ** 2).sum() + ((b - a[ba]) ** 2).sum()
    assert abs(v - manual) < 1e-12


def test_index_chunking_consistent():
    # force multiple chunks through the small-budget path
    import semedit.spatial as spatial

    rng = make_rng(7)
    pts = rng.normal(size=(100, 3))
    queries = rng.normal(size=(500, 3))
    index = SpatialIndex(pts)
    full_i, full_d = index.query(queries, 3)
    old = spatial._CHUNK_BUDGET
    spatial._CHUNK_BUDGET = 700
    try:
        chunk_i, chunk_d = index.query(queries, 3)
    finally:
        spatial._CHUNK_BUDGET = old
    assert np.array_equal(full_i, chunk_i)
    assert np.array_equal(full_d, chunk_d)
