import numpy as np
import pytest

from semedit.dataset import (
    Dataset,
    TrainingExample,
    augment_mesh,
    build_dataset,
    load_dataset,
    save_dataset,
)
from semedit.mesh import Mesh, sample_points
from semedit.spatial import chamfer
from semedit.templates import decode_vertices, get_template_spec, sample_params


@pytest.fixture(scope="module")
def small_chair_dataset():
    spec = get_template_spec("chair")
    return build_dataset(spec, n_synthetic=20, n_realistic=10, seed=3, sample_count=128)


def test_split_is_4_to_1():
    spec = get_template_spec("chair")
    ds = build_dataset(spec, n_synthetic=100, n_realistic=10, seed=0, sample_count=32)
    counts = ds.split_counts()
    assert counts["train"]["synthetic"] == 80
    assert counts["test"]["synthetic"] == 20
    assert counts["train"]["realistic"] == 8
    assert counts["test"]["realistic"] == 2


def test_synthetic_examples_self_consistent(small_chair_dataset):
    # the stored cloud must match a fresh sample of its label's decode;
    # per-point chamfer (sum / count) stays small at this sample density
    spec = small_chair_dataset.spec
    for ex in list(small_chair_dataset.train)[:6]:
        if ex.kind != "synthetic":
            continue
        mesh = Mesh(decode_vertices(spec, ex.label), spec.faces())
        fresh = sample_points(mesh, ex.cloud.count, seed=999)
        per_point = chamfer(ex.cloud, fresh) / ex.cloud.count
        assert per_point < 1e-2


def test_synthetic_gt_vertices_match_label(small_chair_dataset):
    spec = small_chair_dataset.spec
    ex = next(e for e in small_chair_dataset.train if e.kind == "synthetic")
    assert np.array_equal(ex.gt_vertices, decode_vertices(spec, ex.label))


def test_clouds_are_normalized(small_chair_dataset):
    for ex in list(small_chair_dataset.train)[:8]:
        pts = ex.cloud.points
        assert np.abs(pts.mean(axis=0)).max() < 1e-6
        assert abs(np.linalg.norm(pts, axis=1).max() - 0.6) < 1e-9


def test_realistic_examples_unlabeled(small_chair_dataset):
    for ex in small_chair_dataset.train:
        if ex.kind == "realistic":
            assert ex.label is None and ex.gt_vertices is None


def test_example_kind_validation():
    cloud = next(e.cloud for e in build_dataset(
        get_template_spec("chair"), 5, 5, seed=0, sample_count=16).train)
    with pytest.raises(ValueError, match="unlabeled"):
        TrainingExample("realistic", cloud, label=np.zeros(11))
    with pytest.raises(ValueError, match="label"):
        TrainingExample("synthetic", cloud)


def test_build_dataset_deterministic():
    spec = get_template_spec("airplane")
    a = build_dataset(spec, 8, 6, seed=9, sample_count=64)
    b = build_dataset(spec, 8, 6, seed=9, sample_count=64)
    for ea, eb in zip(a.train + a.test, b.train + b.test):
        assert ea.kind == eb.kind and ea.source == eb.source
        assert np.array_equal(ea.cloud.points, eb.cloud.points)


def test_counts_validation():
    spec = get_template_spec("chair")
    with pytest.raises(ValueError, match="at least 5"):
        build_dataset(spec, 4, 10, seed=0)
    with pytest.raises(ValueError, match="augmentation disabled"):
        build_dataset(spec, 10, 10, seed=0, augment=False)


def test_augment_mesh_deterministic_and_detailed():
    spec = get_template_spec("chair")
    base = Mesh(decode_vertices(spec, sample_params(spec, 0).values), spec.faces())
    a = augment_mesh(base, seed=4)
    b = augment_mesh(base, seed=4)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.faces, b.faces)
    c = augment_mesh(base, seed=5)
    assert a.vertex_count != c.vertex_count or not np.array_equal(
        a.vertices[: base.vertex_count], c.vertices[: base.vertex_count]
    )
    # displacement is detail-scale, not shape-destroying
    assert np.abs(a.vertices[: base.vertex_count] - base.vertices).max() < 0.08


def test_external_realistic_meshes(tmp_path):
    from semedit.meshio import save_obj

    spec = get_template_spec("chair")
    paths = []
    for i in range(5):
        mesh = Mesh(decode_vertices(spec, sample_params(spec, i).values), spec.faces())
        p = tmp_path / f"m{i}.obj"
        save_obj(mesh, p)
        paths.append(p)
    ds = build_dataset(spec, 5, 5, seed=0, sample_count=32, realistic_meshes=paths)
    assert ds.split_counts()["train"]["realistic"] == 4
    with pytest.raises(ValueError, match="realistic meshes"):
        build_dataset(spec, 5, 9, seed=0, sample_count=32, realistic_meshes=paths)


def test_save_load_roundtrip(tmp_path):
    spec = get_template_spec("chair")
    out = tmp_path / "data"
    save_dataset(spec, out, 8, 6, seed=2, sample_count=64)
    assert (out / "manifest.json").exists()
    ds = load_dataset(out)
    counts = ds.split_counts()
    assert counts["train"]["synthetic"] + counts["test"]["synthetic"] == 8
    assert counts["train"]["realistic"] + counts["test"]["realistic"] == 6
    # synthetic examples survive the disk trip exactly (labels, not meshes,
    # are the source of truth)
    mem = build_dataset(spec, 8, 6, seed=2, sample_count=64)
    mem_syn = {e.source: e for e in mem.train + mem.test if e.kind == "synthetic"}
    for e in ds.train + ds.test:
        if e.kind == "synthetic":
            twin = mem_syn[f"synthetic:{e.source.split('_')[1]}"]
            assert np.allclose(e.cloud.points, twin.cloud.points, atol=1e-12)
