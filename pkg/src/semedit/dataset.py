"""Semi-supervised dataset construction.

Synthetic examples are decoded template shapes that carry their exact
parameter labels; realistic examples are unlabeled and come either from
ingested mesh files or, by default, from detail-augmented decodes
(procedural surface displacement, a low-frequency warp and small attached
features standing in for scan detail at desk scale).

Every example's point cloud is normalized (zero mean, max radius 0.6).
For synthetic examples the label is re-expressed in the cloud's normalized
frame via `absorb_similarity`, which is exact for all built-in templates,
so decode(label) still matches the stored cloud and ground-truth vertices.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import meshio
from .mesh import Mesh, PointCloud, compute_vertex_normals, normalize, sample_points
from .rng import derive
from .templates import (
    ParamVector,
    TemplateSpec,
    absorb_similarity,
    decode_vertices,
    get_template_spec,
    sample_params,
    spec_from_config,
    spec_to_config,
)
from .primitives import box_grid

__all__ = [
    "TrainingExample",
    "Dataset",
    "augment_mesh",
    "build_dataset",
    "save_dataset",
    "load_dataset",
]

SYNTHETIC, REALISTIC = "synthetic", "realistic"


@dataclass(frozen=True)
class TrainingExample:
    """One training shape. Synthetic examples carry labels; realistic do not."""

    kind: str
    cloud: PointCloud
    label: Optional[np.ndarray] = None          # (d+3,) in the cloud's frame
    gt_vertices: Optional[np.ndarray] = None    # decode(label), synthetic only
    source: str = ""

    def __post_init__(self):
        if self.kind not in (SYNTHETIC, REALISTIC):
            raise ValueError(f"bad example kind {self.kind!r}")
        if self.kind == SYNTHETIC and (self.label is None or self.gt_vertices is None):
            raise ValueError("synthetic examples must carry label and ground-truth vertices")
        if self.kind == REALISTIC and self.label is not None:
            raise ValueError("realistic examples are unlabeled")


@dataclass(frozen=True)
class Dataset:
    spec: TemplateSpec
    train: Tuple[TrainingExample, ...]
    test: Tuple[TrainingExample, ...]

    def split_counts(self) -> dict:
        def count(items):
            return {
                SYNTHETIC: sum(1 for e in items if e.kind == SYNTHETIC),
                REALISTIC: sum(1 for e in items if e.kind == REALISTIC),
            }
        return {"train": count(self.train), "test": count(self.test)}


def augment_mesh(mesh: Mesh, seed: int) -> Mesh:
    """Add deterministic procedural detail to a decoded template mesh.

    Three ingredients: mid-frequency displacement along vertex normals,
    a gentle low-frequency warp, and up to three small boxes attached to
    random surface points (unwelded, like clutter on a scan).
    """
    rng = derive(seed, 0xA46)
    mesh = compute_vertex_normals(mesh)
    v = mesh.vertices.copy()
    n = mesh.vertex_normals

    # displacement along normals: sum of three random plane waves
    amp = rng.uniform(0.004, 0.012)
    disp = np.zeros(len(v))
    for _ in range(3):
        k = rng.normal(size=3)
        k *= rng.uniform(4.0, 12.0) / np.linalg.norm(k)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        disp += np.sin(v @ k + phase)
    v = v + (amp / 3.0) * disp[:, None] * n

    # low-frequency warp, independent per axis
    for axis in range(3):
        k = rng.normal(size=3)
        k *= rng.uniform(1.0, 3.0) / np.linalg.norm(k)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        v[:, axis] += rng.uniform(0.005, 0.02) * np.sin(v @ k + phase)

    faces = mesh.faces
    n_feat = int(rng.integers(0, 4))
    if n_feat:
        areas = Mesh(v, faces).face_areas()
        cdf = np.cumsum(areas)
        box_v, box_f = box_grid(2)
        parts_v, parts_f = [v], [faces]
        offset = len(v)
        for _ in range(n_feat):
            fi = int(np.searchsorted(cdf, rng.random() * cdf[-1]))
            fi = min(fi, len(faces) - 1)
            r1, r2 = rng.random(), rng.random()
            if r1 + r2 > 1.0:
                r1, r2 = 1.0 - r1, 1.0 - r2
            a, b, c = v[faces[fi, 0]], v[faces[fi, 1]], v[faces[fi, 2]]
            anchor = a + r1 * (b - a) + r2 * (c - a)
            size = rng.uniform(0.015, 0.04, size=3)
            parts_v.append(anchor + (box_v - 0.5) * size)
            parts_f.append(box_f + offset)
            offset += len(box_v)
        v = np.concatenate(parts_v)
        faces = np.concatenate(parts_f)
    return Mesh(v, faces)


def _synthetic_example(spec: TemplateSpec, params: ParamVector, sample_count: int,
                       seed: int, source: str) -> TrainingExample:
    verts = decode_vertices(spec, params.values)
    mesh = Mesh(verts, spec.faces())
    cloud = sample_points(mesh, sample_count, seed)
    norm_cloud, tf = normalize(cloud)
    label = absorb_similarity(spec, params.values, tf.scale, tf.center)
    gt = decode_vertices(spec, label)
    return TrainingExample(SYNTHETIC, norm_cloud, label, gt, source)


def _realistic_example(mesh: Mesh, sample_count: int, seed: int, source: str) -> TrainingExample:
    cloud = sample_points(mesh, sample_count, seed)
    norm_cloud, _ = normalize(cloud)
    return TrainingExample(REALISTIC, norm_cloud, None, None, source)


def _split_4to1(items: list, rng) -> Tuple[list, list]:
    order = rng.permutation(len(items))
    n_train = (4 * len(items)) // 5
    train = [items[i] for i in order[:n_train]]
    test = [items[i] for i in order[n_train:]]
    return train, test


def build_dataset(
    spec: TemplateSpec,
    n_synthetic: int,
    n_realistic: int,
    seed: int,
    sample_count: int = 512,
    realistic_meshes: Optional[Sequence] = None,
    augment: bool = True,
) -> Dataset:
    """Build train/test splits (4:1 each for synthetic and realistic).

    `realistic_meshes` may hold Mesh objects or file paths; when absent,
    realistic shapes are detail-augmented decodes (requires `augment`).
    """
    if n_synthetic < 5 or n_realistic < 5:
        raise ValueError("need at least 5 examples of each kind")
    if realistic_meshes is None and not augment:
        raise ValueError("no realistic meshes given and augmentation disabled")

    synthetic = []
    for i in range(n_synthetic):
        params = sample_params(spec, seed=int(derive(seed, 1, i).integers(2 ** 62)))
        synthetic.append(_synthetic_example(
            spec, params, sample_count,
            seed=int(derive(seed, 2, i).integers(2 ** 62)),
            source=f"synthetic:{i:05d}",
        ))

    realistic = []
    if realistic_meshes is not None:
        if len(realistic_meshes) < n_realistic:
            raise ValueError(
                f"need {n_realistic} realistic meshes, got {len(realistic_meshes)}"
            )
        for i in range(n_realistic):
            m = realistic_meshes[i]
            mesh = m if isinstance(m, Mesh) else meshio.load_mesh(m)
            realistic.append(_realistic_example(
                mesh, sample_count,
                seed=int(derive(seed, 3, i).integers(2 ** 62)),
                source=f"file:{i:05d}" if isinstance(m, Mesh) else f"file:{m}",
            ))
    else:
        for i in range(n_realistic):
            params = sample_params(spec, seed=int(derive(seed, 4, i).integers(2 ** 62)))
            base = Mesh(decode_vertices(spec, params.values), spec.faces())
            mesh = augment_mesh(base, seed=int(derive(seed, 5, i).integers(2 ** 62)))
            realistic.append(_realistic_example(
                mesh, sample_count,
                seed=int(derive(seed, 6, i).integers(2 ** 62)),
                source=f"augmented:{i:05d}",
            ))

    s_train, s_test = _split_4to1(synthetic, derive(seed, 7))
    r_train, r_test = _split_4to1(realistic, derive(seed, 8))
    return Dataset(spec, tuple(s_train + r_train), tuple(s_test + r_test))


# --------------------------------------------------------------------------
# on-disk datasets (produced by `semedit gen-data`, consumed by training)

def save_dataset(
    spec: TemplateSpec,
    out_dir,
    n_synthetic: int,
    n_realistic: int,
    seed: int,
    sample_count: int = 512,
    realistic_meshes: Optional[Sequence] = None,
    augment: bool = True,
) -> dict:
    """Write meshes, labels and the split manifest for a dataset.

    Synthetic meshes are decoded at their sampled parameters (labels keep
    full precision in the manifest and are re-derived per cloud at load
    time); realistic meshes are the augmented or ingested geometry.
    """
    if n_synthetic < 5 or n_realistic < 5:
        raise ValueError("need at least 5 examples of each kind")
    if realistic_meshes is None and not augment:
        raise ValueError("no realistic meshes given and augmentation disabled")
    out_dir = Path(out_dir)
    (out_dir / "meshes").mkdir(parents=True, exist_ok=True)

    entries = []
    for i in range(n_synthetic):
        params = sample_params(spec, seed=int(derive(seed, 1, i).integers(2 ** 62)))
        mesh = Mesh(decode_vertices(spec, params.values), spec.faces())
        rel = f"meshes/synthetic_{i:05d}.obj"
        meshio.save_obj(mesh, out_dir / rel)
        entries.append({
            "id": f"synthetic_{i:05d}", "kind": SYNTHETIC, "mesh": rel,
            "label": [float(x) for x in params.values],
            "cloud_seed": int(derive(seed, 2, i).integers(2 ** 62)),
        })
    for i in range(n_realistic):
        if realistic_meshes is not None:
            m = realistic_meshes[i]
            mesh = m if isinstance(m, Mesh) else meshio.load_mesh(m)
        else:
            params = sample_params(spec, seed=int(derive(seed, 4, i).integers(2 ** 62)))
            base = Mesh(decode_vertices(spec, params.values), spec.faces())
            mesh = augment_mesh(base, seed=int(derive(seed, 5, i).integers(2 ** 62)))
        rel = f"meshes/realistic_{i:05d}.obj"
        meshio.save_obj(mesh, out_dir / rel)
        entries.append({
            "id": f"realistic_{i:05d}", "kind": REALISTIC, "mesh": rel,
            "label": None,
            "cloud_seed": int(derive(seed, 6 if realistic_meshes is None else 3, i).integers(2 ** 62)),
        })

    s_idx = [i for i, e in enumerate(entries) if e["kind"] == SYNTHETIC]
    r_idx = [i for i, e in enumerate(entries) if e["kind"] == REALISTIC]
    s_train, s_test = _split_4to1(s_idx, derive(seed, 7))
    r_train, r_test = _split_4to1(r_idx, derive(seed, 8))
    train_set = set(s_train + r_train)
    for i, e in enumerate(entries):
        e["split"] = "train" if i in train_set else "test"

    manifest = {
        "version": 1,
        "class_id": spec.class_id,
        "spec_config": spec_to_config(spec),
        "seed": seed,
        "sample_count": sample_count,
        "n_synthetic": n_synthetic,
        "n_realistic": n_realistic,
        "entries": entries,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest


def load_dataset(data_dir) -> Dataset:
    """Rebuild training examples from a gen-data directory.

    Synthetic examples decode their manifest label directly (full precision);
    realistic examples re-read the written mesh. Cloud sampling and
    normalization are re-run with the manifest's per-example seeds, so
    loading is deterministic.
    """
    data_dir = Path(data_dir)
    manifest = json.loads((data_dir / "manifest.json").read_text())
    if manifest.get("version") != 1:
        raise ValueError(f"unsupported dataset version {manifest.get('version')!r}")
    spec = spec_from_config(manifest["spec_config"])
    sample_count = int(manifest["sample_count"])
    train: List[TrainingExample] = []
    test: List[TrainingExample] = []
    for e in manifest["entries"]:
        if e["kind"] == SYNTHETIC:
            params = ParamVector(spec, np.array(e["label"], dtype=np.float64))
            ex = _synthetic_example(spec, params, sample_count, e["cloud_seed"], e["id"])
        else:
            mesh = meshio.load_mesh(data_dir / e["mesh"])
            ex = _realistic_example(mesh, sample_count, e["cloud_seed"], e["id"])
        (train if e["split"] == "train" else test).append(ex)
    return Dataset(spec, tuple(train), tuple(test))
