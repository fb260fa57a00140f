"""Deformation transfer: carry the displacement field defined by a pair of
decoded synthetic shapes onto a realistic mesh, preserving its detail.

The field averages per-vertex *displacements* (edited minus source synthetic
vertices) over the k nearest synthetic neighbors of each input vertex and
adds the average to the vertex. Averaging displacements rather than target
positions keeps an identity edit exactly identity: the input never gets
snapped onto the synthetic surface.

Weights: rigid shapes use (1 + <n_x, n_v>)^k_n * exp(-||v - x||^2 / sigma^2)
with k_n = 2, sigma = 0.03; non-rigid shapes use the constant weight 1.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .encoder import EncoderWeights, forward_raw
from .mesh import Mesh, compute_vertex_normals, normalize, sample_points
from .spatial import SpatialIndex
from .templates import (
    ParamVector,
    SyntheticMesh,
    TemplateSpec,
    decode,
    edit_params,
    spec_hash,
)

__all__ = [
    "WeightConfig",
    "DeformationField",
    "build_field",
    "weight",
    "apply_field",
    "edit_shape",
    "EditSession",
]

RIGID, NONRIGID = "rigid", "nonrigid"
_SUM_FLOOR = 1e-12


@dataclass(frozen=True)
class WeightConfig:
    """Neighbor count and weight function parameters for the field."""

    k: int = 8
    mode: str = RIGID
    k_n: float = 2.0
    sigma: float = 0.03

    def __post_init__(self):
        if self.mode not in (RIGID, NONRIGID):
            raise ValueError(f"mode must be 'rigid' or 'nonrigid', got {self.mode!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def for_class(cls, class_id: str) -> "WeightConfig":
        if class_id == "humanoid":
            return cls(k=4, mode=NONRIGID)
        return cls(k=8, mode=RIGID)


@dataclass(frozen=True)
class DeformationField:
    """Source synthetic mesh, per-vertex displacements and spatial index."""

    source: SyntheticMesh
    displacements: np.ndarray
    index: SpatialIndex
    config: WeightConfig

    def __post_init__(self):
        if len(self.displacements) != self.source.mesh.vertex_count:
            raise ValueError("one displacement per synthetic vertex required")


def build_field(
    spec: TemplateSpec, f: ParamVector, f_edited: ParamVector, config: WeightConfig
) -> DeformationField:
    """Decode both parameter vectors and take per-vertex displacements
    (correspondence is by vertex index, which the decoders guarantee)."""
    source = decode(spec, f)
    edited = decode(spec, f_edited)
    displacements = edited.mesh.vertices - source.mesh.vertices
    mesh = compute_vertex_normals(source.mesh)
    source = SyntheticMesh(mesh, source.part_labels, source.part_names, source.class_id)
    return DeformationField(source, displacements, SpatialIndex(mesh.vertices), config)


def weight(x, n_x, v, n_v, config: WeightConfig) -> float:
    """Blending weight between a field point and a synthetic vertex."""
    if config.mode == NONRIGID:
        return 1.0
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    align = 1.0 + float(np.dot(n_x, n_v))
    d2 = float(((v - x) ** 2).sum())
    return align ** config.k_n * np.exp(-d2 / (config.sigma ** 2))


def apply_field(field: DeformationField, mesh: Mesh) -> Mesh:
    """Move every input vertex by the weighted average displacement of its
    k nearest synthetic source vertices.

    The input must be in the same (normalized) frame as the field's shapes,
    and must carry vertex normals in rigid mode. Where the weights sum to
    ~zero the unweighted mean of the k displacements is used instead.
    Topology is preserved verbatim.
    """
    cfg = field.config
    if cfg.mode == RIGID and mesh.vertex_normals is None:
        raise ValueError("rigid-mode deformation requires input vertex normals")
    idx, d2 = field.index.query(mesh.vertices, cfg.k)
    disp = field.displacements[idx]  # (m, k, 3)
    if cfg.mode == RIGID:
        src_normals = field.source.mesh.vertex_normals[idx]
        align = 1.0 + np.einsum("mc,mkc->mk", mesh.vertex_normals, src_normals)
        w = np.maximum(align, 0.0) ** cfg.k_n * np.exp(-d2 / (cfg.sigma ** 2))
    else:
        w = np.ones_like(d2)
    wsum = w.sum(axis=1)
    degenerate = wsum < _SUM_FLOOR
    if degenerate.any():
        w[degenerate] = 1.0
        wsum[degenerate] = w.shape[1]
    moved = mesh.vertices + np.einsum("mk,mkc->mc", w, disp) / wsum[:, None]
    return Mesh(moved, mesh.faces)


class EditSession:
    """Encode once, deform many times from the same uploaded mesh.

    Deformation always restarts from the originally encoded parameters and
    the original mesh, so successive edits never accumulate drift.
    """

    def __init__(
        self,
        weights: EncoderWeights,
        mesh: Mesh,
        config: Optional[WeightConfig] = None,
        sample_count: int = 512,
        seed: int = 0,
    ):
        self.spec = weights.spec
        self.config = config or WeightConfig.for_class(self.spec.class_id)
        cloud = sample_points(mesh, sample_count, seed)
        norm_cloud, self.transform = normalize(cloud)
        normalized = Mesh(self.transform.apply(mesh.vertices), mesh.faces)
        self.mesh_normalized = compute_vertex_normals(normalized)
        raw, _ = forward_raw(weights, [norm_cloud], mode="eval")
        self.params = ParamVector(self.spec, _sanitize(self.spec, raw[0].astype(np.float64)))
        self.input_mesh = mesh

    def deform(self, edits: Sequence) -> Mesh:
        """Apply an edit list and return the deformed mesh in the input frame."""
        edited = edit_params(self.params, edits)
        field = build_field(self.spec, self.params, edited, self.config)
        moved = apply_field(field, self.mesh_normalized)
        return Mesh(self.transform.invert(moved.vertices), moved.faces)

    def decode_template(self, edits: Sequence = ()) -> SyntheticMesh:
        """Synthetic decode of the (optionally edited) parameters, mapped back
        into the input frame for overlay display."""
        edited = edit_params(self.params, edits)
        sm = decode(self.spec, edited)
        mesh = Mesh(self.transform.invert(sm.mesh.vertices), sm.mesh.faces)
        return SyntheticMesh(mesh, sm.part_labels, sm.part_names, sm.class_id)


def _sanitize(spec: TemplateSpec, values: np.ndarray) -> np.ndarray:
    """Clamp encoder rotation outputs into their declared bounds and into the
    canonical pi-ball, so decoding raw predictions from an imperfect
    checkpoint cannot fail (scales are already positive via the exp head)."""
    out = values.copy()
    off = 0
    for p in spec.params:
        if p.kind == "rotation":
            for c, (lo, hi) in enumerate(p.bounds):
                out[off + c] = min(max(out[off + c], lo), hi)
            angle = float(np.linalg.norm(out[off:off + 3]))
            if angle > np.pi:
                out[off:off + 3] *= (np.pi - 1e-9) / angle
        off += p.arity
    return out


def edit_shape(
    weights: EncoderWeights,
    spec: TemplateSpec,
    mesh: Mesh,
    edits: Sequence,
    config: Optional[WeightConfig] = None,
    sample_count: int = 512,
    seed: int = 0,
) -> Mesh:
    """Full pipeline: normalize, encode, edit, build field, deform, and map
    the result back into the input's original frame."""
    if spec_hash(weights.spec) != spec_hash(spec):
        raise ValueError(
            f"checkpoint class {weights.spec.class_id} does not match spec {spec.class_id}"
        )
    session = EditSession(weights, mesh, config=config, sample_count=sample_count, seed=seed)
    return session.deform(edits)
