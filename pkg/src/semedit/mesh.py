"""Core geometry types: triangle meshes, point clouds, normalization.

Meshes and point clouds are immutable after construction (their numpy
buffers are marked read-only), so they can be shared freely across threads.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from .rng import make_rng

__all__ = [
    "Mesh",
    "PointCloud",
    "NormalizeTransform",
    "compute_vertex_normals",
    "sample_points",
    "sample_on_faces",
    "normalize",
]

_FALLBACK_NORMAL = np.array([0.0, 0.0, 1.0])


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _check_points(points: np.ndarray, what: str) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"{what} must have shape (n, 3), got {points.shape}")
    if not np.isfinite(points).all():
        raise ValueError(f"{what} contain NaN or Inf coordinates")
    return points


def _check_normals(normals, count: int):
    if normals is None:
        return None
    normals = np.asarray(normals, dtype=np.float64)
    if normals.shape != (count, 3):
        raise ValueError(f"normals must have shape ({count}, 3), got {normals.shape}")
    if not np.isfinite(normals).all():
        raise ValueError("normals contain NaN or Inf")
    lengths = np.linalg.norm(normals, axis=1)
    if np.abs(lengths - 1.0).max() > 1e-6:
        raise ValueError("normals must have unit length within 1e-6")
    return normals


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh: float64 vertices (n, 3) and int faces (m, 3)."""

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: Optional[np.ndarray] = None

    def __post_init__(self):
        verts = _check_points(self.vertices, "vertices")
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(faces) and (faces.min() < 0 or faces.max() >= len(verts)):
            raise ValueError("face index out of range")
        normals = _check_normals(self.vertex_normals, len(verts))
        object.__setattr__(self, "vertices", _freeze(verts))
        object.__setattr__(self, "faces", _freeze(faces))
        if normals is not None:
            object.__setattr__(self, "vertex_normals", _freeze(normals))

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray, keep_normals: bool = False) -> "Mesh":
        """Same topology, new vertex positions."""
        normals = self.vertex_normals if keep_normals else None
        return Mesh(vertices, self.faces, normals)

    def face_corners(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        v, f = self.vertices, self.faces
        return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]

    def face_areas(self) -> np.ndarray:
        a, b, c = self.face_corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass(frozen=True)
class PointCloud:
    """Fixed set of 3D points with optional unit normals."""

    points: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = _check_points(self.points, "points")
        normals = _check_normals(self.normals, len(pts))
        object.__setattr__(self, "points", _freeze(pts))
        if normals is not None:
            object.__setattr__(self, "normals", _freeze(normals))

    @property
    def count(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class NormalizeTransform:
    """Similarity transform x -> scale * (x - center) and its inverse."""

    center: np.ndarray
    scale: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).reshape(3)
        if not np.isfinite(center).all():
            raise ValueError("center must be finite")
        if not (self.scale > 0):
            raise ValueError("scale must be positive")
        object.__setattr__(self, "center", _freeze(center))
        object.__setattr__(self, "scale", float(self.scale))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.center) * self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) / self.scale + self.center


def compute_vertex_normals(mesh: Mesh) -> Mesh:
    """Fill per-vertex normals as the normalized area-weighted sum of
    incident face normals.

    Degenerate faces contribute nothing; vertices with no (usable) incident
    face get the documented fallback normal (0, 0, 1).
    """
    if mesh.face_count < 1:
        raise ValueError("mesh has no faces")
    a, b, c = mesh.face_corners()
    # cross product length is twice the face area, so summing the raw cross
    # products is exactly area weighting
    fn = np.cross(b - a, c - a)
    acc = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], fn)
    lengths = np.linalg.norm(acc, axis=1)
    ok = lengths > 1e-20
    normals = np.where(ok[:, None], acc / np.where(ok, lengths, 1.0)[:, None], _FALLBACK_NORMAL)
    return Mesh(mesh.vertices, mesh.faces, normals)


def _interp_normals(mesh: Mesh, face_idx: np.ndarray, bary: np.ndarray) -> np.ndarray:
    if mesh.vertex_normals is None:
        mesh = compute_vertex_normals(mesh)
    vn = mesh.vertex_normals
    f = mesh.faces[face_idx]
    n = (vn[f[:, 0]] * bary[:, 0:1] + vn[f[:, 1]] * bary[:, 1:2] + vn[f[:, 2]] * bary[:, 2:3])
    lengths = np.linalg.norm(n, axis=1)
    ok = lengths > 1e-12
    return np.where(ok[:, None], n / np.where(ok, lengths, 1.0)[:, None], _FALLBACK_NORMAL)


def sample_on_faces(mesh: Mesh, face_idx: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Evaluate surface points for given (face, barycentric) pairs.

    Kept separate from `sample_points` so a caller can freeze the sampling
    pattern and re-evaluate it on a mesh with perturbed vertices.
    """
    a, b, c = (mesh.vertices[mesh.faces[face_idx, k]] for k in range(3))
    return a * bary[:, 0:1] + b * bary[:, 1:2] + c * bary[:, 2:3]


def sample_points(
    mesh: Mesh, count: int, seed: int, return_pattern: bool = False
) -> Union[PointCloud, Tuple[PointCloud, np.ndarray, np.ndarray]]:
    """Sample `count` points uniformly by surface area.

    Faces are chosen proportionally to area and positions uniformly inside
    each face; normals are interpolated from vertex normals. Deterministic
    for a fixed seed (PCG64, see `semedit.rng`).

    With `return_pattern`, also returns the (face_idx, bary) arrays that
    reproduce the sample via `sample_on_faces`.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    areas = mesh.face_areas()
    total = areas.sum()
    if not (total > 0):
        raise ValueError("all faces are degenerate")
    rng = make_rng(seed)
    cdf = np.cumsum(areas)
    u = rng.random(count) * total
    face_idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(areas) - 1)
    r1 = rng.random(count)
    r2 = rng.random(count)
    flip = r1 + r2 > 1.0
    r1 = np.where(flip, 1.0 - r1, r1)
    r2 = np.where(flip, 1.0 - r2, r2)
    bary = np.stack([1.0 - r1 - r2, r1, r2], axis=1)
    points = sample_on_faces(mesh, face_idx, bary)
    normals = _interp_normals(mesh, face_idx, bary)
    cloud = PointCloud(points, normals)
    if return_pattern:
        return cloud, face_idx, bary
    return cloud


def normalize(geometry):
    """Re-center to zero mean and scale so the farthest point sits at
    radius exactly 0.6.

    Accepts a Mesh (transform computed from its vertices) or a PointCloud.
    Returns (normalized geometry, NormalizeTransform); normals are
    unaffected by the similarity transform.
    """
    if isinstance(geometry, Mesh):
        pts = geometry.vertices
    elif isinstance(geometry, PointCloud):
        pts = geometry.points
    else:
        pts = _check_points(geometry, "points")
    if len(pts) < 1:
        raise ValueError("need at least one point")
    center = pts.mean(axis=0)
    radii = np.linalg.norm(pts - center, axis=1)
    max_r = radii.max()
    if max_r <= 0:
        raise ValueError("degenerate shape: all points coincident")
    transform = NormalizeTransform(center, 0.6 / max_r)
    if isinstance(geometry, Mesh):
        out = Mesh(transform.apply(pts), geometry.faces, geometry.vertex_normals)
    elif isinstance(geometry, PointCloud):
        out = PointCloud(transform.apply(pts), geometry.normals)
    else:
        out = transform.apply(pts)
    return out, transform
