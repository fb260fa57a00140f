"""Tessellated primitive builders used by the template decoders.

All builders return (vertices, faces) with outward-facing triangle winding.
Vertex layouts are fixed functions of the resolution arguments, which is
what gives decoded template meshes their fixed vertex correspondence.
"""

from typing import Dict, Tuple

import numpy as np

__all__ = ["box_grid", "uv_sphere", "capsule"]


def box_grid(n: int = 4) -> Tuple[np.ndarray, np.ndarray]:
    """Axis-aligned unit box [0,1]^3 with each face an n x n vertex grid.

    Shared edge/corner vertices are deduplicated (the vertex set is the
    shell of the n^3 lattice). For n=4 this gives 56 vertices, 108 triangles.
    """
    if n < 2:
        raise ValueError("box_grid needs n >= 2")
    ids: Dict[Tuple[int, int, int], int] = {}
    verts = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if i in (0, n - 1) or j in (0, n - 1) or k in (0, n - 1):
                    ids[(i, j, k)] = len(verts)
                    verts.append((i / (n - 1), j / (n - 1), k / (n - 1)))
    faces = []

    def grid_cell(at, a, b, flip):
        # one face plane: `at` fixes one axis, a/b run over the other two
        for p in range(n - 1):
            for q in range(n - 1):
                c00 = ids[_ijk(at, a, b, p, q)]
                c10 = ids[_ijk(at, a, b, p + 1, q)]
                c01 = ids[_ijk(at, a, b, p, q + 1)]
                c11 = ids[_ijk(at, a, b, p + 1, q + 1)]
                if flip:
                    faces.append((c00, c11, c01))
                    faces.append((c00, c10, c11))
                else:
                    faces.append((c00, c01, c11))
                    faces.append((c00, c11, c10))

    def _ijk(at, a, b, p, q):
        out = [0, 0, 0]
        out[at[0]] = at[1]
        out[a] = p
        out[b] = q
        return tuple(out)

    # (fixed axis, plane index), running axes, winding so normals face outward
    grid_cell((0, 0), 1, 2, flip=False)       # x = 0, normal -x
    grid_cell((0, n - 1), 1, 2, flip=True)    # x = 1, normal +x
    grid_cell((1, 0), 0, 2, flip=True)        # y = 0, normal -y
    grid_cell((1, n - 1), 0, 2, flip=False)   # y = 1, normal +y
    grid_cell((2, 0), 0, 1, flip=False)       # z = 0, normal -z
    grid_cell((2, n - 1), 0, 1, flip=True)    # z = 1, normal +z

    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64)


def uv_sphere(segments: int = 24, rings: int = 12) -> Tuple[np.ndarray, np.ndarray]:
    """Unit sphere: `segments` longitudes, `rings` latitude bands.

    (rings - 1) interior latitude circles plus two poles;
    vertex count = (rings - 1) * segments + 2.
    """
    if segments < 3 or rings < 2:
        raise ValueError("uv_sphere needs segments >= 3, rings >= 2")
    verts = [(0.0, 1.0, 0.0)]
    for i in range(1, rings):
        phi = np.pi * i / rings
        y = np.cos(phi)
        r = np.sin(phi)
        for j in range(segments):
            th = 2.0 * np.pi * j / segments
            verts.append((r * np.cos(th), y, r * np.sin(th)))
    verts.append((0.0, -1.0, 0.0))
    north, south = 0, len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * segments + (j % segments)

    faces = []
    for j in range(segments):
        faces.append((north, ring(1, j + 1), ring(1, j)))
    for i in range(1, rings - 1):
        for j in range(segments):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, b, d))
            faces.append((a, d, c))
    for j in range(segments):
        faces.append((south, ring(rings - 1, j), ring(rings - 1, j + 1)))
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64)


def capsule(
    p0: np.ndarray,
    p1: np.ndarray,
    radius: float,
    segments: int = 12,
    cap_rings: int = 3,
    side_rings: int = 4,
) -> Tuple[np.ndarray, np.ndarray]:
    """Capsule from p0 to p1 (hemispherical caps, cylindrical side).

    `side_rings` counts the circles along the cylinder including both ends;
    vertex count = 2 + (2 * (cap_rings - 1) + side_rings) * segments.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    w = p1 - p0
    length = np.linalg.norm(w)
    if length <= 0:
        raise ValueError("capsule endpoints coincide")
    w = w / length
    # build a stable perpendicular frame
    ref = np.array([1.0, 0.0, 0.0]) if abs(w[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(w, ref)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)

    circles = []  # (center, ring radius) per latitude circle, bottom to top
    for i in range(1, cap_rings):
        ang = (np.pi / 2.0) * i / cap_rings
        circles.append((p0 - w * radius * np.cos(ang), radius * np.sin(ang)))
    for i in range(side_rings):
        t = i / (side_rings - 1)
        circles.append((p0 + w * (length * t), radius))
    for i in range(cap_rings - 1, 0, -1):
        ang = (np.pi / 2.0) * i / cap_rings
        circles.append((p1 + w * radius * np.cos(ang), radius * np.sin(ang)))

    verts = [p0 - w * radius]
    for center, r in circles:
        for j in range(segments):
            th = 2.0 * np.pi * j / segments
            verts.append(center + r * (np.cos(th) * u + np.sin(th) * v))
    verts.append(p1 + w * radius)
    bottom, top = 0, len(verts) - 1

    def ring(i, j):
        return 1 + i * segments + (j % segments)

    faces = []
    for j in range(segments):
        faces.append((bottom, ring(0, j + 1), ring(0, j)))
    for i in range(len(circles) - 1):
        for j in range(segments):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, b, d))
            faces.append((a, d, c))
    for j in range(segments):
        faces.append((top, ring(len(circles) - 1, j), ring(len(circles) - 1, j + 1)))
    return np.asarray(verts, dtype=np.float64), np.array(faces, dtype=np.int64)
