"""OBJ and PLY mesh file reading and writing.

OBJ: ASCII `v`/`f` records, 1-based indices, negative (relative) indices.
PLY: ASCII and binary little-endian, `vertex`/`face` elements; unknown
vertex properties are skipped. Polygon faces are fan-triangulated. Vertex
order is preserved from the file. Non-manifold input is accepted.
"""

import struct
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .mesh import Mesh

__all__ = ["MeshParseError", "load_mesh", "save_mesh", "save_obj", "save_ply"]

_PLY_SCALARS = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}


class MeshParseError(ValueError):
    """Malformed mesh file; message includes the file line or byte offset."""


def _fan(indices: List[int]) -> List[Tuple[int, int, int]]:
    return [(indices[0], indices[i], indices[i + 1]) for i in range(1, len(indices) - 1)]


def load_mesh(path) -> Mesh:
    """Load an OBJ or PLY mesh; the format is detected from content."""
    path = Path(path)
    data = path.read_bytes()
    if data[:3] == b"ply":
        return _load_ply(data, path)
    return _load_obj(data, path)


def _load_obj(data: bytes, path: Path) -> Mesh:
    verts: List[Tuple[float, float, float]] = []
    faces: List[Tuple[int, int, int]] = []
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MeshParseError(f"{path}: not valid text at byte {e.start}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshParseError(f"{path}:{lineno}: vertex needs 3 coordinates")
            try:
                verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError:
                raise MeshParseError(f"{path}:{lineno}: bad vertex coordinate") from None
        elif tag == "f":
            if len(parts) < 4:
                raise MeshParseError(f"{path}:{lineno}: face needs >= 3 vertices")
            idx = []
            for tok in parts[1:]:
                head = tok.split("/")[0]
                try:
                    i = int(head)
                except ValueError:
                    raise MeshParseError(f"{path}:{lineno}: bad face index {tok!r}") from None
                if i == 0:
                    raise MeshParseError(f"{path}:{lineno}: OBJ indices are 1-based, got 0")
                # negative indices are relative to the vertices seen so far
                idx.append(i - 1 if i > 0 else len(verts) + i)
            faces.extend(_fan(idx))
        # other record types (vn, vt, usemtl, ...) are ignored
    if not verts:
        raise MeshParseError(f"{path}: no vertices found")
    try:
        return Mesh(np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3))
    except ValueError as e:
        raise MeshParseError(f"{path}: {e}") from None


def _load_ply(data: bytes, path: Path) -> Mesh:
    end = data.find(b"end_header")
    if end < 0:
        raise MeshParseError(f"{path}: missing end_header")
    nl = data.find(b"\n", end)
    if nl < 0:
        raise MeshParseError(f"{path}: truncated header")
    header = data[:nl].decode("ascii", errors="replace").splitlines()
    body = data[nl + 1:]

    fmt: Optional[str] = None
    elements: List[dict] = []
    for lineno, line in enumerate(header, start=1):
        parts = line.strip().split()
        if not parts or parts[0] in ("ply", "comment", "obj_info", "end_header"):
            continue
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] not in ("ascii", "binary_little_endian"):
                raise MeshParseError(f"{path}:{lineno}: unsupported PLY format {line.strip()!r}")
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise MeshParseError(f"{path}:{lineno}: bad element declaration")
            elements.append({"name": parts[1], "count": int(parts[2]), "props": []})
        elif parts[0] == "property":
            if not elements:
                raise MeshParseError(f"{path}:{lineno}: property before element")
            if parts[1] == "list":
                if len(parts) != 5:
                    raise MeshParseError(f"{path}:{lineno}: bad list property")
                elements[-1]["props"].append(("list", parts[2], parts[3], parts[4]))
            else:
                if len(parts) != 3:
                    raise MeshParseError(f"{path}:{lineno}: bad property")
                elements[-1]["props"].append(("scalar", parts[1], parts[2]))
    if fmt is None:
        raise MeshParseError(f"{path}: missing format line")

    verts = None
    faces: List[Tuple[int, int, int]] = []
    if fmt == "ascii":
        tokens = body.decode("ascii", errors="replace").split()
        pos = 0

        def take(n: int, what: str) -> List[str]:
            nonlocal pos
            if pos + n > len(tokens):
                raise MeshParseError(f"{path}: unexpected end of data in {what}")
            out = tokens[pos:pos + n]
            pos += n
            return out

        for el in elements:
            if el["name"] == "vertex":
                names = [p[1 + (p[0] == "list"):][-1] for p in el["props"]]
                rows = []
                for _ in range(el["count"]):
                    vals = take(len(el["props"]), "vertex")
                    rows.append(vals)
                cols = {n: i for i, n in enumerate(names)}
                for axis in ("x", "y", "z"):
                    if axis not in cols:
                        raise MeshParseError(f"{path}: vertex element lacks {axis}")
                verts = np.array(
                    [[float(r[cols["x"]]), float(r[cols["y"]]), float(r[cols["z"]])] for r in rows]
                )
            elif el["name"] == "face":
                for _ in range(el["count"]):
                    n = int(take(1, "face")[0])
                    idx = [int(t) for t in take(n, "face")]
                    faces.extend(_fan(idx))
            else:
                for _ in range(el["count"]):
                    for p in el["props"]:
                        if p[0] == "list":
                            n = int(take(1, el["name"])[0])
                            take(n, el["name"])
                        else:
                            take(1, el["name"])
    else:
        off = 0

        def need(n: int, what: str):
            if off + n > len(body):
                raise MeshParseError(f"{path}: unexpected end of data at byte {nl + 1 + off} in {what}")

        for el in elements:
            if el["name"] == "vertex":
                names, codes = [], []
                for p in el["props"]:
                    if p[0] == "list":
                        raise MeshParseError(f"{path}: list property in vertex element unsupported")
                    names.append(p[2])
                    codes.append(_PLY_SCALARS[p[1]])
                row_fmt = "<" + "".join(c for c, _ in codes)
                row_size = struct.calcsize(row_fmt)
                need(el["count"] * row_size, "vertex")
                rows = list(struct.iter_unpack(row_fmt, body[off:off + el["count"] * row_size]))
                off += el["count"] * row_size
                cols = {n: i for i, n in enumerate(names)}
                for axis in ("x", "y", "z"):
                    if axis not in cols:
                        raise MeshParseError(f"{path}: vertex element lacks {axis}")
                verts = np.array(
                    [[r[cols["x"]], r[cols["y"]], r[cols["z"]]] for r in rows], dtype=np.float64
                )
            elif el["name"] == "face":
                for _ in range(el["count"]):
                    _, cfmt, csize = None, *_PLY_SCALARS[el["props"][0][1]]
                    need(csize, "face")
                    (n,) = struct.unpack_from("<" + cfmt, body, off)
                    off += csize
                    ifmt, isize = _PLY_SCALARS[el["props"][0][2]]
                    need(n * isize, "face")
                    idx = list(struct.unpack_from("<" + str(n) + ifmt, body, off))
                    off += n * isize
                    faces.extend(_fan(idx))
            else:
                for _ in range(el["count"]):
                    for p in el["props"]:
                        if p[0] == "list":
                            cfmt, csize = _PLY_SCALARS[p[1]]
                            need(csize, el["name"])
                            (n,) = struct.unpack_from("<" + cfmt, body, off)
                            off += csize + n * _PLY_SCALARS[p[2]][1]
                        else:
                            off += _PLY_SCALARS[p[1]][1]
                need(0, el["name"])

    if verts is None:
        raise MeshParseError(f"{path}: no vertex element")
    try:
        return Mesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))
    except ValueError as e:
        raise MeshParseError(f"{path}: {e}") from None


def save_obj(mesh: Mesh, path) -> None:
    """Write ASCII OBJ with 6-significant-digit coordinates."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.6g} {v[1]:.6g} {v[2]:.6g}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


def save_ply(mesh: Mesh, path, binary: bool = True) -> None:
    """Write PLY, binary little-endian by default."""
    n_v, n_f = mesh.vertex_count, mesh.face_count
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        f"ply\nformat {fmt} 1.0\n"
        f"element vertex {n_v}\n"
        "property float x\nproperty float y\nproperty float z\n"
        f"element face {n_f}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    path = Path(path)
    if binary:
        with path.open("wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(mesh.vertices.astype("<f4").tobytes())
            for f in mesh.faces:
                fh.write(struct.pack("<B3i", 3, int(f[0]), int(f[1]), int(f[2])))
    else:
        lines = [header.rstrip("\n")]
        for v in mesh.vertices:
            lines.append(f"{v[0]:.6g} {v[1]:.6g} {v[2]:.6g}")
        for f in mesh.faces:
            lines.append(f"3 {f[0]} {f[1]} {f[2]}")
        path.write_text("\n".join(lines) + "\n")


def save_mesh(mesh: Mesh, path) -> None:
    """Dispatch on file extension (.obj or .ply)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        save_obj(mesh, path)
    elif suffix == ".ply":
        save_ply(mesh, path)
    else:
        raise ValueError(f"unsupported mesh extension {suffix!r}")
