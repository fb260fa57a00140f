"""Parametric shape templates with analytic, differentiable decoders.

Three built-in classes:

* chair — six box-grid cuboids (back, seat, four legs) driven by eight
  scale parameters; every vertex coordinate is a homogeneous linear
  function of the parameters, so the Jacobian is a constant matrix and
  per-part axis-aligned extents equal the parameters exactly.
* airplane — UV-sphere fuselage plus five tapered boxes (two wings, one
  vertical and two horizontal stabilizers), six scale parameters, also
  homogeneous linear.
* humanoid — ten capsule segments skinned over an eight-joint skeleton
  (shoulders, elbows, hips, knees, axis-angle rotations) with three global
  shape scales (height, width, limb length); rotations make this decoder
  nonlinear and its Jacobian uses the exact axis-angle differential.

Every decoder emits a fixed vertex layout per class, which is what gives
synthetic shapes their exact vertex correspondence. A global translation
is always the last three entries of a parameter vector and is added last.
"""

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .mesh import Mesh
from .primitives import box_grid, capsule, uv_sphere
from .rng import make_rng
from .rotation import compose, expmap, rotation_derivatives

__all__ = [
    "ParamDescriptor",
    "TemplateSpec",
    "ParamVector",
    "SyntheticMesh",
    "Edit",
    "get_template_spec",
    "builtin_class_ids",
    "spec_to_config",
    "spec_from_config",
    "spec_hash",
    "decode",
    "decode_vertices",
    "decoder_jacobian",
    "sample_params",
    "edit_params",
    "parse_edits",
    "absorb_similarity",
]

SCALE, ROTATION, TRANSLATION = "scale", "rotation", "translation"
TRANSLATION_RANGE = 0.05  # sampled global translation lies in +-this, per axis


@dataclass(frozen=True)
class ParamDescriptor:
    """One named semantic parameter (scalar scale or axis-angle rotation)."""

    name: str
    kind: str
    bounds: Tuple[Tuple[float, float], ...]
    default: Tuple[float, ...]

    def __post_init__(self):
        if self.kind not in (SCALE, ROTATION):
            raise ValueError(f"unknown parameter kind {self.kind!r}")
        arity = 1 if self.kind == SCALE else 3
        if len(self.bounds) != arity or len(self.default) != arity:
            raise ValueError(f"{self.name}: expected arity {arity}")
        for (lo, hi), dv in zip(self.bounds, self.default):
            if self.kind == SCALE and not (0 < lo < hi):
                raise ValueError(f"{self.name}: scale bounds need 0 < lo < hi")
            if self.kind == ROTATION and max(abs(lo), abs(hi)) > np.pi + 1e-12:
                raise ValueError(f"{self.name}: rotation bound exceeds pi")
            if not (lo <= dv <= hi):
                raise ValueError(f"{self.name}: default outside bounds")

    @property
    def arity(self) -> int:
        return 1 if self.kind == SCALE else 3


@dataclass(frozen=True)
class TemplateSpec:
    """Per-class semantic parameter metadata plus geometry resolution."""

    class_id: str
    params: Tuple[ParamDescriptor, ...]
    resolution: Tuple[Tuple[str, int], ...]

    @property
    def d(self) -> int:
        return sum(p.arity for p in self.params)

    @property
    def total(self) -> int:
        return self.d + 3

    @property
    def vertex_count(self) -> int:
        return len(_geometry(self).base_vertices)

    @property
    def part_names(self) -> Tuple[str, ...]:
        return _geometry(self).part_names

    def faces(self) -> np.ndarray:
        return _geometry(self).faces

    def part_labels(self) -> np.ndarray:
        return _geometry(self).part_labels

    def param_index(self, name: str) -> int:
        """Offset of a descriptor's first component in the value vector."""
        off = 0
        for p in self.params:
            if p.name == name:
                return off
            off += p.arity
        raise KeyError(
            f"unknown parameter {name!r}; valid names: "
            + ", ".join(p.name for p in self.params)
        )

    def descriptor(self, name: str) -> ParamDescriptor:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(
            f"unknown parameter {name!r}; valid names: "
            + ", ".join(p.name for p in self.params)
        )

    def kinds(self) -> np.ndarray:
        """Per-component kind array of length d+3 ('scale'/'rotation'/'translation')."""
        out: List[str] = []
        for p in self.params:
            out.extend([p.kind] * p.arity)
        out.extend([TRANSLATION] * 3)
        return np.array(out)

    def default_values(self) -> np.ndarray:
        vals: List[float] = []
        for p in self.params:
            vals.extend(p.default)
        vals.extend([0.0, 0.0, 0.0])
        return np.array(vals)


@dataclass(frozen=True)
class ParamVector:
    """Concrete assignment: d semantic values followed by 3 translation values."""

    spec: TemplateSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(vals) != self.spec.total:
            raise ValueError(
                f"expected {self.spec.total} values for {self.spec.class_id}, got {len(vals)}"
            )
        if not np.isfinite(vals).all():
            raise ValueError("parameter values contain NaN or Inf")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def semantic(self) -> np.ndarray:
        return self.values[: self.spec.d]

    @property
    def translation(self) -> np.ndarray:
        return self.values[self.spec.d:]

    def named(self) -> Dict[str, List[float]]:
        out: Dict[str, List[float]] = {}
        off = 0
        for p in self.spec.params:
            out[p.name] = [float(v) for v in self.values[off:off + p.arity]]
            off += p.arity
        out["translation"] = [float(v) for v in self.values[off:off + 3]]
        return out


@dataclass(frozen=True)
class SyntheticMesh:
    """Decoded template mesh with per-vertex part labels."""

    mesh: Mesh
    part_labels: np.ndarray
    part_names: Tuple[str, ...]
    class_id: str


@dataclass(frozen=True)
class Edit:
    """One parameter edit: set/delta a scale component or compose a rotation."""

    name: str
    component: int
    op: str
    value: float

    def __post_init__(self):
        if self.op not in ("set", "delta"):
            raise ValueError(f"edit op must be 'set' or 'delta', got {self.op!r}")


# --------------------------------------------------------------------------
# built-in specs

def _scale(name: str, default: float) -> ParamDescriptor:
    return ParamDescriptor(name, SCALE, ((0.3 * default, 2.5 * default),), (default,))


def _rot(name: str) -> ParamDescriptor:
    b = 2.0 * np.pi / 3.0
    return ParamDescriptor(name, ROTATION, tuple([(-b, b)] * 3), (0.0, 0.0, 0.0))


_CHAIR_DEFAULTS = [
    ("back_height", 0.5), ("back_depth", 0.06), ("seat_thickness", 0.06),
    ("seat_depth", 0.45), ("shared_width", 0.45), ("leg_height", 0.4),
    ("leg_cross_depth", 0.05), ("leg_cross_width", 0.05),
]
_AIRPLANE_DEFAULTS = [
    ("fuselage_height", 0.14), ("fuselage_length", 1.0), ("fuselage_width", 0.12),
    ("wing_length", 0.45), ("vstab_length", 0.15), ("hstab_length", 0.18),
]
_HUMANOID_JOINTS = [
    "shoulder_left", "elbow_left", "shoulder_right", "elbow_right",
    "hip_left", "knee_left", "hip_right", "knee_right",
]
_HUMANOID_SHAPES = [("height_scale", 1.0), ("width_scale", 1.0), ("limb_scale", 1.0)]

_BUILTIN_FACTORIES = {
    "chair": lambda: TemplateSpec(
        "chair",
        tuple(_scale(n, v) for n, v in _CHAIR_DEFAULTS),
        (("grid", 4),),
    ),
    "airplane": lambda: TemplateSpec(
        "airplane",
        tuple(_scale(n, v) for n, v in _AIRPLANE_DEFAULTS),
        (("grid", 4), ("sphere_segments", 24), ("sphere_rings", 12)),
    ),
    "humanoid": lambda: TemplateSpec(
        "humanoid",
        tuple([_rot(n) for n in _HUMANOID_JOINTS] + [_scale(n, v) for n, v in _HUMANOID_SHAPES]),
        (("segments", 12), ("cap_rings", 3), ("side_rings", 4)),
    ),
}

_SPEC_CACHE: Dict[str, TemplateSpec] = {}


def builtin_class_ids() -> Tuple[str, ...]:
    return tuple(_BUILTIN_FACTORIES)


def get_template_spec(class_id: str) -> TemplateSpec:
    if class_id not in _BUILTIN_FACTORIES:
        raise KeyError(f"unknown template class {class_id!r}; valid: {sorted(_BUILTIN_FACTORIES)}")
    if class_id not in _SPEC_CACHE:
        _SPEC_CACHE[class_id] = _BUILTIN_FACTORIES[class_id]()
    return _SPEC_CACHE[class_id]


def spec_to_config(spec: TemplateSpec) -> dict:
    """Plain-dict form of a spec, suitable for JSON round-tripping."""
    return {
        "version": 1,
        "class_id": spec.class_id,
        "resolution": {k: v for k, v in spec.resolution},
        "params": [
            {
                "name": p.name,
                "kind": p.kind,
                "bounds": [list(b) for b in p.bounds],
                "default": list(p.default),
            }
            for p in spec.params
        ],
    }


def spec_from_config(config: dict) -> TemplateSpec:
    if config.get("version") != 1:
        raise ValueError(f"unsupported template config version {config.get('version')!r}")
    class_id = config["class_id"]
    if class_id not in _BUILTIN_FACTORIES:
        raise ValueError(
            f"template config class {class_id!r} has no geometry family; valid: "
            f"{sorted(_BUILTIN_FACTORIES)}"
        )
    params = tuple(
        ParamDescriptor(
            p["name"], p["kind"],
            tuple(tuple(float(x) for x in b) for b in p["bounds"]),
            tuple(float(x) for x in p["default"]),
        )
        for p in config["params"]
    )
    resolution = tuple(sorted((str(k), int(v)) for k, v in config["resolution"].items()))
    return TemplateSpec(class_id, params, resolution)


@lru_cache(maxsize=None)
def spec_hash(spec: TemplateSpec) -> str:
    blob = json.dumps(spec_to_config(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------
# geometry construction (cached per spec)

class _RigidGeometry:
    """Vertices are homogeneous linear in the semantic parameters:
    V(p) = basis @ p, with basis of shape (V, 3, d)."""

    def __init__(self, basis, faces, part_labels, part_names):
        self.basis = basis
        self.faces = faces
        self.part_labels = part_labels
        self.part_names = part_names
        self.base_vertices = np.zeros((basis.shape[0], 3))
        self.kind = "rigid"


class _HumanoidGeometry:
    def __init__(self, base_vertices, faces, part_labels, part_names,
                 bones, bone_of_vertex, weight_of_vertex, joints, limb_groups):
        self.base_vertices = base_vertices
        self.faces = faces
        self.part_labels = part_labels
        self.part_names = part_names
        self.bones = bones                  # name -> chain [(joint name, rot param idx)]
        self.bone_of_vertex = bone_of_vertex  # (V, 2) indices into bone list, -1 = unused
        self.weight_of_vertex = weight_of_vertex  # (V, 2)
        self.joints = joints                # name -> base position
        self.limb_groups = limb_groups      # list of (vertex mask, axis, anchor, stretched joints)
        self.kind = "humanoid"


@lru_cache(maxsize=None)
def _geometry(spec: TemplateSpec):
    builder = {"chair": _build_chair, "airplane": _build_airplane, "humanoid": _build_humanoid}
    return builder[spec.class_id](spec)


def _append_part(chunks, coeff, faces, label, mirror_x=False):
    if mirror_x:
        coeff = coeff.copy()
        coeff[:, 0, :] *= -1.0
        faces = faces[:, [0, 2, 1]]
    chunks.append((coeff, faces, label))


def _assemble(chunks, d):
    offset = 0
    all_coeff, all_faces, labels = [], [], []
    for coeff, faces, label in chunks:
        all_coeff.append(coeff)
        all_faces.append(faces + offset)
        labels.append(np.full(len(coeff), label, dtype=np.int64))
        offset += len(coeff)
    return (
        np.concatenate(all_coeff),
        np.concatenate(all_faces),
        np.concatenate(labels),
    )


def _build_chair(spec: TemplateSpec) -> _RigidGeometry:
    res = dict(spec.resolution)
    g, faces = box_grid(res["grid"])
    n = len(g)
    d = spec.d
    if [p.name for p in spec.params] != [name for name, _ in _CHAIR_DEFAULTS]:
        raise ValueError("chair spec must declare the standard eight parameters")
    BH, BD, ST, SD, SW, LH, LCD, LCW = range(8)
    gx, gy, gz = g[:, 0], g[:, 1], g[:, 2]

    def part():
        return np.zeros((n, 3, d))

    chunks = []
    # back: width x back_height x back_depth, rising from the seat's rear edge
    c = part()
    c[:, 0, SW] = gx - 0.5
    c[:, 1, LH] = 1.0
    c[:, 1, ST] = 1.0
    c[:, 1, BH] = gy
    c[:, 2, SD] = -0.5
    c[:, 2, BD] = gz
    _append_part(chunks, c, faces, 0)
    # seat: width x thickness x depth, resting on the legs
    c = part()
    c[:, 0, SW] = gx - 0.5
    c[:, 1, LH] = 1.0
    c[:, 1, ST] = gy
    c[:, 2, SD] = gz - 0.5
    _append_part(chunks, c, faces, 1)
    # legs at the four seat corners, inset by their own cross-section
    for label, (sx, sz) in enumerate([(-1, 1), (1, 1), (-1, -1), (1, -1)], start=2):
        c = part()
        c[:, 0, SW] = 0.5 * sx
        c[:, 0, LCW] = (gx - 1.0) if sx > 0 else gx
        c[:, 1, LH] = gy
        c[:, 2, SD] = 0.5 * sz
        c[:, 2, LCD] = (gz - 1.0) if sz > 0 else gz
        _append_part(chunks, c, faces, label)
    basis, all_faces, labels = _assemble(chunks, d)
    names = ("back", "seat", "leg_front_left", "leg_front_right",
             "leg_back_left", "leg_back_right")
    return _RigidGeometry(basis, all_faces, labels, names)


# fixed profile ratios for the airplane's lifting surfaces; chord and
# thickness scale with the surface's own length parameter so the whole
# decoder stays homogeneous in the parameters
_WING = {"chord": 0.32, "thick": 0.05, "taper": 0.45}
_VSTAB = {"chord": 0.38, "thick": 0.06, "taper": 0.40}
_HSTAB = {"chord": 0.35, "thick": 0.04, "taper": 0.45}


def _build_airplane(spec: TemplateSpec) -> _RigidGeometry:
    res = dict(spec.resolution)
    d = spec.d
    if [p.name for p in spec.params] != [name for name, _ in _AIRPLANE_DEFAULTS]:
        raise ValueError("airplane spec must declare the standard six parameters")
    FH, FL, FW, WL, VL, HL = range(6)
    chunks = []

    u, sphere_faces = uv_sphere(res["sphere_segments"], res["sphere_rings"])
    c = np.zeros((len(u), 3, d))
    c[:, 0, FW] = u[:, 0] / 2.0
    c[:, 1, FH] = u[:, 1] / 2.0
    c[:, 2, FL] = u[:, 2] / 2.0
    _append_part(chunks, c, sphere_faces, 0)

    g, box_faces = box_grid(res["grid"])
    gx, gy, gz = g[:, 0], g[:, 1], g[:, 2]

    def surface(pidx, profile, tail_anchor):
        # span along gx, thickness gy, chord gz; linear taper along the span
        c = np.zeros((len(g), 3, d))
        shrink = 1.0 - profile["taper"] * gx
        c[:, 0, pidx] = gx
        c[:, 1, pidx] = profile["thick"] * shrink * (gy - 0.5)
        c[:, 2, pidx] = profile["chord"] * shrink * (gz - 0.5)
        if tail_anchor:
            c[:, 2, FL] = -0.5
            c[:, 2, pidx] = profile["chord"] * shrink * gz
        return c

    wing = surface(WL, _WING, tail_anchor=False)
    _append_part(chunks, wing, box_faces, 1, mirror_x=True)   # left
    _append_part(chunks, wing, box_faces, 2)                  # right

    vstab = np.zeros((len(g), 3, d))
    shrink = 1.0 - _VSTAB["taper"] * gx
    vstab[:, 1, VL] = gx                                       # rises above the tail
    vstab[:, 0, VL] = _VSTAB["thick"] * shrink * (gy - 0.5)
    vstab[:, 2, FL] = -0.5
    vstab[:, 2, VL] = _VSTAB["chord"] * shrink * gz
    _append_part(chunks, vstab, box_faces, 3)

    hstab = surface(HL, _HSTAB, tail_anchor=True)
    _append_part(chunks, hstab, box_faces, 4, mirror_x=True)  # left
    _append_part(chunks, hstab, box_faces, 5)                 # right

    basis, all_faces, labels = _assemble(chunks, d)
    names = ("fuselage", "wing_left", "wing_right", "vstab", "hstab_left", "hstab_right")
    return _RigidGeometry(basis, all_faces, labels, names)


# base humanoid skeleton (T-pose, y up); limbs stretch about their
# attachment joint along the limb axis when limb_scale changes
_H_JOINTS = {
    "shoulder_left": (-0.16, 0.44, 0.0), "elbow_left": (-0.38, 0.44, 0.0),
    "wrist_left": (-0.58, 0.44, 0.0),
    "shoulder_right": (0.16, 0.44, 0.0), "elbow_right": (0.38, 0.44, 0.0),
    "wrist_right": (0.58, 0.44, 0.0),
    "hip_left": (-0.09, -0.02, 0.0), "knee_left": (-0.09, -0.34, 0.0),
    "ankle_left": (-0.09, -0.66, 0.0),
    "hip_right": (0.09, -0.02, 0.0), "knee_right": (0.09, -0.34, 0.0),
    "ankle_right": (0.09, -0.66, 0.0),
}
_H_BLEND_HALF_WIDTH = 0.05  # blend band radius around each joint

# bone name -> kinematic chain of (joint name, rotation descriptor index)
_H_BONES: Dict[str, List[Tuple[str, int]]] = {
    "root": [],
    "upper_arm_left": [("shoulder_left", 0)],
    "forearm_left": [("shoulder_left", 0), ("elbow_left", 1)],
    "upper_arm_right": [("shoulder_right", 2)],
    "forearm_right": [("shoulder_right", 2), ("elbow_right", 3)],
    "thigh_left": [("hip_left", 4)],
    "shin_left": [("hip_left", 4), ("knee_left", 5)],
    "thigh_right": [("hip_right", 6)],
    "shin_right": [("hip_right", 6), ("knee_right", 7)],
}

# part -> (capsule endpoints, radius, own bone, blend joint, child axis)
_H_PARTS = [
    ("torso", ("_origin", (0.0, 0.50, 0.0)), 0.10, "root", None, None),
    ("head", ((0.0, 0.60, 0.0), (0.0, 0.68, 0.0)), 0.09, "root", None, None),
    ("upper_arm_left", ("shoulder_left", "elbow_left"), 0.05,
     "upper_arm_left", "shoulder_left", (-1.0, 0.0, 0.0)),
    ("forearm_left", ("elbow_left", "wrist_left"), 0.045,
     "forearm_left", "elbow_left", (-1.0, 0.0, 0.0)),
    ("upper_arm_right", ("shoulder_right", "elbow_right"), 0.05,
     "upper_arm_right", "shoulder_right", (1.0, 0.0, 0.0)),
    ("forearm_right", ("elbow_right", "wrist_right"), 0.045,
     "forearm_right", "elbow_right", (1.0, 0.0, 0.0)),
    ("thigh_left", ("hip_left", "knee_left"), 0.07,
     "thigh_left", "hip_left", (0.0, -1.0, 0.0)),
    ("shin_left", ("knee_left", "ankle_left"), 0.055,
     "shin_left", "knee_left", (0.0, -1.0, 0.0)),
    ("thigh_right", ("hip_right", "knee_right"), 0.07,
     "thigh_right", "hip_right", (0.0, -1.0, 0.0)),
    ("shin_right", ("knee_right", "ankle_right"), 0.055,
     "shin_right", "knee_right", (0.0, -1.0, 0.0)),
]

# limb group -> (parts, stretch axis, anchor joint, joints dragged by the stretch)
_H_LIMBS = [
    (("upper_arm_left", "forearm_left"), 0, "shoulder_left", ("elbow_left", "wrist_left")),
    (("upper_arm_right", "forearm_right"), 0, "shoulder_right", ("elbow_right", "wrist_right")),
    (("thigh_left", "shin_left"), 1, "hip_left", ("knee_left", "ankle_left")),
    (("thigh_right", "shin_right"), 1, "hip_right", ("knee_right", "ankle_right")),
]


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _build_humanoid(spec: TemplateSpec) -> _HumanoidGeometry:
    res = dict(spec.resolution)
    names = [p.name for p in spec.params]
    if names != _HUMANOID_JOINTS + [n for n, _ in _HUMANOID_SHAPES]:
        raise ValueError("humanoid spec must declare 8 joint rotations then 3 shape scales")
    joints = {k: np.array(v) for k, v in _H_JOINTS.items()}
    joints["_origin"] = np.zeros(3)
    bone_names = list(_H_BONES)
    bone_index = {n: i for i, n in enumerate(bone_names)}
    # parent bone = chain minus its last joint
    parent_of = {}
    for bname, chain in _H_BONES.items():
        parent_of[bname] = "root" if len(chain) <= 1 else _chain_owner(chain[:-1])

    chunks_v, chunks_f, labels = [], [], []
    bone_a, bone_b, w_a, w_b = [], [], [], []
    part_names = []
    offset = 0
    h = _H_BLEND_HALF_WIDTH
    for label, (pname, (j0, j1), radius, own_bone, blend_joint, axis) in enumerate(_H_PARTS):
        p0 = joints[j0] if isinstance(j0, str) else np.array(j0)
        p1 = joints[j1] if isinstance(j1, str) else np.array(j1)
        verts, faces = capsule(p0, p1, radius, res["segments"], res["cap_rings"], res["side_rings"])
        chunks_v.append(verts)
        chunks_f.append(faces + offset)
        labels.append(np.full(len(verts), label, dtype=np.int64))
        part_names.append(pname)
        offset += len(verts)

        own = bone_index[own_bone]
        if blend_joint is None:
            bone_a.append(np.full(len(verts), own))
            w_a.append(np.ones(len(verts)))
            bone_b.append(np.full(len(verts), -1))
            w_b.append(np.zeros(len(verts)))
        else:
            ax = np.array(axis)
            u = (verts - joints[blend_joint]) @ ax
            w_own = _smoothstep((u + h) / (2.0 * h))
            parent = bone_index[parent_of[own_bone]]
            bone_a.append(np.full(len(verts), own))
            w_a.append(w_own)
            bone_b.append(np.where(w_own < 1.0, parent, -1))
            w_b.append(1.0 - w_own)

    return _HumanoidGeometry(
        base_vertices=np.concatenate(chunks_v),
        faces=np.concatenate(chunks_f),
        part_labels=np.concatenate(labels),
        part_names=tuple(part_names),
        bones={n: list(c) for n, c in _H_BONES.items()},
        bone_of_vertex=np.stack([np.concatenate(bone_a), np.concatenate(bone_b)], axis=1),
        weight_of_vertex=np.stack([np.concatenate(w_a), np.concatenate(w_b)], axis=1),
        joints={k: v for k, v in joints.items()},
        limb_groups=list(_H_LIMBS),
    )


def _chain_owner(chain: List[Tuple[str, int]]) -> str:
    for bname, bchain in _H_BONES.items():
        if bchain == chain:
            return bname
    raise KeyError(f"no bone with chain {chain}")


# --------------------------------------------------------------------------
# decoding

def _check_values(spec: TemplateSpec, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(values) != spec.total:
        raise ValueError(f"expected {spec.total} values, got {len(values)}")
    if not np.isfinite(values).all():
        raise ValueError("parameter values contain NaN or Inf")
    off = 0
    for p in spec.params:
        if p.kind == SCALE and values[off] <= 0:
            raise ValueError(f"{p.name}: scale must be positive, got {values[off]}")
        if p.kind == ROTATION:
            # composed edits may exceed the per-component sampling bounds,
            # but a decodable axis-angle must stay in the canonical pi-ball
            angle = float(np.linalg.norm(values[off:off + 3]))
            if angle > np.pi + 1e-6:
                raise ValueError(
                    f"{p.name}: rotation angle {angle:.4f} beyond the canonical bound pi"
                )
        off += p.arity
    return values


def decode_vertices(spec: TemplateSpec, values: np.ndarray) -> np.ndarray:
    """Vertex positions (V, 3) for a raw value vector; translation added last."""
    values = _check_values(spec, values)
    geom = _geometry(spec)
    if geom.kind == "rigid":
        verts = np.einsum("vcd,d->vc", geom.basis, values[: spec.d])
    else:
        verts = _humanoid_lbs(geom, values)[0]
        sw = values[25]
        sh = values[24]
        verts = verts * np.array([sw, sh, sw])
    return verts + values[spec.d:]


def decode(spec: TemplateSpec, p: ParamVector) -> SyntheticMesh:
    """Decode a parameter vector into a synthetic mesh with part labels."""
    if p.spec is not spec and spec_hash(p.spec) != spec_hash(spec):
        raise ValueError("parameter vector belongs to a different spec")
    geom = _geometry(spec)
    verts = decode_vertices(spec, p.values)
    return SyntheticMesh(
        mesh=Mesh(verts, geom.faces),
        part_labels=geom.part_labels,
        part_names=geom.part_names,
        class_id=spec.class_id,
    )


def _humanoid_lbs(geom: _HumanoidGeometry, values: np.ndarray):
    """Stretched rest pose + linear blend skinning (before global scaling).

    Returns (vertices, context) where the context carries everything the
    Jacobian needs (stretched rests, joints, bone affines, rest derivative).
    """
    rots = values[:24].reshape(8, 3)
    s_l = values[26]

    v_rest = geom.base_vertices.copy()
    dv_rest = np.zeros_like(v_rest)  # d v_rest / d limb_scale
    joints = {k: v.copy() for k, v in geom.joints.items()}
    djoints = {k: np.zeros(3) for k in joints}
    part_of = geom.part_labels
    name_to_label = {n: i for i, n in enumerate(geom.part_names)}
    for parts, axis, anchor, dragged in geom.limb_groups:
        mask = np.isin(part_of, [name_to_label[p] for p in parts])
        a = geom.joints[anchor][axis]
        base_ax = geom.base_vertices[mask, axis]
        v_rest[mask, axis] = a + (base_ax - a) * s_l
        dv_rest[mask, axis] = base_ax - a
        for jn in dragged:
            b = geom.joints[jn][axis]
            joints[jn][axis] = a + (b - a) * s_l
            djoints[jn][axis] = b - a

    # per-bone affine world transforms M(v) = R v + t; root stays identity
    R_of, t_of, chain_of = {}, {}, {}
    for bname, chain in geom.bones.items():
        if not chain:
            continue
        R = np.eye(3)
        t = np.zeros(3)
        for jname, ridx in chain:
            Rj = expmap(rots[ridx])
            J = joints[jname]
            # compose: current (R, t) after (Rj about J)
            R_new = R @ Rj
            t_new = R @ (J - Rj @ J) + t
            R, t = R_new, t_new
        R_of[bname], t_of[bname], chain_of[bname] = R, t, chain

    bone_names = list(geom.bones)
    out = np.zeros_like(v_rest)
    for slot in range(2):
        bidx = geom.bone_of_vertex[:, slot]
        w = geom.weight_of_vertex[:, slot]
        for b, bname in enumerate(bone_names):
            mask = bidx == b
            if not mask.any():
                continue
            if bname == "root":
                moved = v_rest[mask]
            else:
                moved = v_rest[mask] @ R_of[bname].T + t_of[bname]
            out[mask] += w[mask, None] * moved

    ctx = {
        "v_rest": v_rest, "dv_rest": dv_rest,
        "joints": joints, "djoints": djoints,
        "rots": rots, "R_of": R_of, "t_of": t_of,
    }
    return out, ctx


def decoder_jacobian(spec: TemplateSpec, p: Union[ParamVector, np.ndarray]) -> np.ndarray:
    """Exact Jacobian of all vertex coordinates w.r.t. all parameters.

    Shape (3 * vertex_count, d + 3); row 3*v + axis, column = parameter
    component (semantic order, then translation).
    """
    values = p.values if isinstance(p, ParamVector) else np.asarray(p, dtype=np.float64)
    values = _check_values(spec, values)
    geom = _geometry(spec)
    V = len(geom.base_vertices)
    P = spec.total
    if geom.kind == "rigid":
        J = np.zeros((V, 3, P))
        J[:, :, : spec.d] = geom.basis
        for axis in range(3):
            J[:, axis, spec.d + axis] = 1.0
        return J.reshape(3 * V, P)
    return _humanoid_jacobian(spec, geom, values)


def _humanoid_jacobian(spec: TemplateSpec, geom: _HumanoidGeometry, values: np.ndarray):
    V = len(geom.base_vertices)
    P = spec.total
    lbs, ctx = _humanoid_lbs(geom, values)
    sh, sw = values[24], values[25]
    scale_vec = np.array([sw, sh, sw])

    # d(lbs)/d(rotations, limb_scale), computed bone by bone
    dlbs = np.zeros((V, 3, 25))  # columns 0..23 rotations, 24 limb_scale
    rots = ctx["rots"]
    joints = ctx["joints"]
    djoints = ctx["djoints"]
    v_rest = ctx["v_rest"]
    dv_rest = ctx["dv_rest"]
    dR_cache = {i: rotation_derivatives(rots[i]) for i in range(8)}
    R_cache = {i: expmap(rots[i]) for i in range(8)}

    bone_names = list(geom.bones)
    for slot in range(2):
        bidx = geom.bone_of_vertex[:, slot]
        w = geom.weight_of_vertex[:, slot]
        for b, bname in enumerate(bone_names):
            chain = geom.bones[bname]
            mask = (bidx == b)
            if not mask.any():
                continue
            wv = w[mask, None]
            vs = v_rest[mask]
            dvs = dv_rest[mask]
            if not chain:
                # root: identity transform; only limb_scale via v_rest (zero for torso/head)
                dlbs[mask, :, 24] += wv * dvs
                continue
            if len(chain) == 1:
                jname, ridx = chain[0]
                J1 = joints[jname]
                dJ1 = djoints[jname]  # zero: shoulders/hips do not stretch
                rel = vs - J1
                for i in range(3):
                    dlbs[mask, :, 3 * ridx + i] += wv * (rel @ dR_cache[ridx][i].T)
                dlbs[mask, :, 24] += wv * ((dvs - dJ1) @ R_cache[ridx].T + dJ1)
            else:
                (j1name, r1), (j2name, r2) = chain
                J1, J2 = joints[j1name], joints[j2name]
                dJ2 = djoints[j2name]
                R1, R2 = R_cache[r1], R_cache[r2]
                rel2 = vs - J2
                inner = rel2 @ R2.T + (J2 - J1)
                for i in range(3):
                    dlbs[mask, :, 3 * r1 + i] += wv * (inner @ dR_cache[r1][i].T)
                    dlbs[mask, :, 3 * r2 + i] += wv * (rel2 @ dR_cache[r2][i].T @ R1.T)
                dlbs[mask, :, 24] += wv * (((dvs - dJ2) @ R2.T + dJ2) @ R1.T)

    Jfull = np.zeros((V, 3, P))
    Jfull[:, :, :24] = dlbs[:, :, :24] * scale_vec[None, :, None]
    Jfull[:, :, 26] = dlbs[:, :, 24] * scale_vec[None, :]
    Jfull[:, 1, 24] = lbs[:, 1]               # height scale drives y
    Jfull[:, 0, 25] = lbs[:, 0]               # width scale drives x and z
    Jfull[:, 2, 25] = lbs[:, 2]
    for axis in range(3):
        Jfull[:, axis, 27 + axis] = 1.0
    return Jfull.reshape(3 * V, P)


# --------------------------------------------------------------------------
# sampling and editing

def sample_params(spec: TemplateSpec, seed: int, distribution: Optional[str] = None) -> ParamVector:
    """Draw a random parameter vector.

    uniform: every component uniform within its bounds. gaussian (humanoid
    only): rotations N(0, 0.3 rad) and shape scales lognormal
    (sigma = 0.15 on the log), both clipped to bounds. Global translation
    is uniform in [-0.05, 0.05]^3 either way.
    """
    if distribution is None:
        distribution = "gaussian" if spec.class_id == "humanoid" else "uniform"
    if distribution not in ("uniform", "gaussian"):
        raise ValueError(f"unknown distribution {distribution!r}")
    if distribution == "gaussian" and spec.class_id != "humanoid":
        raise ValueError("gaussian sampling is only defined for the humanoid class")
    rng = make_rng(seed)
    vals: List[float] = []
    for p in spec.params:
        if distribution == "uniform":
            for lo, hi in p.bounds:
                vals.append(rng.uniform(lo, hi))
        elif p.kind == ROTATION:
            for lo, hi in p.bounds:
                vals.append(float(np.clip(rng.normal(0.0, 0.3), lo, hi)))
        else:
            (lo, hi), = p.bounds
            (dv,) = p.default
            vals.append(float(np.clip(dv * np.exp(rng.normal(0.0, 0.15)), lo, hi)))
    vals.extend(rng.uniform(-TRANSLATION_RANGE, TRANSLATION_RANGE, size=3))
    return ParamVector(spec, np.array(vals))


def parse_edits(raw: Sequence) -> List[Edit]:
    """Accept dicts {name, component, op, value} or (name, component, op, value) tuples."""
    out = []
    for e in raw:
        if isinstance(e, Edit):
            out.append(e)
        elif isinstance(e, dict):
            out.append(Edit(str(e["name"]), int(e.get("component", 0)),
                            str(e.get("op", "set")), float(e["value"])))
        else:
            name, component, op, value = e
            out.append(Edit(str(name), int(component), str(op), float(value)))
    return out


def edit_params(p: ParamVector, edits: Sequence) -> ParamVector:
    """Apply parameter edits.

    Scale components are set / offset and clamped to bounds. Rotation edits
    compose: the new axis-angle is log(R_edit R_current), with R_edit a
    rotation of `value` radians about the edited component's axis ('set'
    composes by value minus the current component instead). Unedited
    components are untouched.
    """
    spec = p.spec
    values = p.values.copy()
    for e in parse_edits(edits):
        desc = spec.descriptor(e.name)
        off = spec.param_index(e.name)
        if e.component < 0 or e.component >= desc.arity:
            raise ValueError(f"{e.name}: component {e.component} out of range")
        if desc.kind == SCALE:
            lo, hi = desc.bounds[0]
            v = e.value if e.op == "set" else values[off] + e.value
            values[off] = min(max(v, lo), hi)
        else:
            angle = e.value if e.op == "delta" else e.value - values[off + e.component]
            r_edit = np.zeros(3)
            r_edit[e.component] = angle
            values[off:off + 3] = compose(r_edit, values[off:off + 3])
    return ParamVector(spec, values)


def absorb_similarity(spec: TemplateSpec, values: np.ndarray,
                      scale: float, center: np.ndarray) -> np.ndarray:
    """Parameter values p' with decode(p') = scale * (decode(p) - center).

    Exact for every built-in class: the rigid decoders are homogeneous in
    their scale parameters, and the humanoid applies its global width /
    height scales after posing, so a uniform rescale folds into them.
    """
    values = _check_values(spec, values)
    out = values.copy()
    kinds = spec.kinds()
    if spec.class_id == "humanoid":
        out[24] *= scale  # height_scale
        out[25] *= scale  # width_scale
    else:
        out[kinds == SCALE] *= scale
    d = spec.d
    out[d:] = scale * (values[d:] - np.asarray(center, dtype=np.float64))
    return out
