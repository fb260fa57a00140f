"""Point-set encoder with exact manual backpropagation.

Architecture: four shared per-point fully-connected layers of sizes
(64, 128, 128, 256), each followed by batch normalization (over all points
of all clouds in the batch) and ReLU; symmetric max pooling over the points
of each cloud; then a three-layer head (d, d, d+3). The output head maps
raw values to parameters: scale components through exp (guaranteeing
positivity), rotation and translation components raw.

Everything runs in float32 by default (float64 is available for gradient
oracles). Training mode caches every intermediate needed for the backward
pass, including batch statistics, ReLU masks and pooling argmax indices.
"""

import json
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .mesh import PointCloud
from .rng import make_rng
from .templates import ParamVector, TemplateSpec, spec_from_config, spec_hash, spec_to_config

__all__ = [
    "EncoderWeights",
    "ForwardCache",
    "init_encoder",
    "forward",
    "forward_raw",
    "backward",
    "encode_clouds",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]

POINT_LAYERS = (64, 128, 128, 256)
BN_EPS = 1e-5
BN_MOMENTUM = 0.9
MAGIC = b"SEMEDIT1"
FORMAT_VERSION = 1


def _layer_sizes(d: int) -> List[Tuple[int, int]]:
    sizes = [3, *POINT_LAYERS]
    pairs = [(sizes[i], sizes[i + 1]) for i in range(4)]
    pairs += [(256, d), (d, d), (d, d + 3)]
    return pairs


@dataclass
class EncoderWeights:
    """All trainable tensors plus batch-norm running statistics."""

    spec: TemplateSpec
    tensors: Dict[str, np.ndarray]
    dtype: np.dtype = np.dtype(np.float32)

    def W(self, i: int) -> np.ndarray:
        return self.tensors[f"W{i}"]

    def b(self, i: int) -> np.ndarray:
        return self.tensors[f"b{i}"]

    def bn(self, i: int, which: str) -> np.ndarray:
        return self.tensors[f"bn{i}_{which}"]

    def trainable_names(self) -> List[str]:
        names = []
        for i in range(7):
            names += [f"W{i}", f"b{i}"]
        for i in range(4):
            names += [f"bn{i}_gamma", f"bn{i}_beta"]
        return names

    def tensor_order(self) -> List[str]:
        names = []
        for i in range(7):
            names += [f"W{i}", f"b{i}"]
        for i in range(4):
            names += [f"bn{i}_gamma", f"bn{i}_beta", f"bn{i}_mean", f"bn{i}_var"]
        return names

    def astype(self, dtype) -> "EncoderWeights":
        dtype = np.dtype(dtype)
        return EncoderWeights(
            self.spec, {k: v.astype(dtype) for k, v in self.tensors.items()}, dtype
        )

    def copy(self) -> "EncoderWeights":
        return EncoderWeights(self.spec, {k: v.copy() for k, v in self.tensors.items()}, self.dtype)

    def scale_mask(self) -> np.ndarray:
        return self.spec.kinds() == "scale"


@dataclass
class ForwardCache:
    """Intermediates from a train-mode forward pass (everything the exact
    backward pass needs, nothing more)."""

    x_flat: np.ndarray
    batch_shape: Tuple[int, int]
    layer_in: List[np.ndarray] = field(default_factory=list)
    xhat: List[np.ndarray] = field(default_factory=list)
    inv_std: List[np.ndarray] = field(default_factory=list)
    mean: List[np.ndarray] = field(default_factory=list)
    relu_mask: List[np.ndarray] = field(default_factory=list)
    pool_arg: Optional[np.ndarray] = None
    pooled: Optional[np.ndarray] = None
    head_in: List[np.ndarray] = field(default_factory=list)
    head_mask: List[np.ndarray] = field(default_factory=list)
    raw: Optional[np.ndarray] = None
    params: Optional[np.ndarray] = None


def init_encoder(spec: TemplateSpec, seed: int, dtype=np.float32) -> EncoderWeights:
    """Fan-in-scaled uniform initialization (U(-1/sqrt(fan_in), +1/sqrt(fan_in)))
    drawn from the documented PCG64 stream; batch-norm starts as identity."""
    rng = make_rng(seed)
    dtype = np.dtype(dtype)
    tensors: Dict[str, np.ndarray] = {}
    for i, (fan_in, fan_out) in enumerate(_layer_sizes(spec.d)):
        bound = 1.0 / np.sqrt(fan_in)
        tensors[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
        tensors[f"b{i}"] = rng.uniform(-bound, bound, size=fan_out).astype(dtype)
    for i, width in enumerate(POINT_LAYERS):
        tensors[f"bn{i}_gamma"] = np.ones(width, dtype=dtype)
        tensors[f"bn{i}_beta"] = np.zeros(width, dtype=dtype)
        tensors[f"bn{i}_mean"] = np.zeros(width, dtype=dtype)
        tensors[f"bn{i}_var"] = np.ones(width, dtype=dtype)
    return EncoderWeights(spec, tensors, dtype)


def _as_batch_array(batch, dtype) -> np.ndarray:
    if isinstance(batch, np.ndarray):
        arr = batch.astype(dtype, copy=False)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"batch array must have shape (B, N, 3), got {arr.shape}")
    else:
        clouds = list(batch)
        counts = {c.count for c in clouds}
        if len(counts) != 1:
            raise ValueError(f"mismatched point counts within batch: {sorted(counts)}")
        arr = np.stack([c.points for c in clouds]).astype(dtype)
    if not np.isfinite(arr).all():
        raise ValueError("batch contains NaN or Inf")
    return arr


def forward_raw(
    w: EncoderWeights, batch, mode: str = "eval"
) -> Tuple[np.ndarray, Optional[ForwardCache]]:
    """Run the encoder; returns ((B, d+3) parameter array, cache in train mode).

    Train mode normalizes with batch statistics and updates the running
    mean/variance with momentum 0.9; eval mode uses the running statistics
    and mutates nothing.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x3 = _as_batch_array(batch, w.dtype)
    B, N, _ = x3.shape
    x = x3.reshape(B * N, 3)
    train = mode == "train"
    cache = ForwardCache(x_flat=x, batch_shape=(B, N)) if train else None

    eps = np.asarray(BN_EPS, dtype=w.dtype)
    for i in range(4):
        if train:
            cache.layer_in.append(x)
        z = x @ w.W(i)
        z += w.b(i)
        if train:
            m = z.mean(axis=0)
            z -= m  # z now holds the centered values
            var = np.einsum("nc,nc->c", z, z) / z.shape[0]
            inv = 1.0 / np.sqrt(var + eps)
            z *= inv  # z now holds xhat
            xhat = z
            w.tensors[f"bn{i}_mean"] = (
                BN_MOMENTUM * w.bn(i, "mean") + (1.0 - BN_MOMENTUM) * m
            ).astype(w.dtype)
            w.tensors[f"bn{i}_var"] = (
                BN_MOMENTUM * w.bn(i, "var") + (1.0 - BN_MOMENTUM) * var
            ).astype(w.dtype)
            cache.mean.append(m)
            cache.inv_std.append(inv)
            cache.xhat.append(xhat)
        else:
            inv = 1.0 / np.sqrt(w.bn(i, "var") + eps)
            z -= w.bn(i, "mean")
            z *= inv
            xhat = z
        y = xhat * w.bn(i, "gamma")
        y += w.bn(i, "beta")
        if train:
            mask = y > 0
            cache.relu_mask.append(mask)
        np.maximum(y, 0, out=y)
        x = y

    feat = x.reshape(B, N, POINT_LAYERS[-1])
    arg = feat.argmax(axis=1)
    pooled = np.take_along_axis(feat, arg[:, None, :], axis=1)[:, 0, :]
    h = pooled
    if train:
        cache.pool_arg = arg
        cache.pooled = pooled
    for j, i in enumerate((4, 5, 6)):
        if train:
            cache.head_in.append(h)
        h = h @ w.W(i) + w.b(i)
        if j < 2:
            mask = h > 0
            h = h * mask
            if train:
                cache.head_mask.append(mask)
    raw = h
    params = raw.copy()
    sm = w.scale_mask()
    params[:, sm] = np.exp(raw[:, sm])
    if train:
        cache.raw = raw
        cache.params = params
    return params, cache


def forward(
    w: EncoderWeights, batch: Sequence[PointCloud], mode: str = "eval"
) -> Tuple[List[ParamVector], Optional[ForwardCache]]:
    """Encoder forward over point clouds, returning one ParamVector per cloud."""
    params, cache = forward_raw(w, batch, mode)
    vectors = [ParamVector(w.spec, row.astype(np.float64)) for row in params]
    return vectors, cache


def backward(w: EncoderWeights, cache: ForwardCache, grad_params: np.ndarray) -> Dict[str, np.ndarray]:
    """Exact gradients of a scalar loss w.r.t. every trainable tensor.

    `grad_params` is dL/d(mapped parameters), shape (B, d+3); the exp head,
    max-pool routing and train-mode batch statistics are all accounted for.
    """
    if cache.raw is None:
        raise ValueError("backward requires a cache from a train-mode forward")
    grad_params = np.asarray(grad_params, dtype=w.dtype)
    if grad_params.shape != cache.raw.shape:
        raise ValueError(
            f"grad shape {grad_params.shape} does not match outputs {cache.raw.shape}"
        )
    grads: Dict[str, np.ndarray] = {}
    sm = w.scale_mask()
    g = grad_params.copy()
    g[:, sm] = g[:, sm] * cache.params[:, sm]  # d exp(raw) = exp(raw)

    for j, i in zip((2, 1, 0), (6, 5, 4)):
        if j < 2:
            g *= cache.head_mask[j]
        grads[f"W{i}"] = cache.head_in[j].T @ g
        grads[f"b{i}"] = g.sum(axis=0)
        g = g @ w.W(i).T

    B, N = cache.batch_shape
    C = POINT_LAYERS[-1]
    gfeat = np.zeros((B, N, C), dtype=w.dtype)
    np.put_along_axis(gfeat, cache.pool_arg[:, None, :], g[:, None, :], axis=1)
    g = gfeat.reshape(B * N, C)

    for i in range(3, -1, -1):
        g *= cache.relu_mask[i]
        xhat = cache.xhat[i]
        gamma = w.bn(i, "gamma")
        n = g.shape[0]
        dgamma = np.einsum("nc,nc->c", g, xhat)
        grads[f"bn{i}_gamma"] = dgamma
        grads[f"bn{i}_beta"] = g.sum(axis=0)
        # batch-norm backward with batch statistics in the graph; reuse
        # sum(gxhat * xhat) = gamma * dgamma to avoid another full pass
        g *= gamma  # g is now d/dxhat
        g -= g.sum(axis=0) / n
        g -= xhat * ((gamma * dgamma) / n)
        g *= cache.inv_std[i]
        grads[f"W{i}"] = cache.layer_in[i].T @ g
        grads[f"b{i}"] = g.sum(axis=0)
        g = g @ w.W(i).T
    return grads


def encode_clouds(w: EncoderWeights, clouds: Sequence[PointCloud]) -> List[ParamVector]:
    """Eval-mode convenience wrapper."""
    vectors, _ = forward(w, clouds, mode="eval")
    return vectors


# --------------------------------------------------------------------------
# checkpoints

class CheckpointError(ValueError):
    pass


def save_checkpoint(
    w: EncoderWeights, path, step: int = 0, optimizer: Optional[Dict[str, np.ndarray]] = None
) -> None:
    """Write magic + JSON header + raw little-endian float32 tensors."""
    order = w.tensor_order()
    opt_names = []
    opt_tensors: Dict[str, np.ndarray] = {}
    if optimizer is not None:
        for name in sorted(optimizer):
            opt_names.append(name)
            opt_tensors[name] = optimizer[name]
    header = {
        "version": FORMAT_VERSION,
        "class_id": w.spec.class_id,
        "spec_hash": spec_hash(w.spec),
        "spec_config": spec_to_config(w.spec),
        "d": w.spec.d,
        "step": int(step),
        "tensors": [{"name": n, "shape": list(w.tensors[n].shape)} for n in order],
        "optimizer_tensors": [
            {"name": n, "shape": list(opt_tensors[n].shape)} for n in opt_names
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in order:
            fh.write(np.ascontiguousarray(w.tensors[n], dtype="<f4").tobytes())
        for n in opt_names:
            fh.write(np.ascontiguousarray(opt_tensors[n], dtype="<f4").tobytes())


def load_checkpoint(path, spec: Optional[TemplateSpec] = None):
    """Load (weights, meta). Verifies magic, version, spec hash and payload size.

    `meta` carries 'step' and, when present, the 'optimizer' tensor dict.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    if len(data) < len(MAGIC) + 4:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack_from("<I", data, len(MAGIC))
    hstart = len(MAGIC) + 4
    if len(data) < hstart + hlen:
        raise CheckpointError(f"{path}: truncated header")
    header = json.loads(data[hstart:hstart + hlen])
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('version')} unsupported "
            f"(expected {FORMAT_VERSION})"
        )
    file_spec = spec_from_config(header["spec_config"])
    if spec_hash(file_spec) != header["spec_hash"]:
        raise CheckpointError(f"{path}: stored spec hash does not match stored spec")
    if spec is not None and spec_hash(spec) != header["spec_hash"]:
        raise CheckpointError(
            f"{path}: checkpoint was trained for spec {header['class_id']} "
            f"({header['spec_hash'][:12]}...), requested {spec.class_id} "
            f"({spec_hash(spec)[:12]}...)"
        )
    offset = hstart + hlen
    tensors: Dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = size * 4
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated tensor data at {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(
            data, dtype="<f4", count=size, offset=offset
        ).reshape(entry["shape"]).copy()
        offset += nbytes
    optimizer: Optional[Dict[str, np.ndarray]] = None
    if header["optimizer_tensors"]:
        optimizer = {}
        for entry in header["optimizer_tensors"]:
            size = int(np.prod(entry["shape"])) if entry["shape"] else 1
            nbytes = size * 4
            if offset + nbytes > len(data):
                raise CheckpointError(f"{path}: truncated optimizer data at {entry['name']}")
            optimizer[entry["name"]] = np.frombuffer(
                data, dtype="<f4", count=size, offset=offset
            ).reshape(entry["shape"]).copy()
            offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    weights = EncoderWeights(file_spec, tensors, np.dtype(np.float32))
    meta = {"step": int(header["step"]), "optimizer": optimizer, "class_id": header["class_id"]}
    return weights, meta
