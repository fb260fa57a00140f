"""Semi-supervised training: joint synthetic/realistic batches, the three
losses, the editing branch, Adam, and mean-vertex-error evaluation.

Per step, half the batch is synthetic (supervised in parameter space via
the squared L2 / squared geodesic distance and in shape space via exact
vertex correspondence) and half realistic (supervised only by the chamfer
similarity between a fresh sample of the decoded prediction and the
example's cloud). With the editing branch on, the same randomly drawn edit
is applied to the predicted and ground-truth parameters of every synthetic
example and the edited pair is supervised the same way. The total loss is

    alpha * (L_sem + L_sem') + beta * (L_rec + L_rec') + gamma * L_sim

with each term averaged over its branch's examples so the weights stay
batch-size independent.

Chamfer correspondences and the surface sampling pattern are treated as
constant within a step; `capture_step_structure` + `step_loss_and_grads`
expose exactly the function of the weights that the gradients differentiate,
which is what the finite-difference oracles probe.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dataset import Dataset, TrainingExample, build_dataset
from .encoder import EncoderWeights, backward, forward_raw, init_encoder
from .mesh import Mesh, PointCloud, sample_on_faces, sample_points
from .rng import derive
from .rotation import compose, compose_jacobian, squared_geodesic
from .spatial import SpatialIndex
from .templates import ParamVector, TemplateSpec, get_template_spec
from . import templates

__all__ = [
    "TrainConfig",
    "AdamState",
    "MveReport",
    "default_loss_weights",
    "loss_semantic",
    "loss_reconstruction",
    "loss_similarity",
    "sample_edit",
    "train_step",
    "train",
    "evaluate_mve",
    "TrainResult",
]

# loss weights (alpha, beta, gamma) per class
_CLASS_WEIGHTS = {
    "chair": (0.3, 30.0, 50.0),
    "airplane": (0.3, 200.0, 10.0),
    "humanoid": (0.03, 4.0, 1.0),
}
_CLASS_STEPS = {"chair": 6000, "airplane": 6000, "humanoid": 10000}


def default_loss_weights(class_id: str) -> Tuple[float, float, float]:
    return _CLASS_WEIGHTS[class_id]


@dataclass
class TrainConfig:
    class_id: str = "chair"
    alpha: float = 0.3
    beta: float = 30.0
    gamma: float = 50.0
    learning_rate: float = 1e-3
    batch_size: int = 16
    steps: int = 6000
    sample_count: int = 512
    edit_branch: bool = True
    n_synthetic: int = 4000
    n_realistic: int = 800
    data_seed: int = 0
    init_seed: int = 0
    train_seed: int = 0
    eval_every: int = 1000
    mve_thresholds: Tuple[float, ...] = (0.01, 0.02, 0.03)

    def __post_init__(self):
        if self.batch_size % 2 != 0 or self.batch_size < 2:
            raise ValueError("batch_size must be a positive even integer")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be non-negative")

    @classmethod
    def for_class(cls, class_id: str, **overrides) -> "TrainConfig":
        a, b, g = default_loss_weights(class_id)
        base = dict(class_id=class_id, alpha=a, beta=b, gamma=g,
                    steps=_CLASS_STEPS[class_id])
        base.update(overrides)
        return cls(**base)


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_weights(cls, w: EncoderWeights) -> "AdamState":
        names = w.trainable_names()
        return cls(
            m={n: np.zeros_like(w.tensors[n]) for n in names},
            v={n: np.zeros_like(w.tensors[n]) for n in names},
        )

    def flat_tensors(self) -> Dict[str, np.ndarray]:
        out = {f"adam_m_{k}": v for k, v in self.m.items()}
        out.update({f"adam_v_{k}": v for k, v in self.v.items()})
        return out


@dataclass(frozen=True)
class MveReport:
    """Fraction of test vertices with error below each threshold."""

    thresholds: Tuple[float, ...]
    fractions: Tuple[float, ...]
    n_shapes: int

    def __post_init__(self):
        fr = self.fractions
        if any(f < 0 or f > 1 for f in fr):
            raise ValueError("fractions must lie in [0, 1]")
        if any(fr[i] > fr[i + 1] + 1e-12 for i in range(len(fr) - 1)):
            raise ValueError("fractions must be non-decreasing in threshold")

    def as_rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.thresholds, self.fractions))


# --------------------------------------------------------------------------
# losses

def loss_semantic(pred: np.ndarray, gt: np.ndarray, spec: TemplateSpec):
    """Squared L2 over scale/translation components plus squared geodesic
    angle per rotation triple. Returns (value, gradient w.r.t. pred)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    grad = np.zeros_like(pred)
    value = 0.0
    off = 0
    for p in spec.params:
        if p.kind == templates.ROTATION:
            v, g = squared_geodesic(pred[off:off + 3], gt[off:off + 3])
            value += v
            grad[off:off + 3] = g
        else:
            diff = pred[off] - gt[off]
            value += diff * diff
            grad[off] = 2.0 * diff
        off += p.arity
    diff = pred[off:] - gt[off:]
    value += float(diff @ diff)
    grad[off:] = 2.0 * diff
    return float(value), grad


def loss_reconstruction(pred_vertices: np.ndarray, gt_vertices: np.ndarray):
    """Sum of per-vertex squared distances under exact correspondence."""
    pred_vertices = np.asarray(pred_vertices, dtype=np.float64)
    gt_vertices = np.asarray(gt_vertices, dtype=np.float64)
    if pred_vertices.shape != gt_vertices.shape:
        raise ValueError(
            f"vertex count mismatch: {pred_vertices.shape} vs {gt_vertices.shape}"
        )
    diff = pred_vertices - gt_vertices
    return float((diff * diff).sum()), 2.0 * diff


@dataclass(frozen=True)
class SimStructure:
    """Frozen sampling pattern and chamfer correspondences for one evaluation."""

    face_idx: np.ndarray
    bary: np.ndarray
    ab: np.ndarray  # sampled -> realistic nearest indices
    ba: np.ndarray  # realistic -> sampled nearest indices


def _mutual_nearest(a: np.ndarray, b: np.ndarray):
    """argmin correspondences in both directions from one Gram matrix."""
    d2 = (a * a).sum(axis=1)[:, None] - 2.0 * (a @ b.T) + (b * b).sum(axis=1)[None, :]
    return d2.argmin(axis=1), d2.argmin(axis=0)


def _sim_capture(pred_vertices, faces, realistic: PointCloud, sample_count, seed) -> SimStructure:
    mesh = Mesh(pred_vertices, faces)
    _, face_idx, bary = sample_points(mesh, sample_count, seed, return_pattern=True)
    sampled = sample_on_faces(mesh, face_idx, bary)
    ab, ba = _mutual_nearest(sampled, realistic.points)
    return SimStructure(face_idx, bary, ab, ba)


def _sim_eval(pred_vertices, faces, realistic: PointCloud, s: SimStructure):
    """Value and gradient of the chamfer similarity with frozen structure."""
    pred_vertices = np.asarray(pred_vertices, dtype=np.float64)
    a = (
        pred_vertices[faces[s.face_idx, 0]] * s.bary[:, 0:1]
        + pred_vertices[faces[s.face_idx, 1]] * s.bary[:, 1:2]
        + pred_vertices[faces[s.face_idx, 2]] * s.bary[:, 2:3]
    )
    b = realistic.points
    d1 = a - b[s.ab]
    d2 = b - a[s.ba]
    value = float((d1 * d1).sum() + (d2 * d2).sum())
    grad_a = 2.0 * d1
    np.add.at(grad_a, s.ba, -2.0 * d2)
    grad_v = np.zeros_like(pred_vertices)
    for k in range(3):
        np.add.at(grad_v, faces[s.face_idx, k], s.bary[:, k:k + 1] * grad_a)
    return value, grad_v


def loss_similarity(pred_vertices, faces, realistic: PointCloud, sample_count: int, seed: int):
    """Chamfer between a fresh area-uniform sample of the predicted mesh and
    the realistic cloud. Returns (value, gradient w.r.t. pred vertices,
    frozen structure); the gradient flows through the sampled points'
    barycentric weights with this evaluation's correspondences held fixed."""
    if realistic.count == 0:
        raise ValueError("realistic cloud is empty")
    structure = _sim_capture(pred_vertices, faces, realistic, sample_count, seed)
    value, grad = _sim_eval(pred_vertices, faces, realistic, structure)
    return value, grad, structure


# --------------------------------------------------------------------------
# editing branch

@dataclass(frozen=True)
class EditDraw:
    """One randomly drawn edit: replace a scale or compose a rotation."""

    param_index: int   # descriptor index
    offset: int        # first component offset in the value vector
    kind: str
    scale_value: float = 0.0
    rotation: Tuple[float, float, float] = (0.0, 0.0, 0.0)


def draw_edit(spec: TemplateSpec, seed: int) -> EditDraw:
    rng = derive(seed, 0xED17)
    k = int(rng.integers(len(spec.params)))
    desc = spec.params[k]
    off = spec.param_index(desc.name)
    if desc.kind == templates.SCALE:
        lo, hi = desc.bounds[0]
        return EditDraw(k, off, desc.kind, scale_value=float(rng.uniform(lo, hi)))
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-np.pi / 6.0, np.pi / 6.0)
    return EditDraw(k, off, desc.kind, rotation=tuple(axis * angle))


def apply_edit_draw(values: np.ndarray, draw: EditDraw) -> np.ndarray:
    out = np.asarray(values, dtype=np.float64).copy()
    if draw.kind == templates.SCALE:
        out[draw.offset] = draw.scale_value
    else:
        out[draw.offset:draw.offset + 3] = compose(
            np.array(draw.rotation), out[draw.offset:draw.offset + 3]
        )
    return out


def edit_draw_pullback(values: np.ndarray, draw: EditDraw, grad_edited: np.ndarray) -> np.ndarray:
    """Map a gradient w.r.t. the edited vector back to the original vector."""
    grad = np.asarray(grad_edited, dtype=np.float64).copy()
    if draw.kind == templates.SCALE:
        grad[draw.offset] = 0.0  # replaced component has no dependence
    else:
        D = compose_jacobian(np.array(draw.rotation), values[draw.offset:draw.offset + 3])
        grad[draw.offset:draw.offset + 3] = D.T @ grad[draw.offset:draw.offset + 3]
    return grad


def sample_edit(f: ParamVector, seed: int) -> ParamVector:
    """Randomly edit one semantic parameter: scales resample uniformly within
    bounds, rotations compose a rotation of angle U(-pi/6, pi/6) about a
    random axis. Deterministic for a fixed seed."""
    draw = draw_edit(f.spec, seed)
    return ParamVector(f.spec, apply_edit_draw(f.values, draw))


# --------------------------------------------------------------------------
# one training step

@dataclass
class StepStructure:
    """Everything random or piecewise-constant inside one step's loss."""

    synthetic: List[TrainingExample]
    realistic: List[TrainingExample]
    edits: Optional[List[EditDraw]]
    sim: List[SimStructure]
    sim_seeds: List[int]


@dataclass
class StepRecord:
    step: int
    l_sem: float
    l_sem_edit: float
    l_rec: float
    l_rec_edit: float
    l_sim: float
    total: float
    edited_decodes: int

    def as_row(self) -> List[float]:
        return [self.step, self.l_sem, self.l_sem_edit, self.l_rec,
                self.l_rec_edit, self.l_sim, self.total]


def _split_batch(batch: Sequence[TrainingExample]):
    synthetic = [e for e in batch if e.kind == "synthetic"]
    realistic = [e for e in batch if e.kind == "realistic"]
    if len(synthetic) != len(realistic):
        raise ValueError(
            f"batch must be half synthetic / half realistic, got "
            f"{len(synthetic)}/{len(realistic)}"
        )
    return synthetic, realistic


def capture_step_structure(
    w: EncoderWeights,
    batch: Sequence[TrainingExample],
    config: TrainConfig,
    step: int,
) -> StepStructure:
    """Freeze the step's random draws and piecewise-constant choices: the
    edit per synthetic example, and for each realistic example the surface
    sampling pattern and chamfer correspondences at the current weights.

    Forwards on a copy of the weights, so running statistics are untouched
    (the oracle path re-evaluates the loss at perturbed weights later)."""
    synthetic, realistic = _split_batch(batch)
    clouds = [e.cloud for e in synthetic + realistic]
    params, _ = forward_raw(w.copy(), clouds, mode="train")
    return _structure_from_params(
        params.astype(np.float64), synthetic, realistic, config, step, w.spec
    )


def _lenient_decode(spec, values) -> np.ndarray:
    """Decode without bound validation (encoder outputs can exceed rotation
    bounds early in training; scales are positive by construction)."""
    geom = templates._geometry(spec)
    if geom.kind == "rigid":
        verts = np.einsum("vcd,d->vc", geom.basis, values[: spec.d])
    else:
        verts, _ = templates._humanoid_lbs(geom, values)
        verts = verts * np.array([values[25], values[24], values[25]])
    return verts + values[spec.d:]


def _lenient_jacobian(spec, values) -> np.ndarray:
    geom = templates._geometry(spec)
    if geom.kind == "rigid":
        V = len(geom.base_vertices)
        J = np.zeros((V, 3, spec.total))
        J[:, :, : spec.d] = geom.basis
        for axis in range(3):
            J[:, axis, spec.d + axis] = 1.0
        return J.reshape(3 * V, spec.total)
    return templates._humanoid_jacobian(spec, geom, values)


def _loss_terms(params64: np.ndarray, structure: StepStructure, config: TrainConfig,
                spec: TemplateSpec):
    """Per-branch losses and the gradient w.r.t. the encoder outputs."""
    synthetic, realistic = structure.synthetic, structure.realistic
    n_s, n_r = len(synthetic), len(realistic)
    faces = spec.faces()
    grad_params = np.zeros_like(params64)
    l_sem = l_sem_e = l_rec = l_rec_e = l_sim = 0.0
    edited_decodes = 0

    for i, ex in enumerate(synthetic):
        pred = params64[i]
        gt = ex.label
        v, g = loss_semantic(pred, gt, spec)
        l_sem += v
        grad_params[i] += (config.alpha / n_s) * g

        pred_verts = _lenient_decode(spec, pred)
        v, gV = loss_reconstruction(pred_verts, ex.gt_vertices)
        l_rec += v
        J = _lenient_jacobian(spec, pred)
        grad_params[i] += (config.beta / n_s) * (J.T @ gV.reshape(-1))

        if structure.edits is not None:
            draw = structure.edits[i]
            pred_e = apply_edit_draw(pred, draw)
            gt_e = apply_edit_draw(gt, draw)
            v, g = loss_semantic(pred_e, gt_e, spec)
            l_sem_e += v
            grad_params[i] += (config.alpha / n_s) * edit_draw_pullback(pred, draw, g)

            pred_e_verts = _lenient_decode(spec, pred_e)
            gt_e_verts = _lenient_decode(spec, gt_e)
            edited_decodes += 2
            v, gV = loss_reconstruction(pred_e_verts, gt_e_verts)
            l_rec_e += v
            Je = _lenient_jacobian(spec, pred_e)
            g_edited = Je.T @ gV.reshape(-1)
            grad_params[i] += (config.beta / n_s) * edit_draw_pullback(pred, draw, g_edited)

    for j, ex in enumerate(realistic):
        row = n_s + j
        pred = params64[row]
        pred_verts = _lenient_decode(spec, pred)
        v, gV = _sim_eval(pred_verts, faces, ex.cloud, structure.sim[j])
        l_sim += v
        J = _lenient_jacobian(spec, pred)
        grad_params[row] += (config.gamma / n_r) * (J.T @ gV.reshape(-1))

    total = (
        config.alpha * (l_sem / n_s + (l_sem_e / n_s if structure.edits else 0.0))
        + config.beta * (l_rec / n_s + (l_rec_e / n_s if structure.edits else 0.0))
        + config.gamma * (l_sim / n_r)
    )
    if not math.isfinite(total):
        raise RuntimeError(
            "non-finite loss: "
            f"L_sem={l_sem / n_s:.4g} L_sem'={l_sem_e / n_s:.4g} "
            f"L_rec={l_rec / n_s:.4g} L_rec'={l_rec_e / n_s:.4g} "
            f"L_sim={l_sim / n_r:.4g}"
        )
    fields = {
        "l_sem": l_sem / n_s,
        "l_sem_edit": l_sem_e / n_s if structure.edits else 0.0,
        "l_rec": l_rec / n_s,
        "l_rec_edit": l_rec_e / n_s if structure.edits else 0.0,
        "l_sim": l_sim / n_r,
        "total": total,
        "edited_decodes": edited_decodes,
    }
    return fields, grad_params


def step_loss_and_grads(
    w: EncoderWeights,
    structure: StepStructure,
    config: TrainConfig,
    update_running: bool = True,
):
    """Evaluate the step loss at `w` with the structure frozen, returning
    (record fields, gradient dict over trainable tensors).

    This is exactly the function whose gradient the optimizer uses; the
    finite-difference oracle re-evaluates it at perturbed weights.
    """
    synthetic, realistic = structure.synthetic, structure.realistic
    clouds = [e.cloud for e in synthetic + realistic]
    target = w if update_running else w.copy()
    params, cache = forward_raw(target, clouds, mode="train")
    fields, grad_params = _loss_terms(params.astype(np.float64), structure, config, w.spec)
    grads = backward(target, cache, grad_params.astype(w.dtype))
    return fields, grads


def adam_update(w: EncoderWeights, adam: AdamState, grads: Dict[str, np.ndarray],
                learning_rate: float) -> None:
    adam.step += 1
    t = adam.step
    b1, b2, eps = adam.beta1, adam.beta2, adam.eps
    for name in w.trainable_names():
        g = grads[name].astype(w.dtype)
        adam.m[name] = b1 * adam.m[name] + (1 - b1) * g
        adam.v[name] = b2 * adam.v[name] + (1 - b2) * (g * g)
        m_hat = adam.m[name] / (1 - b1 ** t)
        v_hat = adam.v[name] / (1 - b2 ** t)
        w.tensors[name] = (
            w.tensors[name] - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        ).astype(w.dtype)


def _structure_from_params(params64, synthetic, realistic, config, step, spec) -> StepStructure:
    edits = None
    if config.edit_branch:
        edits = [
            draw_edit(spec, int(derive(config.train_seed, step, 10, i).integers(2 ** 62)))
            for i in range(len(synthetic))
        ]
    faces = spec.faces()
    sim, sim_seeds = [], []
    for j, ex in enumerate(realistic):
        seed = int(derive(config.train_seed, step, 20, j).integers(2 ** 62))
        sim_seeds.append(seed)
        verts = _lenient_decode(spec, params64[len(synthetic) + j])
        sim.append(_sim_capture(verts, faces, ex.cloud, config.sample_count, seed))
    return StepStructure(synthetic, realistic, edits, sim, sim_seeds)


def train_step(
    w: EncoderWeights,
    adam: AdamState,
    batch: Sequence[TrainingExample],
    config: TrainConfig,
    step: int = 0,
):
    """One optimization step; mutates `w` (weights + running stats) and
    `adam`, and returns (w, adam, StepRecord).

    Runs a single forward pass: the step's frozen structure (edit draws,
    sampling patterns, chamfer correspondences) is derived from the same
    predictions the losses use, exactly as in `capture_step_structure`.
    """
    synthetic, realistic = _split_batch(batch)
    clouds = [e.cloud for e in synthetic + realistic]
    params, cache = forward_raw(w, clouds, mode="train")
    params64 = params.astype(np.float64)
    structure = _structure_from_params(params64, synthetic, realistic, config, step, w.spec)
    fields, grad_params = _loss_terms(params64, structure, config, w.spec)
    grads = backward(w, cache, grad_params.astype(w.dtype))
    adam_update(w, adam, grads, config.learning_rate)
    record = StepRecord(step=step, **{k: fields[k] for k in (
        "l_sem", "l_sem_edit", "l_rec", "l_rec_edit", "l_sim", "total", "edited_decodes")})
    return w, adam, record


# --------------------------------------------------------------------------
# full runs

@dataclass
class TrainResult:
    weights: EncoderWeights
    adam: AdamState
    history: List[StepRecord]
    mve_history: List[Tuple[int, MveReport]]
    config: TrainConfig


class _Cycler:
    """Deterministic epoch-shuffled sampler over a pool of examples."""

    def __init__(self, pool: Sequence[TrainingExample], seed: int, tag: int):
        if not pool:
            raise ValueError("empty example pool")
        self.pool = list(pool)
        self.seed = seed
        self.tag = tag
        self.epoch = -1
        self.order: List[int] = []
        self.cursor = 0

    def take(self, n: int) -> List[TrainingExample]:
        out = []
        while len(out) < n:
            if self.cursor >= len(self.order):
                self.epoch += 1
                rng = derive(self.seed, self.tag, self.epoch)
                self.order = list(rng.permutation(len(self.pool)))
                self.cursor = 0
            out.append(self.pool[self.order[self.cursor]])
            self.cursor += 1
        return out


def train(
    config: TrainConfig,
    dataset: Optional[Dataset] = None,
    spec: Optional[TemplateSpec] = None,
    progress: bool = False,
) -> TrainResult:
    """Run the full training loop; deterministic given the config seeds."""
    if spec is None:
        spec = get_template_spec(config.class_id)
    if dataset is None:
        dataset = build_dataset(
            spec, config.n_synthetic, config.n_realistic,
            seed=config.data_seed, sample_count=config.sample_count,
        )
    w = init_encoder(spec, config.init_seed)
    adam = AdamState.for_weights(w)
    syn = _Cycler([e for e in dataset.train if e.kind == "synthetic"], config.train_seed, 1)
    rea = _Cycler([e for e in dataset.train if e.kind == "realistic"], config.train_seed, 2)
    half = config.batch_size // 2
    history: List[StepRecord] = []
    mve_history: List[Tuple[int, MveReport]] = []
    test_synthetic = [e for e in dataset.test if e.kind == "synthetic"]
    for step in range(config.steps):
        batch = syn.take(half) + rea.take(half)
        _, _, record = train_step(w, adam, batch, config, step)
        history.append(record)
        if progress and (step + 1) % 200 == 0:
            print(
                f"step {step + 1}/{config.steps} total={record.total:.5f} "
                f"sem={record.l_sem:.5f} rec={record.l_rec:.5f} sim={record.l_sim:.5f}",
                flush=True,
            )
        if config.eval_every and (step + 1) % config.eval_every == 0 and test_synthetic:
            mve_history.append(
                (step + 1, evaluate_mve(w, test_synthetic, config.mve_thresholds))
            )
    if test_synthetic and (not mve_history or mve_history[-1][0] != config.steps):
        mve_history.append((config.steps, evaluate_mve(w, test_synthetic, config.mve_thresholds)))
    return TrainResult(w, adam, history, mve_history, config)


def evaluate_mve(
    predictor,
    test_examples: Sequence[TrainingExample],
    thresholds: Sequence[float] = (0.01, 0.02, 0.03),
    batch: int = 64,
) -> MveReport:
    """Pooled fraction of vertices whose distance to ground truth is below
    each threshold, over decode(encode(cloud)) vs the stored vertices.

    `predictor` is EncoderWeights (eval-mode forward) or a callable mapping
    a PointCloud to a parameter value array (used by oracle tests).
    """
    synthetic = [e for e in test_examples if e.kind == "synthetic"]
    if not synthetic:
        raise ValueError("MVE evaluation needs synthetic test examples")
    thresholds = tuple(float(t) for t in sorted(thresholds))
    all_dists = []
    if isinstance(predictor, EncoderWeights):
        spec = predictor.spec
        for lo in range(0, len(synthetic), batch):
            chunk = synthetic[lo:lo + batch]
            params, _ = forward_raw(predictor, [e.cloud for e in chunk], mode="eval")
            for e, row in zip(chunk, params.astype(np.float64)):
                pred_verts = _lenient_decode(spec, row)
                all_dists.append(np.linalg.norm(pred_verts - e.gt_vertices, axis=1))
    else:
        spec = getattr(predictor, "spec", None)
        if spec is None:
            raise ValueError("callable predictors must expose a .spec attribute")
        for e in synthetic:
            row = np.asarray(predictor(e.cloud), dtype=np.float64)
            verts = _lenient_decode(spec, row)
            all_dists.append(np.linalg.norm(verts - e.gt_vertices, axis=1))
    dists = np.concatenate(all_dists)
    fractions = tuple(float((dists < t).mean()) for t in thresholds)
    return MveReport(thresholds, fractions, n_shapes=len(synthetic))
