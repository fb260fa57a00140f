import numpy as np
import pytest

from semedit.encoder import (
    CheckpointError,
    backward,
    forward,
    forward_raw,
    init_encoder,
    load_checkpoint,
    save_checkpoint,
)
from semedit.mesh import PointCloud
from semedit.rng import make_rng
from semedit.templates import get_template_spec


@pytest.fixture(scope="module")
def chair_weights():
    return init_encoder(get_template_spec("chair"), seed=0)


def random_batch(rng, B=4, N=64):
    return rng.normal(0.0, 0.25, size=(B, N, 3))


def test_init_deterministic():
    spec = get_template_spec("chair")
    a = init_encoder(spec, seed=5)
    b = init_encoder(spec, seed=5)
    for name in a.tensors:
        assert np.array_equal(a.tensors[name], b.tensors[name])
    c = init_encoder(spec, seed=6)
    assert any(not np.array_equal(a.tensors[n], c.tensors[n]) for n in a.tensors)


def test_final_layer_width_is_d_plus_3():
    w = init_encoder(get_template_spec("chair"), seed=0)
    assert w.W(6).shape == (8, 11)
    assert w.b(6).shape == (11,)
    wh = init_encoder(get_template_spec("humanoid"), seed=0)
    assert wh.W(6).shape == (27, 30)


def test_output_shapes(chair_weights):
    rng = make_rng(0)
    batch = random_batch(rng, B=16, N=128)
    params, cache = forward_raw(chair_weights, batch, mode="eval")
    assert params.shape == (16, 11)
    assert cache is None
    vectors, _ = forward(chair_weights, [PointCloud(b) for b in batch], mode="eval")
    assert len(vectors) == 16
    assert all(len(v.values) == 11 for v in vectors)


def test_permutation_invariance_exact(chair_weights):
    rng = make_rng(1)
    batch = random_batch(rng, B=3, N=100)
    base, _ = forward_raw(chair_weights, batch, mode="eval")
    permuted = batch[:, rng.permutation(100), :]
    again, _ = forward_raw(chair_weights, permuted, mode="eval")
    assert np.array_equal(base, again)


def test_scale_outputs_positive(chair_weights):
    rng = make_rng(2)
    for scale in (0.01, 1.0, 50.0):
        params, _ = forward_raw(chair_weights, random_batch(rng) * scale, mode="eval")
        assert (params[:, chair_weights.scale_mask()] > 0).all()


def test_eval_mode_is_pure(chair_weights):
    rng = make_rng(3)
    batch = random_batch(rng)
    before = {k: v.copy() for k, v in chair_weights.tensors.items()}
    forward_raw(chair_weights, batch, mode="eval")
    for k, v in chair_weights.tensors.items():
        assert np.array_equal(v, before[k])


def test_train_mode_updates_running_stats():
    w = init_encoder(get_template_spec("chair"), seed=1)
    rng = make_rng(4)
    before = w.bn(0, "mean").copy()
    forward_raw(w, random_batch(rng), mode="train")
    assert not np.array_equal(w.bn(0, "mean"), before)


def test_mismatched_point_counts_error(chair_weights):
    clouds = [PointCloud(np.zeros((8, 3)) + 0.1), PointCloud(np.zeros((9, 3)) + 0.1)]
    with pytest.raises(ValueError, match="mismatched"):
        forward(chair_weights, clouds)


def test_nan_input_error(chair_weights):
    batch = np.zeros((1, 4, 3))
    batch[0, 2, 1] = np.nan
    with pytest.raises(ValueError, match="NaN"):
        forward_raw(chair_weights, batch)


def test_zero_grad_out_gives_zero_grads():
    w = init_encoder(get_template_spec("chair"), seed=2, dtype=np.float64)
    rng = make_rng(5)
    _, cache = forward_raw(w, random_batch(rng), mode="train")
    grads = backward(w, cache, np.zeros_like(cache.raw))
    assert all(np.abs(g).max() == 0.0 for g in grads.values())


def test_backward_matches_finite_differences():
    spec = get_template_spec("chair")
    w = init_encoder(spec, seed=0, dtype=np.float64)
    rng = make_rng(6)
    batch = rng.normal(0, 0.2, size=(3, 32, 3))
    C = rng.normal(size=(3, spec.total))

    def loss_of(weights):
        p, _ = forward_raw(weights, batch, mode="train")
        return float((C * p).sum())

    _, cache = forward_raw(w, batch, mode="train")
    grads = backward(w, cache, C)
    gmax = max(np.abs(g).max() for g in grads.values())
    n_probes = 0
    h = 1e-5
    for name in w.trainable_names():
        g = grads[name].reshape(-1)
        informative = np.flatnonzero(np.abs(g) > 1e-8 * gmax)
        if len(informative) == 0:
            # pre-batch-norm biases: the batch mean subtraction cancels them,
            # so the true gradient is identically zero
            assert name in ("b0", "b1", "b2", "b3")
            continue
        idx = make_rng(hash(name) % 2**32).choice(informative, size=min(8, len(informative)), replace=False)
        for k in idx:
            w2 = w.copy()
            w2.tensors[name] = w2.tensors[name].copy()
            w2.tensors[name].reshape(-1)[k] += h
            lp = loss_of(w2)
            w2.tensors[name].reshape(-1)[k] -= 2 * h
            lm = loss_of(w2)
            fd = (lp - lm) / (2 * h)
            an = g[k]
            assert abs(fd - an) / max(abs(fd), abs(an), 1e-6) < 1e-3
            n_probes += 1
    assert n_probes >= 100


def test_duplicated_batch_same_gradients():
    # batch statistics are identical when the batch is duplicated, so a
    # batch-size-normalized loss gives the same gradients
    spec = get_template_spec("chair")
    w = init_encoder(spec, seed=3, dtype=np.float64)
    rng = make_rng(7)
    batch = rng.normal(0, 0.2, size=(2, 16, 3))
    C = rng.normal(size=(2, spec.total))

    _, cache1 = forward_raw(w.copy(), batch, mode="train")
    g1 = backward(w, cache1, C / 2.0)

    doubled = np.concatenate([batch, batch])
    _, cache2 = forward_raw(w.copy(), doubled, mode="train")
    g2 = backward(w, cache2, np.concatenate([C, C]) / 4.0)

    scale = max(np.abs(g).max() for g in g1.values())
    for name in g1:
        assert np.abs(g1[name] - g2[name]).max() / scale < 1e-6


def test_backward_requires_train_cache(chair_weights):
    with pytest.raises(ValueError, match="train-mode"):
        backward(chair_weights, type("C", (), {"raw": None})(), np.zeros((1, 11)))


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    spec = get_template_spec("chair")
    w = init_encoder(spec, seed=9)
    rng = make_rng(8)
    batch = random_batch(rng)
    base, _ = forward_raw(w, batch, mode="eval")
    path = tmp_path / "w.bin"
    save_checkpoint(w, path, step=17)
    w2, meta = load_checkpoint(path)
    assert meta["step"] == 17
    again, _ = forward_raw(w2, batch, mode="eval")
    assert np.array_equal(base, again)
    for name in w.tensors:
        assert np.array_equal(w.tensors[name], w2.tensors[name])


def test_checkpoint_optimizer_state_roundtrip(tmp_path):
    spec = get_template_spec("chair")
    w = init_encoder(spec, seed=9)
    opt = {"adam_m_W0": np.full((3, 64), 0.5, dtype=np.float32)}
    path = tmp_path / "w.bin"
    save_checkpoint(w, path, step=1, optimizer=opt)
    _, meta = load_checkpoint(path)
    assert np.array_equal(meta["optimizer"]["adam_m_W0"], opt["adam_m_W0"])


def test_checkpoint_truncated_errors(tmp_path):
    spec = get_template_spec("chair")
    w = init_encoder(spec, seed=9)
    path = tmp_path / "w.bin"
    save_checkpoint(w, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_checkpoint_magic_check(tmp_path):
    path = tmp_path / "bogus.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_checkpoint_spec_mismatch(tmp_path):
    airplane = init_encoder(get_template_spec("airplane"), seed=0)
    path = tmp_path / "air.bin"
    save_checkpoint(airplane, path)
    with pytest.raises(CheckpointError, match="chair"):
        load_checkpoint(path, spec=get_template_spec("chair"))
