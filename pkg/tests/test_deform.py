import numpy as np
import pytest

from semedit.dataset import augment_mesh
from semedit.deform import (
    EditSession,
    WeightConfig,
    apply_field,
    build_field,
    edit_shape,
    weight,
)
from semedit.encoder import init_encoder
from semedit.mesh import Mesh, compute_vertex_normals, normalize
from semedit.rng import make_rng
from semedit.spatial import SpatialIndex
from semedit.templates import (
    ParamVector,
    absorb_similarity,
    decode,
    decode_vertices,
    edit_params,
    get_template_spec,
    sample_params,
)


def aligned_setup(seed=5, edit=None):
    """Chair input that coincides with its own template decode, so field
    behavior is testable without a trained encoder."""
    spec = get_template_spec("chair")
    params = sample_params(spec, seed)
    mesh = decode(spec, params).mesh
    norm_mesh, tf = normalize(mesh)
    params_n = ParamVector(spec, absorb_similarity(spec, params.values, tf.scale, tf.center))
    edited = edit_params(params_n, edit or [])
    field = build_field(spec, params_n, edited, WeightConfig.for_class("chair"))
    inp = compute_vertex_normals(norm_mesh)
    return spec, params_n, field, inp


def test_weight_examples():
    cfg = WeightConfig(mode="rigid")
    n = np.array([0.0, 0.0, 1.0])
    x = np.array([0.1, 0.2, 0.3])
    assert abs(weight(x, n, x, n, cfg) - 4.0) < 1e-12  # (1+1)^2 * e^0
    # perpendicular normals at distance sigma -> 1 * e^-1
    v = x + np.array([cfg.sigma, 0.0, 0.0])
    n2 = np.array([1.0, 0.0, 0.0])
    assert abs(weight(x, n, v, n2, cfg) - np.exp(-1.0)) < 1e-9
    assert weight(x, n, v, n2, WeightConfig(mode="nonrigid")) == 1.0


def test_weight_config_validation():
    with pytest.raises(ValueError, match="mode"):
        WeightConfig(mode="magic")
    with pytest.raises(ValueError, match="k"):
        WeightConfig(k=0)
    with pytest.raises(ValueError, match="sigma"):
        WeightConfig(sigma=0.0)
    assert WeightConfig.for_class("humanoid").mode == "nonrigid"
    assert WeightConfig.for_class("humanoid").k == 4
    assert WeightConfig.for_class("chair").k == 8
    assert WeightConfig.for_class("chair").k_n == 2.0
    assert WeightConfig.for_class("chair").sigma == 0.03


def test_identity_field_zero_displacements():
    spec, params, field, inp = aligned_setup()
    assert np.abs(field.displacements).max() == 0.0
    out = apply_field(field, inp)
    assert np.array_equal(out.vertices, inp.vertices)  # bit-identical
    assert np.array_equal(out.faces, inp.faces)


def test_translation_only_field_uniform():
    spec = get_template_spec("chair")
    params = sample_params(spec, 7)
    t = np.array([0.05, -0.02, 0.01])
    edited_vals = params.values.copy()
    edited_vals[spec.d:] += t
    field = build_field(spec, params, ParamVector(spec, edited_vals), WeightConfig.for_class("chair"))
    assert np.abs(field.displacements - t).max() < 1e-15
    mesh = compute_vertex_normals(decode(spec, params).mesh)
    out = apply_field(field, mesh)
    assert np.abs(out.vertices - (mesh.vertices + t)).max() < 1e-12


def test_back_height_leaves_leg_displacements_zero():
    spec = get_template_spec("chair")
    params = sample_params(spec, 8)
    edited = edit_params(params, [{"name": "back_height", "op": "delta", "value": 0.1}])
    field = build_field(spec, params, edited, WeightConfig.for_class("chair"))
    labels = field.source.part_labels
    assert np.abs(field.displacements[labels >= 2]).max() == 0.0
    assert np.abs(field.displacements[labels == 1]).max() == 0.0
    assert np.abs(field.displacements[labels == 0]).max() > 0.0


def test_k1_matches_brute_force_nearest():
    spec, params_n, _, inp = aligned_setup(seed=9)
    edited = edit_params(params_n, [{"name": "seat_depth", "op": "delta", "value": 0.08}])
    field = build_field(spec, params_n, edited, WeightConfig(k=1, mode="nonrigid"))
    out = apply_field(field, inp)
    # oracle: brute-force nearest synthetic vertex (ties by index)
    src = field.source.mesh.vertices
    for i in range(0, inp.vertex_count, 17):
        d2 = ((inp.vertices[i] - src) ** 2).sum(axis=1)
        j = int(np.argmin(d2))
        expected = inp.vertices[i] + field.displacements[j]
        assert np.abs(out.vertices[i] - expected).max() < 1e-15


def test_convexity_bound():
    rng = make_rng(3)
    spec = get_template_spec("chair")
    for trial in range(5):
        params = sample_params(spec, 50 + trial)
        edited = sample_params(spec, 150 + trial)
        field = build_field(spec, params, edited, WeightConfig(k=6, mode="nonrigid"))
        pts = rng.normal(0, 0.4, size=(300, 3))
        mesh = Mesh(pts, np.zeros((0, 3), dtype=int))
        out = apply_field(field, mesh)
        move = np.linalg.norm(out.vertices - pts, axis=1)
        idx, _ = field.index.query(pts, 6)
        neighbor_max = np.linalg.norm(field.displacements[idx], axis=2).max(axis=1)
        assert (move <= neighbor_max + 1e-9).all()


def test_apply_field_commutes_with_translation():
    spec, params_n, _, inp = aligned_setup(seed=11)
    edited = edit_params(params_n, [{"name": "leg_height", "op": "delta", "value": 0.1}])
    cfg = WeightConfig.for_class("chair")
    field = build_field(spec, params_n, edited, cfg)
    out = apply_field(field, inp)

    t = np.array([0.3, -0.2, 0.5])
    params_t = params_n.values.copy()
    params_t[spec.d:] += t
    edited_t = edited.values.copy()
    edited_t[spec.d:] += t
    field_t = build_field(spec, ParamVector(spec, params_t), ParamVector(spec, edited_t), cfg)
    inp_t = Mesh(inp.vertices + t, inp.faces, inp.vertex_normals)
    out_t = apply_field(field_t, inp_t)
    assert np.abs(out_t.vertices - (out.vertices + t)).max() < 1e-9


def test_locality_all_zero_neighborhoods_do_not_move():
    spec, params_n, _, inp = aligned_setup(
        seed=13, edit=[{"name": "back_height", "op": "delta", "value": 0.15}])
    edited = edit_params(params_n, [{"name": "back_height", "op": "delta", "value": 0.15}])
    cfg = WeightConfig.for_class("chair")
    field = build_field(spec, params_n, edited, cfg)
    out = apply_field(field, inp)
    idx, _ = field.index.query(inp.vertices, cfg.k)
    zero_nbhd = (np.abs(field.displacements[idx]).max(axis=(1, 2)) == 0.0)
    assert zero_nbhd.sum() > 0
    move = np.linalg.norm(out.vertices - inp.vertices, axis=1)
    assert move[zero_nbhd].max() < 1e-6


def test_topology_preserved():
    spec, params_n, _, inp = aligned_setup(seed=15)
    edited = edit_params(params_n, [{"name": "shared_width", "op": "delta", "value": 0.1}])
    field = build_field(spec, params_n, edited, WeightConfig.for_class("chair"))
    out = apply_field(field, inp)
    assert np.array_equal(out.faces, inp.faces)


def test_rigid_mode_requires_normals():
    spec, params_n, field, inp = aligned_setup(seed=17)
    bare = Mesh(inp.vertices, inp.faces)
    with pytest.raises(ValueError, match="normals"):
        apply_field(field, bare)
    nonrigid = build_field(spec, params_n, params_n, WeightConfig(k=4, mode="nonrigid"))
    out = apply_field(nonrigid, bare)  # nonrigid mode never needs normals
    assert np.array_equal(out.vertices, bare.vertices)


def test_weight_sum_fallback_antiparallel_normals():
    # all neighbors anti-parallel and far: weights vanish, fall back to the
    # unweighted mean of the k displacements
    spec = get_template_spec("chair")
    params = sample_params(spec, 19)
    edited = edit_params(params, [{"name": "leg_height", "op": "set", "value": 0.9}])
    field = build_field(spec, params, edited, WeightConfig(k=4, mode="rigid"))
    probe = np.array([[0.0, 5.0, 0.0]])  # far above: exp term underflows to 0
    idx, _ = field.index.query(probe, 4)
    mean_disp = field.displacements[idx[0]].mean(axis=0)
    mesh = Mesh(probe, np.zeros((0, 3), dtype=int), np.array([[0.0, 0.0, 1.0]]))
    out = apply_field(field, mesh)
    assert np.abs(out.vertices[0] - (probe[0] + mean_disp)).max() < 1e-12


def test_edit_shape_identity_both_frames():
    spec = get_template_spec("chair")
    weights = init_encoder(spec, seed=1)
    base = decode(spec, sample_params(spec, 21)).mesh
    mesh = augment_mesh(base, seed=2)
    big = Mesh(mesh.vertices * 37.5 + np.array([10.0, -4.0, 2.0]), mesh.faces)

    session = EditSession(weights, big, seed=3)
    moved = apply_field(
        build_field(spec, session.params, session.params, session.config),
        session.mesh_normalized,
    )
    assert np.abs(moved.vertices - session.mesh_normalized.vertices).max() < 1e-9
    out = session.deform([])
    assert np.abs(out.vertices - big.vertices).max() < 1e-6
    assert np.array_equal(out.faces, big.faces)


def test_edit_shape_spec_mismatch():
    chair = get_template_spec("chair")
    airplane = get_template_spec("airplane")
    weights = init_encoder(chair, seed=1)
    mesh = decode(airplane, sample_params(airplane, 0)).mesh
    with pytest.raises(ValueError, match="does not match"):
        edit_shape(weights, airplane, mesh, [])


def test_session_template_overlay_frame():
    spec = get_template_spec("chair")
    weights = init_encoder(spec, seed=1)
    mesh = decode(spec, sample_params(spec, 23)).mesh
    session = EditSession(weights, mesh, seed=4)
    overlay = session.decode_template([])
    # overlay lives in the input frame: its extent should be commensurate
    assert overlay.mesh.vertex_count == spec.vertex_count
    in_extent = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
    ov_extent = overlay.mesh.vertices.max(axis=0) - overlay.mesh.vertices.min(axis=0)
    assert (ov_extent < 10 * in_extent.max()).all()
