import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meshqa.distort import (
    DistortionSpec,
    apply_recipe,
    color_noise,
    compress_texture,
    enumerate_corpus,
    gaussian_noise,
    quantize_positions,
    quantize_uv,
    simplify,
    simplify_frame,
    temporal_discontinuity,
    texture_downsample,
)
from meshqa.distort.corpus import GN_LEVELS, MC_QUADS, stage_seed
from meshqa.distort.geometry import quantize_uniform, sequence_bbox
from meshqa.distort.texture import code_image, qp_step
from meshqa.features import dihedral_angles
from meshqa.mesh_io import MeshFrame, MeshSequence, TextureMap
from meshqa.metrics_fr import psnr
from meshqa.synthetic import atlas_texture, icosphere, subdivided_box

from oracles import point_triangle_distance


def textured(frame, tex, n=1, fps=5):
    return MeshSequence([frame.copy(texture_id=0) for _ in range(n)], fps, [tex], "t")


def gradient_texture(side=64):
    y, x = np.mgrid[0:side, 0:side]
    px = np.stack([x * 255 / (side - 1), y * 255 / (side - 1), (x + y) * 127 / (side - 1)], -1)
    return TextureMap(np.round(px).astype(np.uint8))


# --------------------------------------------------------------------------
# Gaussian noise


def test_gn_level_zero_is_identity(demo):
    out = gaussian_noise(demo, 0.0, seed=1)
    assert all(a == b for a, b in zip(out.frames, demo.frames))


def test_gn_std_on_dense_cube():
    cube = subdivided_box(41)
    assert cube.n_vertices >= 10_000
    seq = MeshSequence([cube], 25)
    out = gaussian_noise(seq, 0.020, seed=7)
    d = out.frames[0].positions - cube.positions
    assert abs(d.std() / (0.020 * np.sqrt(3)) - 1) < 0.05
    np.testing.assert_array_equal(out.frames[0].faces, cube.faces)


def test_gn_seeded_determinism(demo):
    a = gaussian_noise(demo, 0.01, seed=3)
    b = gaussian_noise(demo, 0.01, seed=3)
    c = gaussian_noise(demo, 0.01, seed=4)
    assert all(x.positions.tobytes() == y.positions.tobytes() for x, y in zip(a.frames, b.frames))
    assert a.frames[0] != c.frames[0]


def test_gn_displacement_grows_with_level(demo):
    disp = []
    for level in GN_LEVELS:
        out = gaussian_noise(demo, level, seed=11)
        disp.append(np.mean([np.linalg.norm(o.positions - r.positions, axis=1).mean()
                             for o, r in zip(out.frames, demo.frames)]))
    assert np.all(np.diff(disp) > 0)


def test_gn_corpus_levels():
    assert GN_LEVELS == (0.001, 0.004, 0.007, 0.010, 0.013, 0.016, 0.020)


def test_gn_empty_sequence():
    with pytest.raises(ValueError):
        gaussian_noise(MeshSequence([], 25), 0.01, 0)


# --------------------------------------------------------------------------
# Colour noise


def test_cn_zero_density_unchanged(demo):
    assert color_noise(demo, 0.0, 1).textures[0] == demo.textures[0]


def test_cn_full_density_black_or_white(demo):
    px = color_noise(demo, 1.0, 1).textures[0].pixels.reshape(-1, 3)
    assert np.all((px == 0).all(axis=1) | (px == 255).all(axis=1))


def test_cn_exact_count():
    rng = np.random.default_rng(0)
    # mid-range values so no noisy pixel can coincide with the original
    tex = TextureMap(rng.integers(1, 255, (100, 100, 3), dtype=np.uint8))
    out = color_noise(MeshSequence([], 5, [tex]), 0.1, seed=5).textures[0]
    assert np.count_nonzero((out.pixels != tex.pixels).any(axis=2)) == 1000
    white = (out.pixels == 255).all(axis=2).sum()
    assert 400 < white < 600


def test_cn_geometry_untouched(demo):
    out = color_noise(demo, 0.2, 1)
    assert all(a == b for a, b in zip(out.frames, demo.frames))


def test_cn_bad_density(demo):
    with pytest.raises(ValueError):
        color_noise(demo, 1.5, 0)


# --------------------------------------------------------------------------
# Texture downsampling


def test_td_same_side_identity(demo):
    assert texture_downsample(demo, demo.textures[0].width).textures[0] == demo.textures[0]


def test_td_constant_stays_constant():
    tex = TextureMap.constant(64, 64, (10, 200, 30))
    out = texture_downsample(MeshSequence([], 5, [tex]), 31).textures[0]
    assert (out.width, out.height) == (31, 31)
    assert np.all(out.pixels == [10, 200, 30])


def test_td_1024_to_31():
    out = texture_downsample(MeshSequence([], 5, [atlas_texture(1024)]), 31).textures[0]
    assert (out.width, out.height) == (31, 31)


def test_td_non_square_rejected():
    with pytest.raises(ValueError):
        texture_downsample(MeshSequence([], 5, [TextureMap.constant(8, 4)]), 4)


# --------------------------------------------------------------------------
# Simplification


def test_ms_target_equal_is_unchanged():
    ico = icosphere(3)
    assert simplify_frame(ico, ico.n_faces) == ico


def test_ms_target_above_is_unchanged():
    ico = icosphere(2)
    assert simplify_frame(ico, 10_000) == ico


def test_ms_icosphere_to_320():
    ico = icosphere(3)
    out = simplify_frame(ico, 320)
    assert 318 <= out.n_faces <= 320
    assert out.violations() == []
    tris = [tuple(map(tuple, ico.positions[f])) for f in ico.faces]
    worst = max(min(point_triangle_distance(tuple(p), *t) for t in tris) for p in out.positions)
    assert worst < 0.05


def test_ms_no_degenerate_faces_and_seams_kept(demo):
    frame = demo.frames[0]
    out = simplify_frame(frame, 400)
    assert 398 <= out.n_faces <= 400
    assert out.violations() == []
    p = out.positions[out.faces]
    area = np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    assert area.min() > 0
    # collapses keep endpoints, so every output uv is an original uv value
    original = {tuple(u) for u in frame.uvs.tolist()}
    assert all(tuple(u) in original for u in out.uvs.tolist())
    original_p = {tuple(x) for x in frame.positions.tolist()}
    assert all(tuple(x) in original_p for x in out.positions.tolist())


def test_ms_per_frame_and_texture_untouched(demo):
    seq = demo.replace(frames=demo.frames[:3])
    out = simplify(seq, 600)
    assert len(out.frames) == 3
    assert all(f.n_faces <= 600 for f in out.frames)
    assert out.textures[0] == seq.textures[0]


def test_ms_small_target_rejected(demo):
    with pytest.raises(ValueError):
        simplify_frame(demo.frames[0], 3)


# --------------------------------------------------------------------------
# Quantization


def test_pc_corners_unchanged():
    cube = subdivided_box(4)
    out = quantize_positions(MeshSequence([cube], 5), 6).frames[0]
    corner = np.all(np.isin(cube.positions, [-0.5, 0.5]), axis=1)
    np.testing.assert_array_equal(out.positions[corner], cube.positions[corner])


@pytest.mark.parametrize("bits", [6, 7, 8, 9])
def test_pc_error_bound(demo, bits):
    out = quantize_positions(demo, bits)
    lo, hi = sequence_bbox(demo)
    bound = (hi - lo) / (2 * (2**bits - 1))
    for o, r in zip(out.frames, demo.frames):
        assert np.all(np.abs(o.positions - r.positions) <= bound * (1 + 1e-12))
        np.testing.assert_array_equal(o.faces, r.faces)


def test_pc_degenerate_axis_passes_through():
    flat = MeshFrame([[0, 0, 0.3], [1, 0, 0.3], [0, 1, 0.3]], [[0, 1, 2]])
    out = quantize_positions(MeshSequence([flat], 5), 2).frames[0]
    np.testing.assert_array_equal(out.positions[:, 2], 0.3)


@given(
    st.lists(st.tuples(*[st.floats(-100, 100, allow_nan=False)] * 3), min_size=2, max_size=30),
    st.integers(1, 16),
)
def test_pc_idempotent(points, bits):
    p = np.array(points)
    lo, hi = p.min(axis=0), p.max(axis=0)
    once = quantize_uniform(p, lo, hi, bits)
    np.testing.assert_array_equal(quantize_uniform(once, lo, hi, bits), once)


def test_pc_twice_same_box_equals_once(demo):
    box = sequence_bbox(demo)
    once = quantize_positions(demo, 7, box)
    twice = quantize_positions(once, 7, box)
    assert all(a == b for a, b in zip(once.frames, twice.frames))


@pytest.mark.parametrize("bits", [7, 8, 9, 10])
def test_umc_bound_and_ends(demo, bits):
    frame = demo.frames[0].copy(uvs=np.vstack([demo.frames[0].uvs, [[0, 0], [1, 1]]]))
    out = quantize_uv(MeshSequence([frame], 5), bits).frames[0]
    assert np.all(np.abs(out.uvs - frame.uvs) <= 1 / (2 * (2**bits - 1)) * (1 + 1e-12))
    np.testing.assert_array_equal(out.uvs[-2:], [[0, 0], [1, 1]])


# --------------------------------------------------------------------------
# Texture coding


def test_tmc_step_mapping():
    assert qp_step(4) == 1.0
    assert qp_step(10) == 2.0
    assert qp_step(22) == 8.0


def test_tmc_fine_step_high_psnr():
    tex = gradient_texture()
    assert qp_step(1) < 1
    assert psnr(tex.pixels, code_image(tex.pixels, 1)) > 45


def test_tmc_constant_exact():
    tex = TextureMap.constant(20, 13, (17, 99, 250))
    for qp in (22, 37, 48, 50):
        np.testing.assert_array_equal(code_image(tex.pixels, qp), tex.pixels)


@pytest.mark.parametrize("tex", [atlas_texture(256, seed=3), gradient_texture(96)])
def test_tmc_psnr_non_increasing(tex):
    values = [psnr(tex.pixels, code_image(tex.pixels, qp)) for qp in (22, 37, 48, 50)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_tmc_padding_keeps_shape():
    tex = atlas_texture(30)
    assert code_image(tex.pixels, 37).shape == (30, 30, 3)


# --------------------------------------------------------------------------
# Temporal discontinuity


def numbered(n=125, fps=25):
    frames = [MeshFrame(np.eye(3) * (i + 1), [[0, 1, 2]]) for i in range(n)]
    return MeshSequence(frames, fps)


def label(f):
    return f.positions[0, 0] - 1


def test_dc_stuck_one_second():
    out = temporal_discontinuity(numbered(), "stuck", 1)
    assert len(out.frames) == 125
    assert [label(f) for f in out.frames[50:75]] == [50] * 25
    assert label(out.frames[75]) == 51


def test_dc_drop_two_seconds():
    out = temporal_discontinuity(numbered(), "drop", 2)
    assert len(out.frames) == 75
    assert label(out.frames[50]) == 100
    assert out.duration_s == 3


def test_dc_event_too_long():
    with pytest.raises(ValueError):
        temporal_discontinuity(numbered(), "drop", 3)


def test_dc_unknown_mode():
    with pytest.raises(ValueError):
        temporal_discontinuity(numbered(), "rewind", 1)


# --------------------------------------------------------------------------
# Recipes and corpus


def test_spec_json_round_trip():
    s = DistortionSpec("GTC", {"qp_bits": 6, "qt": 7, "tq": 50}, seed=9)
    assert DistortionSpec.from_json(json.loads(json.dumps(s.to_json()))) == s
    assert s.label == "GTC_6_7_50"


def test_unknown_kind():
    with pytest.raises(ValueError):
        DistortionSpec("XX")


def test_gtc_is_composition(demo):
    spec = DistortionSpec("GTC", {"qp_bits": 6, "qt": 7, "tq": 50})
    direct = compress_texture(quantize_uv(quantize_positions(demo, 6), 7), 50)
    out = apply_recipe(demo, spec)
    assert all(a == b for a, b in zip(out.frames, direct.frames))
    assert out.textures == direct.textures


def test_mc_face_budget(demo):
    spec = DistortionSpec("MC", {"qp_bits": 9, "qt": 10, "faces": 40000, "tq": 22})
    out = apply_recipe(demo.replace(frames=demo.frames[:2]), spec, face_scale=0.01)
    assert all(f.n_faces <= 400 for f in out.frames)


def test_mc_full_scale_budget(demo):
    spec = DistortionSpec("MC", {"qp_bits": 9, "qt": 10, "faces": 40000, "tq": 22})
    out = apply_recipe(demo.replace(frames=demo.frames[:2]), spec)
    assert all(f.n_faces <= 40000 for f in out.frames)


def test_corpus_counts_and_order():
    tex = enumerate_corpus(True)
    shape = enumerate_corpus(False)
    assert len(tex) == 60 and len(shape) == 26
    count = {}
    for s in tex:
        count[s.kind] = count.get(s.kind, 0) + 1
    assert count == {"GN": 7, "CN": 7, "TD": 7, "MS": 5, "TMC": 4, "PC": 4, "UMC": 4,
                     "PUC": 5, "GTC": 5, "MC": 8, "DC": 4}
    assert {s.kind for s in shape} == {"GN", "MS", "PC", "MC", "DC"}
    mc = [(s.params["qp_bits"], s.params["faces"]) for s in shape if s.kind == "MC"]
    assert len(mc) == len(set(mc)) == 6
    assert mc == [q for q in dict.fromkeys((a, c) for a, _, c, _ in MC_QUADS)]
    assert enumerate_corpus(True) == tex
    assert len({s.label for s in tex}) == 60
    dc = [(s.params["mode"], s.params["seconds"]) for s in tex if s.kind == "DC"]
    assert sorted(dc) == [("drop", 1), ("drop", 2), ("stuck", 1), ("stuck", 2)]


def test_corpus_seed_changes_stochastic_kinds_only():
    a, b = enumerate_corpus(True, seed=0), enumerate_corpus(True, seed=1)
    assert [s.params for s in a] == [s.params for s in b]
    assert a[0].seed != b[0].seed
    assert stage_seed(0, "GN") == stage_seed(0, "GN") != stage_seed(0, "CN")


def _frames_equal(a, b):
    return len(a.frames) == len(b.frames) and all(x == y for x, y in zip(a.frames, b.frames))


@pytest.mark.parametrize("spec", [s for s in enumerate_corpus(True) if s.kind != "MS"][::3], ids=lambda s: s.label)
def test_recipes_deterministic(demo, spec):
    seq = demo.replace(frames=demo.frames[:15])
    if spec.kind == "DC":
        seq = demo
    a, b = apply_recipe(seq, spec, face_scale=0.02), apply_recipe(seq, spec, face_scale=0.02)
    assert _frames_equal(a, b)
    assert [t.pixels.tobytes() for t in a.textures] == [t.pixels.tobytes() for t in b.textures]


@pytest.mark.parametrize("kind,params", [("GN", {"level": 0.01}), ("MS", {"faces": 20000}), ("PC", {"qp_bits": 7})])
def test_geometry_only_keeps_texture(demo, kind, params):
    seq = demo.replace(frames=demo.frames[:2])
    out = apply_recipe(seq, DistortionSpec(kind, params, seed=2), face_scale=0.02)
    assert out.textures[0].pixels.tobytes() == seq.textures[0].pixels.tobytes()


@pytest.mark.parametrize("kind,params", [("CN", {"density": 0.1}), ("TD", {"side": 52}), ("TMC", {"qp": 37})])
def test_texture_only_keeps_geometry(demo, kind, params):
    seq = demo.replace(frames=demo.frames[:2])
    out = apply_recipe(seq, DistortionSpec(kind, params, seed=2))
    for a, b in zip(out.frames, seq.frames):
        assert a.positions.tobytes() == b.positions.tobytes()
        assert a.uvs.tobytes() == b.uvs.tobytes()
        np.testing.assert_array_equal(a.faces, b.faces)


def test_umc_keeps_positions_and_texture(demo):
    seq = demo.replace(frames=demo.frames[:2])
    out = apply_recipe(seq, DistortionSpec("UMC", {"qt": 7}))
    assert all(a.positions.tobytes() == b.positions.tobytes() for a, b in zip(out.frames, seq.frames))
    assert out.textures[0] == seq.textures[0]
    assert any(not np.array_equal(a.uvs, b.uvs) for a, b in zip(out.frames, seq.frames))


def test_gn_keeps_dihedral_count(demo):
    seq = demo.replace(frames=demo.frames[:1])
    out = gaussian_noise(seq, 0.004, seed=1)
    assert len(dihedral_angles(out.frames[0])) == len(dihedral_angles(seq.frames[0]))
