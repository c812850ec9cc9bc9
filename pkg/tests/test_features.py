import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.spatial.transform import Rotation

from meshqa.distort import gaussian_noise, temporal_discontinuity
from meshqa.features import (
    FitWarning,
    basic_stats,
    clip_motion,
    color_feature,
    colorfulness,
    dihedral_angles,
    fg_scalar,
    fit_gamma,
    fit_ggd,
    geometry_descriptor,
    motion_features,
    rgb_to_lab,
    sequence_features,
    visual_features,
)
from meshqa.mesh_io import MeshFrame, MeshSequence, TextureMap
from meshqa.render import (
    RenderConfig,
    crop_clips,
    orbit_pose,
    rasterize_frame,
    render_sequence,
    subject_frame,
)
from meshqa.synthetic import icosphere, subdivided_box, unit_cube


def flat_grid(n=5):
    y, x = np.mgrid[0:n, 0:n]
    pos = np.column_stack([x.ravel(), y.ravel(), np.zeros(n * n)]).astype(float)
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            faces += [[a, a + 1, a + n + 1], [a, a + n + 1, a + n]]
    return MeshFrame(pos, faces)


# --------------------------------------------------------------------------
# Dihedral angles


def test_cube_angles():
    angles = np.sort(dihedral_angles(unit_cube()))
    assert len(angles) == 18
    np.testing.assert_allclose(angles[:6], 0, atol=1e-12)
    np.testing.assert_allclose(angles[6:], np.pi / 2, atol=1e-12)


def test_fg_cube_matches_direct_enumeration():
    values = np.array([np.pi / 2] * 12 + [0.0] * 6)
    seq = MeshSequence([unit_cube(), unit_cube()], 25)
    assert fg_scalar(seq) == pytest.approx(values.std(), abs=1e-12)
    assert fg_scalar(MeshSequence([unit_cube()], 25)) == pytest.approx(fg_scalar(seq), abs=0)


def test_flat_grid_zero():
    assert fg_scalar(MeshSequence([flat_grid()], 25)) == 0.0


def test_boundary_and_nonmanifold_edges_skipped():
    # three triangles sharing edge (0, 1)
    pos = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]
    frame = MeshFrame(pos, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    res = dihedral_angles(frame, report=True)
    assert len(res.angles) == 0 and res.skipped_nonmanifold == 1


def random_similarity(rng):
    rot = Rotation.random(random_state=rng).as_matrix()
    return rot, rng.uniform(0.2, 5.0), rng.normal(size=3) * 3


def test_descriptor_invariant_to_similarity(demo):
    rng = np.random.default_rng(0)
    frame = demo.frames[7]
    base = geometry_descriptor(frame)
    for _ in range(5):
        rot, s, t = random_similarity(rng)
        moved = frame.copy(positions=s * frame.positions @ rot.T + t)
        np.testing.assert_allclose(geometry_descriptor(moved), base, rtol=0, atol=1e-9)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_dihedral_invariant_property(seed):
    rng = np.random.default_rng(seed)
    frame = gaussian_noise(MeshSequence([icosphere(2)], 25), 0.01, seed).frames[0]
    rot, s, t = random_similarity(rng)
    moved = frame.copy(positions=s * frame.positions @ rot.T + t)
    np.testing.assert_allclose(dihedral_angles(moved), dihedral_angles(frame), atol=1e-9)


def test_descriptor_positive_on_corpus_like_meshes(demo):
    for frame in (demo.frames[0], icosphere(3), subdivided_box(6)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FitWarning)
            d = geometry_descriptor(frame)
        assert np.all(np.isfinite(d))
        assert d[1] >= 0 and d[2] >= 0 and np.all(d[3:] > 0)


# --------------------------------------------------------------------------
# Distribution fits


def test_basic_stats():
    mean, var, ent = basic_stats([0.5, 0.5, 0.5, 0.5])
    assert (mean, var, ent) == (0.5, 0.0, 0.0)
    _, _, ent = basic_stats(np.repeat((np.arange(64) + 0.5) * np.pi / 64, 100))
    assert ent == pytest.approx(np.log(64), abs=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 4.0])
def test_ggd_recovery(alpha):
    x = stats.gennorm.rvs(alpha, scale=0.7, size=100_000, random_state=np.random.default_rng(1))
    est, _ = fit_ggd(x)
    assert abs(est / alpha - 1) < 0.10


def test_ggd_gaussian_scale():
    x = np.random.default_rng(2).normal(0, 1.5, 100_000)
    alpha, beta = fit_ggd(x)
    # shape 2 has scale sigma * sqrt(2)
    assert alpha == pytest.approx(2, rel=0.05)
    assert beta == pytest.approx(1.5 * np.sqrt(2), rel=0.05)


def test_ggd_errors_and_clamp():
    with pytest.raises(ValueError):
        fit_ggd(np.ones(100))
    with pytest.raises(ValueError):
        fit_ggd([1.0, 2.0])
    two_point = np.array([0.0, 1.0] * 50)
    with pytest.warns(FitWarning):
        alpha, _ = fit_ggd(two_point)
    assert alpha == 10.0


def test_gamma_arithmetic():
    # samples with mean 2, population variance 2
    k, theta = fit_gamma([2 - np.sqrt(2), 2 + np.sqrt(2)])
    assert k == pytest.approx(2) and theta == pytest.approx(1)


@pytest.mark.parametrize("k", [1, 3, 9])
def test_gamma_recovery(k):
    x = np.random.default_rng(3).gamma(k, 0.5, 100_000)
    est, theta = fit_gamma(x)
    assert abs(est / k - 1) < 0.05
    assert abs(theta / 0.5 - 1) < 0.05


def test_gamma_constant_rejected():
    with pytest.raises(ValueError):
        fit_gamma(np.full(10, 2.0))


# --------------------------------------------------------------------------
# Colour


def test_lab_reference_points():
    L, a, b = rgb_to_lab(np.array([[[255, 255, 255], [0, 0, 0], [128, 128, 128]]], dtype=np.uint8))
    assert L[0, 0] == pytest.approx(100, abs=0.01) and abs(a[0, 0]) < 0.01 and abs(b[0, 0]) < 0.01
    assert (L[0, 1], a[0, 1], b[0, 1]) == (0, 0, 0)
    assert abs(a[0, 2]) < 0.5 and abs(b[0, 2]) < 0.5


def test_color_feature_constant_and_gray():
    const = MeshSequence([unit_cube().copy(texture_id=0)], 5, [TextureMap.constant(8, 8, (30, 120, 200))])
    assert color_feature(const) == pytest.approx(0, abs=1e-12)
    ramp = np.repeat(np.linspace(0, 255, 16).astype(np.uint8)[:, None, None], 3, axis=2)
    assert colorfulness(TextureMap(np.repeat(ramp, 4, axis=1))) < 0.01


def test_color_feature_two_colours():
    px = np.zeros((4, 4, 3), dtype=np.uint8)
    px[:, :2] = (255, 0, 0)
    px[:, 2:] = (0, 255, 0)
    _, a, b = rgb_to_lab(np.array([[[255, 0, 0], [0, 255, 0]]], dtype=np.uint8))
    # half/half binary image: std = |difference| / 2
    expected = np.hypot(a[0, 0] - a[0, 1], b[0, 0] - b[0, 1]) / 2
    assert colorfulness(TextureMap(px)) == pytest.approx(expected, rel=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_color_feature_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    px = rng.integers(0, 256, (6, 5, 3), dtype=np.uint8)
    perm = rng.permutation(px.reshape(-1, 3)).reshape(px.shape)
    assert colorfulness(TextureMap(px)) == pytest.approx(colorfulness(TextureMap(perm)), rel=1e-9)


def test_color_feature_untextured_frames():
    assert color_feature(MeshSequence([unit_cube()], 5)) == 0.0


# --------------------------------------------------------------------------
# Stand-in encoders


@pytest.fixture(scope="module")
def rendered(demo):
    return render_sequence(demo, RenderConfig.square(48))


def test_visual_constant_frame():
    v = visual_features([np.full((40, 40, 3), 77, dtype=np.uint8)])
    assert len(v) == 192
    np.testing.assert_array_equal(v[1::3], 0)
    np.testing.assert_array_equal(v[2::3], 0)


def test_visual_gradient_grows_with_gn(demo):
    cfg = RenderConfig.square(64)
    seq = demo.replace(frames=demo.frames[:1])
    framing = subject_frame(seq)
    grads = []
    for level in (0.0, 0.007, 0.020):
        fb = render_sequence(gaussian_noise(seq, level, 3), cfg, framing)
        grads.append(visual_features(fb)[2::3].mean())
    assert grads[0] < grads[1] < grads[2]


def test_motion_static_clip_zero():
    frame = np.random.default_rng(0).integers(0, 256, (16, 16, 3))
    np.testing.assert_array_equal(clip_motion([frame] * 4), 0)
    assert len(motion_features(crop_clips([frame] * 10))) == 15


def test_stuck_lowers_motion(demo, rendered):
    cfg = RenderConfig.square(48)
    stuck = render_sequence(temporal_discontinuity(demo, "stuck", 1), cfg, subject_frame(demo))
    ref_m = motion_features(crop_clips(rendered))
    out_m = motion_features(crop_clips(stuck))
    # onset 2 s at 5 fps freezes frames 10..14, which is clip 2
    assert out_m[6] < ref_m[6]


def test_drop_raises_splice_difference(demo):
    cfg = RenderConfig.square(48)
    center, diag = subject_frame(demo)
    pose = orbit_pose(center, cfg.orbit_radius_factor * diag, 0.0)

    def shots(seq):
        return [rasterize_frame(f, seq.texture_for(f), pose, cfg) for f in seq.frames]

    def step(frames, i):
        return np.abs(frames[i + 1].color.astype(float) - frames[i].color).mean()

    ref = shots(demo)
    dropped = shots(temporal_discontinuity(demo, "drop", 1))
    # fixed camera; frame 10 of the dropped sequence is source frame 15
    assert step(dropped, 9) > 2 * step(ref, 9)


def test_sequence_features_shape_and_determinism(demo, rendered):
    a = sequence_features(demo, rendered, item="x")
    b = sequence_features(demo, rendered)
    assert a.sizes == (960, 15, 35)
    assert a.concat().shape == (1010,)
    assert np.all(np.isfinite(a.concat()))
    np.testing.assert_array_equal(a.concat(), b.concat())
    assert a.tags["item"] == "x"
