"""Geometry, colour and stand-in visual/motion descriptors.

Geometry statistics are built on dihedral angles: the angle between the unit
normals of two triangles sharing an edge (0 when coplanar). Per analysed
frame the geometry descriptor holds seven numbers: mean, variance and
histogram entropy of the angles, generalized Gaussian shape and scale, and
Gamma shape and scale.

The visual and motion encoders are deterministic handcrafted statistics with
fixed output sizes: 192 numbers per sampled frame (8x8 patches times luma
mean, luma std and mean gradient magnitude) and 3 numbers per clip.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from meshqa.mesh_io import MeshFrame, MeshSequence
from meshqa.metrics_fr import luma

log = logging.getLogger(__name__)

ENTROPY_BINS = 64
GGD_BRACKET = (0.05, 10.0)
GAMMA_EPS = 1e-6
GRID = 8
N_FRAMES = 5
N_CLIPS = 5
GEOMETRY_FIELDS = ("mean", "variance", "entropy", "ggd_shape", "ggd_scale", "gamma_shape", "gamma_scale")


class FitWarning(UserWarning):
    """A distribution fit hit a bracket end and was clamped."""


# --------------------------------------------------------------------------
# Dihedral angles


@dataclass
class DihedralResult:
    angles: np.ndarray
    skipped_degenerate: int = 0
    skipped_nonmanifold: int = 0


def dihedral_angles(frame: MeshFrame, report=False):
    """Angles (radians) between normals of face pairs sharing an edge.

    Boundary edges are ignored; edges touching a zero-area face or shared by
    more than two faces are skipped and counted. Uses ``atan2(|n1 x n2|,
    n1 . n2)``, which equals ``arccos(n1 . n2)`` but stays accurate near 0.
    """
    p, f = frame.positions, frame.faces
    n = np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]])
    norm = np.linalg.norm(n, axis=1)
    degenerate = norm <= 1e-300
    n = n / np.where(degenerate, 1.0, norm)[:, None]

    m = len(f)
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    owner = np.tile(np.arange(m), 3)
    edges.sort(axis=1)
    key = edges[:, 0] * (len(p) + 1) + edges[:, 1]
    order = np.argsort(key, kind="stable")
    key, owner = key[order], owner[order]
    uniq, start, counts = np.unique(key, return_index=True, return_counts=True)

    pair = counts == 2
    fa = owner[start[pair]]
    fb = owner[start[pair] + 1]
    bad = degenerate[fa] | degenerate[fb]
    fa, fb = fa[~bad], fb[~bad]
    cross = np.linalg.norm(np.cross(n[fa], n[fb]), axis=1)
    dot = np.einsum("ij,ij->i", n[fa], n[fb])
    angles = np.arctan2(cross, dot)
    if report:
        return DihedralResult(angles, int(bad.sum()), int((counts > 2).sum()))
    return angles


# --------------------------------------------------------------------------
# Distribution statistics


def basic_stats(samples, bins=ENTROPY_BINS):
    """(mean, population variance, histogram entropy over [0, pi] in nats)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("no samples")
    # snap to 1e-12 so exact angles such as pi/2 land in a stable bin
    hist, _ = np.histogram(np.round(x, 12), bins=bins, range=(0.0, np.pi))
    prob = hist[hist > 0] / hist.sum() if hist.sum() else np.array([1.0])
    entropy = float(-(prob * np.log(prob)).sum())
    return float(x.mean()), float(x.var()), max(entropy, 0.0)


def ggd_ratio(alpha):
    """sigma^2 / E|x - mu|^2 for a generalized Gaussian of shape ``alpha``."""
    a = np.asarray(alpha, dtype=np.float64)
    return np.exp(gammaln(1 / a) + gammaln(3 / a) - 2 * gammaln(2 / a))


def fit_ggd(samples, tol=1e-12):
    """Moment-matching generalized Gaussian fit, returns ``(shape, scale)``.

    The shape solves ``ggd_ratio(shape) = var / mean_abs_dev**2`` by bisection
    on ``GGD_BRACKET``; out-of-range ratios clamp to the bracket end with a
    ``FitWarning``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 30:
        raise ValueError("need at least 30 samples")
    var = x.var()
    if not var > 0:
        raise ValueError("samples have zero variance")
    mad = np.mean(np.abs(x - x.mean()))
    rho = var / (mad * mad)

    lo, hi = GGD_BRACKET
    # ratio decreases with shape
    if rho >= ggd_ratio(lo):
        warnings.warn(f"GGD ratio {rho:.4g} above bracket, shape clamped to {lo}", FitWarning)
        alpha = lo
    elif rho <= ggd_ratio(hi):
        warnings.warn(f"GGD ratio {rho:.4g} below bracket, shape clamped to {hi}", FitWarning)
        alpha = hi
    else:
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if ggd_ratio(mid) > rho:
                lo = mid
            else:
                hi = mid
        alpha = 0.5 * (lo + hi)
    scale = np.sqrt(var) * np.exp(0.5 * (gammaln(1 / alpha) - gammaln(3 / alpha)))
    return float(alpha), float(scale)


def fit_gamma(samples):
    """Method-of-moments Gamma fit, returns ``(shape, scale)``.

    Zeros are allowed (dihedral angles of coplanar faces); the samples are
    then shifted by ``GAMMA_EPS``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("no samples")
    if np.any(x < 0):
        raise ValueError("Gamma fit needs non-negative samples")
    if np.any(x == 0):
        x = x + GAMMA_EPS
    mean, var = x.mean(), x.var()
    if not var > 0:
        raise ValueError("samples have zero variance")
    return float(mean * mean / var), float(var / mean)


def geometry_descriptor(frame: MeshFrame) -> np.ndarray:
    """Seven-number dihedral-angle descriptor of one mesh."""
    angles = dihedral_angles(frame)
    mean, var, ent = basic_stats(angles)
    alpha, beta = fit_ggd(angles)
    k, theta = fit_gamma(angles)
    return np.array([mean, var, ent, alpha, beta, k, theta])


def fg_scalar(seq: MeshSequence) -> float:
    """Std of dihedral angles per frame, averaged over all frames."""
    return float(np.mean([dihedral_angles(f).std() for f in seq.frames]))


# --------------------------------------------------------------------------
# Colour

_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65 = np.array([0.95047, 1.0, 1.08883])


def rgb_to_lab(rgb):
    """8-bit sRGB (D65) to CIELAB; returns the L, a, b planes."""
    c = np.asarray(getattr(rgb, "pixels", rgb), dtype=np.float64) / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _SRGB_TO_XYZ.T / _D65
    eps, kappa = 216 / 24389, 24389 / 27
    fxyz = np.where(xyz > eps, np.cbrt(xyz), (kappa * xyz + 16) / 116)
    L = 116 * fxyz[..., 1] - 16
    a = 500 * (fxyz[..., 0] - fxyz[..., 1])
    b = 200 * (fxyz[..., 1] - fxyz[..., 2])
    return L, a, b


def colorfulness(texture) -> float:
    _, a, b = rgb_to_lab(texture)
    return float(np.sqrt(a.std() ** 2 + b.std() ** 2))


def color_feature(seq: MeshSequence) -> float:
    """Chroma spread of each frame's texture, averaged over frames.

    Frames without a texture count as uniform gray (spread 0).
    """
    cache = {}
    values = []
    for frame in seq.frames:
        tid = frame.texture_id
        if tid is None or tid >= len(seq.textures):
            values.append(0.0)
            continue
        if tid not in cache:
            cache[tid] = colorfulness(seq.textures[tid])
        values.append(cache[tid])
    return float(np.mean(values))


# --------------------------------------------------------------------------
# Stand-in encoders


def _frame_luma(frame):
    return luma(getattr(frame, "color", frame))


def _patch_grid(img, grid=GRID):
    h, w = img.shape
    rows = np.linspace(0, h, grid + 1).astype(int)
    cols = np.linspace(0, w, grid + 1).astype(int)
    return [img[rows[i] : rows[i + 1], cols[j] : cols[j + 1]] for i in range(grid) for j in range(grid)]


def visual_frame_features(frame) -> np.ndarray:
    y = _frame_luma(frame)
    gy, gx = np.gradient(y)
    gmag = np.hypot(gx, gy)
    out = []
    for patch, gpatch in zip(_patch_grid(y), _patch_grid(gmag)):
        out += [patch.mean(), patch.std(), gpatch.mean()]
    return np.array(out)


def visual_features(frames) -> np.ndarray:
    """192 patch statistics per sampled frame, concatenated."""
    return np.concatenate([visual_frame_features(f) for f in frames])


def _downsample2(img):
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    img = img[:h, :w]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def clip_motion(clip) -> np.ndarray:
    """(mean, std) of absolute frame differences, and mean at half resolution."""
    if len(clip) < 2:
        return np.zeros(3)
    ys = [_frame_luma(f) for f in clip]
    diffs = np.stack([np.abs(b - a) for a, b in zip(ys, ys[1:])])
    per_step = diffs.reshape(len(diffs), -1).mean(axis=1)
    coarse = [_downsample2(y) for y in ys]
    coarse_diff = np.mean([np.abs(b - a).mean() for a, b in zip(coarse, coarse[1:])])
    return np.array([per_step.mean(), per_step.std(), coarse_diff])


def motion_features(clips) -> np.ndarray:
    return np.concatenate([clip_motion(c) for c in clips])


@dataclass
class FeatureVector:
    visual: np.ndarray
    motion: np.ndarray
    geometry: np.ndarray
    tags: dict = field(default_factory=dict)

    def concat(self) -> np.ndarray:
        return np.concatenate([self.visual, self.motion, self.geometry])

    @property
    def sizes(self):
        return (len(self.visual), len(self.motion), len(self.geometry))


def sequence_features(seq: MeshSequence, rendered, n_frames=N_FRAMES, n_clips=N_CLIPS, **tags) -> FeatureVector:
    """Visual, motion and geometry blocks for one rendered sequence."""
    from meshqa.render import crop_clips, sample_frames

    visual = visual_features(sample_frames(rendered, n_frames))
    motion = motion_features(crop_clips(rendered, n_clips))
    geometry = np.concatenate([geometry_descriptor(f) for f in sample_frames(seq.frames, n_frames)])
    fv = FeatureVector(visual, motion, geometry, dict(tags))
    if not np.all(np.isfinite(fv.concat())):
        raise ValueError("non-finite feature value")
    return fv
