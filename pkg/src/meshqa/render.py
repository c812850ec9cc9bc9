"""Orbit-camera software rasterizer.

Triangles are scan-converted in one vectorized pass: every triangle expands
to the pixel centres inside its screen bounding box, coverage is tested with
barycentric coordinates, and a depth resolve keeps the nearest fragment per
pixel (ties go to the lower face index). Texture coordinates are interpolated
perspective-correctly and sampled bilinearly. Triangles reaching behind the
near plane are discarded rather than clipped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from meshqa.mesh_io import MID_GRAY, MeshFrame, MeshSequence, TextureMap

log = logging.getLogger(__name__)

STILL_S = 1.0
SWEEP_S = 4.0


@dataclass(frozen=True)
class CameraPose:
    eye: tuple
    target: tuple
    up: tuple = (0.0, 1.0, 0.0)
    fov_deg: float = 45.0
    azimuth_deg: float = 0.0

    def __post_init__(self):
        view = np.subtract(self.target, self.eye)
        if not np.any(view):
            raise ValueError("eye and target coincide")
        if np.linalg.norm(np.cross(view, self.up)) < 1e-12 * np.linalg.norm(view):
            raise ValueError("up vector parallel to view direction")


@dataclass
class FrameBuffer:
    color: np.ndarray  # (h, w, 3) uint8
    depth: np.ndarray  # (h, w) float64, inf where empty

    @property
    def width(self) -> int:
        return self.color.shape[1]

    @property
    def height(self) -> int:
        return self.color.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FrameBuffer):
            return NotImplemented
        return np.array_equal(self.color, other.color) and np.array_equal(self.depth, other.depth)


@dataclass
class RenderConfig:
    width: int = 512
    height: int = 512
    fps: int = 25
    background: tuple = (255, 255, 255)
    shading: str = "textured"  # or "lambertian"
    orbit_radius_factor: float = 2.5
    fov_deg: float = 45.0
    elevation_deg: float = 0.0
    albedo: tuple = (200, 200, 200)
    ambient: float = 0.15

    def __post_init__(self):
        if min(self.width, self.height) < 16:
            raise ValueError("resolution must be at least 16 pixels")
        if self.fps < 1:
            raise ValueError("fps must be >= 1")
        if self.shading not in ("textured", "lambertian"):
            raise ValueError(f"unknown shading {self.shading!r}")

    @classmethod
    def square(cls, size, **kw):
        return cls(width=size, height=size, **kw)


def orbit_azimuth(t):
    """Camera azimuth in degrees at time ``t``: still for 1 s, then 90 deg/s."""
    if t < STILL_S:
        return 0.0
    return 360.0 * (t - STILL_S) / SWEEP_S


def orbit_pose(center, radius, azimuth_deg, elevation_deg=0.0, fov_deg=45.0) -> CameraPose:
    az, el = np.deg2rad(azimuth_deg), np.deg2rad(elevation_deg)
    c = np.asarray(center, dtype=float)
    offset = radius * np.array([np.sin(az) * np.cos(el), np.sin(el), np.cos(az) * np.cos(el)])
    return CameraPose(tuple(c + offset), tuple(c), (0.0, 1.0, 0.0), fov_deg, float(azimuth_deg))


def camera_path(duration_s, fps, subject_center, radius, elevation_deg=0.0, fov_deg=45.0):
    """One pose per frame; the subject faces the camera (+z) at azimuth 0."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = int(round(duration_s * fps))
    return [
        orbit_pose(subject_center, radius, orbit_azimuth(i / fps), elevation_deg, fov_deg)
        for i in range(n)
    ]


def _view_matrix(pose):
    eye = np.asarray(pose.eye, float)
    fwd = np.asarray(pose.target, float) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, pose.up)
    right /= np.linalg.norm(right)
    up = np.cross(right, fwd)
    rot = np.stack([right, up, -fwd])
    return rot, eye


def sample_bilinear(pixels, u, v):
    """Bilinear lookup with clamp-to-edge; ``v = 0`` is the bottom row."""
    h, w = pixels.shape[:2]
    x = np.clip(u * w - 0.5, 0, w - 1)
    y = np.clip((1.0 - v) * h - 0.5, 0, h - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    p = pixels.astype(np.float64)
    top = p[y0, x0] * (1 - fx) + p[y0, x1] * fx
    bot = p[y1, x0] * (1 - fx) + p[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def rasterize_frame(frame: MeshFrame, texture, pose: CameraPose, cfg: RenderConfig) -> FrameBuffer:
    """Render one mesh from one pose.

    With ``cfg.shading == "textured"`` the texture colour is written unlit
    (``None`` means uniform mid-gray); otherwise faces get two-sided
    Lambertian shading from a headlight.
    """
    W, H = cfg.width, cfg.height
    color = np.empty((H, W, 3), dtype=np.uint8)
    color[:] = cfg.background
    depth = np.full((H, W), np.inf)

    rot, eye = _view_matrix(pose)
    cam = (frame.positions - eye) @ rot.T  # camera looks down -z
    w = -cam[:, 2]
    near = 1e-3 * np.linalg.norm(np.subtract(pose.target, pose.eye))
    f = 1.0 / np.tan(np.deg2rad(pose.fov_deg) / 2)
    aspect = W / H
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (f / aspect * cam[:, 0] / w + 1) * 0.5 * W
        sy = (1 - f * cam[:, 1] / w) * 0.5 * H

    faces = frame.faces
    fw = w[faces]
    keep = np.all(fw > near, axis=1)
    X, Y = sx[faces], sy[faces]
    # bounding boxes of pixel centres (i + 0.5)
    x_lo = np.ceil(X.min(axis=1) - 0.5)
    x_hi = np.floor(X.max(axis=1) - 0.5)
    y_lo = np.ceil(Y.min(axis=1) - 0.5)
    y_hi = np.floor(Y.max(axis=1) - 0.5)
    with np.errstate(invalid="ignore"):
        keep &= (x_hi >= 0) & (y_hi >= 0) & (x_lo <= W - 1) & (y_lo <= H - 1)
    area = (X[:, 1] - X[:, 0]) * (Y[:, 2] - Y[:, 0]) - (X[:, 2] - X[:, 0]) * (Y[:, 1] - Y[:, 0])
    keep &= np.abs(area) > 1e-12
    fid = np.flatnonzero(keep)
    if fid.size == 0:
        return FrameBuffer(color, depth)

    x_lo = np.clip(x_lo[fid], 0, W - 1).astype(np.int64)
    x_hi = np.clip(x_hi[fid], 0, W - 1).astype(np.int64)
    y_lo = np.clip(y_lo[fid], 0, H - 1).astype(np.int64)
    y_hi = np.clip(y_hi[fid], 0, H - 1).astype(np.int64)
    nx = x_hi - x_lo + 1
    ny = y_hi - y_lo + 1
    counts = nx * ny
    total = int(counts.sum())
    owner = np.repeat(np.arange(fid.size), counts)
    local = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    px = x_lo[owner] + local % nx[owner]
    py = y_lo[owner] + local // nx[owner]

    Xf, Yf, A = X[fid][owner], Y[fid][owner], area[fid][owner]
    cx, cy = px + 0.5, py + 0.5
    x0, x1, x2 = Xf[:, 0] - cx, Xf[:, 1] - cx, Xf[:, 2] - cx
    y0, y1, y2 = Yf[:, 0] - cy, Yf[:, 1] - cy, Yf[:, 2] - cy
    l0 = x1 * y2 - x2 * y1
    l1 = x2 * y0 - x0 * y2
    l2 = x0 * y1 - x1 * y0
    b = np.stack([l0, l1, l2], axis=1) / A[:, None]
    inside = np.all(b >= 0, axis=1)
    owner, px, py, b = owner[inside], px[inside], py[inside], b[inside]
    if owner.size == 0:
        return FrameBuffer(color, depth)

    inv_w = 1.0 / fw[fid][owner]
    iw = np.einsum("ij,ij->i", b, inv_w)
    pix = py * W + px
    # nearest fragment first (largest 1/w), then lowest face index
    order = np.lexsort((owner, -iw, pix))
    pix_sorted = pix[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = pix_sorted[1:] != pix_sorted[:-1]
    win = order[first]
    owner, pix, b, iw, inv_w = owner[win], pix[win], b[win], iw[win], inv_w[win]
    faces_hit = fid[owner]

    if cfg.shading == "textured":
        if texture is None or not frame.has_uvs:
            rgb = np.broadcast_to(np.asarray(MID_GRAY, float), (pix.size, 3))
        else:
            tuv = frame.uvs[frame.face_uvs[faces_hit]]  # (k, 3, 2)
            wgt = b * inv_w / iw[:, None]
            uv = np.einsum("ij,ijk->ik", wgt, tuv)
            rgb = sample_bilinear(texture.pixels, uv[:, 0], uv[:, 1])
    else:
        p = frame.positions
        tri = faces[faces_hit]
        n = np.cross(p[tri[:, 1]] - p[tri[:, 0]], p[tri[:, 2]] - p[tri[:, 0]])
        n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
        light = -rot[2]  # towards the camera
        lam = np.abs(n @ light)
        shade = cfg.ambient + (1 - cfg.ambient) * lam
        rgb = shade[:, None] * np.asarray(cfg.albedo, float)

    flat = color.reshape(-1, 3)
    flat[pix] = np.clip(np.round(rgb), 0, 255).astype(np.uint8)
    depth.reshape(-1)[pix] = 1.0 / iw
    return FrameBuffer(color, depth)


def subject_frame(seq: MeshSequence):
    """Orbit centre and radius taken from the first frame's bounding box."""
    p = seq.frames[0].positions
    lo, hi = p.min(axis=0), p.max(axis=0)
    return (lo + hi) / 2, float(np.linalg.norm(hi - lo))


def render_sequence(seq: MeshSequence, cfg: RenderConfig, framing=None) -> list:
    """Render every frame along the orbit path.

    ``framing`` overrides the ``(centre, diagonal)`` pair so a distorted
    sequence can be shot from exactly the reference's cameras.
    """
    if not seq.frames:
        raise ValueError("empty sequence")
    center, diag = framing if framing is not None else subject_frame(seq)
    radius = cfg.orbit_radius_factor * diag
    poses = camera_path(len(seq.frames) / seq.fps, seq.fps, center, radius, cfg.elevation_deg, cfg.fov_deg)
    textured = cfg.shading == "textured"
    warned = False
    out = []
    for frame, pose in zip(seq.frames, poses):
        tex = seq.texture_for(frame) if textured else None
        if textured and tex is None and not warned:
            log.warning("render: no texture for sequence %r, using mid-gray", seq.identity)
            warned = True
        out.append(rasterize_frame(frame, tex, pose, cfg))
    return out


def sample_frames(frames, n=5):
    """``n`` frames at indices ``round(i * (N - 1) / (n - 1))``."""
    N = len(frames)
    if n < 1 or N < 1:
        raise ValueError("need n >= 1 and at least one frame")
    if n == 1:
        return [frames[0]]
    idx = [int(round(i * (N - 1) / (n - 1))) for i in range(n)]
    return [frames[i] for i in idx]


def crop_clips(frames, k=5):
    """Split into ``k`` contiguous clips; the first ``N % k`` get one extra frame."""
    N = len(frames)
    if k < 1:
        raise ValueError("k must be >= 1")
    base, extra = divmod(N, k)
    clips, start = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        clips.append(list(frames[start : start + size]))
        start += size
    return clips


def frame_to_texture(fb: FrameBuffer) -> TextureMap:
    return TextureMap(fb.color)
