"""Vertex-level distortions: Gaussian noise and uniform quantization."""

from __future__ import annotations

import numpy as np


def bbox_diagonal(frame) -> float:
    p = frame.positions
    return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))


def gaussian_noise(seq, level, seed):
    """Add i.i.d. N(0, (level * D)^2) noise to every coordinate.

    ``D`` is the bounding-box diagonal of the first frame. Frames draw from one
    generator in order, so the same seed scaled to another level gives the
    same noise pattern at a different amplitude.
    """
    if not seq.frames:
        raise ValueError("empty sequence")
    if level < 0:
        raise ValueError("noise level must be >= 0")
    if level == 0:
        return seq.replace(frames=[f.copy() for f in seq.frames])
    sigma = level * bbox_diagonal(seq.frames[0])
    rng = np.random.default_rng(seed)
    frames = []
    for f in seq.frames:
        noise = rng.standard_normal(f.positions.shape)
        frames.append(f.copy(positions=f.positions + sigma * noise))
    return seq.replace(frames=frames)


def quantize_uniform(x, lo, hi, bits):
    """Snap ``x`` to the nearest of ``2**bits`` levels spanning ``[lo, hi]``.

    Works per column; columns with ``hi == lo`` pass through unchanged. The
    reconstruction is a lerp so both box ends are reproduced exactly.
    """
    if not 1 <= bits <= 30:
        raise ValueError("bits must be in 1..30")
    x = np.asarray(x, dtype=np.float64)
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), x.shape[-1:])
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), x.shape[-1:])
    span = hi - lo
    steps = float(2 ** bits - 1)
    out = x.copy()
    ok = span > 0
    if np.any(ok):
        t = np.round((x[..., ok] - lo[ok]) / span[ok] * steps) / steps
        t = np.clip(t, 0.0, 1.0)
        out[..., ok] = lo[ok] * (1.0 - t) + hi[ok] * t
    return out


def sequence_bbox(seq):
    allp = np.vstack([f.positions for f in seq.frames])
    return allp.min(axis=0), allp.max(axis=0)


def quantize_positions(seq, bits, bbox=None):
    """Quantize positions over the all-frames bounding box (or ``bbox``)."""
    if not seq.frames:
        raise ValueError("empty sequence")
    lo, hi = sequence_bbox(seq) if bbox is None else bbox
    frames = [f.copy(positions=quantize_uniform(f.positions, lo, hi, bits)) for f in seq.frames]
    return seq.replace(frames=frames)


def quantize_uv(seq, bits):
    """Quantize texture coordinates to ``2**bits`` levels over [0, 1]."""
    frames = []
    for f in seq.frames:
        if len(f.uvs):
            frames.append(f.copy(uvs=quantize_uniform(f.uvs, 0.0, 1.0, bits)))
        else:
            frames.append(f.copy())
    return seq.replace(frames=frames)
