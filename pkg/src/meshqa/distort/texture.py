"""Texture-map distortions: salt-and-pepper noise, resampling, transform coding."""

from __future__ import annotations

import numpy as np
from scipy import fft

from meshqa.mesh_io import TextureMap

BLOCK = 8


def _map_textures(seq, fn):
    return seq.replace(frames=[f.copy() for f in seq.frames], textures=[fn(k, t) for k, t in enumerate(seq.textures)])


def color_noise(seq, density, seed):
    """Set exactly ``round(density * W * H)`` pixels per texture to black or white.

    The pixel order is one seeded permutation, so at a fixed seed the noisy
    set at a lower density is a subset of the set at a higher one.
    """
    if not 0.0 <= density <= 1.0:
        raise ValueError("density must be in [0, 1]")
    rng = np.random.default_rng(seed)

    def apply(k, tex):
        n = tex.width * tex.height
        order = rng.permutation(n)
        white = rng.integers(0, 2, size=n).astype(bool)
        count = int(round(density * n))
        chosen = order[:count]
        flat = tex.pixels.reshape(-1, 3).copy()
        flat[chosen] = np.where(white[chosen, None], 255, 0)
        return TextureMap(flat.reshape(tex.pixels.shape))

    return _map_textures(seq, apply)


def resize_texture(tex: TextureMap, side: int) -> TextureMap:
    from PIL import Image

    if side < 1:
        raise ValueError("target side must be >= 1")
    if tex.width == side and tex.height == side:
        return TextureMap(tex.pixels.copy())
    img = Image.fromarray(tex.pixels).resize((side, side), Image.Resampling.BICUBIC)
    return TextureMap(np.asarray(img))


def texture_downsample(seq, target):
    """Bicubic resample of every (square) texture to ``target`` x ``target``."""

    def apply(k, tex):
        if tex.width != tex.height:
            raise ValueError(f"texture {k} is not square ({tex.width}x{tex.height})")
        return resize_texture(tex, int(target))

    return _map_textures(seq, apply)


def qp_step(qp):
    """Quantizer step for a codec-style QP: doubles every 6 QP, 1 at QP 4."""
    return 2.0 ** ((qp - 4) / 6.0)


def code_image(pixels, qp):
    """8x8 block DCT, uniform quantization at ``qp_step(qp)``, reconstruction.

    The DC coefficient uses ``min(step, 8)`` so flat integer blocks (DC a
    multiple of 8 in the orthonormal transform) come back exactly.
    """
    if not 0 <= qp <= 51:
        raise ValueError("QP must be in [0, 51]")
    h, w, c = pixels.shape
    ph, pw = -h % BLOCK, -w % BLOCK
    x = np.pad(pixels.astype(np.float64), ((0, ph), (0, pw), (0, 0)), mode="edge")
    H, W = x.shape[:2]
    blocks = x.reshape(H // BLOCK, BLOCK, W // BLOCK, BLOCK, c)
    coef = fft.dctn(blocks, axes=(1, 3), norm="ortho")
    step = np.full((BLOCK, BLOCK), qp_step(qp))
    step[0, 0] = min(step[0, 0], 8.0)
    step = step[None, :, None, :, None]
    coef = np.round(coef / step) * step
    rec = fft.idctn(coef, axes=(1, 3), norm="ortho").reshape(H, W, c)[:h, :w]
    return np.clip(np.round(rec), 0, 255).astype(np.uint8)


def compress_texture(seq, qp):
    return _map_textures(seq, lambda k, tex: TextureMap(code_image(tex.pixels, qp)))
