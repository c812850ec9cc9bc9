"""Full-reference image metrics and temporal pooling over rendered frames.

All luminance-based metrics use BT.601 luma, ``Y = 0.299 R + 0.587 G + 0.114 B``
on the 0..255 scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
GMSD_C = 170.0
METRICS = ("psnr_rgb", "psnr_yuv", "ssim", "ms_ssim", "gmsd")


def _pixels(frame):
    arr = getattr(frame, "color", frame)
    return np.asarray(arr, dtype=np.float64)


def _check_pair(ref, dist):
    a, b = _pixels(ref), _pixels(dist)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return a, b


def luma(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 2:
        return rgb
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def rgb_to_yuv(rgb):
    """BT.601 full-range YCbCr, chroma centred on 128."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    u = 128 - 0.168736 * r - 0.331264 * g + 0.5 * b
    v = 128 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return np.stack([y, u, v], axis=-1)


def psnr_from_mse(mse, peak=255.0):
    if mse <= 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def psnr(ref, dist, space="rgb"):
    """PSNR in dB; ``math.inf`` for identical frames.

    In ``yuv`` space the per-channel MSEs are combined with weights 6:1:1.
    """
    a, b = _check_pair(ref, dist)
    if space == "rgb":
        mse = float(np.mean((a - b) ** 2))
    elif space == "yuv":
        d = (rgb_to_yuv(a) - rgb_to_yuv(b)) ** 2
        per = d.reshape(-1, 3).mean(axis=0)
        mse = float((6 * per[0] + per[1] + per[2]) / 8)
    else:
        raise ValueError(f"unknown colour space {space!r}")
    return psnr_from_mse(mse)


def _gaussian_window(size, sigma):
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, win):
    """Separable correlation keeping only full-window positions."""
    k = len(win)
    out = ndimage.correlate1d(img, win, axis=0, mode="constant")
    out = ndimage.correlate1d(out, win, axis=1, mode="constant")
    lo = k // 2
    hi_r = img.shape[0] - (k - 1 - lo)
    hi_c = img.shape[1] - (k - 1 - lo)
    return out[lo:hi_r, lo:hi_c]


def _ssim_maps(x, y, window=SSIM_WINDOW, sigma=SSIM_SIGMA, L=255.0, K1=0.01, K2=0.03):
    """Luminance term and contrast-structure term maps."""
    win = _gaussian_window(window, sigma)
    C1, C2 = (K1 * L) ** 2, (K2 * L) ** 2
    mx, my = _filter_valid(x, win), _filter_valid(y, win)
    sxx = _filter_valid(x * x, win) - mx * mx
    syy = _filter_valid(y * y, win) - my * my
    sxy = _filter_valid(x * y, win) - mx * my
    lum = (2 * mx * my + C1) / (mx * mx + my * my + C1)
    cs = (2 * sxy + C2) / (sxx + syy + C2)
    return lum, cs


def ssim(ref, dist, window=SSIM_WINDOW):
    """Mean SSIM of the luma planes over all valid window positions."""
    a, b = _check_pair(ref, dist)
    x, y = luma(a), luma(b)
    if min(x.shape) < window:
        raise ValueError(f"frame smaller than the {window}x{window} window")
    lum, cs = _ssim_maps(x, y, window)
    return float(np.mean(lum * cs))


def _halve(img):
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    img = img[:h, :w]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def ms_ssim(ref, dist, weights=MS_SSIM_WEIGHTS):
    """Multi-scale SSIM over ``len(weights)`` dyadic scales.

    Where a coarse scale is smaller than the 11-pixel window, the window
    shrinks to the largest odd size that fits (at least 3). Negative
    contrast-structure means are clipped to 0 before exponentiation.
    """
    a, b = _check_pair(ref, dist)
    x, y = luma(a), luma(b)
    n = len(weights)
    coarsest = min(x.shape) // 2 ** (n - 1)
    if coarsest < 3:
        raise ValueError(f"frame too small for {n} scales")
    result = 1.0
    for j, wgt in enumerate(weights):
        side = min(x.shape)
        window = min(SSIM_WINDOW, side if side % 2 else side - 1)
        lum, cs = _ssim_maps(x, y, window)
        if j == n - 1:
            value = float(np.mean(lum * cs))
        else:
            value = float(np.mean(cs))
            x, y = _halve(x), _halve(y)
        result *= max(value, 0.0) ** wgt
    return result


PREWITT = np.array([[1.0, 0.0, -1.0], [1.0, 0.0, -1.0], [1.0, 0.0, -1.0]]) / 3.0


def _gradient_magnitude(img):
    gx = ndimage.correlate(img, PREWITT, mode="nearest")
    gy = ndimage.correlate(img, PREWITT.T, mode="nearest")
    return np.sqrt(gx * gx + gy * gy)[1:-1, 1:-1]


def gmsd(ref, dist, c=GMSD_C):
    """Gradient magnitude similarity deviation (0 for identical frames)."""
    a, b = _check_pair(ref, dist)
    gr, gd = _gradient_magnitude(luma(a)), _gradient_magnitude(luma(b))
    gms = (2 * gr * gd + c) / (gr * gr + gd * gd + c)
    return float(np.std(gms))


FRAME_METRICS = {
    "psnr_rgb": lambda r, d: psnr(r, d, "rgb"),
    "psnr_yuv": lambda r, d: psnr(r, d, "yuv"),
    "ssim": ssim,
    "ms_ssim": ms_ssim,
    "gmsd": gmsd,
}


@dataclass
class MetricScore:
    metric: str
    per_frame: list
    pooled: float


def align_reference(refs, dists):
    """Truncate the reference timeline to the distorted one's length."""
    if len(dists) > len(refs):
        raise ValueError(f"distorted sequence longer than reference ({len(dists)} > {len(refs)})")
    return refs[: len(dists)]


def video_metric(refs, dists, metric) -> MetricScore:
    """Per-frame metric and its arithmetic mean over aligned frames."""
    fn = FRAME_METRICS[metric]
    refs = align_reference(refs, dists)
    if not dists:
        raise ValueError("no frames to compare")
    values = [fn(r, d) for r, d in zip(refs, dists)]
    return MetricScore(metric, values, float(np.mean(values)))
