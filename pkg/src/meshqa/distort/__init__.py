from meshqa.distort.corpus import (
    KINDS,
    REFERENCE_FACES,
    DistortionSpec,
    apply_recipe,
    enumerate_corpus,
    stage_seed,
)
from meshqa.distort.geometry import gaussian_noise, quantize_positions, quantize_uv
from meshqa.distort.simplify import simplify, simplify_frame
from meshqa.distort.temporal import temporal_discontinuity
from meshqa.distort.texture import color_noise, compress_texture, texture_downsample

__all__ = [
    "KINDS",
    "REFERENCE_FACES",
    "DistortionSpec",
    "apply_recipe",
    "color_noise",
    "compress_texture",
    "enumerate_corpus",
    "gaussian_noise",
    "quantize_positions",
    "quantize_uv",
    "simplify",
    "simplify_frame",
    "stage_seed",
    "temporal_discontinuity",
    "texture_downsample",
]
