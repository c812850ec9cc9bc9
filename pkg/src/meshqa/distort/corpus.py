"""Distortion recipes and enumeration of the full distorted corpus."""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from meshqa.distort.geometry import gaussian_noise, quantize_positions, quantize_uv
from meshqa.distort.simplify import simplify
from meshqa.distort.temporal import temporal_discontinuity
from meshqa.distort.texture import color_noise, compress_texture, texture_downsample

KINDS = ("GN", "CN", "TD", "MS", "TMC", "PC", "UMC", "PUC", "GTC", "MC", "DC")
GEOMETRY_KINDS = ("GN", "MS", "PC", "MC", "DC")

GN_LEVELS = (0.001, 0.004, 0.007, 0.010, 0.013, 0.016, 0.020)
CN_LEVELS = (0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.4)
TD_SIDES = (512, 308, 205, 103, 82, 52, 31)
MS_FACES = (5000, 10000, 20000, 30000, 40000)
TMC_QP = (22, 37, 48, 50)
PC_BITS = (6, 7, 8, 9)
UMC_BITS = (7, 8, 9, 10)
PUC_PAIRS = ((6, 7), (7, 7), (8, 8), (9, 9), (9, 10))
GTC_TRIPLES = ((6, 7, 50), (7, 7, 37), (8, 8, 37), (9, 9, 37), (9, 9, 22))
MC_QUADS = (
    (6, 7, 5000, 50), (7, 7, 5000, 37), (7, 8, 10000, 50), (8, 8, 10000, 37),
    (8, 10, 10000, 22), (9, 9, 20000, 37), (9, 10, 20000, 22), (9, 10, 40000, 22),
)
DC_EVENTS = (("stuck", 1), ("stuck", 2), ("drop", 1), ("drop", 2))

# average face count of the scans the face targets were chosen for
REFERENCE_FACES = 80000


@dataclass(frozen=True)
class DistortionSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    textured: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distortion kind {self.kind!r}")

    @property
    def label(self) -> str:
        vals = "_".join(str(v) for v in self.params.values())
        return f"{self.kind}_{vals}" if vals else self.kind

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": int(self.seed), "textured": self.textured}

    @classmethod
    def from_json(cls, obj) -> "DistortionSpec":
        return cls(obj["kind"], dict(obj.get("params", {})), int(obj.get("seed", 0)), bool(obj.get("textured", True)))

    def __hash__(self):
        return hash((self.kind, json.dumps(self.params, sort_keys=True), self.seed, self.textured))


def stage_seed(root_seed, label) -> int:
    """Stable 64-bit seed for a named stage of a run."""
    ss = np.random.SeedSequence([int(root_seed) & 0xFFFFFFFF, zlib.crc32(label.encode())])
    return int(ss.generate_state(1, np.uint64)[0])


def apply_recipe(seq, spec: DistortionSpec, face_scale=1.0):
    """Apply ``spec`` to ``seq``.

    ``face_scale`` multiplies simplification targets; use it to run the
    corpus on meshes much smaller than the scans the targets were set for.
    Composite recipes run simplify, position quantization, uv quantization
    and texture coding in that order.
    """
    p, k = spec.params, spec.kind

    def faces(n):
        return max(4, int(round(n * face_scale)))

    if k == "GN":
        return gaussian_noise(seq, p["level"], spec.seed)
    if k == "CN":
        return color_noise(seq, p["density"], spec.seed)
    if k == "TD":
        return texture_downsample(seq, p["side"])
    if k == "TMC":
        return compress_texture(seq, p["qp"])
    if k == "UMC":
        return quantize_uv(seq, p["qt"])
    if k == "DC":
        return temporal_discontinuity(seq, p["mode"], p["seconds"])

    out = seq
    if "faces" in p:
        target = faces(p["faces"])
        if target < max(f.n_faces for f in seq.frames):
            out = simplify(out, target)
    if "qp_bits" in p:
        out = quantize_positions(out, p["qp_bits"])
    if "qt" in p:
        out = quantize_uv(out, p["qt"])
    if "tq" in p:
        out = compress_texture(out, p["tq"])
    return out


def enumerate_corpus(textured=True, seed=0) -> list:
    """All distortion recipes for one reference: 60 textured or 26 shape-only.

    Every recipe of one kind shares a seed, so stochastic levels differ only
    in amplitude.
    """

    def spec(kind, **params):
        return DistortionSpec(kind, params, stage_seed(seed, kind), textured)

    out = []
    out += [spec("GN", level=v) for v in GN_LEVELS]
    if textured:
        out += [spec("CN", density=v) for v in CN_LEVELS]
        out += [spec("TD", side=v) for v in TD_SIDES]
    out += [spec("MS", faces=v) for v in MS_FACES]
    if textured:
        out += [spec("TMC", qp=v) for v in TMC_QP]
    out += [spec("PC", qp_bits=v) for v in PC_BITS]
    if textured:
        out += [spec("UMC", qt=v) for v in UMC_BITS]
        out += [spec("PUC", qp_bits=a, qt=b) for a, b in PUC_PAIRS]
        out += [spec("GTC", qp_bits=a, qt=b, tq=c) for a, b, c in GTC_TRIPLES]
        out += [spec("MC", qp_bits=a, qt=b, faces=c, tq=d) for a, b, c, d in MC_QUADS]
    else:
        # without a texture only positions and face budget matter
        seen = set()
        for a, b, c, d in MC_QUADS:
            if (a, c) not in seen:
                seen.add((a, c))
                out.append(spec("MC", qp_bits=a, qt=b, faces=c, tq=d))
    out += [spec("DC", mode=m, seconds=s) for m, s in DC_EVENTS]
    return out
