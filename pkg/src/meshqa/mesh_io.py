"""Mesh sequence containers and their on-disk formats.

Supported formats:

- OBJ (ASCII), restricted to ``v``, ``vt`` and ``f`` statements. ``vn`` and
  grouping/material statements are skipped; polygons are fan-triangulated.
- PPM (binary ``P6``, maxval 255) for textures, bit-exact. PNG is read and
  written through Pillow.
- Sequence manifests, either JSON or a line-oriented text format::

      fps 25
      identity subject01
      frame_000.obj texture.ppm
      frame_001.obj texture.ppm

  Paths are resolved relative to the manifest file.
"""

from __future__ import annotations

import io
import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

MID_GRAY = (128, 128, 128)


class MeshFormatError(ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StructuralError(ValueError):
    """Input parsed but does not describe a usable mesh or sequence."""


@dataclass
class TextureMap:
    """RGB raster, row-major with the top row first."""

    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise StructuralError(f"texture must be (H, W, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise StructuralError("texture dimensions must be >= 1")
        self.pixels = np.ascontiguousarray(px, dtype=np.uint8)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def constant(cls, width, height, color=MID_GRAY):
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:] = color
        return cls(px)

    def __eq__(self, other):
        if not isinstance(other, TextureMap):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass
class MeshFrame:
    """Indexed triangle mesh.

    ``faces`` holds position indices and ``face_uvs`` the matching uv indices
    (or ``None`` for meshes without texture coordinates). ``texture_id``
    indexes the owning sequence's texture table.
    """

    positions: np.ndarray  # (n, 3) float64
    faces: np.ndarray  # (m, 3) int64
    uvs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    face_uvs: Optional[np.ndarray] = None
    texture_id: Optional[int] = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        self.uvs = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
        if self.face_uvs is not None:
            self.face_uvs = np.asarray(self.face_uvs, dtype=np.int64).reshape(-1, 3)

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def has_uvs(self) -> bool:
        return self.face_uvs is not None and len(self.uvs) > 0

    def copy(self, **changes) -> "MeshFrame":
        fields = dict(
            positions=self.positions.copy(),
            faces=self.faces.copy(),
            uvs=self.uvs.copy(),
            face_uvs=None if self.face_uvs is None else self.face_uvs.copy(),
            texture_id=self.texture_id,
        )
        fields.update(changes)
        return MeshFrame(**fields)

    def violations(self) -> list[str]:
        out = []
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= self.n_vertices):
            out.append("face position index out of range")
        if self.face_uvs is not None:
            if self.face_uvs.shape != self.faces.shape:
                out.append("face uv index array shape differs from faces")
            elif self.face_uvs.size and (
                self.face_uvs.min() < 0 or self.face_uvs.max() >= len(self.uvs)
            ):
                out.append("face uv index out of range")
        f = self.faces
        if len(f) and np.any((f[:, 0] == f[:, 1]) & (f[:, 1] == f[:, 2])):
            out.append("degenerate face (three identical position indices)")
        if not np.all(np.isfinite(self.positions)):
            out.append("non-finite vertex position")
        return out

    def validate(self):
        problems = self.violations()
        if problems:
            raise StructuralError("; ".join(problems))

    def __eq__(self, other):
        if not isinstance(other, MeshFrame):
            return NotImplemented
        if (self.face_uvs is None) != (other.face_uvs is None):
            return False
        return (
            np.array_equal(self.positions, other.positions)
            and np.array_equal(self.faces, other.faces)
            and np.array_equal(self.uvs, other.uvs)
            and (self.face_uvs is None or np.array_equal(self.face_uvs, other.face_uvs))
            and self.texture_id == other.texture_id
        )


@dataclass
class MeshSequence:
    """Frames sampled at a fixed rate plus a shared texture table."""

    frames: list
    fps: int
    textures: list = field(default_factory=list)
    identity: str = ""

    @property
    def duration_s(self) -> float:
        return len(self.frames) / self.fps if self.fps else 0.0

    def __len__(self):
        return len(self.frames)

    def texture_for(self, frame: MeshFrame) -> Optional[TextureMap]:
        if frame.texture_id is None or frame.texture_id >= len(self.textures):
            return None
        return self.textures[frame.texture_id]

    def replace(self, frames=None, textures=None, fps=None) -> "MeshSequence":
        return MeshSequence(
            frames=list(self.frames if frames is None else frames),
            fps=self.fps if fps is None else fps,
            textures=list(self.textures if textures is None else textures),
            identity=self.identity,
        )


# --------------------------------------------------------------------------
# OBJ

_INDEX_RE = re.compile(r"^[+-]?\d+$")


def _obj_index(token, count, line_no, what):
    if not _INDEX_RE.match(token):
        raise MeshFormatError(f"malformed {what} index {token!r}", line_no)
    idx = int(token)
    if idx < 0:
        idx = count + idx  # relative indexing
    else:
        idx -= 1
    if idx < 0 or idx >= count:
        raise MeshFormatError(f"{what} index {token} out of range (have {count})", line_no)
    return idx


def parse_obj(text, stats=None) -> MeshFrame:
    """Parse the v/vt/f subset of Wavefront OBJ.

    ``text`` may be ``str`` or ``bytes`` (decoded as ASCII). Unsupported
    statements are skipped and counted in ``stats["skipped"]`` when a dict is
    passed; ``vn`` lines are ignored without counting.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("ascii")
        except UnicodeDecodeError as exc:
            raise MeshFormatError(f"non-ASCII input at byte {exc.start}") from None

    positions, uvs, faces, face_uvs = [], [], [], []
    any_uv_corner = False
    any_plain_corner = False
    skipped = 0

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshFormatError("vertex needs 3 coordinates", line_no)
            try:
                xyz = [float(p) for p in parts[1:4]]
            except ValueError:
                raise MeshFormatError(f"malformed number in {line!r}", line_no) from None
            positions.append(xyz)
        elif tag == "vt":
            if len(parts) < 3:
                raise MeshFormatError("texture coordinate needs 2 values", line_no)
            try:
                uvs.append([float(p) for p in parts[1:3]])
            except ValueError:
                raise MeshFormatError(f"malformed number in {line!r}", line_no) from None
        elif tag == "f":
            corners = parts[1:]
            if len(corners) < 3:
                raise MeshFormatError("face needs at least 3 corners", line_no)
            vi, ti = [], []
            for c in corners:
                sub = c.split("/")
                vi.append(_obj_index(sub[0], len(positions), line_no, "vertex"))
                if len(sub) > 1 and sub[1] != "":
                    ti.append(_obj_index(sub[1], len(uvs), line_no, "texture"))
                    any_uv_corner = True
                else:
                    any_plain_corner = True
            for k in range(1, len(vi) - 1):
                faces.append((vi[0], vi[k], vi[k + 1]))
                if len(ti) == len(vi):
                    face_uvs.append((ti[0], ti[k], ti[k + 1]))
        elif tag == "vn":
            continue
        else:
            skipped += 1

    if stats is not None:
        stats["skipped"] = skipped
    if skipped:
        log.warning("parse_obj: skipped %d unsupported statements", skipped)
    if not faces:
        raise StructuralError("mesh has no faces")
    if any_uv_corner and any_plain_corner:
        raise MeshFormatError("faces mix corners with and without texture indices")

    frame = MeshFrame(
        positions=np.array(positions, dtype=np.float64).reshape(-1, 3),
        faces=np.array(faces, dtype=np.int64),
        uvs=np.array(uvs, dtype=np.float64).reshape(-1, 2),
        face_uvs=np.array(face_uvs, dtype=np.int64) if any_uv_corner else None,
    )
    problems = frame.violations()
    if problems:
        raise StructuralError("; ".join(problems))
    return frame


def write_obj(frame: MeshFrame, header=None) -> str:
    """Serialize to OBJ text. Floats use ``repr`` so re-parsing is exact."""
    frame.validate()
    buf = io.StringIO()
    for line in header or ():
        buf.write(f"# {line}\n")
    for x, y, z in frame.positions.tolist():
        buf.write(f"v {x!r} {y!r} {z!r}\n")
    if frame.face_uvs is not None:
        for u, v in frame.uvs.tolist():
            buf.write(f"vt {u!r} {v!r}\n")
        for (a, b, c), (ta, tb, tc) in zip(
            (frame.faces + 1).tolist(), (frame.face_uvs + 1).tolist()
        ):
            buf.write(f"f {a}/{ta} {b}/{tb} {c}/{tc}\n")
    else:
        for a, b, c in (frame.faces + 1).tolist():
            buf.write(f"f {a} {b} {c}\n")
    return buf.getvalue()


# --------------------------------------------------------------------------
# Textures


def _ppm_tokens(data, count):
    """Read ``count`` whitespace-separated header tokens, honoring comments."""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MeshFormatError("truncated PPM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates header and raster
    if pos >= n or not data[pos : pos + 1].isspace():
        raise MeshFormatError("truncated PPM header")
    return tokens, pos + 1


def _load_ppm(data: bytes) -> TextureMap:
    tokens, offset = _ppm_tokens(data, 4)
    if tokens[0] != b"P6":
        raise MeshFormatError(f"unsupported PPM magic {tokens[0][:8]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise MeshFormatError("malformed PPM header") from None
    if width < 1 or height < 1:
        raise MeshFormatError("PPM dimension is zero")
    if maxval != 255:
        raise MeshFormatError(f"unsupported PPM maxval {maxval}")
    need = width * height * 3
    payload = data[offset : offset + need]
    if len(payload) < need:
        raise MeshFormatError(f"truncated PPM payload ({len(payload)} of {need} bytes)")
    px = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return TextureMap(px.copy())


def load_texture(data: bytes, format="ppm") -> TextureMap:
    if format == "ppm":
        return _load_ppm(bytes(data))
    if format == "png":
        from PIL import Image

        try:
            img = Image.open(io.BytesIO(data))
            img.load()
        except Exception as exc:
            raise MeshFormatError(f"unreadable PNG: {exc}") from None
        return TextureMap(np.asarray(img.convert("RGB")))
    raise ValueError(f"unsupported texture format {format!r}")


def dump_texture(tex: TextureMap, format="ppm", comment=None) -> bytes:
    """Encode a texture.

    ``comment`` (a string or list of lines) goes into PPM comment lines or a
    PNG text chunk.
    """
    lines = comment.splitlines() if isinstance(comment, str) else list(comment or ())
    if format == "ppm":
        note = "".join(f"# {line}\n" for line in lines)
        header = f"P6\n{note}{tex.width} {tex.height}\n255\n".encode("ascii")
        return header + tex.pixels.tobytes()
    if format == "png":
        from PIL import Image, PngImagePlugin

        info = PngImagePlugin.PngInfo()
        if lines:
            info.add_text("Comment", "\n".join(lines))
        buf = io.BytesIO()
        Image.fromarray(tex.pixels).save(buf, format="PNG", pnginfo=info)
        return buf.getvalue()
    raise ValueError(f"unsupported texture format {format!r}")


def texture_format_for(path) -> str:
    ext = os.path.splitext(str(path))[1].lower()
    return {".ppm": "ppm", ".png": "png"}.get(ext, "ppm")


def read_texture(path) -> TextureMap:
    with open(path, "rb") as fh:
        return load_texture(fh.read(), texture_format_for(path))


def write_texture(path, tex: TextureMap, comment=None):
    with open(path, "wb") as fh:
        fh.write(dump_texture(tex, texture_format_for(path), comment))


# --------------------------------------------------------------------------
# Manifests and sequences


@dataclass
class FrameRecord:
    mesh_path: str
    texture_path: Optional[str] = None


@dataclass
class SequenceManifest:
    frames: list  # of FrameRecord, paths absolute or relative to ``root``
    fps: int
    identity: str
    root: str = "."

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.root) / p

    def check(self):
        if not self.identity:
            raise StructuralError("manifest identity label is empty")
        if not self.frames:
            raise StructuralError("manifest lists no frames")
        for rec in self.frames:
            for p in (rec.mesh_path, rec.texture_path):
                if p is not None and not os.access(self.resolve(p), os.R_OK):
                    raise StructuralError(f"unreadable file {p}")

    def to_json(self) -> dict:
        return {
            "fps": self.fps,
            "identity": self.identity,
            "frames": [
                {"mesh_path": r.mesh_path, **({"texture_path": r.texture_path} if r.texture_path else {})}
                for r in self.frames
            ],
        }


def read_manifest(path) -> SequenceManifest:
    path = Path(path)
    text = path.read_text()
    root = str(path.parent)
    if text.lstrip().startswith("{"):
        try:
            obj = json.loads(text)
            frames = [FrameRecord(f["mesh_path"], f.get("texture_path")) for f in obj["frames"]]
            return SequenceManifest(frames, int(obj["fps"]), str(obj["identity"]), root)
        except (KeyError, TypeError, ValueError) as exc:
            raise MeshFormatError(f"bad JSON manifest {path}: {exc}") from None

    fps, identity, frames = None, None, []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "fps" and len(parts) == 2:
            try:
                fps = int(parts[1])
            except ValueError:
                raise MeshFormatError("fps must be an integer", line_no) from None
        elif parts[0] == "identity" and len(parts) == 2:
            identity = parts[1]
        elif len(parts) in (1, 2):
            frames.append(FrameRecord(*parts))
        else:
            raise MeshFormatError(f"unrecognised manifest line {line!r}", line_no)
    if fps is None or identity is None:
        raise MeshFormatError(f"manifest {path} lacks fps/identity header")
    return SequenceManifest(frames, fps, identity, root)


def write_manifest(path, manifest: SequenceManifest):
    Path(path).write_text(json.dumps(manifest.to_json(), indent=1) + "\n")


def load_sequence(manifest: SequenceManifest) -> MeshSequence:
    manifest.check()
    textures, tex_index, frames = [], {}, []
    for i, rec in enumerate(manifest.frames):
        try:
            frame = parse_obj(manifest.resolve(rec.mesh_path).read_bytes())
            if rec.texture_path is not None:
                key = str(manifest.resolve(rec.texture_path))
                if key not in tex_index:
                    tex_index[key] = len(textures)
                    textures.append(read_texture(key))
                frame.texture_id = tex_index[key]
        except (MeshFormatError, StructuralError) as exc:
            raise StructuralError(f"frame {i} ({rec.mesh_path}): {exc}") from exc
        frames.append(frame)
    seq = MeshSequence(frames, manifest.fps, textures, manifest.identity)
    report = validate_sequence(seq)
    if report.violations:
        raise StructuralError("; ".join(report.violations))
    return seq


def save_sequence(seq: MeshSequence, directory, texture_format="ppm", header=None) -> Path:
    """Write frames as OBJ plus textures; returns the JSON manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tex_names = []
    for k, tex in enumerate(seq.textures):
        name = f"texture_{k:03d}.{texture_format}"
        write_texture(directory / name, tex, comment=header)
        tex_names.append(name)
    records = []
    for i, frame in enumerate(seq.frames):
        name = f"frame_{i:04d}.obj"
        (directory / name).write_text(write_obj(frame, header=header))
        tex = tex_names[frame.texture_id] if frame.texture_id is not None else None
        records.append(FrameRecord(name, tex))
    manifest = SequenceManifest(records, seq.fps, seq.identity or "unnamed", str(directory))
    out = directory / "manifest.json"
    write_manifest(out, manifest)
    return out


@dataclass
class SequenceReport:
    frame_stats: list = field(default_factory=list)  # dicts per frame
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_sequence(seq: MeshSequence) -> SequenceReport:
    report = SequenceReport()
    if not isinstance(seq.fps, (int, np.integer)) or seq.fps <= 0:
        report.violations.append(f"fps must be a positive integer (got {seq.fps})")
    if not seq.frames:
        report.violations.append("sequence has no frames")
    for i, frame in enumerate(seq.frames):
        for v in frame.violations():
            report.violations.append(f"frame {i}: {v}")
        if frame.texture_id is not None and frame.texture_id >= len(seq.textures):
            report.violations.append(f"frame {i}: texture id {frame.texture_id} not in table")
        coverage = 0.0
        if frame.has_uvs:
            inside = np.all((frame.uvs >= 0) & (frame.uvs <= 1), axis=1)
            coverage = float(inside.mean()) if len(inside) else 0.0
        report.frame_stats.append(
            {"vertices": frame.n_vertices, "faces": frame.n_faces, "uv_in_unit_square": coverage}
        )
    return report
