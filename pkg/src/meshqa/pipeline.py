"""Batch orchestration: distort, render, score, featurize, rate, evaluate.

Every stage reads and writes plain files so runs can be resumed or inspected
between steps. Output is a pure function of the inputs, flags and root seed;
nothing time- or host-dependent is recorded, so repeated runs are
byte-identical.

Artifacts
---------
corpus manifest (``corpus.json``)
    reference sequences plus one entry per distorted sequence.
render manifest (``render.json``)
    one PPM frame directory per rendered sequence.
CSV tables
    comma separated, header row, UTF-8, floats written with ``repr``.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from meshqa import __version__
from meshqa.distort import REFERENCE_FACES, DistortionSpec, apply_recipe, enumerate_corpus, stage_seed
from meshqa.features import color_feature, fg_scalar, sequence_features
from meshqa.mesh_io import (
    TextureMap,
    dump_texture,
    load_sequence,
    load_texture,
    read_manifest,
    save_sequence,
)
from meshqa.metrics_fr import METRICS, video_metric
from meshqa.render import FrameBuffer, RenderConfig, render_sequence, subject_frame

log = logging.getLogger(__name__)

CORPUS_FORMAT = "meshqa-corpus"
RENDER_FORMAT = "meshqa-render"
REFERENCE_KIND = "REF"


# --------------------------------------------------------------------------
# Provenance


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class Provenance:
    command: str
    seed: int
    inputs: dict = field(default_factory=dict)  # display path -> sha256
    version: str = __version__

    @classmethod
    def of(cls, command, seed, paths=()):
        return cls(command, int(seed), {str(p): sha256_file(p) for p in paths})

    def to_json(self) -> dict:
        return {
            "tool": "meshqa",
            "version": self.version,
            "command": self.command,
            "seed": self.seed,
            "inputs": dict(sorted(self.inputs.items())),
        }

    def lines(self) -> list:
        out = [f"meshqa {self.version} {self.command} seed={self.seed}"]
        out += [f"input {p} sha256={h}" for p, h in sorted(self.inputs.items())]
        return out

    def write_sidecar(self, path) -> Path:
        side = Path(str(path) + ".provenance.json")
        _write_json(side, self.to_json())
        return side


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=False) + "\n", encoding="utf-8")


def _read_json(path, fmt):
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(obj, dict) or obj.get("format") != fmt:
        raise ValueError(f"{path} is not a {fmt} manifest")
    return obj


def _rel(path, start) -> str:
    return Path(os.path.relpath(Path(path).resolve(), Path(start).resolve())).as_posix()


def _map(fn, tasks, workers):
    """Ordered map, in-process for one worker."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


@functools.lru_cache(maxsize=4)
def _load_cached(manifest_path, stamp):
    return load_sequence(read_manifest(manifest_path))


def _load(manifest_path):
    # keyed on mtime and size so an edited manifest is re-read
    st = os.stat(manifest_path)
    return _load_cached(str(manifest_path), (st.st_mtime_ns, st.st_size))


# --------------------------------------------------------------------------
# Distortion


def parse_spec(text, root_seed=0, textured=True) -> DistortionSpec:
    """A spec from JSON text or a JSON file path.

    A missing ``seed`` is derived from the root seed and the kind.
    """
    text = str(text)
    if not text.lstrip().startswith("{") and Path(text).is_file():
        text = Path(text).read_text(encoding="utf-8")
    obj = json.loads(text)
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValueError("distortion spec needs a 'kind'")
    obj.setdefault("seed", stage_seed(root_seed, obj["kind"]))
    obj.setdefault("textured", textured)
    return DistortionSpec.from_json(obj)


def auto_face_scale(seq) -> float:
    """Scale simplification targets to a mesh far smaller than a full scan."""
    return max(f.n_faces for f in seq.frames) / REFERENCE_FACES


def _distort_task(task):
    ref_path, spec_json, target, face_scale, texture_format, header = task
    seq = _load(ref_path)
    spec = DistortionSpec.from_json(spec_json)
    if not spec.textured:
        seq = seq.replace(frames=[f.copy(texture_id=None) for f in seq.frames], textures=[])
    out = apply_recipe(seq, spec, face_scale=face_scale)
    save_sequence(out, target, texture_format, header=header)
    return len(out.frames), max(f.n_faces for f in out.frames)


def distort(manifests, out_dir, specs=None, textured=True, seed=0, face_scale=1.0, texture_format="ppm",
            workers=1) -> Path:
    """Write distorted sequences for every reference; returns ``corpus.json``.

    ``specs`` defaults to the full corpus for the chosen texture mode.
    ``face_scale`` is a float or ``"auto"`` (per reference).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prov = Provenance.of("distort", seed, manifests)
    header = prov.lines()
    specs = list(specs) if specs else enumerate_corpus(textured=textured, seed=seed)
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ValueError("distortion specs have duplicate labels")

    references, items, tasks = [], [], []
    seen = set()
    for m in manifests:
        seq = _load(str(m))
        ident = seq.identity
        if ident in seen:
            raise ValueError(f"identity {ident!r} appears in more than one reference")
        seen.add(ident)
        scale = auto_face_scale(seq) if face_scale == "auto" else float(face_scale)
        references.append({"identity": ident, "manifest": _rel(m, out_dir), "frames": len(seq.frames),
                           "faces": max(f.n_faces for f in seq.frames), "face_scale": scale})
        for spec in specs:
            rel = f"{ident}/{spec.label}"
            items.append({"id": rel, "identity": ident, "kind": spec.kind, "label": spec.label,
                          "spec": spec.to_json(), "manifest": f"{rel}/manifest.json"})
            tasks.append((str(m), spec.to_json(), str(out_dir / rel), scale, texture_format, header))

    log.info("distort: %d sequences from %d references", len(tasks), len(references))
    for item, (n_frames, n_faces) in zip(items, _map(_distort_task, tasks, workers)):
        item["frames"], item["faces"] = n_frames, n_faces
    corpus = {"format": CORPUS_FORMAT, "version": 1, "provenance": prov.to_json(),
              "textured": bool(textured), "references": references, "items": items}
    path = out_dir / "corpus.json"
    _write_json(path, corpus)
    return path


# --------------------------------------------------------------------------
# Rendering


def render_config_dict(cfg: RenderConfig) -> dict:
    return {"width": cfg.width, "height": cfg.height, "shading": cfg.shading,
            "orbit_radius_factor": cfg.orbit_radius_factor, "fov_deg": cfg.fov_deg,
            "elevation_deg": cfg.elevation_deg, "background": list(cfg.background)}


def _render_task(task):
    seq_path, framing_path, frame_dir, cfg_json, header = task
    cfg = RenderConfig(**{**cfg_json, "background": tuple(cfg_json["background"])})
    seq = _load(seq_path)
    framing = subject_frame(_load(framing_path))
    frames = render_sequence(seq, cfg, framing=framing)
    frame_dir = Path(frame_dir)
    frame_dir.mkdir(parents=True, exist_ok=True)
    for i, fb in enumerate(frames):
        (frame_dir / f"frame_{i:04d}.ppm").write_bytes(dump_texture(TextureMap(fb.color), "ppm", header))
    return len(frames), seq.fps


def render(out_dir, cfg: RenderConfig, corpus=None, manifests=(), seed=0, workers=1) -> Path:
    """Render a corpus (references and distorted items) or plain sequences.

    Distorted items are shot from their reference's cameras so frames align
    pixel for pixel. Returns the path of ``render.json``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []  # (id, identity, kind, role, sequence manifest, framing manifest)
    inputs = []
    if corpus is not None:
        inputs.append(corpus)
        obj = _read_json(corpus, CORPUS_FORMAT)
        root = Path(corpus).parent
        refs = {}
        for r in obj["references"]:
            path = root / r["manifest"]
            refs[r["identity"]] = path
            entries.append((f"{r['identity']}/reference", r["identity"], REFERENCE_KIND, "reference", path, path))
        for it in obj["items"]:
            if it["identity"] not in refs:
                raise ValueError(f"item {it['id']} has no reference")
            ref = refs[it["identity"]]
            entries.append((it["id"], it["identity"], it["kind"], "distorted", root / it["manifest"], ref))
    for m in manifests:
        inputs.append(m)
        ident = read_manifest(m).identity
        entries.append((f"{ident}/reference", ident, REFERENCE_KIND, "reference", Path(m), Path(m)))
    if not entries:
        raise ValueError("nothing to render")
    ids = [e[0] for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate sequence ids in render input")

    prov = Provenance.of("render", seed, inputs)
    cfg_json = render_config_dict(cfg)
    tasks = [(str(seq), str(framing), str(out_dir / "frames" / sid), cfg_json, prov.lines())
             for sid, _, _, _, seq, framing in entries]
    log.info("render: %d sequences at %dx%d", len(tasks), cfg.width, cfg.height)
    results = _map(_render_task, tasks, workers)
    items = []
    for (sid, ident, kind, role, seq, _), (n, fps) in zip(entries, results):
        items.append({"id": sid, "identity": ident, "kind": kind, "role": role,
                      "manifest": _rel(seq, out_dir), "frames_dir": f"frames/{sid}", "n_frames": n, "fps": fps})
    path = out_dir / "render.json"
    _write_json(path, {"format": RENDER_FORMAT, "version": 1, "provenance": prov.to_json(),
                       "config": cfg_json, "items": items})
    return path


@dataclass
class RenderedItem:
    id: str
    identity: str
    kind: str
    role: str
    manifest: Path
    frames_dir: Path
    n_frames: int

    def frames(self) -> list:
        out = []
        for i in range(self.n_frames):
            tex = load_texture((self.frames_dir / f"frame_{i:04d}.ppm").read_bytes())
            out.append(FrameBuffer(tex.pixels, np.zeros(tex.pixels.shape[:2])))
        return out


def read_render_manifest(path) -> list:
    obj = _read_json(path, RENDER_FORMAT)
    root = Path(path).parent
    return [RenderedItem(it["id"], it["identity"], it["kind"], it["role"], root / it["manifest"],
                         root / it["frames_dir"], int(it["n_frames"])) for it in obj["items"]]


# --------------------------------------------------------------------------
# Full-reference metrics


def _metrics_task(task):
    ref_dir, ref_n, dist_dir, dist_n, names = task
    ref = RenderedItem("", "", "", "", Path(), Path(ref_dir), ref_n).frames()
    dist = RenderedItem("", "", "", "", Path(), Path(dist_dir), dist_n).frames()
    return [video_metric(ref, dist, m) for m in names]


def pair_references(ref_items, dist_items) -> list:
    """(reference, distorted) pairs: by identity, or one reference for all."""
    refs = [r for r in ref_items if r.role == "reference"] or list(ref_items)
    by_identity = {r.identity: r for r in refs}
    dists = [d for d in dist_items if d.role == "distorted"] or list(dist_items)
    pairs = []
    for d in dists:
        ref = by_identity.get(d.identity) or (refs[0] if len(refs) == 1 else None)
        if ref is None:
            raise ValueError(f"no reference render for {d.id}")
        pairs.append((ref, d))
    return pairs


def metrics(ref_manifest, dist_manifest, out_csv, names=METRICS, per_frame=False, seed=0, workers=1) -> Path:
    """Pooled FR metrics per distorted sequence, long format CSV."""
    for n in names:
        if n not in METRICS:
            raise ValueError(f"unknown metric {n!r}; choose from {', '.join(METRICS)}")
    pairs = pair_references(read_render_manifest(ref_manifest), read_render_manifest(dist_manifest))
    tasks = [(str(r.frames_dir), r.n_frames, str(d.frames_dir), d.n_frames, tuple(names)) for r, d in pairs]
    results = _map(_metrics_task, tasks, workers)
    header = ["id", "identity", "kind", "metric", "pooled"] + (["per_frame"] if per_frame else [])
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for (_, d), scores in zip(pairs, results):
            for s in scores:
                row = [d.id, d.identity, d.kind, s.metric, repr(float(s.pooled))]
                if per_frame:
                    row.append(";".join(repr(float(v)) for v in s.per_frame))
                w.writerow(row)
    Provenance.of("metrics", seed, [ref_manifest, dist_manifest]).write_sidecar(out_csv)
    return Path(out_csv)


def read_metrics_csv(path) -> dict:
    """``{id: {metric: pooled}}``."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["id"], {})[row["metric"]] = float(row["pooled"])
    return out


# --------------------------------------------------------------------------
# Features


def _features_task(task):
    seq_path, frames_dir, n_frames = task
    seq = _load(seq_path)
    rendered = RenderedItem("", "", "", "", Path(), Path(frames_dir), n_frames).frames()
    fv = sequence_features(seq, rendered)
    return fg_scalar(seq), color_feature(seq), fv.geometry, fv.visual, fv.motion


def feature_columns(sizes) -> list:
    g, v, m = sizes
    return ([f"g_{i:03d}" for i in range(g)] + [f"v_{i:03d}" for i in range(v)]
            + [f"m_{i:03d}" for i in range(m)])


def features(render_manifest, out_csv, include_references=False, seed=0, workers=1) -> Path:
    """F_G, F_C and the geometry, visual and motion blocks per sequence."""
    items = read_render_manifest(render_manifest)
    if not include_references and any(i.role == "distorted" for i in items):
        items = [i for i in items if i.role == "distorted"]
    tasks = [(str(i.manifest), str(i.frames_dir), i.n_frames) for i in items]
    results = _map(_features_task, tasks, workers)
    sizes = {tuple(len(b) for b in r[2:]) for r in results}
    if len(sizes) != 1:
        raise ValueError(f"inconsistent feature block sizes {sorted(sizes)}")
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "identity", "kind", "F_G", "F_C"] + feature_columns(sizes.pop()))
        for item, (fg, fc, g, v, m) in zip(items, results):
            vals = np.concatenate([[fg, fc], g, v, m])
            w.writerow([item.id, item.identity, item.kind] + [repr(float(x)) for x in vals])
    Provenance.of("features", seed, [render_manifest]).write_sidecar(out_csv)
    return Path(out_csv)


@dataclass
class FeatureTable:
    ids: list
    identities: list
    kinds: list
    X: np.ndarray  # columns ordered visual, motion, geometry
    block_sizes: tuple
    fg: np.ndarray
    fc: np.ndarray


def read_features_csv(path) -> FeatureTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:5] != ["id", "identity", "kind", "F_G", "F_C"]:
            raise ValueError(f"{path} is not a features table")
        rows = list(reader)
    cols = {p: [i for i, h in enumerate(header) if h.startswith(p + "_")] for p in "vmg"}
    ids, idents, kinds, vals = [], [], [], []
    for n, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ValueError(f"{path} row {n}: expected {len(header)} fields, got {len(row)}")
        ids.append(row[0])
        idents.append(row[1])
        kinds.append(row[2])
        try:
            vals.append([float(x) for x in row[3:]])
        except ValueError:
            raise ValueError(f"{path} row {n}: non-numeric feature") from None
    A = np.array(vals, dtype=np.float64).reshape(len(rows), len(header) - 3)
    order = cols["v"] + cols["m"] + cols["g"]
    X = A[:, [i - 3 for i in order]]
    sizes = (len(cols["v"]), len(cols["m"]), len(cols["g"]))
    return FeatureTable(ids, idents, kinds, X, sizes, A[:, 0], A[:, 1])


# --------------------------------------------------------------------------
# MOS and evaluation


def mos(ratings_csv, out_csv, summary_json=None, seed=0) -> tuple:
    from meshqa.mos import compute_mos, mos_summary, read_ratings_csv, write_mos_csv

    matrix = read_ratings_csv(ratings_csv)
    result = compute_mos(matrix)
    write_mos_csv(out_csv, result)
    prov = Provenance.of("mos", seed, [ratings_csv])
    prov.write_sidecar(out_csv)
    summary_json = Path(summary_json or str(out_csv) + ".summary.json")
    _write_json(summary_json, {"provenance": prov.to_json(), **mos_summary(result, matrix)})
    return Path(out_csv), summary_json


def evaluate(features_csv, mos_csv, out_csv, k=4, seed=0, config=None, models_dir=None) -> Path:
    """k-fold identity-disjoint evaluation; writes overall, per-fold and per-kind rows."""
    from meshqa.mos import read_mos_csv
    from meshqa.rater import RaterConfig, evaluate as cross_validate

    table = read_features_csv(features_csv)
    scores = read_mos_csv(mos_csv)
    keep = [i for i, sid in enumerate(table.ids) if sid in scores]
    if len(keep) < len(table.ids):
        log.warning("evaluate: %d sequences have no MOS and are skipped", len(table.ids) - len(keep))
    if not keep:
        raise ValueError("no sequence in the features table has a MOS")
    y = np.array([scores[table.ids[i]] for i in keep])
    cfg = config or RaterConfig()
    cfg = RaterConfig(**{**cfg.__dict__, "seed": stage_seed(seed, "evaluate/init")})
    res = cross_validate(table.X[keep], y, [table.identities[i] for i in keep], [table.kinds[i] for i in keep],
                         table.block_sizes, cfg, k=k, seed=stage_seed(seed, "evaluate/folds"))

    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scope", "kind", "srcc", "plcc", "krcc"])

        def row(scope, kind, c):
            w.writerow([scope, kind] + [repr(float(c[m])) for m in ("srcc", "plcc", "krcc")])

        row("mean", "ALL", res["mean"])
        for i, c in enumerate(res["folds"]):
            row(f"fold_{i}", "ALL", c)
        for kind in sorted(res["by_kind"]):
            row("mean", kind, res["by_kind"][kind])
    prov = Provenance.of("evaluate", seed, [features_csv, mos_csv])
    prov.write_sidecar(out_csv)

    pred_path = Path(str(out_csv) + ".predictions.csv")
    with open(pred_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "identity", "kind", "mos", "predicted"])
        for j, i in enumerate(keep):
            w.writerow([table.ids[i], table.identities[i], table.kinds[i], repr(float(y[j])),
                        repr(float(res["predictions"][j]))])
    if models_dir is not None:
        models_dir = Path(models_dir)
        models_dir.mkdir(parents=True, exist_ok=True)
        for i, (model, fold) in enumerate(zip(res["models"], res["fold_splits"])):
            obj = {**model.to_json(), "test_identities": fold.test_identities, "provenance": prov.to_json()}
            _write_json(models_dir / f"fold_{i}.json", obj)
    return Path(out_csv)
