"""Procedural meshes and sequences used by the demos and tests.

The bundled demo subject is a crude "torso and head": a subdivided box with a
UV sphere on top, textured from a single atlas and animated with a sway of
the box and a bob and turn of the sphere.
"""

from __future__ import annotations

import numpy as np

from meshqa.mesh_io import MeshFrame, MeshSequence, TextureMap
from meshqa.mos import RatingMatrix


def icosphere(subdivisions=3, radius=1.0) -> MeshFrame:
    """Geodesic sphere with ``20 * 4**subdivisions`` faces."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache, new_faces = {}, []

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return MeshFrame(np.array(verts) * radius, np.array(faces))


def uv_sphere(n_lat=16, n_lon=32, radius=1.0, uv_rect=(0.0, 0.0, 1.0, 1.0)) -> MeshFrame:
    """Latitude/longitude sphere with a meridian seam and per-triangle pole uvs."""
    u0, v0, u1, v1 = uv_rect
    pos = [(0.0, radius, 0.0)]
    for i in range(1, n_lat):
        th = np.pi * i / n_lat
        for j in range(n_lon):
            ph = 2 * np.pi * j / n_lon
            pos.append((radius * np.sin(th) * np.sin(ph), radius * np.cos(th), radius * np.sin(th) * np.cos(ph)))
    pos.append((0.0, -radius, 0.0))
    north, south = 0, len(pos) - 1

    def vid(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)

    uvs, uv_index = [], {}

    def uid(i, j2):
        # j2 is in half-steps so pole corners can sit between meridians
        key = (i, j2)
        if key not in uv_index:
            uv_index[key] = len(uvs)
            uvs.append((u0 + (u1 - u0) * j2 / (2 * n_lon), v1 - (v1 - v0) * i / n_lat))
        return uv_index[key]

    faces, fuv = [], []
    for j in range(n_lon):
        faces.append((north, vid(1, j), vid(1, j + 1)))
        fuv.append((uid(0, 2 * j + 1), uid(1, 2 * j), uid(1, 2 * j + 2)))
        faces.append((south, vid(n_lat - 1, j + 1), vid(n_lat - 1, j)))
        fuv.append((uid(n_lat, 2 * j + 1), uid(n_lat - 1, 2 * j + 2), uid(n_lat - 1, 2 * j)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = vid(i, j), vid(i, j + 1)
            c, d = vid(i + 1, j), vid(i + 1, j + 1)
            ta, tb = uid(i, 2 * j), uid(i, 2 * j + 2)
            tc, td = uid(i + 1, 2 * j), uid(i + 1, 2 * j + 2)
            faces += [(a, c, d), (a, d, b)]
            fuv += [(ta, tc, td), (ta, td, tb)]
    return MeshFrame(np.array(pos), np.array(faces), np.array(uvs), np.array(fuv))


def subdivided_box(n=8, size=(1.0, 1.0, 1.0), uv_tiles=None) -> MeshFrame:
    """Closed box, each side an ``n`` x ``n`` grid; positions welded across sides.

    ``uv_tiles`` gives one ``(u0, v0, u1, v1)`` rectangle per side.
    """
    if uv_tiles is None:
        uv_tiles = [(k / 6, 0.0, (k + 1) / 6, 1.0) for k in range(6)]
    sx, sy, sz = (s / 2 for s in size)
    # (origin, u axis, v axis) per side with outward-facing winding
    sides = [
        ((-1, -1, 1), (2, 0, 0), (0, 2, 0)),
        ((1, -1, -1), (-2, 0, 0), (0, 2, 0)),
        ((1, -1, 1), (0, 0, -2), (0, 2, 0)),
        ((-1, -1, -1), (0, 0, 2), (0, 2, 0)),
        ((-1, 1, 1), (2, 0, 0), (0, 0, -2)),
        ((-1, -1, -1), (2, 0, 0), (0, 0, 2)),
    ]
    key_index, pos, uvs, faces, fuv = {}, [], [], [], []
    for (o, du, dv), (tu0, tv0, tu1, tv1) in zip(sides, uv_tiles):
        o, du, dv = np.array(o, float), np.array(du, float), np.array(dv, float)
        grid = np.empty((n + 1, n + 1), dtype=int)
        ugrid = np.empty((n + 1, n + 1), dtype=int)
        for i in range(n + 1):
            for j in range(n + 1):
                p = o + du * j / n + dv * i / n
                key = tuple(np.round(p * n).astype(int))
                if key not in key_index:
                    key_index[key] = len(pos)
                    pos.append((p[0] * sx, p[1] * sy, p[2] * sz))
                grid[i, j] = key_index[key]
                ugrid[i, j] = len(uvs)
                uvs.append((tu0 + (tu1 - tu0) * j / n, tv0 + (tv1 - tv0) * i / n))
        for i in range(n):
            for j in range(n):
                a, b, c, d = grid[i, j], grid[i, j + 1], grid[i + 1, j + 1], grid[i + 1, j]
                ta, tb, tc, td = ugrid[i, j], ugrid[i, j + 1], ugrid[i + 1, j + 1], ugrid[i + 1, j]
                faces += [(a, b, c), (a, c, d)]
                fuv += [(ta, tb, tc), (ta, tc, td)]
    return MeshFrame(np.array(pos), np.array(faces), np.array(uvs), np.array(fuv))


def unit_cube() -> MeshFrame:
    """12-triangle unit cube centred at the origin."""
    return subdivided_box(1, (1.0, 1.0, 1.0))


def merge(*frames: MeshFrame) -> MeshFrame:
    pos, faces, uvs, fuv, off_v, off_t = [], [], [], [], 0, 0
    for f in frames:
        pos.append(f.positions)
        faces.append(f.faces + off_v)
        uvs.append(f.uvs)
        fuv.append(f.face_uvs + off_t)
        off_v += f.n_vertices
        off_t += len(f.uvs)
    return MeshFrame(np.vstack(pos), np.vstack(faces), np.vstack(uvs), np.vstack(fuv))


def atlas_texture(size=256, seed=0) -> TextureMap:
    """Colourful procedural texture: smooth hue fields, stripes and blobs."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size] / size
    chans = []
    for c in range(3):
        fx, fy = rng.uniform(1, 6, 2)
        ph = rng.uniform(0, 2 * np.pi, 2)
        ch = 0.5 + 0.25 * np.sin(2 * np.pi * fx * x + ph[0]) + 0.25 * np.cos(2 * np.pi * fy * y + ph[1])
        chans.append(ch)
    img = np.stack(chans, axis=-1)
    stripes = (np.sin(2 * np.pi * 24 * (x + 0.3 * y)) > 0.6)[..., None]
    img = np.where(stripes, img * 0.55, img)
    for _ in range(12):
        cx, cy = rng.uniform(0, 1, 2)
        r = rng.uniform(0.02, 0.08)
        col = rng.uniform(0, 1, 3)
        mask = ((x - cx) ** 2 + (y - cy) ** 2) < r * r
        img[mask] = col
    fine = rng.normal(0, 0.03, img.shape)
    img = np.clip(img + fine, 0, 1)
    return TextureMap(np.round(img * 255).astype(np.uint8))


def demo_subject(box_n=8, n_lat=16, n_lon=32) -> MeshFrame:
    """Static rest pose of the demo subject, roughly 1.7 units tall."""
    tiles = [(0.5 + 0.25 * (k % 2), k // 2 / 3, 0.75 + 0.25 * (k % 2), (k // 2 + 1) / 3) for k in range(6)]
    box = subdivided_box(box_n, (0.8, 1.0, 0.45), tiles)
    box.positions[:, 1] += 0.5
    head = uv_sphere(n_lat, n_lon, 0.33, (0.0, 0.0, 0.5, 1.0))
    head.positions[:, 1] += 1.36
    return merge(box, head)


def demo_sequence(duration_s=5, fps=5, texture_size=256, seed=0, identity="demo", variant=0) -> MeshSequence:
    """Animated demo subject. ``variant`` changes proportions and motion."""
    rest = demo_subject()
    rng = np.random.default_rng(seed + 7919 * variant)
    scale = np.array([1.0, 1.0, 1.0]) + (rng.uniform(-0.15, 0.15, 3) if variant else 0.0)
    sway_amp = 0.12 + (rng.uniform(-0.05, 0.05) if variant else 0.0)
    turn_amp = np.deg2rad(35 + (rng.uniform(-10, 10) if variant else 0.0))
    n_box = subdivided_box(8).n_vertices
    frames = []
    for i in range(int(round(duration_s * fps))):
        t = i / fps
        p = rest.positions.copy()
        box = p[:n_box]
        h = box[:, 1]
        box[:, 0] += sway_amp * np.sin(2 * np.pi * t / 2.5) * h * h
        head = p[n_box:]
        ang = turn_amp * np.sin(2 * np.pi * t / 2.0)
        c, s = np.cos(ang), np.sin(ang)
        centre = np.array([0.0, 1.36, 0.0])
        rel = head - centre
        head[:] = centre + np.stack([c * rel[:, 0] + s * rel[:, 2], rel[:, 1], -s * rel[:, 0] + c * rel[:, 2]], 1)
        head[:, 0] += sway_amp * np.sin(2 * np.pi * t / 2.5)
        head[:, 1] += 0.04 * np.sin(2 * np.pi * t / 1.25)
        frames.append(rest.copy(positions=p * scale, texture_id=0))
    tex = atlas_texture(texture_size, seed=seed + variant)
    return MeshSequence(frames, fps, [tex], identity)


def synthetic_rating_corpus(n_identities=8, items_per_identity=30, block_sizes=(960, 15, 35), noise=2.0, seed=0):
    """Feature matrix with a known monotone quality function.

    Each item has a latent severity per distortion channel; features are
    identity-specific offsets plus noisy linear read-outs of the latents, and
    ``mos = 100 * sigmoid(w . features) + N(0, noise**2)``, clipped to
    [0, 100]. Returns ``(X, mos, identities, kinds, w)``.
    """
    rng = np.random.default_rng(seed)
    d = int(sum(block_sizes))
    n_latent = 4
    loadings = rng.normal(0, 1, (n_latent, d))
    n = n_identities * items_per_identity
    identities = np.repeat([f"id{i:02d}" for i in range(n_identities)], items_per_identity)
    offsets = rng.normal(0, 0.5, (n_identities, d))
    latent = rng.uniform(0, 1, (n, n_latent))
    X = latent @ loadings + np.repeat(offsets, items_per_identity, axis=0) + rng.normal(0, 0.3, (n, d))
    kinds = np.array(["GN", "CN", "MS", "TD"])[np.argmax(latent, axis=1)]
    w = -(np.linalg.pinv(loadings) @ np.array([1.5, 1.0, 0.8, 0.5]))
    z = X @ w
    z = (z - z.mean()) / z.std() * 1.5
    mos = 100 / (1 + np.exp(-z)) + rng.normal(0, noise, n)
    return X, np.clip(mos, 0, 100), identities, kinds, w


def simulate_ratings(quality, items=None, n_subjects=20, n_erratic=1, noise=0.35, seed=0) -> RatingMatrix:
    """Ratings on the 0..5 scale from latent item qualities in [0, 1].

    Each regular subject has a personal offset and gain plus per-rating noise;
    ``n_erratic`` subjects rate uniformly at random so that screening has
    something to reject. Scores are rounded to 0.1.
    """
    q = np.asarray(quality, dtype=np.float64)
    if q.ndim != 1 or np.any(q < 0) or np.any(q > 1):
        raise ValueError("quality must be a 1-D array in [0, 1]")
    rng = np.random.default_rng(seed)
    n = n_subjects + n_erratic
    offset = rng.normal(0, 0.3, (n_subjects, 1))
    gain = rng.uniform(0.8, 1.2, (n_subjects, 1))
    regular = 0.5 + 4.0 * q[None, :] * gain + offset + rng.normal(0, noise, (n_subjects, q.size))
    erratic = rng.uniform(0, 5, (n_erratic, q.size))
    scores = np.round(np.clip(np.vstack([regular, erratic]), 0, 5), 1)
    subjects = [f"s{i:02d}" for i in range(n)]
    items = [str(i) for i in items] if items is not None else None
    return RatingMatrix.dense(scores, subjects=subjects, items=items or [])


FEATURE_CORPUS_KINDS = ("GN", "CN", "TD", "TMC", "PC", "UMC", "DC")


def quality_score(features):
    """The known rule behind ``feature_rating_corpus``, before squashing.

    Lower is worse: it falls with high-frequency energy in the rendered
    frames (mean gradient magnitude over patches), with the dihedral-angle
    variance of the mesh and with inter-frame luminance change.
    """
    from meshqa.features import FeatureVector

    fv = features if isinstance(features, FeatureVector) else FeatureVector(*features)
    sharp = fv.visual[2::3].mean()
    roughness = fv.geometry[1::7].mean()
    motion = fv.motion[0::3].mean()
    return np.array([sharp, roughness, motion])


def feature_rating_corpus(n_identities=8, items_per_identity=30, size=64, noise=2.0, seed=0):
    """Distorted, rendered and featurized demo sequences with a known MOS rule.

    Each identity is a ``demo_sequence`` variant; each item applies one
    randomly drawn recipe from the standard level tables. The MOS is
    ``100 * sigmoid(-1.5 * z)`` with ``z`` the standardized sum of the
    standardized ``quality_score`` terms, plus ``N(0, noise**2)``, clipped to
    [0, 100]. Returns ``(X, mos, identities, kinds, block_sizes)`` with ``X``
    in visual, motion, geometry column order.
    """
    from meshqa import distort
    from meshqa.distort import corpus as levels
    from meshqa.features import sequence_features
    from meshqa.render import RenderConfig, render_sequence, subject_frame

    tables = {
        "GN": [{"level": v} for v in levels.GN_LEVELS],
        "CN": [{"density": v} for v in levels.CN_LEVELS],
        "TD": [{"side": v} for v in levels.TD_SIDES],
        "TMC": [{"qp": v} for v in levels.TMC_QP],
        "PC": [{"qp_bits": v} for v in levels.PC_BITS],
        "UMC": [{"qt": v} for v in levels.UMC_BITS],
        "DC": [{"mode": m, "seconds": s} for m, s in levels.DC_EVENTS],
    }
    rng = np.random.default_rng(seed)
    cfg = RenderConfig.square(size)
    rows, terms, identities, kinds = [], [], [], []
    for i in range(n_identities):
        ref = demo_sequence(texture_size=128, seed=seed, identity=f"id{i:02d}", variant=i)
        framing = subject_frame(ref)
        for _ in range(items_per_identity):
            kind = FEATURE_CORPUS_KINDS[rng.integers(len(FEATURE_CORPUS_KINDS))]
            params = tables[kind][rng.integers(len(tables[kind]))]
            spec = distort.DistortionSpec(kind, dict(params), int(rng.integers(2**31)))
            seq = distort.apply_recipe(ref, spec)
            fv = sequence_features(seq, render_sequence(seq, cfg, framing=framing))
            rows.append(fv.concat())
            terms.append(quality_score(fv))
            identities.append(ref.identity)
            kinds.append(kind)
    terms = np.array(terms)
    z = ((terms - terms.mean(axis=0)) / terms.std(axis=0)).sum(axis=1)
    z = (z - z.mean()) / z.std()
    mos = 100 / (1 + np.exp(1.5 * z)) + rng.normal(0, noise, len(z))
    sizes = tuple(len(b) for b in (fv.visual, fv.motion, fv.geometry))
    return np.array(rows), np.clip(mos, 0, 100), np.array(identities), np.array(kinds), sizes
