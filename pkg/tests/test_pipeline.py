import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from meshqa import __version__
from meshqa.cli import main
from meshqa.distort import DistortionSpec
from meshqa.mesh_io import load_sequence, read_manifest, save_sequence
from meshqa.mos import RatingMatrix, write_ratings_csv
from meshqa.pipeline import (
    Provenance,
    read_features_csv,
    read_metrics_csv,
    read_render_manifest,
    sha256_file,
)
from meshqa.synthetic import demo_sequence, simulate_ratings, synthetic_rating_corpus

GN = '{"kind": "GN", "params": {"level": 0.01}}'
CN = '{"kind": "CN", "params": {"density": 0.1}}'


def make_reference(root):
    seq = demo_sequence(duration_s=5, fps=2, texture_size=64)
    return save_sequence(seq, Path(root) / "ref")


def run_small(root):
    """distort -> render -> metrics -> features -> mos inside ``root`` (cwd)."""
    make_reference(root)
    assert main(["distort", "--manifest", "ref/manifest.json", "--out", "corpus", "--spec", GN, "--spec", CN,
                 "--workers", "1"]) == 0
    assert main(["render", "--corpus", "corpus/corpus.json", "--out", "renders", "--size", "48",
                 "--workers", "1"]) == 0
    assert main(["metrics", "--ref", "renders/render.json", "--dist", "renders/render.json", "--out", "metrics.csv",
                 "--per-frame", "--workers", "1"]) == 0
    assert main(["features", "--render", "renders/render.json", "--out", "features.csv", "--workers", "1"]) == 0
    items = list(read_metrics_csv("metrics.csv"))
    quality = np.linspace(0.2, 0.8, len(items))
    write_ratings_csv("ratings.csv", simulate_ratings(quality, items, n_subjects=8, seed=1))
    assert main(["mos", "--ratings", "ratings.csv", "--out", "mos.csv"]) == 0


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    mp = pytest.MonkeyPatch()
    mp.chdir(root)
    try:
        run_small(root)
    finally:
        mp.undo()
    return root


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


# --------------------------------------------------------------------------
# Stage outputs


def test_corpus_manifest(small_run):
    corpus = json.loads((small_run / "corpus" / "corpus.json").read_text())
    assert corpus["format"] == "meshqa-corpus"
    assert [i["id"] for i in corpus["items"]] == ["demo/GN_0.01", "demo/CN_0.1"]
    assert corpus["provenance"]["seed"] == 0
    assert corpus["provenance"]["version"] == __version__
    seq = load_sequence(read_manifest(small_run / "corpus" / corpus["items"][0]["manifest"]))
    assert len(seq.frames) == 10


def test_distorted_files_carry_provenance(small_run):
    obj = next((small_run / "corpus" / "demo" / "GN_0.01").glob("*.obj")).read_text()
    assert obj.startswith("# meshqa") and "seed=" in obj
    ppm = next((small_run / "corpus" / "demo" / "CN_0.1").glob("*.ppm")).read_bytes()
    assert b"# meshqa" in ppm.split(b"255\n", 1)[0]


def test_render_manifest(small_run):
    items = read_render_manifest(small_run / "renders" / "render.json")
    assert {i.role for i in items} == {"reference", "distorted"}
    assert all(i.n_frames == 10 for i in items)
    frame = items[0].frames()[0]
    assert frame.color.shape == (48, 48, 3)


def test_metrics_csv(small_run):
    scores = read_metrics_csv(small_run / "metrics.csv")
    assert set(scores) == {"demo/GN_0.01", "demo/CN_0.1"}
    assert set(scores["demo/GN_0.01"]) == {"psnr_rgb", "psnr_yuv", "ssim", "ms_ssim", "gmsd"}
    assert all(0 < scores[i]["ssim"] < 1 for i in scores)
    with open(small_run / "metrics.csv", newline="") as fh:
        row = next(csv.DictReader(fh))
    assert len(row["per_frame"].split(";")) == 10


def test_features_csv(small_run):
    table = read_features_csv(small_run / "features.csv")
    assert table.ids == ["demo/GN_0.01", "demo/CN_0.1"]
    assert table.block_sizes == (960, 15, 35)
    assert table.X.shape == (2, 1010)
    assert np.all(np.isfinite(table.X))


def test_mos_outputs(small_run):
    summary = json.loads((small_run / "mos.csv.summary.json").read_text())
    assert summary["items"] == 2
    assert summary["provenance"]["inputs"] == {"ratings.csv": sha256_file(small_run / "ratings.csv")}


def test_every_output_has_provenance(small_run):
    for name in ("metrics.csv", "features.csv", "mos.csv"):
        side = json.loads((small_run / (name + ".provenance.json")).read_text())
        assert side["tool"] == "meshqa" and side["seed"] == 0 and side["inputs"]
    for frame in (small_run / "renders" / "frames").rglob("*.ppm"):
        assert b"seed=0" in frame.read_bytes()[:400]
        break


def test_end_to_end_deterministic(small_run, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    run_small(tmp_path)
    assert tree_bytes(tmp_path) == tree_bytes(small_run)


def test_seed_changes_stochastic_outputs(small_run, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    make_reference(tmp_path)
    assert main(["distort", "--manifest", "ref/manifest.json", "--out", "c", "--spec", GN, "--seed", "5"]) == 0
    a = next((small_run / "corpus" / "demo" / "GN_0.01").glob("*.obj")).read_text().split("\nv ", 1)[1]
    b = next((tmp_path / "c" / "demo" / "GN_0.01").glob("*.obj")).read_text().split("\nv ", 1)[1]
    assert a != b


def test_parallel_matches_serial(small_run, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    make_reference(tmp_path)
    assert main(["distort", "--manifest", "ref/manifest.json", "--out", "corpus", "--spec", GN, "--spec", CN,
                 "--workers", "2"]) == 0
    assert tree_bytes(tmp_path / "corpus") == tree_bytes(small_run / "corpus")


# --------------------------------------------------------------------------
# Evaluate


@pytest.fixture(scope="module")
def eval_inputs(tmp_path_factory):
    root = tmp_path_factory.mktemp("eval")
    X, mos, ids, kinds, _ = synthetic_rating_corpus(n_identities=8, items_per_identity=15, block_sizes=(30, 6, 14))
    header = ["id", "identity", "kind", "F_G", "F_C"]
    header += [f"g_{i:03d}" for i in range(14)] + [f"v_{i:03d}" for i in range(30)] + [f"m_{i:03d}" for i in range(6)]
    with open(root / "features.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for n in range(len(mos)):
            vals = np.concatenate([[0.1, 0.2], X[n, 36:], X[n, :30], X[n, 30:36]])
            w.writerow([f"{ids[n]}/{n}", ids[n], kinds[n]] + [repr(float(v)) for v in vals])
    with open(root / "mos.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id", "mos", "raters"])
        for n in range(len(mos)):
            w.writerow([f"{ids[n]}/{n}", repr(float(mos[n])), 10])
    return root, X


def test_features_csv_column_order(eval_inputs):
    root, X = eval_inputs
    table = read_features_csv(root / "features.csv")
    assert table.block_sizes == (30, 6, 14)
    np.testing.assert_array_equal(table.X, X)


def test_evaluate_command(eval_inputs, tmp_path):
    root, _ = eval_inputs
    out = tmp_path / "results.csv"
    args = ["evaluate", "--features", str(root / "features.csv"), "--mos", str(root / "mos.csv"), "--out", str(out),
            "--epochs", "150", "--models-dir", str(tmp_path / "models")]
    assert main(args) == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["scope"] for r in rows[:5]] == ["mean", "fold_0", "fold_1", "fold_2", "fold_3"]
    assert {r["kind"] for r in rows[5:]} <= {"GN", "CN", "MS", "TD"}
    assert float(rows[0]["srcc"]) > 0.8
    assert len(list((tmp_path / "models").glob("fold_*.json"))) == 4
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first
    preds = (Path(str(out) + ".predictions.csv")).read_text().splitlines()
    assert len(preds) == 121


# --------------------------------------------------------------------------
# CLI behaviour


def test_help_lists_commands():
    res = subprocess.run([sys.executable, "-m", "meshqa.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("distort", "render", "metrics", "features", "mos", "evaluate"):
        assert cmd in res.stdout


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main(["nonsense"]) == 1
    assert main(["distort", "--out", "x"]) == 1
    assert main(["render", "--corpus", "a", "--manifest", "b", "--out", "x"]) == 1
    assert main(["distort", "--manifest", "m", "--out", "x", "--face-scale", "-1"]) == 1
    cfg = tmp_path / "c.json"
    cfg.write_text('{"bogus": 1}')
    assert main(["mos", "--config", str(cfg), "--ratings", "r", "--out", "o"]) == 1
    assert "bogus" in capsys.readouterr().err


def test_data_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "r.csv"
    bad.write_text("subject_id,item_id,score\na,x,9\n")
    assert main(["mos", "--ratings", str(bad), "--out", str(tmp_path / "m.csv")]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["mos", "--ratings", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "m.csv")]) == 2
    junk = tmp_path / "junk.json"
    junk.write_text("{}")
    assert main(["features", "--render", str(junk), "--out", str(tmp_path / "f.csv")]) == 2
    assert main(["distort", "--manifest", str(junk), "--out", str(tmp_path / "d"), "--spec", "{not json"]) == 2


def test_config_supplies_defaults(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    m = RatingMatrix.dense(np.array([[1.0, 2.0, 3.0, 4.0]] * 4) + np.arange(4)[:, None] * 0.1)
    write_ratings_csv("r.csv", m)
    Path("cfg.json").write_text(json.dumps({"ratings": "r.csv", "out": "from_config.csv", "seed": 4}))
    assert main(["mos", "--config", "cfg.json"]) == 0
    assert json.loads(Path("from_config.csv.provenance.json").read_text())["seed"] == 4
    assert main(["mos", "--config", "cfg.json", "--out", "explicit.csv"]) == 0
    assert Path("explicit.csv").exists()


def test_spec_file_and_seed_split(tmp_path):
    from meshqa.pipeline import parse_spec

    f = tmp_path / "spec.json"
    f.write_text(GN)
    a = parse_spec(str(f), root_seed=3)
    b = parse_spec(GN, root_seed=3)
    assert a == b and isinstance(a, DistortionSpec)
    assert parse_spec(GN, 3).seed != parse_spec(GN, 4).seed
    with pytest.raises(ValueError):
        parse_spec("[1, 2]")


def test_provenance_json():
    p = Provenance("x", 7, {"b": "2", "a": "1"})
    assert list(p.to_json()["inputs"]) == ["a", "b"]
    assert p.lines()[0] == f"meshqa {__version__} x seed=7"
