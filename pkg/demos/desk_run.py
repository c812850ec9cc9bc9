"""End-to-end desk run: two synthetic subjects through every CLI stage.

Writes everything under WORKDIR:

    refs/       two 25-frame textured reference sequences (1024 px atlases)
    corpus/     60 distorted versions of each reference (120 sequences)
    renders/    128 x 128 orbit renders of references and distortions
    metrics.csv, features.csv, ratings.csv, mos.csv, results.csv

Subjective scores come from simulated raters whose latent quality is the
MS-SSIM rank of each sequence, so the run exercises the MOS pipeline without
a human study. With two identities the cross-validation uses k = 2.

Usage::

    python demos/desk_run.py WORKDIR [--size 128] [--workers N] [--seed 0]
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from meshqa.mesh_io import save_sequence
from meshqa.mos import write_ratings_csv
from meshqa.pipeline import default_workers, read_metrics_csv
from meshqa.synthetic import demo_sequence, simulate_ratings

N_SUBJECTS = 2


def prepare_references(workdir: Path):
    paths = []
    for v in range(N_SUBJECTS):
        seq = demo_sequence(duration_s=5, fps=5, texture_size=1024, seed=0, identity=f"subject{v}", variant=v)
        paths.append(save_sequence(seq, workdir / "refs" / f"subject{v}"))
    return [p.relative_to(workdir).as_posix() for p in paths]


def simulate_study(workdir: Path, seed: int):
    """Ratings CSV from simulated raters driven by the MS-SSIM ranking."""
    scores = read_metrics_csv(workdir / "metrics.csv")
    ids = sorted(scores)
    ms = np.array([scores[i]["ms_ssim"] for i in ids])
    quality = (rankdata(ms) - 1) / (len(ms) - 1)
    write_ratings_csv(workdir / "ratings.csv", simulate_ratings(quality, ids, seed=seed))


def cli(workdir, *args):
    cmd = [sys.executable, "-m", "meshqa.cli", *map(str, args)]
    res = subprocess.run(cmd, cwd=workdir, capture_output=True, text=True)
    if res.returncode != 0:
        sys.stderr.write(res.stderr)
    return res.returncode


def run(workdir, size=128, workers=None, seed=0, log=print) -> dict:
    """Run every stage; returns ``{"exit": code, "seconds": {stage: s}}``."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    workers = workers or default_workers()
    common = ["--seed", seed, "--workers", workers]
    timings = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        code = fn()
        timings[name] = time.perf_counter() - t0
        log(f"{name:<9s} {timings[name]:7.1f} s  exit {code}")
        return code

    refs = []

    def prep():
        refs.extend(prepare_references(workdir))
        return 0

    manifests = lambda: sum((["--manifest", r] for r in refs), [])  # noqa: E731
    steps = [
        ("prepare", prep),
        ("distort", lambda: cli(workdir, "distort", *manifests(), "--out", "corpus", "--face-scale", "auto", *common)),
        ("render", lambda: cli(workdir, "render", "--corpus", "corpus/corpus.json", "--out", "renders",
                               "--size", size, *common)),
        ("metrics", lambda: cli(workdir, "metrics", "--ref", "renders/render.json", "--dist", "renders/render.json",
                                "--out", "metrics.csv", *common)),
        ("features", lambda: cli(workdir, "features", "--render", "renders/render.json", "--out", "features.csv",
                                 *common)),
        ("ratings", lambda: simulate_study(workdir, seed) or 0),
        ("mos", lambda: cli(workdir, "mos", "--ratings", "ratings.csv", "--out", "mos.csv", *common)),
        ("evaluate", lambda: cli(workdir, "evaluate", "--features", "features.csv", "--mos", "mos.csv",
                                 "--out", "results.csv", "--k", N_SUBJECTS, *common)),
    ]
    for name, fn in steps:
        code = stage(name, fn)
        if code != 0:
            return {"exit": code, "seconds": timings, "failed": name}
    return {"exit": 0, "seconds": timings}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("workdir")
    parser.add_argument("--size", type=int, default=128)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    result = run(args.workdir, args.size, args.workers, args.seed)
    total = sum(result["seconds"].values())
    print(f"total     {total:7.1f} s")
    if result["exit"] == 0:
        with open(Path(args.workdir) / "results.csv") as fh:
            print(fh.read(), end="")
    print(json.dumps({"exit": result["exit"], "total_s": round(total, 1)}))
    return result["exit"]


if __name__ == "__main__":
    sys.exit(main())
