"""Command line front end.

::

    meshqa distort  --manifest ref.json [--manifest ...] --out corpus/ [--spec JSON] [--non-textured]
    meshqa render   --corpus corpus/corpus.json --out renders/ [--size 128]
    meshqa metrics  --ref renders/render.json --dist renders/render.json --out metrics.csv
    meshqa features --render renders/render.json --out features.csv
    meshqa mos      --ratings ratings.csv --out mos.csv
    meshqa evaluate --features features.csv --mos mos.csv --out results.csv [--k 4]

Exit status is 0 on success, 1 for usage errors and 2 for unreadable or
malformed data. ``--config FILE`` supplies defaults for any flag as JSON
keys named after the flag (``face_scale``, ``size`` ...); explicit flags win,
except that repeatable flags add to a list given in the config.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from meshqa import __version__

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _face_scale(text):
    if text == "auto":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive number or 'auto'") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("face scale must be positive")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    from meshqa.metrics_fr import METRICS
    from meshqa.pipeline import default_workers

    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    common.add_argument("--workers", type=_positive_int, default=default_workers(),
                        help="parallel worker processes (default: available cores)")
    common.add_argument("--config", help="JSON file with flag defaults")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="meshqa", description="Quality assessment toolkit for textured dynamic meshes.")
    parser.add_argument("--version", action="version", version=f"meshqa {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("distort", parents=[common], help="synthesize distorted sequences",
                       description="Apply one spec or the whole corpus to reference sequences.")
    p.add_argument("--manifest", action="append", required=True, help="reference sequence manifest (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--spec", action="append", help="distortion spec as JSON text or file (repeatable)")
    p.add_argument("--non-textured", action="store_true", help="shape-only corpus (26 recipes)")
    p.add_argument("--face-scale", type=_face_scale, default=1.0,
                   help="multiplier for simplification targets, or 'auto' (faces / 80000)")
    p.add_argument("--texture-format", choices=("ppm", "png"), default="ppm")

    p = sub.add_parser("render", parents=[common], help="render sequences along the orbit path",
                       description="Render a corpus or plain sequence manifests to PPM frames.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="corpus.json written by 'distort'")
    src.add_argument("--manifest", action="append", help="sequence manifest (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=_positive_int, default=512, help="square frame side in pixels")
    p.add_argument("--shading", choices=("textured", "lambertian"), default="textured")
    p.add_argument("--elevation", type=float, default=0.0, help="camera elevation in degrees")

    p = sub.add_parser("metrics", parents=[common], help="full-reference metrics",
                       description="Score each distorted render against its reference.")
    p.add_argument("--ref", required=True, help="render.json holding the references")
    p.add_argument("--dist", required=True, help="render.json holding the distorted sequences")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--metrics", default=",".join(METRICS), help="comma-separated subset of " + ", ".join(METRICS))
    p.add_argument("--per-frame", action="store_true", help="add a per-frame column")

    p = sub.add_parser("features", parents=[common], help="geometry, colour, visual and motion features",
                       description="Extract features for every rendered sequence.")
    p.add_argument("--render", required=True, help="render.json written by 'render'")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--include-references", action="store_true")

    p = sub.add_parser("mos", parents=[common], help="screen ratings and compute MOS",
                       description="Ratings CSV (subject_id,item_id,score on 0..5) to MOS on 0..100.")
    p.add_argument("--ratings", required=True, help="input ratings CSV")
    p.add_argument("--out", required=True, help="output MOS CSV")
    p.add_argument("--summary", help="diagnostics JSON (default: OUT.summary.json)")

    p = sub.add_parser("evaluate", parents=[common], help="cross-validated quality regression",
                       description="Identity-disjoint k-fold training and correlation tables.")
    p.add_argument("--features", required=True, help="features CSV")
    p.add_argument("--mos", required=True, help="MOS CSV")
    p.add_argument("--out", required=True, help="output correlation CSV")
    p.add_argument("--k", type=_positive_int, default=4, help="number of folds (default 4)")
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--models-dir", help="write per-fold model JSON here")
    return parser


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config`` when given."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    choices = parser._subparsers._group_actions[0].choices
    if known.config and known.command in choices:
        try:
            cfg = json.loads(Path(known.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {known.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        actions = {a.dest: a for a in choices[known.command]._actions}
        unknown = sorted(set(cfg) - set(actions) - {"command"})
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in cfg.items():
            if key in actions:
                # config satisfies a required flag; an explicit flag still wins
                actions[key].required = False
                actions[key].default = value
    return parser.parse_args(argv)


def _run(args):
    from meshqa import pipeline
    from meshqa.render import RenderConfig
    from meshqa.rater import RaterConfig

    cmd = args.command
    if cmd == "distort":
        textured = not args.non_textured
        specs = [pipeline.parse_spec(s, args.seed, textured) for s in args.spec or ()]
        path = pipeline.distort(args.manifest, args.out, specs=specs, textured=textured, seed=args.seed,
                                face_scale=args.face_scale, texture_format=args.texture_format,
                                workers=args.workers)
    elif cmd == "render":
        cfg = RenderConfig.square(args.size, shading=args.shading, elevation_deg=args.elevation)
        path = pipeline.render(args.out, cfg, corpus=args.corpus, manifests=args.manifest or (), seed=args.seed,
                               workers=args.workers)
    elif cmd == "metrics":
        names = [m.strip() for m in args.metrics.split(",") if m.strip()]
        path = pipeline.metrics(args.ref, args.dist, args.out, names, args.per_frame, args.seed, args.workers)
    elif cmd == "features":
        path = pipeline.features(args.render, args.out, args.include_references, args.seed, args.workers)
    elif cmd == "mos":
        path, _ = pipeline.mos(args.ratings, args.out, args.summary, args.seed)
    elif cmd == "evaluate":
        overrides = {k: v for k, v in (("epochs", args.epochs), ("weight_decay", args.weight_decay)) if v is not None}
        path = pipeline.evaluate(args.features, args.mos, args.out, k=args.k, seed=args.seed,
                                 config=RaterConfig(**overrides), models_dir=args.models_dir)
    print(path)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"meshqa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # argparse exits for --help, --version and usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"meshqa {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
