"""Command line: generate, track, evaluate, ablate.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from . import ablation, fileio, synth
from .errors import RunAborted, TrackingError
from .metrics import evaluate
from .tracker import TrackerConfig, run

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="arttrack", description="Articulated object pose tracking on synthetic sequences.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="render a synthetic sequence to disk")
    g.add_argument("--template", required=True, choices=synth.TEMPLATES)
    g.add_argument("--frames", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--sigma-point", type=float, default=0.0, help="Gaussian point noise (m)")
    g.add_argument("--visibility", type=float, default=1.0, help="fraction of each part kept")
    g.add_argument("--rate", type=float, default=None, help="joint rate per frame (rad or m)")
    g.add_argument("--points-per-part", type=int, default=synth.POINTS_PER_PART)
    g.add_argument("--out", type=Path, default=Path("."), help="output directory")

    t = sub.add_parser("track", help="track a generated sequence")
    t.add_argument("--manifest", type=Path, required=True)
    t.add_argument("--config", type=Path, default=None, help="key = value tracker config")
    t.add_argument("--out", type=Path, required=True, help="result file")
    t.add_argument("--no-timing", action="store_true", help="write 0 in the seconds column (byte-stable output)")

    e = sub.add_parser("evaluate", help="compare a result file with ground truth")
    e.add_argument("--manifest", type=Path, required=True)
    e.add_argument("--results", type=Path, required=True)
    e.add_argument("--n-mc", type=int, default=20_000, help="Monte-Carlo samples per IoU")
    e.add_argument("--json", type=Path, default=None, help="also write the report as JSON")

    a = sub.add_parser("ablate", help="keyframe mode x refinement grid")
    a.add_argument("--template", default="dishwasher", choices=synth.TEMPLATES)
    a.add_argument("--seeds", type=int, default=30)
    a.add_argument("--frames", type=int, default=20)
    a.add_argument("--sigma-trans", type=float, default=0.01)
    a.add_argument("--sigma-dir", type=float, default=0.05)
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("--out", type=Path, default=None, help="also write the table here")
    return parser


def _generate(args: argparse.Namespace) -> int:
    if args.frames < 1:
        raise ValueError("--frames must be at least 1")
    seq = synth.generate(args.template, args.frames, args.seed, args.sigma_point, args.visibility, args.rate, args.points_per_part)
    out: Path = args.out
    (out / "frames").mkdir(parents=True, exist_ok=True)
    fileio.write_model(out / "model.json", seq.model)
    frame_paths = []
    for n, frame in enumerate(seq.frames):
        p = out / "frames" / f"frame_{n:04d}.txt"
        fileio.write_cloud(p, frame, f"{args.template} seed {args.seed} frame {n}")
        frame_paths.append(p)
    fileio.write_records(out / "truth.txt", fileio.truth_records(seq.poses, seq.scales), timing=False)
    manifest = fileio.SequenceManifest(out / "model.json", tuple(frame_paths), out / "truth.txt", args.seed, seq.noise, args.template)
    fileio.write_manifest(out / "manifest.json", manifest)
    print(f"wrote {len(frame_paths)} frames to {out}")
    return EXIT_OK


def _load_truth(manifest: fileio.SequenceManifest, n_parts: int) -> list[list[fileio.PoseRecord]]:
    truth = fileio.records_by_frame(fileio.read_records(manifest.truth), n_parts)
    if len(truth) != len(manifest.frames):
        raise fileio.DataFormatError(f"truth has {len(truth)} frames, manifest lists {len(manifest.frames)}")
    return truth


def _track(args: argparse.Namespace) -> int:
    manifest = fileio.read_manifest(args.manifest)
    model = fileio.read_model(manifest.model)
    config = fileio.read_config(args.config) if args.config else TrackerConfig()
    truth = _load_truth(manifest, model.n_parts)
    frames = [fileio.read_cloud(p) for p in manifest.frames]
    poses = [[r.pose for r in row] for row in truth]
    # oracle predictors read the ground truth; other predictors ignore it
    try:
        results = run(model, frames, poses[0] if poses else [], config, poses)
    except RunAborted as exc:
        fileio.write_records(args.out, fileio.results_to_records(exc.results), timing=not args.no_timing)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    fileio.write_records(args.out, fileio.results_to_records(results), timing=not args.no_timing)
    print(f"tracked {len(results)} frames -> {args.out}")
    return EXIT_OK


def _evaluate(args: argparse.Namespace) -> int:
    manifest = fileio.read_manifest(args.manifest)
    model = fileio.read_model(manifest.model)
    truth = _load_truth(manifest, model.n_parts)
    est = fileio.records_by_frame(fileio.read_records(args.results), model.n_parts)
    report = evaluate(
        [[r.pose for r in row] for row in est],
        [[r.scale for r in row] for row in est],
        [[r.pose for r in row] for row in truth],
        [[r.scale for r in row] for row in truth],
        [p.extents.max() for p in model.parts],
        [p.center for p in model.parts],
        model.diagonal(),
        [row[0].seconds for row in est[1:]],
        args.n_mc,
        part_names=[p.name for p in model.parts],
    )
    print(report.text(), end="")
    print(report.machine(), end="")
    if args.json:
        med = report.medians()
        doc = {
            "frames": report.n_frames,
            "parts": [p.name for p in model.parts],
            "rotation_deg": report.rotation.tolist(),
            "translation_m": report.translation.tolist(),
            "iou": report.iou.tolist(),
            "median": {k: v.tolist() for k, v in med.items()},
            "cumulative": report.cumulative.tolist(),
            "seconds_per_frame": report.seconds_per_frame,
        }
        args.json.write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def _ablate(args: argparse.Namespace) -> int:
    if args.seeds < 1 or args.frames < 2 or args.jobs < 1:
        raise ValueError("--seeds and --jobs must be >= 1 and --frames >= 2")
    setting = ablation.AblationSetting(args.template, args.frames, args.sigma_trans, args.sigma_dir)
    grid = ablation.run_grid(setting, range(args.seeds), ablation.ROWS, args.jobs)
    rows = ablation.summarize(grid)
    text = ablation.format_table(rows)
    for claim, ok in ablation.check_claims(rows):
        text += f"{'PASS' if ok else 'FAIL'}  {claim}\n"
    print(text, end="")
    if args.out:
        args.out.write_text(text)
    return EXIT_OK


_COMMANDS = {"generate": _generate, "track": _track, "evaluate": _evaluate, "ablate": _ablate}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (TrackingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
