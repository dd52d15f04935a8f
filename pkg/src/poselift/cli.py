"""Command-line entry point: ``poselift <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 bad input data,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .camera import CameraParams, orthographic_project_sequence, view_rotation
from .errors import ConfigError, NumericalError, PoseLiftError
from .io import save_sequence
from .noise import NoiseSpec
from .pipeline import (
    DEFAULT_WINDOW,
    PipelineConfig,
    load_config,
    run_build_dictionary,
    run_compare,
    run_noise_sweep,
    run_reconstruct,
    with_overrides,
)
from .synthetic import ACTIONS, synthesize_motion, synthetic_corpus
from .temporal import KINDS, FilterSpec

log = logging.getLogger("poselift")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, sweep: bool = False):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--dictionary", help="dictionary JSON (overrides the config)")
    p.add_argument("--limits", help="joint-limits JSON (default: no limits)")
    p.add_argument("--filter", action="append", metavar="KIND", type=str.upper, choices=KINDS,
                   help="filter kind, repeatable (crossed with --window)")
    p.add_argument("--window", action="append", type=int, metavar="W", help="filter window, repeatable")
    p.add_argument("--baseline-only", action="store_true", help="skip smoothing")
    if sweep:
        p.add_argument("--snr", action="append", type=float, metavar="DB", help="sweep point in dB, repeatable")
        p.add_argument("--repeats", type=int, help="noise trials per SNR point")
    else:
        p.add_argument("--snr", type=float, metavar="DB", help="add Gaussian noise at this SNR")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--workers", type=int, help="processes for lifting")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="poselift", description="Sparse-dictionary 3D pose lifting with temporal smoothing.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("reconstruct", help="lift a 2D sequence and smooth it")
    p.add_argument("input", help="2D sequence (CSV or JSON)")
    _add_common(p)

    p = sub.add_parser("compare", help="project 3D ground truth, reconstruct and score every variant")
    p.add_argument("ground_truth", help="3D sequence (CSV or JSON)")
    p.add_argument("--camera-deg", nargs=3, type=float, metavar=("RX", "RY", "RZ"),
                   help="projection view angles in degrees")
    _add_common(p)

    p = sub.add_parser("noise-sweep", help="error versus input SNR over repeated noisy trials")
    p.add_argument("ground_truth", help="3D sequence (CSV or JSON)")
    p.add_argument("--camera-deg", nargs=3, type=float, metavar=("RX", "RY", "RZ"))
    _add_common(p, sweep=True)

    p = sub.add_parser("build-dict", help="build a pose dictionary from a grouped 3D corpus")
    p.add_argument("--corpus", required=True, help="directory holding the corpus files")
    p.add_argument("--manifest", required=True, help='JSON object {"file": "group", ...}')
    p.add_argument("--bases-per-group", type=int, default=12)
    p.add_argument("--out", required=True, help="dictionary file to write")

    p = sub.add_parser("synth", help="write a synthetic corpus and test sequences")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=240)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _filters_from_args(args, cfg: PipelineConfig):
    if not args.filter and not args.window:
        return None
    kinds = args.filter or sorted({f.kind for f in cfg.filters}, key=KINDS.index) or list(KINDS)
    windows = args.window or sorted({f.window for f in cfg.filters}) or [DEFAULT_WINDOW]
    return tuple(FilterSpec(k, w) for k in kinds for w in windows)


def _config_from_args(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    seed = args.seed if args.seed is not None else cfg.seed
    kw = dict(
        dictionary=args.dictionary,
        limits=args.limits,
        filters=_filters_from_args(args, cfg),
        seed=args.seed,
        workers=args.workers,
        out=args.out,
    )
    if args.baseline_only:
        kw["baseline_only"] = True
    if getattr(args, "camera_deg", None):
        kw["camera"] = CameraParams(cfg.camera.scale, view_rotation("xyz", args.camera_deg))
    if args.command == "noise-sweep":
        kw["snr_points"] = tuple(args.snr) if args.snr else None
        kw["repeats"] = args.repeats
    elif args.snr is not None:
        kw["noise"] = NoiseSpec(args.snr, seed)
    elif cfg.noise is not None and args.seed is not None:
        kw["noise"] = NoiseSpec(cfg.noise.snr_db, seed)
    return with_overrides(cfg, **kw)


def _synth(args) -> dict:
    out = Path(args.out)
    corpus_dir = out / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for group, seqs in synthetic_corpus(args.frames, seed=args.seed).items():
        for k, seq in enumerate(seqs):
            name = f"{group}_{k}.csv"
            save_sequence(seq, corpus_dir / name)
            manifest[name] = group
    (corpus_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    # held-out test motion, plus its projection through a generic view
    gt = synthesize_motion(sorted(ACTIONS)[0], args.frames, seed=args.seed + 7919)
    save_sequence(gt, out / "gt.csv")
    view = CameraParams(1.0, view_rotation("xyz", [15.0, 30.0, 0.0]))
    save_sequence(orthographic_project_sequence(gt, view), out / "input2d.csv")
    return {"corpus_files": len(manifest), "frames": args.frames}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "build-dict":
            info = run_build_dictionary(args.corpus, args.manifest, args.bases_per_group, args.out)
            print(f"M = {info['n_bases']}")
            for group, n in info["groups"].items():
                print(f"  {group}: {n}")
            return 0
        if args.command == "synth":
            info = _synth(args)
            print(f"wrote {info['corpus_files']} corpus files and a {info['frames']}-frame test sequence to {args.out}")
            return 0
        cfg = _config_from_args(args)
        if cfg.out is None:
            raise ConfigError("no output directory: pass --out or set 'out' in the config")
        if args.command == "reconstruct":
            run_reconstruct(cfg, args.input)
        elif args.command == "compare":
            run = run_compare(cfg, args.ground_truth)
            sys.stdout.write(run.table.to_csv())
        else:
            sweep = run_noise_sweep(cfg, args.ground_truth)
            sys.stdout.write(sweep.to_csv())
        return 0
    except PoseLiftError as exc:
        print(f"poselift: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"poselift: error: {exc}", file=sys.stderr)
        return NumericalError.exit_code


if __name__ == "__main__":
    sys.exit(main())
