"""End-to-end runs: lift, smooth, score, and write results to an output directory.

Output layout of a run directory::

    <out>/<variant>/sequence.csv     one per variant ("baseline" = unsmoothed lift,
    <out>/<variant>/sequence.json    then one per filter, e.g. "mma_w5")
    <out>/report.csv                 per-joint percentages (compare only)
    <out>/report.json                error reports and the table (compare only)
    <out>/noise_sweep.csv            mean/stdev error per SNR and variant (noise-sweep only)
    <out>/manifest.json              effective configuration and per-run details

Files are first written to a staging directory next to ``<out>`` and moved
into place only when the whole run succeeds, so a failed run leaves nothing
behind. Outputs contain no timestamps; the same configuration and seed give
byte-identical files.
"""

from __future__ import annotations

import contextlib
import json
import logging
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .camera import CameraParams, orthographic_project_sequence
from .core import PoseSequence3D
from .dictionary import build_dictionary, load_dictionary, save_dictionary
from .errors import ConfigError, DataError, LoadError, NumericalError, PoseLiftError
from .io import load_sequence, save_sequence
from .lifter import LiftConfig, lift_sequence, results_to_sequence
from .limits import LimitsModel, load_limits
from .metrics import percentage_table, save_report, sequence_error
from .noise import NoiseSpec, add_noise, snr_sweep_points
from .temporal import KINDS, FilterSpec, smooth_sequence

log = logging.getLogger(__name__)

BASELINE = "baseline"
DEFAULT_WINDOW = 5
DEFAULT_REPEATS = 5


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs besides its input file.

    ``filters`` defaults to all four kinds at window 5; set ``baseline_only``
    to run the unsmoothed lift alone. ``noise`` (``None`` = clean input) is
    used by ``compare``; ``noise-sweep`` uses ``snr_points`` x ``repeats``
    trials instead. Relative paths are kept as given.
    """

    dictionary: str | None = None
    limits: str | None = None
    lift: LiftConfig = field(default_factory=LiftConfig)
    filters: tuple[FilterSpec, ...] = tuple(FilterSpec(k, DEFAULT_WINDOW) for k in KINDS)
    baseline_only: bool = False
    noise: NoiseSpec | None = None
    camera: CameraParams = field(default_factory=CameraParams.identity)
    snr_points: tuple[float, ...] = tuple(snr_sweep_points())
    repeats: int = DEFAULT_REPEATS
    seed: int = 0
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        filters = tuple(self.filters)
        object.__setattr__(self, "filters", filters)
        if not filters and not self.baseline_only:
            raise ConfigError("configure at least one filter or set baseline_only")
        names = [f.name for f in filters]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate filter specs: {names}")
        object.__setattr__(self, "snr_points", tuple(snr_sweep_points(self.snr_points)))
        if int(self.repeats) != self.repeats or self.repeats < 1:
            raise ConfigError(f"repeats must be an integer >= 1, got {self.repeats!r}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError(f"workers must be an integer >= 1, got {self.workers!r}")

    @property
    def active_filters(self) -> tuple[FilterSpec, ...]:
        return () if self.baseline_only else self.filters

    @property
    def variants(self) -> list[str]:
        return [BASELINE] + [f.name for f in self.active_filters]

    def to_dict(self) -> dict:
        return {
            "dictionary": self.dictionary,
            "limits": self.limits,
            "lift": self.lift.to_dict(),
            "filters": [{"kind": f.kind, "window": f.window} for f in self.filters],
            "baseline_only": self.baseline_only,
            "noise": None if self.noise is None else {"snr_db": _json_float(self.noise.snr_db), "seed": self.noise.seed},
            "camera": self.camera.to_dict(),
            "snr_points": list(self.snr_points),
            "repeats": self.repeats,
            "seed": self.seed,
            "workers": self.workers,
            "out": self.out,
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> PipelineConfig:
        """Build from a JSON-style mapping; relative paths resolve against ``base_dir``."""
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        kw = {}
        try:
            for key in ("dictionary", "limits", "out"):
                if d.get(key) is not None:
                    kw[key] = _resolve(d[key], base_dir)
            if "lift" in d:
                lift = dict(d["lift"])
                lift_keys = {f.name for f in fields(LiftConfig)}
                bad = sorted(set(lift) - lift_keys)
                if bad:
                    raise ConfigError(f"unknown lift settings: {bad}")
                kw["lift"] = LiftConfig(**lift)
            if "filters" in d:
                kw["filters"] = _parse_filters(d["filters"])
            if "baseline_only" in d:
                kw["baseline_only"] = bool(d["baseline_only"])
            if d.get("noise") is not None:
                n = d["noise"]
                kw["noise"] = NoiseSpec(float(n["snr_db"]), int(n.get("seed", d.get("seed", 0))))
            if "camera" in d:
                kw["camera"] = CameraParams.from_dict(d["camera"])
            if "snr_points" in d:
                kw["snr_points"] = tuple(d["snr_points"])
            for key in ("repeats", "seed", "workers"):
                if key in d:
                    kw[key] = d[key]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None
        return cls(**kw)


def _json_float(v: float):
    return v if math.isfinite(v) else "inf"


def _resolve(path, base_dir) -> str:
    p = Path(path)
    if base_dir is not None and not p.is_absolute():
        p = Path(base_dir) / p
    return str(p)


def _parse_filters(spec) -> tuple[FilterSpec, ...]:
    """A list of ``{kind, window}`` or ``{"kinds": [...], "windows": [...]}`` (cross product)."""
    if isinstance(spec, dict):
        kinds = spec.get("kinds", list(KINDS))
        windows = spec.get("windows", [DEFAULT_WINDOW])
        return tuple(FilterSpec(k, w) for k in kinds for w in windows)
    return tuple(FilterSpec(f["kind"], f.get("window", DEFAULT_WINDOW)) for f in spec)


def load_config(path) -> PipelineConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: malformed JSON ({exc.msg})") from None
    return PipelineConfig.from_dict(doc, base_dir=Path(path).parent)


# -- helpers --------------------------------------------------------------------


@contextlib.contextmanager
def stage(name: str):
    """Prefix any error raised inside with the pipeline stage name."""
    try:
        yield
    except PoseLiftError as exc:
        raise type(exc)(f"{name}: {exc}") from None
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{name}: {exc}") from None


@contextlib.contextmanager
def staged_output(out):
    """Yield a staging directory that replaces ``out`` only on success."""
    if out is None:
        raise ConfigError("no output directory given")
    out = Path(out)
    if out.exists() and not (out.is_dir() and (not any(out.iterdir()) or (out / "manifest.json").exists())):
        raise ConfigError(f"{out} exists and is not an empty directory or a previous run")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    os.replace(tmp, out)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")


def _require_file(path, what: str):
    if path is None:
        raise ConfigError(f"no {what} configured")
    if not Path(path).is_file():
        raise ConfigError(f"{what} file not found: {path}")


def _load_models(cfg: PipelineConfig):
    _require_file(cfg.dictionary, "dictionary")
    if cfg.limits is not None:
        _require_file(cfg.limits, "limits")
    with stage("load dictionary"):
        dictionary = load_dictionary(cfg.dictionary)
    if cfg.limits is None:
        limits = LimitsModel.permissive(dictionary.topology)
    else:
        with stage("load limits"):
            limits = load_limits(cfg.limits, dictionary.topology)
    return dictionary, limits


def _reconstruct(cfg: PipelineConfig, seq2d, dictionary, limits):
    with stage("lift"):
        results = lift_sequence(seq2d, dictionary, limits, cfg.lift, workers=cfg.workers)
        base = results_to_sequence(results)
    variants = {BASELINE: base}
    with stage("smooth"):
        for spec in cfg.active_filters:
            variants[spec.name] = smooth_sequence(base, spec)
    return results, variants


def _write_variants(root: Path, variants: dict) -> None:
    for name, seq in variants.items():
        d = root / name
        d.mkdir()
        save_sequence(seq, d / "sequence.csv")
        save_sequence(seq, d / "sequence.json")


def _lift_summary(results) -> dict:
    return {
        "residuals": [r.residual for r in results],
        "valid": [r.valid for r in results],
        "flipped": [r.flipped for r in results],
        "n_bases": [len(r.code) for r in results],
    }


# -- runs -------------------------------------------------------------------------


@dataclass
class RunResult:
    variants: dict
    results: list
    reports: list = field(default_factory=list)
    table: object = None


def run_reconstruct(cfg: PipelineConfig, input_path) -> RunResult:
    """Lift a 2D sequence file and write the unsmoothed and smoothed results."""
    dictionary, limits = _load_models(cfg)
    with stage("load input"):
        seq2d = load_sequence(input_path, 2, topology=dictionary.topology)
    results, variants = _reconstruct(cfg, seq2d, dictionary, limits)
    with staged_output(cfg.out) as tmp, stage("write outputs"):
        _write_variants(tmp, variants)
        _write_json(tmp / "manifest.json", {
            "command": "reconstruct",
            "input": str(input_path),
            "config": cfg.to_dict(),
            "frames": len(seq2d),
            "variants": list(variants),
            "lift": _lift_summary(results),
        })
    return RunResult(variants, results)


def _compare(cfg: PipelineConfig, gt: PoseSequence3D, noise: NoiseSpec | None, dictionary, limits):
    with stage("project"):
        seq2d = orthographic_project_sequence(gt, cfg.camera)
    if noise is not None:
        with stage("noise"):
            seq2d = add_noise(seq2d, noise)
    results, variants = _reconstruct(cfg, seq2d, dictionary, limits)
    with stage("score"):
        reports = [(name, sequence_error(seq, gt)) for name, seq in variants.items()]
        table = percentage_table(reports[0][1], reports[1:], baseline_name=BASELINE)
    return RunResult(variants, results, reports, table)


def _load_gt(gt_path, dictionary) -> PoseSequence3D:
    with stage("load ground truth"):
        return load_sequence(gt_path, 3, topology=dictionary.topology)


def run_compare(cfg: PipelineConfig, gt_path) -> RunResult:
    """Project ground truth, lift, smooth and score every variant against it."""
    dictionary, limits = _load_models(cfg)
    gt = _load_gt(gt_path, dictionary)
    run = _compare(cfg, gt, cfg.noise, dictionary, limits)
    with staged_output(cfg.out) as tmp, stage("write outputs"):
        _write_variants(tmp, run.variants)
        (tmp / "report.csv").write_text(run.table.to_csv())
        save_report(tmp / "report.json", run.reports, run.table)
        _write_json(tmp / "manifest.json", {
            "command": "compare",
            "ground_truth": str(gt_path),
            "config": cfg.to_dict(),
            "frames": len(gt),
            "variants": list(run.variants),
            "mean_error": {name: r.mean_error for name, r in run.reports},
            "lift": _lift_summary(run.results),
        })
    return run


def trial_seed(seed: int, snr_index: int, repeat: int) -> int:
    """Independent, schedule-free noise seed for one sweep trial."""
    return int(np.random.SeedSequence([seed, snr_index, repeat]).generate_state(1)[0])


@dataclass
class SweepResult:
    snr_points: list
    variants: list
    # errors[variant][snr_index] = list of per-trial mean errors
    errors: dict

    def rows(self):
        for name in self.variants:
            for i, snr in enumerate(self.snr_points):
                e = np.array(self.errors[name][i])
                std = float(e.std(ddof=1)) if e.size > 1 else 0.0
                yield snr, name, float(e.mean()), std, int(e.size)

    def to_csv(self) -> str:
        lines = ["snr_db,variant,mean_error,std_error,trials"]
        for snr, name, mean, std, n in self.rows():
            lines.append(f"{snr!r},{name},{mean!r},{std!r},{n}")
        return "\n".join(lines) + "\n"


def run_noise_sweep(cfg: PipelineConfig, gt_path, write: bool = True) -> SweepResult:
    """Repeat the comparison ``repeats`` times at every SNR point."""
    dictionary, limits = _load_models(cfg)
    gt = _load_gt(gt_path, dictionary)
    points = list(cfg.snr_points)
    errors = {name: [[] for _ in points] for name in cfg.variants}
    for i, snr in enumerate(points):
        for r in range(cfg.repeats):
            spec = NoiseSpec(snr, trial_seed(cfg.seed, i, r))
            run = _compare(cfg, gt, spec, dictionary, limits)
            for name, report in run.reports:
                errors[name][i].append(report.mean_error)
    sweep = SweepResult(points, cfg.variants, errors)
    if write:
        with staged_output(cfg.out) as tmp, stage("write outputs"):
            (tmp / "noise_sweep.csv").write_text(sweep.to_csv())
            _write_json(tmp / "noise_sweep.json", {"snr_points": points, "errors": errors})
            _write_json(tmp / "manifest.json", {
                "command": "noise-sweep",
                "ground_truth": str(gt_path),
                "config": cfg.to_dict(),
                "frames": len(gt),
                "variants": cfg.variants,
                "trial_seeds": [[trial_seed(cfg.seed, i, r) for r in range(cfg.repeats)] for i in range(len(points))],
            })
    return sweep


def load_corpus_manifest(corpus_dir, manifest_path) -> dict:
    """Group -> list of 3D sequences from ``{"file": "group", ...}``.

    Every unreadable or invalid file is reported at once.
    """
    try:
        doc = json.loads(Path(manifest_path).read_text())
    except OSError as exc:
        raise ConfigError(f"{manifest_path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{manifest_path}: line {exc.lineno}: malformed JSON ({exc.msg})") from None
    if not isinstance(doc, dict) or not all(isinstance(g, str) for g in doc.values()):
        raise ConfigError(f"{manifest_path}: expected an object mapping file names to group names")
    groups: dict = {}
    problems = []
    for fname, group in doc.items():
        groups.setdefault(group, [])
        try:
            groups[group].append(load_sequence(Path(corpus_dir) / fname, 3))
        except LoadError as exc:
            problems.append(str(exc))
    if problems:
        raise LoadError("corpus files could not be loaded:\n  " + "\n  ".join(problems))
    if not any(groups.values()):
        raise DataError("every corpus group is empty")
    return groups


def run_build_dictionary(corpus_dir, manifest_path, bases_per_group: int, out_path) -> dict:
    """Build and save a dictionary; returns its column counts per group."""
    with stage("load corpus"):
        corpus = load_corpus_manifest(corpus_dir, manifest_path)
    with stage("build dictionary"):
        d = build_dictionary(corpus, bases_per_group)
    if d.n_bases == 0:
        raise DataError("build dictionary: the corpus has no variance; no columns")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = out_path.with_name(f".{out_path.name}.tmp")
    try:
        save_dictionary(d, tmp)
        os.replace(tmp, out_path)
    finally:
        tmp.unlink(missing_ok=True)
    counts = {g: d.group_labels.count(g) for g in corpus}
    return {"n_bases": d.n_bases, "groups": counts}


def with_overrides(cfg: PipelineConfig, **kw) -> PipelineConfig:
    """``dataclasses.replace`` that skips ``None`` values."""
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
