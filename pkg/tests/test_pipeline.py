import json
import os

import numpy as np
import pytest

from conftest import in_span_frame
from poselift.camera import CameraParams, view_rotation
from poselift.core import PoseSequence2D, PoseSequence3D
from poselift.dictionary import load_dictionary, save_dictionary
from poselift.errors import ConfigError, LoadError, NoiseError
from poselift.io import load_sequence, save_sequence
from poselift.lifter import LiftConfig
from poselift.metrics import load_report
from poselift.noise import NoiseSpec
from poselift.pipeline import (
    PipelineConfig,
    load_config,
    run_build_dictionary,
    run_compare,
    run_noise_sweep,
    run_reconstruct,
)
from poselift.synthetic import synthesize_motion
from poselift.temporal import FilterSpec

FAST = LiftConfig(max_bases=4)
VIEW = CameraParams(1.0, view_rotation("xy", [15.0, 30.0]))


@pytest.fixture(scope="module")
def files(tmp_path_factory, dictionary):
    root = tmp_path_factory.mktemp("inputs")
    save_dictionary(dictionary, root / "dict.json")
    save_sequence(synthesize_motion("wave", 12, seed=3), root / "gt.csv")
    return root


def config(files, out, **kw):
    base = dict(dictionary=str(files / "dict.json"), lift=FAST, out=None if out is None else str(out), camera=VIEW)
    return PipelineConfig(**{**base, **kw})


def tree_bytes(root):
    out = {}
    for dirpath, _, names in os.walk(root):
        for n in names:
            p = os.path.join(dirpath, n)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


def test_single_filter_gives_two_sequences(files, tmp_path):
    cfg = config(files, tmp_path / "run", filters=[FilterSpec("MMA", 5)])
    run = run_compare(cfg, files / "gt.csv")
    assert list(run.variants) == ["baseline", "mma_w5"]
    assert sorted(p.name for p in (tmp_path / "run").iterdir()) == [
        "baseline", "manifest.json", "mma_w5", "report.csv", "report.json"]
    assert run.table.column("baseline") == [100.0] * 15
    assert 0 <= run.reports[0][1].mean_error < np.inf
    reports, table = load_report(tmp_path / "run" / "report.json")
    assert table == run.table and reports == run.reports


def test_twelve_filters_give_thirteen_columns(files, tmp_path):
    filters = [FilterSpec(k, w) for k in ("SMA", "EMA", "WMA", "MMA") for w in (3, 5, 9)]
    cfg = config(files, tmp_path / "run", filters=filters)
    run = run_compare(cfg, files / "gt.csv")
    assert len(run.table.methods) == 13
    header = (tmp_path / "run" / "report.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "joint" and len(header) == 14


def test_rerun_is_byte_identical(files, tmp_path):
    cfg = config(files, tmp_path / "run", noise=NoiseSpec(9.0, seed=5))
    run_compare(cfg, files / "gt.csv")
    first = tree_bytes(tmp_path / "run")
    run_compare(cfg, files / "gt.csv")  # a previous run directory may be replaced
    assert tree_bytes(tmp_path / "run") == first


def test_in_span_residuals_recorded(files, tmp_path, dictionary, topo):
    rng = np.random.default_rng(21)
    frames = np.stack([in_span_frame(dictionary, rng)[1] for _ in range(5)])
    save_sequence(PoseSequence2D(topo, frames), tmp_path / "in.csv")
    cfg = config(files, tmp_path / "run", lift=LiftConfig.robust(anthro_weight=0.0), baseline_only=True)
    run_reconstruct(cfg, tmp_path / "in.csv")
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["variants"] == ["baseline"]
    assert len(manifest["lift"]["residuals"]) == 5
    assert max(manifest["lift"]["residuals"]) <= 1e-6
    assert len(load_sequence(tmp_path / "run" / "baseline" / "sequence.json", 3)) == 5


def test_failed_run_leaves_nothing(files, tmp_path, topo):
    # every joint at the origin: the projected input has no variance, so SNR is undefined
    save_sequence(PoseSequence3D(topo, np.zeros((4, 15, 3))), tmp_path / "flat.csv")
    cfg = config(files, tmp_path / "run", noise=NoiseSpec(9.0))
    with pytest.raises(NoiseError, match="^noise: "):
        run_compare(cfg, tmp_path / "flat.csv")
    assert [p.name for p in tmp_path.iterdir()] == ["flat.csv"]


def test_output_directory_rules(files, tmp_path):
    out = tmp_path / "occupied"
    out.mkdir()
    (out / "keep.txt").write_text("mine")
    with pytest.raises(ConfigError, match="exists"):
        run_compare(config(files, out, baseline_only=True), files / "gt.csv")
    assert (out / "keep.txt").read_text() == "mine"
    with pytest.raises(ConfigError):
        run_compare(config(files, None, baseline_only=True), files / "gt.csv")


def test_noise_sweep_counts_and_determinism(files, tmp_path):
    cfg = config(files, tmp_path / "s1", filters=[FilterSpec("SMA", 3)], repeats=5)
    sweep = run_noise_sweep(cfg, files / "gt.csv")
    assert all(len(trials) == 5 for name in sweep.variants for trials in sweep.errors[name])
    rows = list(sweep.rows())
    assert len(rows) == 2 * 3
    assert {r[0] for r in rows} == {1.0, 9.0, 17.0}
    again = run_noise_sweep(config(files, tmp_path / "s2", filters=[FilterSpec("SMA", 3)], repeats=5), files / "gt.csv")
    assert again.to_csv() == sweep.to_csv()
    assert (tmp_path / "s1" / "noise_sweep.csv").read_text() == sweep.to_csv()


def test_high_snr_approaches_clean_run(files, tmp_path):
    cfg = config(files, tmp_path / "clean", baseline_only=True)
    clean = run_compare(cfg, files / "gt.csv").reports[0][1].mean_error
    sweep = run_noise_sweep(config(files, None, baseline_only=True, snr_points=(60.0,), repeats=3),
                            files / "gt.csv", write=False)
    _, _, mean, std, _ = next(sweep.rows())
    assert abs(mean - clean) <= 3 * std + 0.02 * clean


def test_config_file_round_trip(files, tmp_path):
    cfg = config(files, tmp_path / "out", filters=[FilterSpec("EMA", 3)], noise=NoiseSpec(9.0, 2))
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    assert load_config(tmp_path / "c.json") == cfg
    doc = {"filters": {"kinds": ["SMA", "MMA"], "windows": [3, 9]}, "dictionary": "d.json"}
    (tmp_path / "cross.json").write_text(json.dumps(doc))
    loaded = load_config(tmp_path / "cross.json")
    assert loaded.variants == ["baseline", "sma_w3", "sma_w9", "mma_w3", "mma_w9"]
    assert loaded.dictionary == str(tmp_path / "d.json")
    (tmp_path / "bad.json").write_text(json.dumps({"filtres": []}))
    with pytest.raises(ConfigError, match="filtres"):
        load_config(tmp_path / "bad.json")


def test_missing_dictionary_is_config_error(tmp_path, files):
    with pytest.raises(ConfigError, match="dictionary"):
        run_compare(PipelineConfig(out=str(tmp_path / "o")), files / "gt.csv")


def test_build_dictionary(tmp_path, topo):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    manifest = {}
    for g, action in enumerate(("walk", "wave", "squat")):
        name = f"{action}.csv"
        save_sequence(synthesize_motion(action, 40, seed=g), corpus / name)
        manifest[name] = action
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    info = run_build_dictionary(corpus, tmp_path / "m.json", 4, tmp_path / "d1.json")
    assert info == {"n_bases": 12, "groups": {"walk": 4, "wave": 4, "squat": 4}}
    assert load_dictionary(tmp_path / "d1.json").n_bases == 12
    run_build_dictionary(corpus, tmp_path / "m.json", 4, tmp_path / "d2.json")
    assert (tmp_path / "d1.json").read_bytes() == (tmp_path / "d2.json").read_bytes()

    manifest["ghost.csv"] = "walk"
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    with pytest.raises(LoadError, match="ghost.csv"):
        run_build_dictionary(corpus, tmp_path / "m.json", 4, tmp_path / "d3.json")
    assert not (tmp_path / "d3.json").exists()
