import json

import numpy as np
import pytest

from poselift.core import JointTopology, PoseSequence2D, PoseSequence3D
from poselift.errors import ConfigError, LoadError
from poselift.io import load_sequence, save_sequence, sequence_to_csv


@pytest.fixture
def seq3(topo):
    return PoseSequence3D(topo, np.random.default_rng(0).normal(size=(4, 15, 3)))


@pytest.mark.parametrize("suffix", ["csv", "json"])
@pytest.mark.parametrize("dims", [2, 3])
def test_round_trip_is_exact(topo, tmp_path, suffix, dims):
    cls = PoseSequence2D if dims == 2 else PoseSequence3D
    coords = np.random.default_rng(dims).normal(size=(5, 15, dims)) * 1e3
    coords[0, 0, 0] = 1 / 3
    seq = cls(topo, coords)
    path = tmp_path / f"s.{suffix}"
    save_sequence(seq, path)
    assert load_sequence(path, dims) == seq


def test_csv_layout(topo):
    seq = PoseSequence3D(topo, np.zeros((1, 15, 3)))
    lines = sequence_to_csv(seq).splitlines()
    assert lines[0] == "frame,joint,x,y,z"
    assert len(lines) == 16
    assert lines[1] == "0,hip,0.0,0.0,0.0"


def test_explicit_format_overrides_suffix(seq3, tmp_path):
    path = tmp_path / "data.txt"
    save_sequence(seq3, path, format="json")
    assert load_sequence(path, 3, format="json") == seq3


def test_dims_mismatch(seq3, tmp_path):
    with pytest.raises(ConfigError):
        save_sequence(seq3, tmp_path / "x.csv", dims=2)
    save_sequence(seq3, tmp_path / "x.csv")
    with pytest.raises(LoadError, match="line 1"):
        load_sequence(tmp_path / "x.csv", 2)


def write_rows(path, rows, header="frame,joint,x,y"):
    path.write_text("\n".join([header] + rows) + "\n")


def frame_rows(topo, t, value="1.0"):
    return [f"{t},{j},{value},{value}" for j in topo.joints]


def test_nan_names_the_row(topo, tmp_path):
    rows = frame_rows(topo, 0)
    rows[6] = f"0,{topo.joints[6]},nan,1.0"
    write_rows(tmp_path / "n.csv", rows)
    with pytest.raises(LoadError, match=r"line 8, field x"):
        load_sequence(tmp_path / "n.csv", 2)


def test_contiguity(topo, tmp_path):
    write_rows(tmp_path / "c.csv", frame_rows(topo, 0) + frame_rows(topo, 1) + frame_rows(topo, 3))
    with pytest.raises(LoadError, match=r"contiguous.*\[2\]"):
        load_sequence(tmp_path / "c.csv", 2)


def test_rows_may_arrive_in_any_order(topo, tmp_path):
    rows = frame_rows(topo, 1, "2.0") + frame_rows(topo, 0)[::-1]
    write_rows(tmp_path / "o.csv", rows)
    seq = load_sequence(tmp_path / "o.csv", 2)
    np.testing.assert_array_equal(seq.coords[:, 0, 0], [1.0, 2.0])


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda r: r[:-1], r"frame 0 is missing joints \['r-foot'\]"),
        (lambda r: r + [r[0]], "repeated"),
        (lambda r: r + ["0,tail,1,1"], "unknown joint 'tail'"),
        (lambda r: r + ["x,hip,1,1"], "bad frame index"),
        (lambda r: r + ["0,hip,1"], "expected 4 fields"),
        (lambda r: [], "no data rows"),
    ],
)
def test_csv_diagnostics(topo, tmp_path, mutate, message):
    write_rows(tmp_path / "d.csv", mutate(frame_rows(topo, 0)))
    with pytest.raises(LoadError, match=message):
        load_sequence(tmp_path / "d.csv", 2)


def test_json_diagnostics(seq3, tmp_path, topo):
    path = tmp_path / "s.json"
    save_sequence(seq3, path)
    doc = json.loads(path.read_text())
    doc["frames"][2][4] = [0.0, 1.0]
    path.write_text(json.dumps(doc))
    with pytest.raises(LoadError, match=r"frames\[2\]\[4\] \(l-elbow\)"):
        load_sequence(path, 3)

    save_sequence(seq3, path)
    other = JointTopology(("a", "b"), (None, 0))
    with pytest.raises(LoadError, match="topology"):
        load_sequence(path, 3, topology=other)

    path.write_text('{"topology": ')
    with pytest.raises(LoadError, match="malformed"):
        load_sequence(path, 3)


def test_missing_file_and_bad_format(tmp_path):
    with pytest.raises(LoadError):
        load_sequence(tmp_path / "nope.csv", 2)
    with pytest.raises(ConfigError):
        load_sequence(tmp_path / "nope.xml", 2)
    with pytest.raises(ConfigError):
        load_sequence(tmp_path / "nope.csv", 4)
