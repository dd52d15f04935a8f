"""Reading and writing pose sequences as CSV or JSON.

CSV files have a mandatory header ``frame,joint,x,y`` (2D) or
``frame,joint,x,y,z`` (3D) and one row per joint per frame. They carry no
topology, so loading resolves joint names against the topology passed in
(the default skeleton if omitted). JSON files are self-describing::

    {"topology": {"joints": [...], "parents": [...]},
     "frames": [[[x, y, z], ...], ...]}

Numbers are written with ``repr``, the shortest decimal that reads back to
the same float, so ``load(save(seq)) == seq`` exactly.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .core import AXES, JointTopology, PoseSequence2D, PoseSequence3D, default_topology
from .errors import ConfigError, LoadError, StructuralError

FORMATS = ("csv", "json")


def _format_for(path, fmt: str | None) -> str:
    fmt = (fmt or Path(path).suffix.lstrip(".")).lower()
    if fmt not in FORMATS:
        raise ConfigError(f"{path}: cannot tell the file format; use one of {FORMATS}")
    return fmt


def _sequence_type(dims: int):
    if dims == 2:
        return PoseSequence2D
    if dims == 3:
        return PoseSequence3D
    raise ConfigError(f"dims must be 2 or 3, got {dims!r}")


def sequence_to_csv(seq) -> str:
    dims = seq.dims
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("frame", "joint") + AXES[:dims])
    for t, frame in enumerate(seq.coords):
        for name, xyz in zip(seq.topology.joints, frame):
            w.writerow([t, name] + [repr(float(v)) for v in xyz])
    return buf.getvalue()


def sequence_to_dict(seq) -> dict:
    return {"topology": seq.topology.to_dict(), "frames": seq.coords.tolist()}


def save_sequence(seq, path, format: str | None = None, dims: int | None = None) -> None:
    """Write ``seq`` to ``path``; the format defaults to the file suffix."""
    if dims is not None and dims != seq.dims:
        raise ConfigError(f"cannot save a {seq.dims}D sequence as {dims}D")
    fmt = _format_for(path, format)
    text = sequence_to_csv(seq) if fmt == "csv" else json.dumps(sequence_to_dict(seq), allow_nan=False) + "\n"
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise LoadError(f"{path}: {exc.strerror or exc}") from None


def _parse_number(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise LoadError(f"{where}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise LoadError(f"{where}: non-finite value {text!r}")
    return v


def _load_csv(path, text: str, dims: int, topology: JointTopology):
    rows = list(csv.reader(_io.StringIO(text)))
    header = ["frame", "joint", *AXES[:dims]]
    if not rows or [c.strip() for c in rows[0]] != header:
        got = ",".join(rows[0]) if rows else "<empty file>"
        raise LoadError(f"{path}: line 1: expected header {','.join(header)!r}, got {got!r}")
    P = topology.n_joints
    frames: dict[int, np.ndarray] = {}
    seen: dict[int, set] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        where = f"{path}: line {lineno}"
        if not row:
            continue
        if len(row) != len(header):
            raise LoadError(f"{where}: expected {len(header)} fields, got {len(row)}")
        try:
            t = int(row[0])
        except ValueError:
            raise LoadError(f"{where}: bad frame index {row[0]!r}") from None
        if t < 0:
            raise LoadError(f"{where}: negative frame index {t}")
        name = row[1].strip()
        if name not in topology.joints:
            raise LoadError(f"{where}: unknown joint {name!r}")
        j = topology.joints.index(name)
        if j in seen.setdefault(t, set()):
            raise LoadError(f"{where}: joint {name!r} repeated in frame {t}")
        seen[t].add(j)
        coords = frames.setdefault(t, np.full((P, dims), np.nan))
        for a in range(dims):
            coords[j, a] = _parse_number(row[2 + a], f"{where}, field {header[2 + a]}")
    if not frames:
        raise LoadError(f"{path}: no data rows")
    order = sorted(frames)
    if order != list(range(len(order))):
        missing = sorted(set(range(order[-1] + 1)) - set(order))
        raise LoadError(f"{path}: frame indices are not contiguous from 0 (missing {missing[:5]})")
    for t in order:
        if len(seen[t]) != P:
            absent = [topology.joints[j] for j in range(P) if j not in seen[t]]
            raise LoadError(f"{path}: frame {t} is missing joints {absent}")
    return _sequence_type(dims)(topology, np.stack([frames[t] for t in order]))


def _load_json(path, text: str, dims: int, topology: JointTopology | None):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: line {exc.lineno}: malformed JSON ({exc.msg})") from None
    if not isinstance(doc, dict) or "topology" not in doc or "frames" not in doc:
        raise LoadError(f"{path}: expected an object with 'topology' and 'frames'")
    try:
        topo = JointTopology.from_dict(doc["topology"])
    except (KeyError, TypeError, StructuralError) as exc:
        raise LoadError(f"{path}: topology: {exc}") from None
    if topology is not None and topo != topology:
        raise LoadError(f"{path}: topology does not match the expected skeleton")
    frames = doc["frames"]
    if not isinstance(frames, list) or not frames:
        raise LoadError(f"{path}: frames: expected a non-empty list")
    P = topo.n_joints
    out = np.empty((len(frames), P, dims))
    for t, frame in enumerate(frames):
        if not isinstance(frame, list) or len(frame) != P:
            raise LoadError(f"{path}: frames[{t}]: expected {P} joints")
        for j, pt in enumerate(frame):
            where = f"{path}: frames[{t}][{j}] ({topo.joints[j]})"
            if not isinstance(pt, list) or len(pt) != dims:
                raise LoadError(f"{where}: expected {dims} coordinates")
            for a, v in enumerate(pt):
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                    raise LoadError(f"{where}: non-finite or non-numeric value {v!r}")
                out[t, j, a] = v
    return _sequence_type(dims)(topo, out)


def load_sequence(path, expected_dims: int, topology: JointTopology | None = None, format: str | None = None):
    """Load a 2D or 3D sequence, validating shape, contiguity and finiteness.

    Raises
    ------
    LoadError
        With the offending line (CSV) or frame/joint (JSON) in the message.
    """
    _sequence_type(expected_dims)
    fmt = _format_for(path, format)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise LoadError(f"{path}: {exc.strerror or exc}") from None
    if fmt == "csv":
        return _load_csv(path, text, expected_dims, topology or default_topology())
    return _load_json(path, text, expected_dims, topology)
