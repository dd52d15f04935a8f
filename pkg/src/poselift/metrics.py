"""Procrustes-aligned reconstruction error and per-joint percentage tables.

Every frame is aligned independently: the reconstruction is translated,
orthogonally transformed (reflections allowed) and uniformly scaled onto the
mean-centred ground truth in the least-squares sense, and the error is the
Euclidean distance per joint after alignment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Pose3D, PoseSequence3D
from .errors import AlignmentError, LoadError, StructuralError

UNDEFINED = "n/a"


def _align_coords(rec: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gt_c = gt - gt.mean(axis=0)
    sv = np.linalg.svd(gt_c, compute_uv=False)
    if sv[0] <= 1e-12 or sv[1] <= 1e-9 * sv[0]:
        raise AlignmentError("ground-truth pose is degenerate (centered rank < 2)")
    rec_c = rec - rec.mean(axis=0)
    norm = float(np.sum(rec_c * rec_c))
    if norm == 0.0:
        return np.zeros_like(gt_c), gt_c
    U, S, Vt = np.linalg.svd(rec_c.T @ gt_c)
    R = U @ Vt
    scale = S.sum() / norm
    return scale * rec_c @ R, gt_c


def procrustes_align(rec: Pose3D, gt: Pose3D) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares similarity alignment of ``rec`` onto centred ``gt``.

    Returns
    -------
    aligned_rec, centred_gt : ndarray, shape (P, 3)

    Raises
    ------
    AlignmentError
        If the centred ground truth has rank < 2.
    """
    if rec.topology != gt.topology:
        raise StructuralError("poses use different topologies")
    return _align_coords(rec.coords, gt.coords)


@dataclass(frozen=True, eq=False)
class ErrorReport:
    joints: tuple[str, ...]
    per_joint_error: np.ndarray
    mean_error: float
    per_frame_error: np.ndarray

    def __post_init__(self):
        pj = np.array(self.per_joint_error, dtype=float)
        pf = np.array(self.per_frame_error, dtype=float)
        object.__setattr__(self, "joints", tuple(self.joints))
        if pj.shape != (len(self.joints),):
            raise StructuralError(f"{pj.size} per-joint errors for {len(self.joints)} joints")
        for arr in (pj, pf):
            if not (np.all(np.isfinite(arr)) and np.all(arr >= 0)):
                raise StructuralError("errors must be finite and non-negative")
            arr.setflags(write=False)
        object.__setattr__(self, "per_joint_error", pj)
        object.__setattr__(self, "per_frame_error", pf)
        object.__setattr__(self, "mean_error", float(self.mean_error))

    def __eq__(self, other):
        return (
            isinstance(other, ErrorReport)
            and self.joints == other.joints
            and np.array_equal(self.per_joint_error, other.per_joint_error)
            and self.mean_error == other.mean_error
            and np.array_equal(self.per_frame_error, other.per_frame_error)
        )

    def to_dict(self) -> dict:
        return {
            "joints": list(self.joints),
            "per_joint_error": self.per_joint_error.tolist(),
            "mean_error": self.mean_error,
            "per_frame_error": self.per_frame_error.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ErrorReport:
        return cls(tuple(d["joints"]), d["per_joint_error"], d["mean_error"], d["per_frame_error"])


def sequence_error(rec: PoseSequence3D, gt: PoseSequence3D) -> ErrorReport:
    """Per-frame aligned Euclidean distances, aggregated per joint."""
    if rec.topology != gt.topology:
        raise StructuralError("sequences use different topologies")
    if len(rec) != len(gt):
        raise StructuralError(f"sequence lengths differ: {len(rec)} vs {len(gt)}")
    dist = np.empty((len(gt), gt.topology.n_joints))
    for t in range(len(gt)):
        try:
            a, b = _align_coords(rec.coords[t], gt.coords[t])
        except AlignmentError as exc:
            raise AlignmentError(f"frame {t}: {exc}") from None
        dist[t] = np.linalg.norm(a - b, axis=1)
    per_joint = dist.mean(axis=0)
    return ErrorReport(gt.topology.joints, per_joint, float(per_joint.mean()), dist.mean(axis=1))


@dataclass(frozen=True)
class PercentageTable:
    """``cells[j][m]`` = 100 * error of method ``m`` / baseline error at joint ``j``.

    Column 0 is the baseline itself. Cells are ``None`` where the baseline
    error is zero; such joints are left out of the AVERAGE row.
    """

    joints: tuple[str, ...]
    methods: tuple[str, ...]
    cells: tuple[tuple[float | None, ...], ...]
    average: tuple[float | None, ...]

    def column(self, method: str) -> list[float | None]:
        m = self.methods.index(method)
        return [row[m] for row in self.cells]

    def to_dict(self) -> dict:
        return {
            "joints": list(self.joints),
            "methods": list(self.methods),
            "cells": [list(r) for r in self.cells],
            "average": list(self.average),
        }

    @classmethod
    def from_dict(cls, d: dict) -> PercentageTable:
        return cls(
            tuple(d["joints"]),
            tuple(d["methods"]),
            tuple(tuple(None if c is None else float(c) for c in row) for row in d["cells"]),
            tuple(None if c is None else float(c) for c in d["average"]),
        )

    def to_csv(self) -> str:
        def fmt(v):
            return UNDEFINED if v is None else f"{v:.2f}"

        lines = [",".join(("joint",) + self.methods)]
        for name, row in zip(self.joints, self.cells):
            lines.append(",".join([name] + [fmt(v) for v in row]))
        lines.append(",".join(["AVERAGE"] + [fmt(v) for v in self.average]))
        return "\n".join(lines) + "\n"


def percentage_table(
    baseline: ErrorReport,
    methods: Sequence[tuple[str, ErrorReport]],
    baseline_name: str = "baseline",
) -> PercentageTable:
    names = [baseline_name] + [name for name, _ in methods]
    if len(set(names)) != len(names):
        raise StructuralError("method names must be distinct")
    reports = [baseline] + [r for _, r in methods]
    for name, r in zip(names, reports):
        if r.joints != baseline.joints:
            raise StructuralError(f"report {name!r} has a different joint set")
    base = baseline.per_joint_error
    rows = []
    for j in range(len(base)):
        if base[j] > 0:
            # ratio first, so a method equal to the baseline gives exactly 100
            rows.append(tuple(100.0 * (float(r.per_joint_error[j]) / float(base[j])) for r in reports))
        else:
            rows.append(tuple(None for _ in reports))
    average = []
    for m in range(len(reports)):
        vals = [row[m] for row in rows if row[m] is not None]
        average.append(math.fsum(vals) / len(vals) if vals else None)
    return PercentageTable(baseline.joints, tuple(names), tuple(rows), tuple(average))


def save_report(
    path,
    reports: Sequence[tuple[str, ErrorReport]],
    table: PercentageTable | None = None,
) -> None:
    """Write ``{"reports": {name: report}, "table": table}`` as JSON."""
    doc = {
        "reports": {name: r.to_dict() for name, r in reports},
        "table": None if table is None else table.to_dict(),
    }
    Path(path).write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")


def load_report(path) -> tuple[list[tuple[str, ErrorReport]], PercentageTable | None]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise LoadError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: line {exc.lineno}: malformed JSON ({exc.msg})") from None
    try:
        reports = [(name, ErrorReport.from_dict(d)) for name, d in doc["reports"].items()]
        table = None if doc.get("table") is None else PercentageTable.from_dict(doc["table"])
    except (KeyError, TypeError, ValueError, StructuralError) as exc:
        raise LoadError(f"{path}: invalid report ({exc})") from None
    return reports, table
