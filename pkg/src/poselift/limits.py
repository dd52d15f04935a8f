"""Per-joint validity from a table of hinge-angle limits.

Each entry names a vertex joint and the two limbs meeting there; the
interior angle between the directions vertex->A and vertex->B must fall in
``[min_deg, max_deg]`` (closed). A straight limb chain measures 180 degrees.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import JointTopology, Pose3D
from .errors import ConfigError, LoadError, StructuralError

MODES = ("strict", "permissive")


@dataclass(frozen=True)
class HingeLimit:
    vertex: int
    joint_a: int
    joint_b: int
    min_deg: float
    max_deg: float

    def __post_init__(self):
        if not 0.0 <= self.min_deg <= self.max_deg <= 180.0:
            raise ConfigError(
                f"hinge limits need 0 <= min <= max <= 180, got [{self.min_deg}, {self.max_deg}]"
            )


@dataclass(frozen=True)
class LimitsModel:
    topology: JointTopology
    entries: tuple[HingeLimit, ...] = ()
    mode: str = "permissive"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"limits mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "entries", tuple(self.entries))
        topo = self.topology
        for e in self.entries:
            for a in (e.joint_a, e.joint_b):
                if not topo.has_limb(a, e.vertex):
                    raise StructuralError(
                        f"limb {topo.joints[a]}-{topo.joints[e.vertex]} is not in the topology"
                    )

    @classmethod
    def permissive(cls, topology: JointTopology) -> LimitsModel:
        return cls(topology, (), "permissive")

    def to_dict(self) -> dict:
        names = self.topology.joints
        return {
            "mode": self.mode,
            "entries": [
                {
                    "vertex_joint": names[e.vertex],
                    "limb_a": [names[e.joint_a], names[e.vertex]],
                    "limb_b": [names[e.vertex], names[e.joint_b]],
                    "min_deg": e.min_deg,
                    "max_deg": e.max_deg,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict, topology: JointTopology) -> LimitsModel:
        entries = []
        for k, item in enumerate(doc.get("entries", [])):
            try:
                v = topology.index(item["vertex_joint"])
                a0, a1 = item["limb_a"]
                b0, b1 = item["limb_b"]
                if topology.index(a1) != v or topology.index(b0) != v:
                    raise ConfigError("limbs must meet at the vertex joint")
                entries.append(
                    HingeLimit(v, topology.index(a0), topology.index(b1),
                               float(item["min_deg"]), float(item["max_deg"]))
                )
            except (KeyError, TypeError, ValueError, ConfigError, StructuralError) as exc:
                raise LoadError(f"entries[{k}]: {exc}") from None
        return cls(topology, tuple(entries), doc.get("mode", "permissive"))


def default_limits(topology: JointTopology) -> LimitsModel:
    """Elbows and knees bend within [30, 180] degrees; everything else is free.

    Entries whose joints are missing from ``topology`` are left out.
    """
    entries = []
    for chain in (
        ("l-shoulder", "l-elbow", "l-hand"),
        ("r-shoulder", "r-elbow", "r-hand"),
        ("l-hip", "l-knee", "l-foot"),
        ("r-hip", "r-knee", "r-foot"),
    ):
        if all(j in topology.joints for j in chain):
            a, v, b = (topology.index(j) for j in chain)
            if topology.has_limb(a, v) and topology.has_limb(v, b):
                entries.append(HingeLimit(v, a, b, 30.0, 180.0))
    return LimitsModel(topology, tuple(entries), "permissive")


def load_limits(path, topology: JointTopology) -> LimitsModel:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise LoadError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: line {exc.lineno}: malformed JSON ({exc.msg})") from None
    try:
        return LimitsModel.from_dict(doc, topology)
    except (ConfigError, StructuralError) as exc:
        raise LoadError(f"{path}: {exc}") from None


def save_limits(model: LimitsModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def hinge_angles(coords: np.ndarray, entries) -> np.ndarray:
    """Interior angles in degrees, NaN where a limb has zero length."""
    coords = np.asarray(coords, dtype=float)
    out = np.full(len(entries), np.nan)
    for k, e in enumerate(entries):
        u = coords[e.joint_a] - coords[e.vertex]
        v = coords[e.joint_b] - coords[e.vertex]
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0.0 or nv == 0.0:
            continue
        c = np.clip(u @ v / (nu * nv), -1.0, 1.0)
        out[k] = np.degrees(np.arccos(c))
    return out


def is_valid(pose: Pose3D, model: LimitsModel) -> np.ndarray:
    """Per-joint validity as a length-P boolean array."""
    if pose.topology != model.topology:
        raise StructuralError("pose and limits model use different topologies")
    P = pose.topology.n_joints
    has_entry = np.zeros(P, dtype=bool)
    ok = np.ones(P, dtype=bool)
    angles = hinge_angles(pose.coords, model.entries)
    for e, ang in zip(model.entries, angles):
        has_entry[e.vertex] = True
        # NaN (degenerate limb) fails both comparisons
        if not (e.min_deg <= ang <= e.max_deg):
            ok[e.vertex] = False
    if model.mode == "strict":
        ok &= has_entry
    return ok


def pose_is_valid(pose: Pose3D, model: LimitsModel) -> bool:
    return bool(np.all(is_valid(pose, model)))
