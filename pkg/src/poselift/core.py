"""Skeleton topology, poses, pose sequences and per-coordinate signals.

Poses are stored as ``(P, D)`` float arrays (``D`` = 2 or 3); sequences as
``(N, P, D)`` arrays. All objects are immutable once built: the backing
arrays are copied and flagged read-only.

Flattening follows joint-major, axis-minor order, i.e. ``x1 y1 z1 x2 ...``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import StructuralError

AXES = ("x", "y", "z")

DEFAULT_JOINTS = (
    "hip",
    "neck",
    "head",
    "l-shoulder",
    "l-elbow",
    "l-hand",
    "r-shoulder",
    "r-elbow",
    "r-hand",
    "l-hip",
    "l-knee",
    "l-foot",
    "r-hip",
    "r-knee",
    "r-foot",
)

DEFAULT_PARENTS = {
    "hip": None,
    "neck": "hip",
    "head": "neck",
    "l-shoulder": "neck",
    "l-elbow": "l-shoulder",
    "l-hand": "l-elbow",
    "r-shoulder": "neck",
    "r-elbow": "r-shoulder",
    "r-hand": "r-elbow",
    "l-hip": "hip",
    "l-knee": "l-hip",
    "l-foot": "l-knee",
    "r-hip": "hip",
    "r-knee": "r-hip",
    "r-foot": "r-knee",
}


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class JointTopology:
    """Named joints with parent links and bone (limb) pairs.

    Parameters
    ----------
    joints : sequence of str
        Unique joint names, in storage order.
    parent : sequence of int or None
        Parent index per joint; exactly one root (``None``).
    limbs : sequence of (int, int), optional
        ``(parent_joint, child_joint)`` bone pairs. Derived from ``parent``
        when omitted.
    """

    joints: tuple[str, ...]
    parent: tuple[int | None, ...]
    limbs: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        joints = tuple(str(j) for j in self.joints)
        parent = tuple(None if p is None or p < 0 else int(p) for p in self.parent)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "parent", parent)
        P = len(joints)
        if P < 2:
            raise StructuralError(f"topology needs at least 2 joints, got {P}")
        if len(set(joints)) != P:
            raise StructuralError("joint names must be unique")
        if len(parent) != P:
            raise StructuralError(f"{len(parent)} parent links for {P} joints")
        roots = [i for i, p in enumerate(parent) if p is None]
        if len(roots) != 1:
            raise StructuralError(f"expected exactly one root joint, found {len(roots)}")
        for i, p in enumerate(parent):
            if p is not None and not 0 <= p < P:
                raise StructuralError(f"joint {joints[i]!r} has out-of-range parent {p}")
        # every joint must reach the root without revisiting a node
        for i in range(P):
            seen = set()
            j = i
            while parent[j] is not None:
                if j in seen:
                    raise StructuralError(f"parent links contain a cycle through {joints[i]!r}")
                seen.add(j)
                j = parent[j]

        if self.limbs:
            limbs = tuple((int(a), int(b)) for a, b in self.limbs)
        else:
            limbs = tuple((p, i) for i, p in enumerate(parent) if p is not None)
        for a, b in limbs:
            if a == b or not (0 <= a < P and 0 <= b < P):
                raise StructuralError(f"invalid limb ({a}, {b})")
        object.__setattr__(self, "limbs", limbs)

    @classmethod
    def from_names(cls, joints: Sequence[str], parents: Sequence[str | None]) -> JointTopology:
        index = {name: i for i, name in enumerate(joints)}
        try:
            parent = [None if p is None else index[p] for p in parents]
        except KeyError as exc:
            raise StructuralError(f"unknown parent joint {exc.args[0]!r}") from None
        return cls(tuple(joints), tuple(parent))

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def root(self) -> int:
        return self.parent.index(None)

    def index(self, name: str) -> int:
        try:
            return self.joints.index(name)
        except ValueError:
            raise StructuralError(f"unknown joint {name!r}") from None

    def has_limb(self, a: int, b: int) -> bool:
        return (a, b) in self.limbs or (b, a) in self.limbs

    def to_dict(self) -> dict:
        return {
            "joints": list(self.joints),
            "parents": [None if p is None else self.joints[p] for p in self.parent],
        }

    @classmethod
    def from_dict(cls, d: dict) -> JointTopology:
        return cls.from_names(d["joints"], d["parents"])


def default_topology() -> JointTopology:
    """The 15-joint hip-rooted skeleton."""
    return JointTopology.from_names(DEFAULT_JOINTS, [DEFAULT_PARENTS[j] for j in DEFAULT_JOINTS])


def _check_coords(coords: np.ndarray, topology: JointTopology, dims: int, what: str):
    if coords.ndim != 2 or coords.shape != (topology.n_joints, dims):
        raise StructuralError(
            f"{what} expects shape ({topology.n_joints}, {dims}), got {coords.shape}"
        )
    if not np.all(np.isfinite(coords)):
        raise StructuralError(f"{what} has non-finite coordinates")


@dataclass(frozen=True, eq=False)
class _Pose:
    topology: JointTopology
    coords: np.ndarray
    dims = 0

    def __post_init__(self):
        coords = _frozen(self.coords)
        _check_coords(coords, self.topology, self.dims, type(self).__name__)
        object.__setattr__(self, "coords", coords)

    def flatten(self) -> np.ndarray:
        return self.coords.reshape(-1).copy()

    @classmethod
    def from_flat(cls, topology: JointTopology, flat: np.ndarray):
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (cls.dims * topology.n_joints,):
            raise StructuralError(
                f"flat pose must have length {cls.dims * topology.n_joints}, got {flat.shape}"
            )
        return cls(topology, flat.reshape(topology.n_joints, cls.dims))

    def __eq__(self, other):
        return (
            type(other) is type(self)
            and other.topology == self.topology
            and np.array_equal(other.coords, self.coords)
        )


class Pose3D(_Pose):
    dims = 3


class Pose2D(_Pose):
    dims = 2


@dataclass(frozen=True, eq=False)
class _PoseSequence:
    topology: JointTopology
    coords: np.ndarray
    dims = 0
    pose_type = _Pose

    def __post_init__(self):
        coords = _frozen(self.coords)
        name = type(self).__name__
        if coords.ndim != 3 or coords.shape[1:] != (self.topology.n_joints, self.dims):
            raise StructuralError(
                f"{name} expects shape (N, {self.topology.n_joints}, {self.dims}), got {coords.shape}"
            )
        if coords.shape[0] < 1:
            raise StructuralError(f"{name} needs at least one frame")
        if not np.all(np.isfinite(coords)):
            bad = int(np.argwhere(~np.isfinite(coords))[0][0])
            raise StructuralError(f"{name} has non-finite coordinates in frame {bad}")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_frames(cls, frames: Iterable[_Pose]):
        frames = list(frames)
        if not frames:
            raise StructuralError(f"{cls.__name__} needs at least one frame")
        topo = frames[0].topology
        for t, f in enumerate(frames):
            if not isinstance(f, cls.pose_type):
                raise StructuralError(f"frame {t} is not a {cls.pose_type.__name__}")
            if f.topology != topo:
                raise StructuralError(f"frame {t} has a different topology")
        return cls(topo, np.stack([f.coords for f in frames]))

    @property
    def frames(self) -> list:
        return [self.pose_type(self.topology, c) for c in self.coords]

    def __len__(self) -> int:
        return self.coords.shape[0]

    def __getitem__(self, t: int):
        return self.pose_type(self.topology, self.coords[t])

    def __eq__(self, other):
        return (
            type(other) is type(self)
            and other.topology == self.topology
            and np.array_equal(other.coords, self.coords)
        )


class PoseSequence3D(_PoseSequence):
    dims = 3
    pose_type = Pose3D


class PoseSequence2D(_PoseSequence):
    dims = 2
    pose_type = Pose2D


@dataclass(frozen=True, eq=False)
class JointSignal:
    """Scalar time series of one joint coordinate."""

    values: np.ndarray
    joint: int
    axis: str

    def __post_init__(self):
        if self.axis not in AXES:
            raise StructuralError(f"axis must be one of {AXES}, got {self.axis!r}")
        values = _frozen(self.values)
        if values.ndim != 1 or values.size < 1:
            raise StructuralError("signal values must be a non-empty 1-D series")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def with_values(self, values) -> JointSignal:
        return JointSignal(values, self.joint, self.axis)


def sequence_to_signals(seq: PoseSequence3D) -> list[JointSignal]:
    """Split a sequence into its 3P coordinate signals, joint-major."""
    out = []
    for j in range(seq.topology.n_joints):
        for a, axis in enumerate(AXES):
            out.append(JointSignal(seq.coords[:, j, a], j, axis))
    return out


def signals_to_sequence(signals: Sequence[JointSignal], topology: JointTopology) -> PoseSequence3D:
    P = topology.n_joints
    if len(signals) != 3 * P:
        raise StructuralError(f"expected {3 * P} signals for {P} joints, got {len(signals)}")
    lengths = {len(s) for s in signals}
    if len(lengths) != 1:
        raise StructuralError(f"signals have unequal lengths {sorted(lengths)}")
    (N,) = lengths
    coords = np.empty((N, P, 3))
    seen = set()
    for s in signals:
        key = (s.joint, s.axis)
        if not 0 <= s.joint < P:
            raise StructuralError(f"signal joint index {s.joint} out of range")
        if key in seen:
            raise StructuralError(f"duplicate signal for joint {s.joint} axis {s.axis}")
        seen.add(key)
        coords[:, s.joint, AXES.index(s.axis)] = s.values
    return PoseSequence3D(topology, coords)


def root_centered(coords: np.ndarray, topology: JointTopology) -> np.ndarray:
    """Translate ``(..., P, D)`` coordinates so the root joint sits at the origin."""
    coords = np.asarray(coords, dtype=float)
    r = topology.root
    return coords - coords[..., r : r + 1, :]
