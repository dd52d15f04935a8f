"""Mean pose plus an over-complete dictionary of basis poses.

The dictionary is built group by group: every group (typically one action
class) contributes its leading principal directions about the *global* mean
pose, and the columns of all groups are concatenated.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import JointTopology, PoseSequence3D
from .errors import ConfigError, LoadError, StructuralError

log = logging.getLogger(__name__)

DEFAULT_BASES_PER_GROUP = 12


@dataclass(frozen=True, eq=False)
class PoseDictionary:
    topology: JointTopology
    mean: np.ndarray
    basis: np.ndarray
    group_labels: tuple[str, ...]

    def __post_init__(self):
        P3 = 3 * self.topology.n_joints
        mean = np.array(self.mean, dtype=float)
        basis = np.array(self.basis, dtype=float).reshape(P3, -1) if np.size(self.basis) else np.zeros((P3, 0))
        labels = tuple(str(g) for g in self.group_labels)
        if mean.shape != (P3,):
            raise StructuralError(f"mean pose must have length {P3}, got {mean.shape}")
        if basis.shape[1] != len(labels):
            raise StructuralError(f"{basis.shape[1]} basis columns but {len(labels)} group labels")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(basis))):
            raise StructuralError("dictionary has non-finite entries")
        norms = np.linalg.norm(basis, axis=0)
        bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-12)
        if bad.size:
            raise StructuralError(f"basis column {int(bad[0])} is not unit norm ({norms[bad[0]]!r})")
        mean.setflags(write=False)
        basis.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "group_labels", labels)

    @property
    def n_bases(self) -> int:
        return self.basis.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, PoseDictionary)
            and other.topology == self.topology
            and other.group_labels == self.group_labels
            and np.array_equal(other.mean, self.mean)
            and np.array_equal(other.basis, self.basis)
        )


@dataclass(frozen=True)
class SparseCode:
    """Selected column indices and their weights."""

    indices: tuple[int, ...] = ()
    coefficients: tuple[float, ...] = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        coef = tuple(float(c) for c in self.coefficients)
        if len(idx) != len(coef):
            raise StructuralError(f"{len(idx)} indices but {len(coef)} coefficients")
        if len(set(idx)) != len(idx):
            raise StructuralError("sparse code indices must be distinct")
        if not all(math.isfinite(c) for c in coef):
            raise StructuralError("sparse code has non-finite coefficients")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "coefficients", coef)

    def __len__(self) -> int:
        return len(self.indices)

    def to_dict(self) -> dict:
        return {"indices": list(self.indices), "coefficients": list(self.coefficients)}


def reconstruct_pose(dictionary: PoseDictionary, code: SparseCode) -> np.ndarray:
    """Flattened pose ``mean + basis[:, indices] @ coefficients``."""
    idx = np.asarray(code.indices, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= dictionary.n_bases):
        raise StructuralError(f"code index out of range for {dictionary.n_bases} columns")
    if not idx.size:
        return dictionary.mean.copy()
    return dictionary.mean + dictionary.basis[:, idx] @ np.asarray(code.coefficients)


def _principal_directions(centered: np.ndarray, k: int, magnitude: float) -> np.ndarray:
    """Up to ``k`` leading right-singular vectors with non-negligible variance.

    ``magnitude`` is the norm of the uncentred frames: spread below
    ``1e-10 * magnitude`` is rounding left over from subtracting the mean.
    """
    if not np.any(centered):
        return np.zeros((centered.shape[1], 0))
    _, sv, Vt = np.linalg.svd(centered, full_matrices=False)
    keep = (sv > sv[0] * 1e-8) & (sv > magnitude * 1e-10)
    cols = Vt[keep][:k].T
    # deterministic sign: largest-magnitude entry positive
    flip = np.sign(cols[np.argmax(np.abs(cols), axis=0), np.arange(cols.shape[1])])
    cols = cols * flip
    return cols / np.linalg.norm(cols, axis=0)


def build_dictionary(
    corpus: Mapping[str, Sequence[PoseSequence3D]],
    bases_per_group: int = DEFAULT_BASES_PER_GROUP,
) -> PoseDictionary:
    """Build a dictionary from action-grouped 3D sequences.

    Parameters
    ----------
    corpus : mapping of group name -> list of PoseSequence3D
        Groups are processed in mapping order, so the result is deterministic
        for a given input order.
    bases_per_group : int
        Principal directions kept per group. Groups of lower rank contribute
        fewer columns; zero-variance groups contribute none.

    Returns
    -------
    PoseDictionary
        ``mean`` is the average over every frame of the corpus.
    """
    groups = {name: list(seqs) for name, seqs in corpus.items()}
    all_seqs = [s for seqs in groups.values() for s in seqs]
    if not all_seqs:
        raise ConfigError("corpus is empty")
    topology = all_seqs[0].topology
    for s in all_seqs:
        if s.topology != topology:
            raise StructuralError("corpus sequences do not share one topology")
    P3 = 3 * topology.n_joints
    if not 1 <= bases_per_group <= P3:
        raise ConfigError(f"bases_per_group must lie in [1, {P3}], got {bases_per_group}")

    flat = {name: np.concatenate([s.coords.reshape(len(s), -1) for s in seqs]) if seqs else np.zeros((0, P3))
            for name, seqs in groups.items()}
    mean = np.concatenate(list(flat.values())).mean(axis=0)

    columns, labels = [], []
    for name, frames in flat.items():
        if frames.shape[0] == 0:
            log.warning("dictionary group %r has no frames; skipped", name)
            continue
        cols = _principal_directions(frames - mean, bases_per_group, float(np.linalg.norm(frames)))
        if cols.shape[1] == 0:
            log.warning("dictionary group %r has zero variance; no columns", name)
        columns.append(cols)
        labels.extend([name] * cols.shape[1])
    basis = np.concatenate(columns, axis=1) if columns else np.zeros((P3, 0))
    return PoseDictionary(topology, mean, basis, tuple(labels))


def dictionary_to_dict(d: PoseDictionary) -> dict:
    return {
        "topology": d.topology.to_dict(),
        "mean": d.mean.tolist(),
        "basis": d.basis.T.tolist(),
        "group_labels": list(d.group_labels),
    }


def save_dictionary(d: PoseDictionary, path) -> None:
    # json emits floats via repr, the shortest round-trip decimal
    Path(path).write_text(json.dumps(dictionary_to_dict(d), allow_nan=False) + "\n")


def _number_list(value, field: str, length: int) -> np.ndarray:
    if not isinstance(value, list):
        raise LoadError(f"{field}: expected a list of numbers")
    if len(value) != length:
        raise LoadError(f"{field}: expected {length} values, got {len(value)}")
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise LoadError(f"{field}: non-numeric entry") from None
    if arr.shape != (length,) or not np.all(np.isfinite(arr)):
        raise LoadError(f"{field}: entries must be finite numbers")
    return arr


def load_dictionary(path, topology: JointTopology | None = None) -> PoseDictionary:
    """Load a dictionary file; ``topology`` (if given) must match the file's."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise LoadError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: line {exc.lineno}: malformed JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise LoadError(f"{path}: top level must be an object")
    for key in ("topology", "mean", "basis", "group_labels"):
        if key not in doc:
            raise LoadError(f"{path}: missing field {key!r}")
    try:
        topo = JointTopology.from_dict(doc["topology"])
    except (KeyError, TypeError, StructuralError) as exc:
        raise LoadError(f"{path}: topology: {exc}") from None
    if topology is not None and topo != topology:
        raise LoadError(f"{path}: topology does not match the expected skeleton")
    P3 = 3 * topo.n_joints
    mean = _number_list(doc["mean"], "mean", P3)
    if not isinstance(doc["basis"], list):
        raise LoadError(f"{path}: basis: expected a list of columns")
    cols = [_number_list(c, f"basis[{i}]", P3) for i, c in enumerate(doc["basis"])]
    labels = doc["group_labels"]
    if not isinstance(labels, list) or len(labels) != len(cols):
        raise LoadError(f"{path}: group_labels: expected {len(cols)} labels")
    basis = np.stack(cols, axis=1) if cols else np.zeros((P3, 0))
    try:
        return PoseDictionary(topo, mean, basis, tuple(labels))
    except StructuralError as exc:
        raise LoadError(f"{path}: {exc}") from None
