"""Synthetic skeleton motion for tests, demos and the evaluation harness.

Motions are produced by forward kinematics on the default 15-joint skeleton
with fixed bone lengths. Every joint's local rotation is a sum of a few
low-frequency sinusoids, so trajectories are smooth and band-limited.
Coordinates are in metres, y up, root (hip) at the origin.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from .core import JointTopology, PoseSequence3D, default_topology

REST_OFFSETS = {
    "hip": (0.0, 0.0, 0.0),
    "neck": (0.0, 0.50, 0.0),
    "head": (0.0, 0.20, 0.02),
    "l-shoulder": (0.18, -0.02, 0.0),
    "l-elbow": (0.0, -0.28, 0.0),
    "l-hand": (0.0, -0.25, 0.0),
    "r-shoulder": (-0.18, -0.02, 0.0),
    "r-elbow": (0.0, -0.28, 0.0),
    "r-hand": (0.0, -0.25, 0.0),
    "l-hip": (0.10, 0.0, 0.0),
    "l-knee": (0.0, -0.42, 0.0),
    "l-foot": (0.0, -0.40, 0.0),
    "r-hip": (-0.10, 0.0, 0.0),
    "r-knee": (0.0, -0.42, 0.0),
    "r-foot": (0.0, -0.40, 0.0),
}

# Per-action (joint -> (bias_deg xyz, amplitude_deg xyz)) for the joint whose
# local rotation moves its children. Elbows and knees flex about x only.
ACTIONS = {
    "walk": {
        "neck": ((4, 0, 0), (3, 6, 2)),
        "l-shoulder": ((0, 0, 8), (35, 5, 5)),
        "r-shoulder": ((0, 0, -8), (35, 5, 5)),
        "l-elbow": ((-30, 0, 0), (15, 0, 0)),
        "r-elbow": ((-30, 0, 0), (15, 0, 0)),
        "l-hip": ((0, 0, 0), (30, 4, 3)),
        "r-hip": ((0, 0, 0), (30, 4, 3)),
        "l-knee": ((25, 0, 0), (22, 0, 0)),
        "r-knee": ((25, 0, 0), (22, 0, 0)),
    },
    "wave": {
        "neck": ((0, 0, 0), (5, 10, 5)),
        "r-shoulder": ((0, 0, -110), (10, 10, 25)),
        "r-elbow": ((-50, 0, 0), (30, 0, 0)),
        "l-shoulder": ((0, 0, 10), (8, 5, 5)),
        "l-elbow": ((-20, 0, 0), (10, 0, 0)),
        "l-knee": ((5, 0, 0), (4, 0, 0)),
        "r-knee": ((5, 0, 0), (4, 0, 0)),
    },
    "squat": {
        "neck": ((10, 0, 0), (10, 3, 2)),
        "l-shoulder": ((-60, 0, 10), (25, 5, 5)),
        "r-shoulder": ((-60, 0, -10), (25, 5, 5)),
        "l-elbow": ((-20, 0, 0), (15, 0, 0)),
        "r-elbow": ((-20, 0, 0), (15, 0, 0)),
        "l-hip": ((-50, 0, 5), (40, 3, 3)),
        "r-hip": ((-50, 0, -5), (40, 3, 3)),
        "l-knee": ((60, 0, 0), (50, 0, 0)),
        "r-knee": ((60, 0, 0), (50, 0, 0)),
    },
    "reach": {
        "neck": ((15, 0, 0), (10, 15, 8)),
        "l-shoulder": ((-80, 0, 20), (40, 20, 20)),
        "r-shoulder": ((-70, 0, -20), (40, 20, 20)),
        "l-elbow": ((-40, 0, 0), (35, 0, 0)),
        "r-elbow": ((-40, 0, 0), (35, 0, 0)),
        "l-hip": ((-10, 0, 0), (8, 3, 3)),
        "r-hip": ((-10, 0, 0), (8, 3, 3)),
        "l-knee": ((15, 0, 0), (12, 0, 0)),
        "r-knee": ((15, 0, 0), (12, 0, 0)),
    },
    "dance": {
        "neck": ((0, 0, 0), (10, 20, 10)),
        "l-shoulder": ((0, 0, 70), (30, 30, 30)),
        "r-shoulder": ((0, 0, -70), (30, 30, 30)),
        "l-elbow": ((-60, 0, 0), (40, 0, 0)),
        "r-elbow": ((-60, 0, 0), (40, 0, 0)),
        "l-hip": ((-15, 0, 10), (25, 10, 10)),
        "r-hip": ((-15, 0, -10), (25, 10, 10)),
        "l-knee": ((30, 0, 0), (28, 0, 0)),
        "r-knee": ((30, 0, 0), (28, 0, 0)),
    },
}


def rest_pose(topology: JointTopology | None = None) -> np.ndarray:
    topology = topology or default_topology()
    return _forward(topology, np.zeros((1, topology.n_joints, 3)))[0]


def _forward(topology: JointTopology, euler_deg: np.ndarray) -> np.ndarray:
    """Global joint positions from local XYZ Euler angles, shape (N, P, 3)."""
    N, P, _ = euler_deg.shape
    offsets = np.array([REST_OFFSETS[j] for j in topology.joints])
    local = Rotation.from_euler("xyz", euler_deg.reshape(-1, 3), degrees=True).as_matrix().reshape(N, P, 3, 3)
    glob_R = np.empty_like(local)
    pos = np.zeros((N, P, 3))
    order = _topological_order(topology)
    for j in order:
        p = topology.parent[j]
        if p is None:
            glob_R[:, j] = local[:, j]
            continue
        pos[:, j] = pos[:, p] + np.einsum("nab,b->na", glob_R[:, p], offsets[j])
        glob_R[:, j] = glob_R[:, p] @ local[:, j]
    return pos


def _topological_order(topology: JointTopology) -> list[int]:
    depth = []
    for j in range(topology.n_joints):
        d, k = 0, j
        while topology.parent[k] is not None:
            k = topology.parent[k]
            d += 1
        depth.append(d)
    return sorted(range(topology.n_joints), key=lambda j: (depth[j], j))


def synthesize_motion(
    action: str,
    n_frames: int,
    seed: int = 0,
    fps: float = 30.0,
    base_hz: float = 0.4,
    n_harmonics: int = 3,
) -> PoseSequence3D:
    """Band-limited motion of one action class.

    Each rotation channel is ``bias + amp * sum_k a_k sin(2 pi f_k t + phi_k)``
    with ``f_k`` drawn around ``base_hz`` and random phases; the weights
    ``a_k`` sum to 1 so excursions stay within ``bias +/- amp``.
    """
    if action not in ACTIONS:
        raise KeyError(f"unknown action {action!r}; choose from {sorted(ACTIONS)}")
    topo = default_topology()
    rng = np.random.default_rng(seed)
    t = np.arange(n_frames) / fps
    euler = np.zeros((n_frames, topo.n_joints, 3))
    for name, (bias, amp) in ACTIONS[action].items():
        j = topo.index(name)
        for a in range(3):
            if amp[a] == 0 and bias[a] == 0:
                continue
            freqs = base_hz * rng.uniform(0.6, 1.6, n_harmonics)
            phases = rng.uniform(0, 2 * np.pi, n_harmonics)
            weights = rng.dirichlet(np.ones(n_harmonics))
            wave = np.sin(2 * np.pi * freqs[None] * t[:, None] + phases[None]) @ weights
            euler[:, j, a] = bias[a] + amp[a] * wave
    return PoseSequence3D(topo, _forward(topo, euler))


def synthetic_corpus(
    n_frames: int = 240, seed: int = 0, actions=None, sequences_per_action: int = 2
) -> dict[str, list[PoseSequence3D]]:
    """Action-grouped corpus suitable for :func:`build_dictionary`."""
    actions = list(actions or ACTIONS)
    corpus = {}
    for a_idx, action in enumerate(actions):
        corpus[action] = [
            synthesize_motion(action, n_frames, seed=seed * 1000 + a_idx * 10 + k)
            for k in range(sequences_per_action)
        ]
    return corpus
