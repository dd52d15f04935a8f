"""Weak-perspective camera: ``x_j = s * R[:2] @ X_j``.

Rotations follow a right-handed *view* convention: turning the view by
+90 degrees about x carries a point on +z to +y (see :func:`view_rotation`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .core import Pose2D, Pose3D, PoseSequence2D, PoseSequence3D
from .errors import ConfigError, FitError

MIN_SCALE = 1e-9


@dataclass(frozen=True, eq=False)
class CameraParams:
    scale: float
    rotation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        s = float(self.scale)
        if R.shape != (3, 3):
            raise ConfigError(f"rotation must be 3x3, got {R.shape}")
        if not np.isfinite(s) or s <= 0:
            raise ConfigError(f"camera scale must be positive and finite, got {s}")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0):
            raise ConfigError("camera rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ConfigError("camera rotation must have det +1")
        R.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "scale", s)

    def __eq__(self, other):
        return (
            isinstance(other, CameraParams)
            and self.scale == other.scale
            and np.array_equal(self.rotation, other.rotation)
        )

    @classmethod
    def identity(cls, scale: float = 1.0) -> CameraParams:
        return cls(scale, np.eye(3))

    @property
    def rows(self) -> np.ndarray:
        """The first two rows of the rotation, shape ``(2, 3)``."""
        return self.rotation[:2]

    def to_dict(self) -> dict:
        return {"scale": self.scale, "rotation": self.rotation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> CameraParams:
        """Accepts ``{scale, rotation}`` or ``{scale, rotation_deg: [rx, ry, rz]}``."""
        scale = d.get("scale", 1.0)
        if "rotation" in d:
            return cls(scale, np.asarray(d["rotation"], dtype=float))
        angles = d.get("rotation_deg", [0.0, 0.0, 0.0])
        if len(angles) != 3:
            raise ConfigError("rotation_deg needs three angles (x, y, z)")
        return cls(scale, view_rotation("xyz", angles))


def view_rotation(axes: str, degrees) -> np.ndarray:
    """Rotation matrix for turning the view by ``degrees`` about ``axes``.

    ``view_rotation("x", 90) @ [0, 0, 1] == [0, 1, 0]``.
    """
    return Rotation.from_euler(axes, degrees, degrees=True).inv().as_matrix()


def _as_points(pose, dims: int) -> np.ndarray:
    if isinstance(pose, (Pose2D, Pose3D)):
        pose = pose.coords
    a = np.asarray(pose, dtype=float)
    if a.ndim == 1:
        if a.size % dims:
            raise ConfigError(f"flat pose length {a.size} is not a multiple of {dims}")
        a = a.reshape(-1, dims)
    if a.ndim != 2 or a.shape[1] != dims:
        raise ConfigError(f"expected (P, {dims}) coordinates, got {a.shape}")
    return a


def project(pose, cam: CameraParams) -> np.ndarray:
    """Project a 3D pose (flat ``3P`` vector or ``(P, 3)``) to ``(P, 2)``."""
    X = _as_points(pose, 3)
    return cam.scale * X @ cam.rows.T


def _skew(v: np.ndarray) -> np.ndarray:
    # (..., 3) -> (..., 3, 3) cross-product matrices
    v = np.asarray(v, dtype=float)
    K = np.zeros(v.shape[:-1] + (3, 3))
    K[..., 0, 1] = -v[..., 2]
    K[..., 0, 2] = v[..., 1]
    K[..., 1, 0] = v[..., 2]
    K[..., 1, 2] = -v[..., 0]
    K[..., 2, 0] = -v[..., 1]
    K[..., 2, 1] = v[..., 0]
    return K


def rotvec_matrix(v: np.ndarray) -> np.ndarray:
    """Rodrigues formula; cheaper than a scipy Rotation round trip."""
    theta = float(np.sqrt(v @ v))
    K = _skew(v)
    if theta < 1e-12:
        return np.eye(3) + K
    return np.eye(3) + np.sin(theta) / theta * K + (1 - np.cos(theta)) / theta**2 * (K @ K)


def _complete_rotation(Q: np.ndarray) -> np.ndarray:
    R = np.vstack([Q, np.cross(Q[0], Q[1])])
    # re-orthonormalise to keep drift below the 1e-9 invariant
    U, _, Vt = np.linalg.svd(R)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    return R


def projection_residual(x: np.ndarray, X: np.ndarray, scale: float, R: np.ndarray) -> float:
    r = x - scale * X @ R[:2].T
    return float(np.sum(r * r))


def refine_camera(x, X, scale, R, max_iter=20):
    """Levenberg-Marquardt polish of ``(scale, R)`` on centered points.

    Only ever lowers the residual; returns the input unchanged when no step
    improves it.
    """
    cost = projection_residual(x, X, scale, R)
    damping = 1e-3
    XX = _skew(X)
    for _ in range(max_iter):
        if cost <= 1e-30:
            break
        Q = R[:2]
        QX = X @ Q.T
        r = (x - scale * QX).ravel()
        J = np.empty((r.size, 4))
        J[:, :3] = (scale * np.einsum("ab,pbc->pac", Q, XX)).reshape(-1, 3)
        J[:, 3] = -scale * QX.ravel()
        g = J.T @ r
        H = J.T @ J
        improved = False
        for _ in range(8):
            A = H + damping * np.diag(np.diag(H) + 1e-12)
            try:
                step = -np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                damping *= 10
                continue
            R_new = R @ rotvec_matrix(step[:3])
            s_new = max(scale * np.exp(step[3]), MIN_SCALE)
            new_cost = projection_residual(x, X, s_new, R_new)
            if new_cost < cost:
                rel = (cost - new_cost) / max(cost, 1e-300)
                R, scale, cost = R_new, s_new, new_cost
                damping = max(damping / 10, 1e-12)
                improved = True
                break
            damping *= 10
        if not improved or rel < 1e-14:
            break
    return scale, R


def fit_camera(observed, model_pose, root: int = 0, refine: bool = True) -> CameraParams:
    """Least-squares weak-perspective camera mapping ``model_pose`` onto ``observed``.

    Both point sets are anchored at joint ``root`` first. The 2x3 map is solved
    by linear least squares (the model-whitened cross-covariance), its polar
    factor gives the two camera rows, and the cross product completes a proper
    rotation. The scale is the least-squares ratio for those rows. A short
    Levenberg-Marquardt polish then handles noisy observations.

    Raises
    ------
    FitError
        If the centered model pose has rank < 2.
    """
    if isinstance(observed, Pose2D):
        root = observed.topology.root
    x = _as_points(observed, 2)
    X = _as_points(model_pose, 3)
    if x.shape[0] != X.shape[0]:
        raise ConfigError(f"{x.shape[0]} observed joints vs {X.shape[0]} model joints")
    if X.shape[0] < 3:
        raise FitError("camera fit needs at least 3 joints")
    x = x - x[root]
    X = X - X[root]

    sv = np.linalg.svd(X, compute_uv=False)
    if sv[0] <= 1e-12 or sv[1] <= 1e-9 * sv[0]:
        raise FitError("model pose is degenerate (centered joints collinear)")

    M = np.linalg.lstsq(X, x, rcond=None)[0].T
    U, _, Vt = np.linalg.svd(M, full_matrices=False)
    Q = U @ Vt
    R = _complete_rotation(Q)
    QX = X @ R[:2].T
    scale = max(float(np.sum(x * QX) / np.sum(QX * QX)), MIN_SCALE)
    if refine:
        scale, R = refine_camera(x, X, scale, R)
        R = _complete_rotation(R[:2])
    return CameraParams(scale, R)


def orthographic_project_sequence(seq: PoseSequence3D, view: CameraParams) -> PoseSequence2D:
    coords = view.scale * seq.coords @ view.rows.T
    return PoseSequence2D(seq.topology, coords)
