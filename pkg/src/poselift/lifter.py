"""Per-frame 2D -> 3D lifting by greedy orthogonal matching pursuit.

For one frame of 2D joints ``x`` the lifter searches for a sparse code
``w`` over the pose dictionary and a weak-perspective camera ``(s, R)``
minimising

    ||x - s (I kron R[:2]) (mean + B w)||^2  +  lam * sum_limbs (len - ref_len)^2

where ``ref_len`` are the limb lengths of the mean pose. Everything is
anchored at the root joint, so no translation term is needed. The returned
pose is expressed in the camera frame, ``(I kron R)(mean + B w)``.

Each greedy step scores every unused column at the current camera (the
candidate's coefficient and the selected ones re-solved jointly), adds the
best one, refits coefficients and camera by alternating updates and finishes
with a joint Levenberg-Marquardt polish. Every update is accepted only if it
lowers the objective, so the per-step trace is monotone.

The defaults run that plain greedy path from ``fit_camera(x, mean)``. Greedy
selection on a coherent dictionary, and the camera fitted to a near-planar
mean pose, can both land in the wrong basin; :meth:`LiftConfig.robust` widens the
search for exactly-representable inputs:

- ``shortlist``: each path tries its best ``shortlist`` columns;
- ``beam``: the ``beam`` best distinct supports survive every step;
- ``restarts``: if no path reaches ``residual_tol``, up to ``restarts``
  further starts are taken from a sweep of ``camera_hypotheses`` view
  directions (best probe score first) until one does. The lowest final
  objective wins; ties go to the earlier start.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .camera import (
    MIN_SCALE,
    CameraParams,
    _complete_rotation,
    _skew,
    fit_camera,
    projection_residual,
    refine_camera,
    rotvec_matrix,
)
from .core import Pose2D, Pose3D, PoseSequence2D, PoseSequence3D, root_centered
from .dictionary import PoseDictionary, SparseCode
from .errors import ConfigError, FitError, LiftError, PoseLiftError, StructuralError
from .limits import LimitsModel, pose_is_valid

log = logging.getLogger(__name__)

DEPTH_FLIP = np.array([1.0, 1.0, -1.0])
# alternation stops once a round gains less than this fraction of the objective;
# the joint polish that follows does the fine convergence
ALTERNATION_RTOL = 1e-4


@dataclass(frozen=True)
class LiftConfig:
    max_bases: int = 10
    residual_tol: float = 1e-8
    anthro_weight: float = 0.1
    max_alternations: int = 10
    candidate_flips: bool = True
    shortlist: int = 1
    beam: int = 1
    camera_hypotheses: int = 32
    restarts: int = 0

    def __post_init__(self):
        for name, low in (("max_bases", 0), ("max_alternations", 1), ("shortlist", 1),
                          ("beam", 1), ("camera_hypotheses", 0), ("restarts", 0)):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < low:
                raise ConfigError(f"{name} must be an integer >= {low}, got {v!r}")
        if not self.residual_tol >= 0:
            raise ConfigError(f"residual_tol must be >= 0, got {self.residual_tol}")
        if not self.anthro_weight >= 0:
            raise ConfigError(f"anthro_weight must be >= 0, got {self.anthro_weight}")

    @classmethod
    def robust(cls, **overrides) -> LiftConfig:
        """Settings with the wider search (see the module docstring)."""
        return cls(**{**ROBUST, **overrides})

    def to_dict(self) -> dict:
        return {
            "max_bases": self.max_bases,
            "residual_tol": self.residual_tol,
            "anthro_weight": self.anthro_weight,
            "max_alternations": self.max_alternations,
            "candidate_flips": self.candidate_flips,
            "shortlist": self.shortlist,
            "beam": self.beam,
            "camera_hypotheses": self.camera_hypotheses,
            "restarts": self.restarts,
        }


@dataclass(frozen=True, eq=False)
class LiftResult:
    pose: Pose3D
    code: SparseCode
    camera: CameraParams
    residual: float
    valid: bool
    iterations: int
    flipped: bool = False
    trace: tuple[float, ...] = field(default=())

    def __eq__(self, other):
        return (
            isinstance(other, LiftResult)
            and self.pose == other.pose
            and self.code == other.code
            and self.camera.scale == other.camera.scale
            and np.array_equal(self.camera.rotation, other.camera.rotation)
            and self.residual == other.residual
            and self.valid == other.valid
            and self.iterations == other.iterations
            and self.flipped == other.flipped
            and self.trace == other.trace
        )


#: Wider search settings: several columns and supports per step plus camera restarts.
ROBUST = dict(shortlist=3, beam=2, restarts=8)


def _view_frames(n: int) -> np.ndarray:
    """``n`` proper rotations whose third rows are Fibonacci-sphere directions."""
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    phi = np.pi * (1 + 5**0.5) * k
    rho = np.sqrt(1 - z * z)
    v = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    helper = np.where(np.abs(v[:, 1:2]) < 0.9, [[0.0, 1.0, 0.0]], [[1.0, 0.0, 0.0]])
    e1 = np.cross(helper, v)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(v, e1)
    return np.stack([e1, e2, v], axis=1)


class _Model:
    """Root-centred dictionary arrays shared by every frame of a lift."""

    def __init__(self, dictionary: PoseDictionary):
        topo = dictionary.topology
        P = topo.n_joints
        self.topology = topo
        self.root = topo.root
        self.n_joints = P
        self.mean = root_centered(dictionary.mean.reshape(P, 3), topo)
        self.basis = root_centered(dictionary.basis.T.reshape(-1, P, 3), topo)
        self.basis_flat = self.basis.reshape(self.basis.shape[0], -1)
        limbs = np.array(topo.limbs, dtype=int).reshape(-1, 2)
        self.limb_a, self.limb_b = limbs[:, 0], limbs[:, 1]
        self.ref_len = self.limb_lengths(self.mean)
        # per-column limb displacement, shape (M, L, 3)
        self.basis_limb = self.basis[:, self.limb_b] - self.basis[:, self.limb_a]
        self._views: dict[int, np.ndarray] = {}

    @property
    def n_bases(self) -> int:
        return self.basis.shape[0]

    def views(self, n: int) -> np.ndarray:
        if n not in self._views:
            self._views[n] = _view_frames(n)
        return self._views[n]

    def limb_lengths(self, X: np.ndarray) -> np.ndarray:
        d = X[..., self.limb_b, :] - X[..., self.limb_a, :]
        return np.sqrt(np.sum(d * d, axis=-1))

    def pose(self, idx, w) -> np.ndarray:
        if len(idx) == 0:
            return self.mean.copy()
        return self.mean + (np.asarray(w) @ self.basis_flat[idx]).reshape(self.n_joints, 3)

    def anthro(self, X: np.ndarray, lam: float):
        if lam == 0.0 or self.limb_a.size == 0:
            return np.zeros(X.shape[:-2]) if X.ndim > 2 else 0.0
        d = self.limb_lengths(X) - self.ref_len
        return lam * np.sum(d * d, axis=-1)

    def cost(self, x, X, s, R, lam) -> float:
        return projection_residual(x, X, s, R) + float(self.anthro(X, lam))


def objective(obs, code: SparseCode, cam: CameraParams, dictionary: PoseDictionary, lam: float) -> float:
    """Squared reprojection error of the coded pose plus the limb-length penalty.

    ``obs`` may be a :class:`Pose2D` or a ``(P, 2)`` array; both it and the
    coded pose are anchored at the root joint before comparison.
    """
    model = _Model(dictionary)
    x = _centered_obs(obs, model)
    idx = list(code.indices)
    if idx and (min(idx) < 0 or max(idx) >= model.n_bases):
        raise StructuralError(f"code index out of range for {model.n_bases} columns")
    X = model.pose(idx, code.coefficients)
    return model.cost(x, X, cam.scale, cam.rotation, lam)


def _centered_obs(obs, model: _Model) -> np.ndarray:
    if isinstance(obs, Pose2D):
        if obs.topology != model.topology:
            raise StructuralError("observation and dictionary use different topologies")
        obs = obs.coords
    x = np.asarray(obs, dtype=float)
    if x.shape != (model.n_joints, 2):
        raise StructuralError(f"observation must have shape ({model.n_joints}, 2), got {x.shape}")
    return x - x[model.root]


class _FrameSolver:
    def __init__(self, x: np.ndarray, model: _Model, cfg: LiftConfig, s: float, R: np.ndarray):
        self.x = x
        self.m = model
        self.cfg = cfg
        self.lam = float(cfg.anthro_weight)
        self.idx: list[int] = []
        self.w = np.zeros(0)
        self.X = model.mean.copy()
        self.s, self.R = float(s), np.array(R)
        self.cost = model.cost(x, self.X, self.s, self.R, self.lam)

    # -- greedy selection -------------------------------------------------
    def ranked_columns(self, limit: int):
        """Up to ``limit`` columns with the largest objective decrease at the current camera.

        Each candidate is scored with the selected coefficients and its own
        coefficient re-solved jointly by least squares (camera held fixed).
        Returns ``[(column, decrease, coefficients), ...]`` best first; equal
        decreases keep the lower column index first.
        """
        m = self.m
        M = m.n_bases
        Q = self.R[:2]
        proj = self.s * (m.basis @ Q.T).reshape(M, -1)  # (M, 2P)
        b = (self.x - self.s * m.mean @ Q.T).ravel()
        pp = np.einsum("ij,ij->i", proj, proj)
        usable = pp > 1e-24
        usable[self.idx] = False
        if not np.any(usable):
            return []
        k = len(self.idx)
        if k:
            Qa, Ra = np.linalg.qr(proj[self.idx].T)
            qb = Qa.T @ b
            r = b - Qa @ qb
            Pq = proj @ Qa  # (M, k)
            perp = proj - Pq @ Qa.T
        else:
            r, perp = b, proj
        nn = np.einsum("ij,ij->i", perp, perp)
        usable &= nn > 1e-20 * pp
        if not np.any(usable):
            return []
        pr = perp @ r
        c = np.where(usable, pr / np.where(usable, nn, 1.0), 0.0)
        reproj = r @ r - c * pr
        if k:
            # selected coefficients re-solved for every candidate at once
            Wsel = np.linalg.lstsq(Ra, qb[:, None] - Pq.T * c[None, :], rcond=None)[0]  # (k, M)
        else:
            Wsel = np.zeros((0, M))
        if self.lam > 0.0:
            flat = m.mean.ravel()[None] + Wsel.T @ m.basis_flat[self.idx] + c[:, None] * m.basis_flat
            cand = reproj + m.anthro(flat.reshape(M, m.n_joints, 3), self.lam)
        else:
            cand = reproj
        decrease = np.where(usable, self.cost - cand, -np.inf)
        order = np.argsort(-decrease, kind="stable")[: min(limit, int(usable.sum()))]
        return [(int(j), float(decrease[j]), np.append(Wsel[:, j], c[j])) for j in order]

    # -- refits -------------------------------------------------------------
    def refit_coefficients(self):
        if not self.idx:
            return
        m = self.m
        Q = self.R[:2]
        A = self.s * (m.basis[self.idx] @ Q.T).reshape(len(self.idx), -1).T  # (2P, k)
        b = (self.x - self.s * m.mean @ Q.T).ravel()
        w = np.linalg.lstsq(A, b, rcond=None)[0]
        X = m.pose(self.idx, w)
        cost = m.cost(self.x, X, self.s, self.R, self.lam)
        if cost < self.cost:
            self.w, self.X, self.cost = w, X, cost

    def refit_camera(self, fresh: bool = False):
        x, X = self.x, self.X
        anthro = self.cost - projection_residual(x, X, self.s, self.R)
        best = (projection_residual(x, X, self.s, self.R), self.s, self.R)
        s1, R1 = refine_camera(x, X, self.s, self.R, max_iter=5)
        c1 = projection_residual(x, X, s1, R1)
        if c1 < best[0]:
            best = (c1, s1, R1)
        if fresh:
            try:
                cam = fit_camera(x, X, root=self.m.root, refine=False)
                c2 = projection_residual(x, X, cam.scale, cam.rotation)
                if c2 < best[0]:
                    best = (c2, cam.scale, np.array(cam.rotation))
            except FitError:
                pass
        if best[0] + anthro < self.cost:
            R = _complete_rotation(best[2][:2])
            cost = self.m.cost(x, X, best[1], R, self.lam)
            if cost < self.cost:
                self.s, self.R, self.cost = best[1], R, cost

    def joint_polish(self, max_iter: int = 30):
        """Levenberg-Marquardt over coefficients, rotation and log-scale together."""
        m = self.m
        k = len(self.idx)
        Bsel = m.basis[self.idx]  # (k, P, 3)
        limb_cols = m.basis_limb[self.idx]
        sq = np.sqrt(self.lam)
        use_limbs = self.lam > 0.0 and m.limb_a.size > 0
        damping = 1e-3
        for _ in range(max_iter):
            if self.cost <= 1e-30:
                break
            Q = self.R[:2]
            X = self.X
            QX = X @ Q.T
            J = np.empty((QX.size, k + 4))
            J[:, :k] = -self.s * (Bsel @ Q.T).reshape(k, -1).T
            J[:, k : k + 3] = (self.s * np.einsum("ab,pbc->pac", Q, _skew(X))).reshape(-1, 3)
            J[:, k + 3] = -self.s * QX.ravel()
            r = (self.x - self.s * QX).ravel()
            if use_limbs:
                d = X[m.limb_b] - X[m.limb_a]
                length = np.sqrt(np.sum(d * d, axis=1))
                u = d / np.maximum(length, 1e-12)[:, None]
                Jl = np.zeros((length.size, k + 4))
                Jl[:, :k] = sq * np.einsum("lc,klc->lk", u, limb_cols)
                J = np.vstack([J, Jl])
                r = np.concatenate([r, sq * (length - m.ref_len)])
            g = J.T @ r
            H = J.T @ J
            hd = np.diag(np.diag(H) + 1e-12)
            improved = False
            for _ in range(8):
                try:
                    step = -np.linalg.solve(H + damping * hd, g)
                except np.linalg.LinAlgError:
                    damping *= 10
                    continue
                w_new = self.w + step[:k]
                R_new = self.R @ rotvec_matrix(step[k : k + 3])
                s_new = max(self.s * np.exp(step[k + 3]), MIN_SCALE)
                X_new = m.pose(self.idx, w_new)
                c_new = m.cost(self.x, X_new, s_new, R_new, self.lam)
                if c_new < self.cost:
                    rel = (self.cost - c_new) / self.cost
                    self.w, self.R, self.s, self.X, self.cost = w_new, R_new, s_new, X_new, c_new
                    damping = max(damping / 10, 1e-12)
                    improved = True
                    break
                damping *= 10
            if not improved or rel < 1e-12:
                break
        # keep the rotation exactly orthonormal without ever raising the objective
        R = _complete_rotation(self.R[:2])
        cost = m.cost(self.x, self.X, self.s, R, self.lam)
        if cost <= self.cost:
            self.R, self.cost = R, cost

    def alternate(self):
        """Alternate coefficient and camera refits until the gain is relatively small."""
        tol = self.cfg.residual_tol
        for a in range(self.cfg.max_alternations):
            before = self.cost
            self.refit_coefficients()
            self.refit_camera(fresh=a == 0)
            if before - self.cost < max(tol, ALTERNATION_RTOL * self.cost):
                break

    # -- pursuit --------------------------------------------------------------
    def _state(self):
        return (list(self.idx), self.w, self.X, self.s, self.R, self.cost)

    def _restore(self, state):
        idx, self.w, self.X, self.s, self.R, self.cost = state
        self.idx = list(idx)

    def _add(self, j: int, w: np.ndarray):
        self.idx.append(j)
        X = self.m.pose(self.idx, w)
        cost = self.m.cost(self.x, X, self.s, self.R, self.lam)
        if cost > self.cost:
            # rounding can make the jointly solved start a hair worse
            w = np.append(self.w, 0.0)
            X = self.m.pose(self.idx, w)
            cost = self.m.cost(self.x, X, self.s, self.R, self.lam)
        self.w, self.X, self.cost = w, X, cost

    def probe(self, steps: int) -> float:
        """Cheap score of the starting camera: a few greedy steps with one refit each."""
        for _ in range(steps):
            ranked = self.ranked_columns(1)
            if not ranked or not ranked[0][1] > 0:
                break
            self._add(ranked[0][0], ranked[0][2])
            self.refit_coefficients()
            self.refit_camera()
        return self.cost

    def run(self) -> list[float]:
        """Beam pursuit; leaves the solver at the best path found and returns its trace.

        Each step expands every kept path with its ``shortlist`` best columns,
        keeps the ``beam`` lowest-objective children (distinct supports only)
        and polishes them. Paths that cannot improve by ``residual_tol`` stop.
        """
        tol = self.cfg.residual_tol
        beam = [(self._state(), [self.cost])]
        finished = []
        while beam:
            children = {}
            for state, trace in beam:
                self._restore(state)
                if self.cost <= tol or len(self.idx) >= self.cfg.max_bases:
                    finished.append((state, trace))
                    continue
                ranked = [c for c in self.ranked_columns(self.cfg.shortlist) if c[1] >= tol]
                if not ranked:
                    finished.append((state, trace))
                    continue
                for j, _, w in ranked:
                    self._restore(state)
                    self._add(j, w)
                    self.alternate()
                    key = frozenset(self.idx)
                    if key not in children or self.cost < children[key][0][-1]:
                        children[key] = (self._state(), trace)
            kept = sorted(children.values(), key=lambda c: c[0][-1])[: self.cfg.beam]
            beam = []
            for state, trace in kept:
                self._restore(state)
                self.joint_polish()
                beam.append((self._state(), trace + [self.cost]))
            if beam and beam[0][0][-1] <= tol:
                finished.append(beam[0])
                break
        state, trace = min(finished, key=lambda c: c[0][-1])
        self._restore(state)
        return trace


PROBE_STEPS = 3


def _initial_camera(x: np.ndarray, model: _Model) -> tuple[float, np.ndarray]:
    try:
        cam = fit_camera(x, model.mean, root=model.root)
    except FitError as exc:
        raise LiftError(f"cannot initialise camera from the mean pose: {exc}") from None
    return cam.scale, np.array(cam.rotation)


def _camera_hypotheses(x: np.ndarray, model: _Model, cfg: LiftConfig) -> list[tuple[float, float, np.ndarray]]:
    """Probe-scored starting cameras from a sweep of view directions, best first.

    For each direction the in-plane rotation and scale that best map the
    projected mean pose onto ``x`` come from a closed-form 2D Procrustes fit
    (proper rotation only).
    """
    scored = []
    steps = min(cfg.max_bases, PROBE_STEPS)
    for F in model.views(cfg.camera_hypotheses):
        m2 = model.mean @ F[:2].T
        denom = float(np.sum(m2 * m2))
        if denom <= 0:
            continue
        C = m2.T @ x
        U, _, Vt = np.linalg.svd(C)
        G = Vt.T @ U.T
        if np.linalg.det(G) < 0:
            G = Vt.T @ np.diag([1.0, -1.0]) @ U.T
        s = max(float(np.trace(G @ C)) / denom, MIN_SCALE)
        R = _complete_rotation(G @ F[:2])
        score = _FrameSolver(x, model, cfg, s, R).probe(steps)
        scored.append((score, len(scored), s, R))
    scored.sort(key=lambda t: t[:2])
    return [(score, s, R) for score, _, s, R in scored]


def _pursue(x: np.ndarray, model: _Model, cfg: LiftConfig):
    """Best pursuit over the initial camera and any promising restarts."""
    solver = _FrameSolver(x, model, cfg, *_initial_camera(x, model))
    trace = solver.run()
    if solver.cost <= cfg.residual_tol or cfg.restarts == 0 or cfg.camera_hypotheses == 0 \
            or cfg.max_bases == 0 or model.n_bases == 0:
        return solver, trace
    for _, s, R in _camera_hypotheses(x, model, cfg)[: cfg.restarts]:
        candidate = _FrameSolver(x, model, cfg, s, R)
        t = candidate.run()
        if candidate.cost < solver.cost:
            solver, trace = candidate, t
            if solver.cost <= cfg.residual_tol:
                break
    return solver, trace


def _lift(x: np.ndarray, model: _Model, limits: LimitsModel, cfg: LiftConfig) -> LiftResult:
    solver, trace = _pursue(x, model, cfg)
    topo = model.topology
    lam = float(cfg.anthro_weight)

    code = SparseCode(tuple(solver.idx), tuple(float(v) for v in solver.w))
    camera = CameraParams(solver.s, solver.R)
    Y = solver.X @ solver.R.T
    candidates = [(solver.cost, Pose3D(topo, Y), camera, False)]
    if cfg.candidate_flips:
        Yf = Y * DEPTH_FLIP
        try:
            cam_f = fit_camera(x, Yf, root=model.root)
            res_f = projection_residual(x, Yf, cam_f.scale, cam_f.rotation) + float(model.anthro(Yf, lam))
            candidates.append((res_f, Pose3D(topo, Yf), cam_f, True))
        except FitError:
            pass

    # the mirror pose ties with the base one up to rounding; keep the base on ties
    margin = cfg.residual_tol + 1e-9 * candidates[0][0]

    def rank(cand):
        res, _, _, flipped = cand
        return (res + margin if flipped else res, flipped)

    passing = [c for c in candidates if pose_is_valid(c[1], limits)]
    res, pose, cam, flipped = min(passing or candidates, key=rank)
    return LiftResult(
        pose=pose,
        code=code,
        camera=cam,
        residual=float(res),
        valid=bool(passing),
        iterations=len(trace) - 1,
        flipped=flipped,
        trace=tuple(trace),
    )


def _check_inputs(topology, dictionary: PoseDictionary, limits: LimitsModel):
    if topology != dictionary.topology:
        raise StructuralError("observation and dictionary use different topologies")
    if limits.topology != dictionary.topology:
        raise StructuralError("limits model and dictionary use different topologies")


def lift_frame(
    obs: Pose2D, dictionary: PoseDictionary, limits: LimitsModel, cfg: LiftConfig | None = None
) -> LiftResult:
    cfg = cfg or LiftConfig()
    _check_inputs(obs.topology, dictionary, limits)
    model = _Model(dictionary)
    return _lift(_centered_obs(obs, model), model, limits, cfg)


def _lift_chunk(args):
    frames, dictionary, limits, cfg, offset = args
    model = _Model(dictionary)
    out = []
    for t, coords in enumerate(frames):
        try:
            out.append(_lift(_centered_obs(coords, model), model, limits, cfg))
        except PoseLiftError as exc:
            raise type(exc)(f"frame {offset + t}: {exc}") from None
    return out


def lift_sequence(
    seq: PoseSequence2D,
    dictionary: PoseDictionary,
    limits: LimitsModel,
    cfg: LiftConfig | None = None,
    workers: int = 1,
) -> list[LiftResult]:
    """Lift every frame independently; results keep input order.

    With ``workers > 1`` contiguous frame chunks run in worker processes;
    each frame's result does not depend on the chunking.
    """
    cfg = cfg or LiftConfig()
    _check_inputs(seq.topology, dictionary, limits)
    frames = np.asarray(seq.coords)
    if workers <= 1 or len(frames) < 2 * workers:
        return _lift_chunk((frames, dictionary, limits, cfg, 0))
    bounds = np.linspace(0, len(frames), workers + 1).astype(int)
    jobs = [(frames[a:b], dictionary, limits, cfg, a) for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunks = list(pool.map(_lift_chunk, jobs))
    return [r for chunk in chunks for r in chunk]


def results_to_sequence(results: list[LiftResult]) -> PoseSequence3D:
    return PoseSequence3D.from_frames([r.pose for r in results])
