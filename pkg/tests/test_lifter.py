import numpy as np
import pytest

from conftest import in_span_frame, random_camera
from poselift.camera import CameraParams, project
from poselift.core import Pose2D, Pose3D, PoseSequence2D
from poselift.dictionary import PoseDictionary, SparseCode
from poselift.errors import ConfigError, StructuralError
from poselift.lifter import (
    LiftConfig,
    lift_frame,
    lift_sequence,
    objective,
    results_to_sequence,
)
from poselift.limits import HingeLimit, LimitsModel
from poselift.metrics import procrustes_align

EXACT = LiftConfig.robust(anthro_weight=0.0)


def limb_lengths(X, topo):
    return np.array([np.linalg.norm(X[a] - X[b]) for a, b in topo.limbs])


def test_objective_matches_direct_formula(dictionary, topo):
    rng = np.random.default_rng(0)
    cam = random_camera(rng)
    code = SparseCode((2, 5), (0.3, -0.7))
    X = (dictionary.mean + 0.3 * dictionary.basis[:, 2] - 0.7 * dictionary.basis[:, 5]).reshape(15, 3)
    x = rng.normal(size=(15, 2)) + 4.0
    lam = 0.25
    # dense weak-perspective operator s (I kron R[:2]) applied to the root-anchored pose
    dense = cam.scale * np.kron(np.eye(15), cam.rotation[:2])
    proj = (dense @ (X - X[0]).ravel()).reshape(15, 2)
    ref = limb_lengths(dictionary.mean.reshape(15, 3), topo)
    expected = np.sum((x - x[0] - proj) ** 2) + lam * np.sum((limb_lengths(X, topo) - ref) ** 2)
    got = objective(Pose2D(topo, x), code, cam, dictionary, lam)
    np.testing.assert_allclose(got, expected, rtol=1e-12)
    with pytest.raises(StructuralError):
        objective(x, SparseCode((10_000,), (1.0,)), cam, dictionary, lam)


def test_objective_zero_cases(dictionary, topo):
    mu = dictionary.mean.reshape(15, 3)
    assert objective(mu[:, :2], SparseCode(), CameraParams.identity(), dictionary, 0.7) == 0.0
    code = SparseCode((3, 8), (0.4, -0.9))
    X = (dictionary.mean + 0.4 * dictionary.basis[:, 3] - 0.9 * dictionary.basis[:, 8]).reshape(15, 3)
    cam = random_camera(np.random.default_rng(1))
    assert objective(project(X, cam), code, cam, dictionary, 0.0) <= 1e-24


def test_config_validation_and_presets():
    assert LiftConfig().shortlist == 1 and LiftConfig().restarts == 0
    robust = LiftConfig.robust(max_bases=4)
    assert (robust.shortlist, robust.beam, robust.restarts, robust.max_bases) == (3, 2, 8, 4)
    assert LiftConfig(**LiftConfig().to_dict()) == LiftConfig()
    for bad in (dict(max_bases=-1), dict(beam=0), dict(shortlist=1.5), dict(restarts=True)):
        with pytest.raises(ConfigError):
            LiftConfig(**bad)


def test_in_span_recovery(dictionary, topo, permissive):
    rng = np.random.default_rng(11)
    for _ in range(10):
        X, x, _ = in_span_frame(dictionary, rng)
        res = lift_frame(Pose2D(topo, x), dictionary, permissive, EXACT)
        assert res.residual <= 1e-6
        a, b = procrustes_align(res.pose, Pose3D(topo, X))
        assert np.linalg.norm(a - b, axis=1).mean() <= 1e-3
        assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))
        assert res.iterations == len(res.trace) - 1 == len(res.code.indices)


def test_pose_reprojects_through_returned_camera(dictionary, topo, permissive):
    rng = np.random.default_rng(12)
    X, x, _ = in_span_frame(dictionary, rng)
    res = lift_frame(Pose2D(topo, x), dictionary, permissive, EXACT)
    Y = res.pose.coords
    # pose is in camera coordinates: the camera's image rows are x and y
    np.testing.assert_allclose(res.camera.scale * (Y - Y[0])[:, :2], x - x[0], atol=1e-5)


def test_plain_default_trace_is_monotone(dictionary, topo, permissive):
    rng = np.random.default_rng(13)
    for _ in range(5):
        _, x, _ = in_span_frame(dictionary, rng)
        x = x + rng.normal(scale=0.05, size=x.shape)
        res = lift_frame(Pose2D(topo, x), dictionary, permissive)
        assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))
        assert res.iterations <= LiftConfig().max_bases


def test_zero_bases_is_the_mean_pose(dictionary, topo, permissive):
    rng = np.random.default_rng(14)
    _, x, _ = in_span_frame(dictionary, rng)
    res = lift_frame(Pose2D(topo, x), dictionary, permissive, LiftConfig(max_bases=0, candidate_flips=False))
    assert res.code == SparseCode()
    a, b = procrustes_align(res.pose, Pose3D(topo, dictionary.mean.reshape(15, 3)))
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_flip_tie_keeps_base_and_limits_can_force_the_mirror(dictionary, topo, permissive):
    rng = np.random.default_rng(15)
    _, x, _ = in_span_frame(dictionary, rng)
    cfg = LiftConfig.robust(anthro_weight=0.0)
    base = lift_frame(Pose2D(topo, x), dictionary, permissive, cfg)
    assert not base.flipped and base.valid
    # a limits table that the base pose fails at one hinge but its mirror passes
    # cannot exist (angles are mirror-invariant); a strict table with no entries
    # rejects both, and the tie still resolves to the base with valid=False
    strict = LimitsModel(topo, (), "strict")
    res = lift_frame(Pose2D(topo, x), dictionary, strict, cfg)
    assert not res.valid and not res.flipped
    assert res.pose == base.pose


def test_invalid_everywhere_is_flagged(dictionary, topo):
    rng = np.random.default_rng(16)
    _, x, _ = in_span_frame(dictionary, rng)
    knee = topo.index("l-knee")
    impossible = LimitsModel(topo, [HingeLimit(knee, topo.index("l-hip"), topo.index("l-foot"), 0.0, 0.0)])
    res = lift_frame(Pose2D(topo, x), dictionary, impossible)
    assert not res.valid


def test_sequence_matches_frames_and_workers(dictionary, topo, permissive):
    rng = np.random.default_rng(17)
    frames = np.stack([in_span_frame(dictionary, rng)[1] for _ in range(4)])
    seq = PoseSequence2D(topo, frames)
    cfg = LiftConfig(max_bases=3)
    serial = lift_sequence(seq, dictionary, permissive, cfg)
    assert serial == [lift_frame(seq[t], dictionary, permissive, cfg) for t in range(4)]
    assert lift_sequence(seq, dictionary, permissive, cfg, workers=2) == serial
    out = results_to_sequence(serial)
    assert len(out) == 4 and out.dims == 3


def test_topology_mismatch(dictionary, permissive):
    from poselift.core import JointTopology

    other = JointTopology(("a", "b"), (None, 0))
    with pytest.raises(StructuralError):
        lift_frame(Pose2D(other, np.zeros((2, 2))), dictionary, permissive)


def test_camera_type_in_result(dictionary, topo, permissive):
    _, x, _ = in_span_frame(dictionary, np.random.default_rng(18))
    res = lift_frame(Pose2D(topo, x), dictionary, permissive, LiftConfig(max_bases=2))
    assert isinstance(res.camera, CameraParams)
    np.testing.assert_allclose(res.camera.rotation @ res.camera.rotation.T, np.eye(3), atol=1e-10)


def test_equal_scores_pick_the_lower_column(dictionary, topo, permissive):
    b = dictionary.basis[:, 5]
    twin = PoseDictionary(topo, dictionary.mean, np.column_stack([dictionary.basis[:, 2], b, b]), ("g",) * 3)
    X = (twin.mean + 0.6 * b).reshape(15, 3)
    x = project(X, random_camera(np.random.default_rng(19)))
    res = lift_frame(Pose2D(topo, x), twin, permissive, LiftConfig(max_bases=1, anthro_weight=0.0))
    assert res.code.indices == (1,)


def test_identical_frames_give_identical_results(dictionary, topo, permissive):
    _, x, _ = in_span_frame(dictionary, np.random.default_rng(20))
    out = lift_sequence(PoseSequence2D(topo, np.stack([x] * 3)), dictionary, permissive)
    assert out[0] == out[1] == out[2]
