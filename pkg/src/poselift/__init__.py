"""Sparse-dictionary lifting of 2D joint sequences to 3D, with temporal smoothing."""

from .camera import CameraParams, fit_camera, orthographic_project_sequence, project, view_rotation
from .core import (
    JointSignal,
    JointTopology,
    Pose2D,
    Pose3D,
    PoseSequence2D,
    PoseSequence3D,
    default_topology,
    sequence_to_signals,
    signals_to_sequence,
)
from .dictionary import PoseDictionary, SparseCode, build_dictionary, load_dictionary, save_dictionary
from .errors import (
    AlignmentError,
    ConfigError,
    DataError,
    FitError,
    LiftError,
    LoadError,
    NoiseError,
    NumericalError,
    PoseLiftError,
    StructuralError,
)
from .io import load_sequence, save_sequence
from .lifter import LiftConfig, LiftResult, lift_frame, lift_sequence, results_to_sequence
from .limits import LimitsModel, default_limits, is_valid, load_limits
from .metrics import ErrorReport, PercentageTable, percentage_table, procrustes_align, sequence_error
from .noise import NoiseSpec, add_noise, snr_sweep_points
from .temporal import FilterSpec, smooth_sequence, smooth_signal

__version__ = "0.1.0"
