"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 1 for usage/config
problems, 2 for bad data, 3 for numerical failures.
"""


class PoseLiftError(Exception):
    exit_code = 1


class ConfigError(PoseLiftError):
    exit_code = 1


class DataError(PoseLiftError):
    exit_code = 2


class StructuralError(DataError):
    """Shapes, counts or topologies that do not line up."""


class LoadError(DataError):
    """A file on disk could not be parsed into a valid object."""


class NumericalError(PoseLiftError):
    exit_code = 3


class FitError(NumericalError):
    """Camera fit on a degenerate (rank < 2) model pose."""


class LiftError(NumericalError):
    pass


class AlignmentError(NumericalError):
    pass


class NoiseError(NumericalError):
    """SNR is undefined for a zero-variance sequence."""
