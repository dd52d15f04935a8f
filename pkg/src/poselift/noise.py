"""Seeded Gaussian noise at a requested signal-to-noise ratio.

The signal power is the variance of every 2D coordinate of the sequence
pooled together; one noise level is shared by all joints and axes:

    sigma^2 = var(coords) / 10 ** (snr_db / 10)

Each frame draws from its own substream of the seed, so a frame's noise
does not depend on how many frames precede it or how work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import PoseSequence2D
from .errors import ConfigError, NoiseError

DEFAULT_SNR_POINTS = (1.0, 9.0, 17.0)


@dataclass(frozen=True)
class NoiseSpec:
    """``snr_db = inf`` means no noise."""

    snr_db: float
    seed: int = 0

    def __post_init__(self):
        snr = float(self.snr_db)
        if math.isnan(snr) or snr == -math.inf:
            raise ConfigError(f"snr_db must be finite or +inf, got {self.snr_db!r}")
        object.__setattr__(self, "snr_db", snr)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def enabled(self) -> bool:
        return math.isfinite(self.snr_db)


def noise_sigma(coords: np.ndarray, snr_db: float) -> float:
    power = float(np.var(coords))
    if power == 0.0:
        raise NoiseError("SNR is undefined for a sequence whose coordinates are all identical")
    return math.sqrt(power / 10.0 ** (snr_db / 10.0))


def add_noise(seq: PoseSequence2D, spec: NoiseSpec) -> PoseSequence2D:
    if not spec.enabled:
        return seq
    coords = seq.coords
    sigma = noise_sigma(coords, spec.snr_db)
    streams = np.random.SeedSequence(spec.seed).spawn(len(seq))
    noise = np.stack([np.random.default_rng(s).normal(0.0, sigma, coords.shape[1:]) for s in streams])
    return PoseSequence2D(seq.topology, coords + noise)


def measured_snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    """SNR actually realised by ``noisy - clean``, in dB."""
    clean = np.asarray(clean, dtype=float)
    noise = np.asarray(noisy, dtype=float) - clean
    return 10.0 * math.log10(float(np.var(clean)) / float(np.mean(noise * noise)))


def snr_sweep_points(points: Sequence[float] | None = None) -> list[float]:
    """The SNR values (dB) to sweep; defaults to 1, 9 and 17 dB."""
    if points is None:
        return list(DEFAULT_SNR_POINTS)
    points = [float(p) for p in points]
    if not points:
        raise ConfigError("the SNR sweep needs at least one point")
    for p in points:
        NoiseSpec(p)
    return points
