"""Causal moving-average smoothers for joint-coordinate signals.

Four kinds are supported, all parameterised by an integer window ``w``:

* ``SMA``: pass-through for the first ``w`` samples, then the mean of the
  ``w`` most recent samples.
* ``WMA``: pass-through for the first ``w`` samples, then a linearly
  weighted mean of the ``w`` most recent samples (weight ``w`` on the
  newest, ``1`` on the oldest).
* ``EMA``: recursive average seeded with the first sample,
  ``alpha = 2 / (w + 1)``.
* ``MMA``: as ``EMA`` with ``alpha = 1 / w``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import JointSignal, PoseSequence3D, sequence_to_signals, signals_to_sequence
from .errors import ConfigError

KINDS = ("SMA", "EMA", "WMA", "MMA")


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    window: int = 5

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in KINDS:
            raise ConfigError(f"unknown filter kind {self.kind!r}; expected one of {KINDS}")
        if int(self.window) != self.window or self.window < 1:
            raise ConfigError(f"filter window must be an integer >= 1, got {self.window!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "window", int(self.window))

    @property
    def alpha(self) -> float | None:
        """Smoothing factor of the recursive kinds, ``None`` for SMA/WMA."""
        if self.kind == "EMA":
            return 2.0 / (self.window + 1)
        if self.kind == "MMA":
            return 1.0 / self.window
        return None

    @property
    def name(self) -> str:
        return f"{self.kind.lower()}_w{self.window}"


def _windowed(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # weights[k] applies to S_{t-k}; samples t < w (0-based) pass through.
    # Written as S_t plus weighted deviations so a constant signal is an exact
    # fixed point in floating point.
    w = weights.size
    out = values.copy()
    if values.size > w:
        # column k of the window matrix holds S_{t-k} for t = w..N-1
        idx = np.arange(w, values.size)[:, None] - np.arange(w)[None, :]
        cur = values[w:]
        out[w:] = cur + (values[idx] - cur[:, None]) @ weights / weights.sum()
    return out


def _recursive(values: np.ndarray, alpha: float) -> np.ndarray:
    out = np.empty_like(values)
    out[0] = values[0]
    for t in range(1, values.size):
        # (1 - alpha) * prev + alpha * S_t, arranged to keep constants exact
        out[t] = out[t - 1] + alpha * (values[t] - out[t - 1])
    return out


def smooth_values(values, spec: FilterSpec) -> np.ndarray:
    """Smooth a 1-D array; the array form of :func:`smooth_signal`."""
    values = np.asarray(values, dtype=float)
    w = spec.window
    if w == 1:
        return values.copy()
    if spec.kind == "SMA":
        return _windowed(values, np.ones(w))
    if spec.kind == "WMA":
        return _windowed(values, np.arange(w, 0, -1, dtype=float))
    return _recursive(values, spec.alpha)


def smooth_signal(sig: JointSignal, spec: FilterSpec) -> JointSignal:
    return sig.with_values(smooth_values(sig.values, spec))


def smooth_sequence(seq: PoseSequence3D, spec: FilterSpec) -> PoseSequence3D:
    """Smooth every joint-coordinate signal of ``seq`` independently."""
    signals = [smooth_signal(s, spec) for s in sequence_to_signals(seq)]
    return signals_to_sequence(signals, seq.topology)
