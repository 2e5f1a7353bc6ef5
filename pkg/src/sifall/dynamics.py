"""Channel-dynamics extraction from raw CSI.

The conjugate product |H|^2 discards every hardware phase term in one
shot; the remaining AGC gain eps1(t)^2 is removed by measuring the cosine
similarity of the per-frame amplitude vector against the all-ones
reference, which is invariant to any positive scaling.  The resulting
per-stream series S(t) in [0, 1] is the substrate for movement detection
and segmentation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simulate import CsiFrame, CsiTrace


class SignalDead(ValueError):
    """Amplitude vector is identically zero; no signal to normalize."""


def conjugate_multiply(frame: CsiFrame | np.ndarray) -> np.ndarray:
    """Per-entry squared magnitude |h|^2 of an (M, C) frame, exact and real."""
    h = frame.h if isinstance(frame, CsiFrame) else np.asarray(frame)
    return h.real * h.real + h.imag * h.imag


def cosine_similarity_ref(amp: np.ndarray) -> float:
    """Similarity of a non-negative amplitude vector to r = [1, ..., 1].

    Returns <amp, r> / (||amp|| * ||r||) in (0, 1]; scale-invariant, which
    is exactly what cancels the AGC gain.
    """
    amp = np.asarray(amp, dtype=float)
    norm = float(np.linalg.norm(amp))
    if norm == 0.0:
        raise SignalDead("all-zero amplitude vector")
    return float(amp.sum() / (norm * np.sqrt(amp.size)))


@dataclass
class DynamicsSeries:
    """Per-stream channel-dynamics series S(t), one sample per frame.

    values: (N, C) in [0, 1]; gamma is the movement-variance threshold
    (None until calibrated).
    """

    values: np.ndarray
    fs: float
    timestamps: np.ndarray
    gamma: float | None = None
    trace_id: str = "trace"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        self.values = v[:, None] if v.ndim == 1 else v
        self.timestamps = np.asarray(self.timestamps, dtype=float)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_streams(self) -> int:
        return self.values.shape[1]

    def window_samples(self) -> int:
        """Movement-detection window: 0.1 s of samples (fs/10), at least 2."""
        return max(2, int(round(self.fs / 10.0)))


def trace_dynamics(trace: CsiTrace) -> DynamicsSeries:
    """Full-trace S(t): conjugate product then reference similarity, per stream."""
    amp = trace.h.real ** 2 + trace.h.imag ** 2        # (N, M, C)
    norms = np.linalg.norm(amp, axis=1)                # (N, C)
    if np.any(norms == 0.0):
        raise SignalDead("trace contains an all-zero amplitude frame")
    m = amp.shape[1]
    s = amp.sum(axis=1) / (norms * np.sqrt(m))
    return DynamicsSeries(values=s, fs=trace.sample_rate_hz,
                          timestamps=trace.timestamps, trace_id=trace.trace_id)


def moving_std(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving standard deviation (population), per column.

    Output[i] is the std of values[i-window+1 : i+1]; the first window-1
    samples use the partial prefix.  Computed via prefix sums, O(N).
    """
    arr = np.asarray(values, dtype=float)
    one_d = arr.ndim == 1
    v = arr[:, None] if one_d else arr
    n = v.shape[0]
    csum = np.vstack([np.zeros((1, v.shape[1])), np.cumsum(v, axis=0)])
    csum2 = np.vstack([np.zeros((1, v.shape[1])), np.cumsum(v * v, axis=0)])
    idx = np.arange(n)
    lo = np.maximum(idx - window + 1, 0)
    cnt = (idx - lo + 1).astype(float)[:, None]
    s1 = csum[idx + 1] - csum[lo]
    s2 = csum2[idx + 1] - csum2[lo]
    var = np.maximum(s2 / cnt - (s1 / cnt) ** 2, 0.0)
    out = np.sqrt(var)
    return out[:, 0] if one_d else out


def movement_indicator(series: DynamicsSeries, gamma: float | None = None) -> np.ndarray:
    """Boolean per-sample movement flags: trailing movstd > gamma on any stream."""
    g = series.gamma if gamma is None else gamma
    if g is None:
        raise ValueError("gamma not calibrated")
    ms = moving_std(series.values, series.window_samples())
    return (ms > g).any(axis=1)


def detect_movement(series: DynamicsSeries, t: int, gamma: float | None = None) -> bool:
    """Movement at sample index t: trailing fs/10-sample std above gamma."""
    w = series.window_samples()
    if t + 1 < w:
        raise ValueError(f"need at least {w} samples before index {t}")
    g = series.gamma if gamma is None else gamma
    if g is None:
        raise ValueError("gamma not calibrated")
    win = series.values[t + 1 - w:t + 1]
    return bool((win.std(axis=0) > g).any())


def calibrate_gamma(series: DynamicsSeries, static_from_s: float = 0.0,
                    static_to_s: float = 2.0, factor: float = 3.0) -> float:
    """Movement threshold from a declared static interval.

    gamma = factor * median trailing movstd over the interval, across all
    streams.  The paper-style threshold is never given numerically, so the
    static noise floor sets it.
    """
    i0 = int(round(static_from_s * series.fs))
    i1 = min(len(series), int(round(static_to_s * series.fs)))
    if i1 - i0 < 2 * series.window_samples():
        raise ValueError("static interval too short for calibration")
    ms = moving_std(series.values[i0:i1], series.window_samples())
    w = series.window_samples()
    gamma = factor * float(np.median(ms[w:]))
    series.gamma = gamma
    return gamma
