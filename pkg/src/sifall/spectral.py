"""STFT spectrograms and ridge-based acceleration extraction.

The front-end converts windows of the dynamics series S(t) into
fixed-height magnitude spectrograms (64 frequency bins so five pooling
halvings stay integral) and extracts a frequency ridge with a dynamic
program constrained to one-bin steps.  The ridge is turned into an
approximate body acceleration two ways:

  * "fd"    - lambda * d(ridge)/dt, the dimensionally clean reading.
              Note the one-bin DP constraint caps this at
              lambda * freq_res / hop_s, which is 2.44 m/s^2 at the
              default 200 Hz / 128-sample window / 16-sample hop - below
              the 2.5 m/s^2 fall screen, so this mode cannot fire there.
  * "ridge" - lambda * ridge_hz / window_s, treating the STFT window as
              the differentiation interval.  This is the mode the
              segmentation pipeline uses by default.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicsSeries

STFT_WINDOW = 128
STFT_HOP = 16
FREQ_BINS = 64
MIN_TIME_BINS = 32

ACCEL_THRESHOLD = 2.5          # m/s^2 fall-like screen
DEFAULT_WAVELENGTH_M = 0.125   # 2.4 GHz


class SegmentTooShort(ValueError):
    """Requested STFT window is shorter than one analysis frame."""


def hann_window(n: int = STFT_WINDOW) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * math.pi * np.arange(n) / n)


@dataclass
class SpectroSegment:
    """F x T x C magnitude spectrogram of a fall-like activity window.

    tensor is scaled so that the sum of squared magnitudes equals the
    windowed-signal energy (one-sided scaling, Nyquist bin dropped), which
    keeps Parseval bookkeeping honest for band-limited content.
    """

    tensor: np.ndarray            # (F, T, C), non-negative
    hop_s: float
    freq_res_hz: float
    t_start: float
    t_end: float
    source_trace: str = "trace"
    valid_time_bins: int | None = None
    dynamics: np.ndarray | None = None   # source S(t) window, (N, C)
    dynamics_fs: float | None = None

    def __post_init__(self):
        self.tensor = np.asarray(self.tensor, dtype=float)
        if self.tensor.ndim == 2:
            self.tensor = self.tensor[:, :, None]
        if self.valid_time_bins is None:
            self.valid_time_bins = self.tensor.shape[1]

    @property
    def n_freq(self) -> int:
        return self.tensor.shape[0]

    @property
    def n_time(self) -> int:
        return self.tensor.shape[1]

    @property
    def n_streams(self) -> int:
        return self.tensor.shape[2]

    @property
    def window_s(self) -> float:
        return 1.0 / self.freq_res_hz


def frame_count(n_samples: int, window: int = STFT_WINDOW, hop: int = STFT_HOP) -> int:
    if n_samples < window:
        return 0
    return (n_samples - window) // hop + 1


def stft_array(x: np.ndarray, fs: float, window: int = STFT_WINDOW,
               hop: int = STFT_HOP, n_freq: int = FREQ_BINS,
               detrend: bool = False) -> np.ndarray:
    """One-sided magnitude STFT of an (N, C) array -> (F, T, C).

    Bin k magnitude is sqrt(c_k) * |X_k| / sqrt(window) with c_0 = 1 and
    c_k = 2 otherwise, so sum(mag^2) over a column equals the Hann-windowed
    frame energy up to the dropped Nyquist bin.  detrend subtracts each
    stream's clip mean first, emptying the DC shoulder so the motion band
    is not dwarfed by the similarity baseline.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if detrend:
        x = x - x.mean(axis=0, keepdims=True)
    n, c = x.shape
    t_bins = frame_count(n, window, hop)
    if t_bins < 1:
        raise SegmentTooShort(f"need >= {window} samples, got {n}")
    win = hann_window(window)
    idx = np.arange(window)[None, :] + hop * np.arange(t_bins)[:, None]
    frames = x[idx, :] * win[None, :, None]            # (T, window, C)
    spec = np.fft.rfft(frames, axis=1)[:, :n_freq, :]  # (T, F, C)
    scale = np.full(n_freq, math.sqrt(2.0 / window))
    scale[0] = math.sqrt(1.0 / window)
    mag = np.abs(spec) * scale[None, :, None]
    return np.transpose(mag, (1, 0, 2))                # (F, T, C)


def stft(series: DynamicsSeries, t_from: float, t_to: float,
         window: int = STFT_WINDOW, hop: int = STFT_HOP,
         min_time_bins: int = MIN_TIME_BINS, pad: bool = True,
         detrend: bool = False) -> SpectroSegment:
    """Magnitude spectrogram of S(t) over [t_from, t_to], one channel per stream."""
    t0 = series.timestamps[0]
    i0 = max(0, int(round((t_from - t0) * series.fs)))
    i1 = min(len(series), int(round((t_to - t0) * series.fs)))
    clip = series.values[i0:i1]
    if clip.shape[0] < window:
        raise SegmentTooShort(
            f"window [{t_from}, {t_to}] has {clip.shape[0]} samples, need {window}")
    tensor = stft_array(clip, series.fs, window, hop, detrend=detrend)
    valid = tensor.shape[1]
    if pad and valid < min_time_bins:
        padded = np.zeros((tensor.shape[0], min_time_bins, tensor.shape[2]))
        padded[:, :valid, :] = tensor
        tensor = padded
    return SpectroSegment(
        tensor=tensor, hop_s=hop / series.fs, freq_res_hz=series.fs / window,
        t_start=float(series.timestamps[i0]),
        t_end=float(series.timestamps[i1 - 1]),
        source_trace=series.trace_id, valid_time_bins=valid,
        dynamics=clip.copy(), dynamics_fs=series.fs)


def noise_floor(static_segment: SpectroSegment, n_sigma: float = 5.0) -> np.ndarray:
    """Per-bin floor (F,) = mean + n_sigma * std over a static-period spectrogram.

    5 sigma rather than the usual 3: the ridge search is a max-sum and will
    happily chain isolated noise excursions, so the floor errs high.
    """
    flat = static_segment.tensor.reshape(static_segment.n_freq, -1)
    return flat.mean(axis=1) + n_sigma * flat.std(axis=1)


@dataclass
class AccelTrace:
    """Ridge path (Hz per time bin) and the derived acceleration series."""

    ridge_hz: np.ndarray
    accel: np.ndarray
    lambda_m: float
    theta: float = ACCEL_THRESHOLD
    score: float = 0.0
    stream: int = 0
    mode: str = "ridge"
    hop_s: float = 0.0
    freq_res_hz: float = 0.0

    def max_accel(self) -> float:
        return float(np.max(np.abs(self.accel))) if self.accel.size else 0.0

    def argmax_accel(self) -> int:
        return int(np.argmax(np.abs(self.accel))) if self.accel.size else 0


def ridge_path(spec: np.ndarray, floor: np.ndarray | None = None):
    """Max-sum frequency path through an (F, T) spectrogram.

    Maximizes sum_i spec[f_i, i] subject to |f_i - f_{i-1}| <= 1, with bins
    below the per-bin noise floor contributing zero.  Ties prefer staying
    on the current bin, then the lower bin, so silent stretches produce a
    flat path.  Returns (path indices (T,), score).
    """
    s = np.asarray(spec, dtype=float)
    if s.ndim != 2:
        raise ValueError("ridge_path expects a 2-D (F, T) spectrogram")
    f_bins, t_bins = s.shape
    if t_bins < 1:
        raise ValueError("empty spectrogram")
    gain = s.copy()
    if floor is not None:
        gain[gain < np.asarray(floor, dtype=float)[:, None]] = 0.0

    score = gain[:, 0].copy()
    # back stores the predecessor offset: f_{t-1} = f_t + back[f_t, t]
    back = np.zeros((f_bins, t_bins), dtype=np.int8)
    for t in range(1, t_bins):
        stay = score
        from_below = np.concatenate([[-np.inf], score[:-1]])
        from_above = np.concatenate([score[1:], [-np.inf]])
        # preference order on exact ties: stay, then lower, then upper bin
        best = stay.copy()
        offset = np.zeros(f_bins, dtype=np.int8)
        better = from_below > best
        best[better] = from_below[better]
        offset[better] = -1
        better = from_above > best
        best[better] = from_above[better]
        offset[better] = 1
        back[:, t] = offset
        score = best + gain[:, t]

    path = np.empty(t_bins, dtype=np.int64)
    path[-1] = int(np.argmax(score))
    total = float(score[path[-1]])
    for t in range(t_bins - 1, 0, -1):
        path[t - 1] = path[t] + back[path[t], t]
    return path, total


def ridge_accel(seg: SpectroSegment, lambda_m: float = DEFAULT_WAVELENGTH_M,
                floor: np.ndarray | None = None, mode: str = "ridge",
                theta: float = ACCEL_THRESHOLD) -> AccelTrace:
    """Ridge-derived acceleration for a segment; multi-stream takes the
    stream with the largest |accel|.

    mode "fd": a[i] = lambda * (ridge_hz[i] - ridge_hz[i-1]) / hop_s
    mode "ridge": a[i] = lambda * ridge_hz[i] / window_s
    """
    if seg.n_time < 2:
        raise ValueError("need at least 2 time bins")
    if mode not in ("fd", "ridge"):
        raise ValueError(f"unknown accel mode {mode!r}")
    window_s = 1.0 / seg.freq_res_hz
    best: AccelTrace | None = None
    for c in range(seg.n_streams):
        spec = seg.tensor[:, :seg.valid_time_bins, c]
        path, total = ridge_path(spec, floor)
        ridge_hz = path.astype(float) * seg.freq_res_hz
        # bins the path crosses without supra-floor energy carry no speed
        # evidence; mask them so free wandering through silence reads as 0
        cols = np.arange(path.size)
        energized = spec[path, cols] > 0.0
        if floor is not None:
            energized &= spec[path, cols] >= np.asarray(floor, dtype=float)[path]
        # a single supra-floor cell with silent neighbors is impulse noise,
        # not a tracked speed; require a 2-bin run
        if energized.size >= 2:
            neighbor = np.zeros_like(energized)
            neighbor[1:] |= energized[:-1]
            neighbor[:-1] |= energized[1:]
            energized &= neighbor
        if mode == "fd":
            accel = np.zeros_like(ridge_hz)
            accel[1:] = lambda_m * np.diff(ridge_hz) / seg.hop_s
            accel[1:] *= energized[1:] & energized[:-1]
        else:
            accel = lambda_m * ridge_hz / window_s * energized
        cand = AccelTrace(ridge_hz=ridge_hz, accel=accel, lambda_m=lambda_m,
                          theta=theta, score=total, stream=c, mode=mode,
                          hop_s=seg.hop_s, freq_res_hz=seg.freq_res_hz)
        if best is None or cand.max_accel() > best.max_accel():
            best = cand
    return best


def fd_mode_ceiling(freq_res_hz: float = 200.0 / STFT_WINDOW,
                    hop_s: float = STFT_HOP / 200.0,
                    lambda_m: float = DEFAULT_WAVELENGTH_M) -> float:
    """Largest acceleration "fd" mode can ever report: the one-bin DP step
    constraint bounds |d ridge/dt| by freq_res/hop."""
    return lambda_m * freq_res_hz / hop_s


DC_SHOULDER_BINS = 3     # bins carrying the S(t) mean and its envelope
MIN_LOBE_BINS = 3        # real content spans the Hann main lobe (~4 bins)


def whiten_columns(spec: np.ndarray, floor: np.ndarray,
                   dc_exclude: int = DC_SHOULDER_BINS,
                   min_lobe: int = MIN_LOBE_BINS) -> np.ndarray:
    """Detection surface for the fall-like screen.

    Zeroes sub-floor cells and the near-DC shoulder, drops columns with
    fewer supra-floor cells than a spectral main lobe (isolated cells are
    noise flukes, not motion), then normalizes each remaining column to
    unit maximum.  On this surface the max-sum ridge follows the column
    maxima, i.e. the actual Doppler ridge, instead of farming the
    persistent low-frequency pedestal.
    """
    g = np.asarray(spec, dtype=float).copy()
    g[g < np.asarray(floor, dtype=float)[:, None]] = 0.0
    g[:dc_exclude] = 0.0
    active = (g > 0.0).sum(axis=0) >= min_lobe
    g[:, ~active] = 0.0
    colmax = g.max(axis=0)
    colmax[colmax == 0.0] = 1.0
    return g / colmax


def fall_screen(seg: SpectroSegment, floor: np.ndarray,
                lambda_m: float = DEFAULT_WAVELENGTH_M,
                mode: str = "ridge", theta: float = ACCEL_THRESHOLD) -> AccelTrace:
    """Ridge acceleration on the whitened surface, fused across streams.

    This is what the segmenter's fall-like test runs; ridge_accel stays the
    plain magnitude-surface variant.
    """
    if seg.n_time < 2:
        raise ValueError("need at least 2 time bins")
    window_s = 1.0 / seg.freq_res_hz
    best: AccelTrace | None = None
    for c in range(seg.n_streams):
        spec = seg.tensor[:, :seg.valid_time_bins, c]
        g = whiten_columns(spec, floor)
        path, total = ridge_path(g)
        cols = np.arange(path.size)
        energized = g[path, cols] > 0.0
        if energized.size >= 2:
            neighbor = np.zeros_like(energized)
            neighbor[1:] |= energized[:-1]
            neighbor[:-1] |= energized[1:]
            energized &= neighbor
        ridge_hz = path.astype(float) * seg.freq_res_hz
        if mode == "fd":
            accel = np.zeros_like(ridge_hz)
            accel[1:] = lambda_m * np.diff(ridge_hz) / seg.hop_s
            accel[1:] *= energized[1:] & energized[:-1]
        else:
            accel = lambda_m * ridge_hz / window_s * energized
        cand = AccelTrace(ridge_hz=ridge_hz, accel=accel, lambda_m=lambda_m,
                          theta=theta, score=total, stream=c, mode=mode,
                          hop_s=seg.hop_s, freq_res_hz=seg.freq_res_hz)
        if best is None or cand.max_accel() > best.max_accel():
            best = cand
    return best
