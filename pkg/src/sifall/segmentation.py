"""Fall-like activity segmentation.

Backtracking segmenter: when the trailing moving-std of S(t) drops below
the movement threshold (a pause after motion), look at the past five
seconds of spectrogram, and if the ridge acceleration ever exceeded the
fall-like screen, refine the end point with a greedy linear-regression
change-point test for up to one second and emit the STFT of
[t_max - 3 s, t_end*].  Redundant context is intentional: better to carry
extra signal than to clip the activity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicsSeries, calibrate_gamma, moving_std
from .spectral import (ACCEL_THRESHOLD, DEFAULT_WAVELENGTH_M, STFT_HOP,
                       STFT_WINDOW, AccelTrace, SegmentTooShort,
                       SpectroSegment, fall_screen, noise_floor, stft)

LOOKBACK_S = 5.0          # the fall-like test inspects the last five seconds
PRE_CONTEXT_S = 3.0       # context kept before the acceleration peak
REFINE_S = 1.0            # change-point monitoring horizon
DEBOUNCE_S = 0.5          # suppress re-triggers after an emitted segment
# The screen runs when the refinement second has elapsed, so its window is
# the last five seconds ending at the decision point, which keeps the full
# stop transient of the activity inside the analyzed frames.
SCREEN_POST_S = 0.8
SCREEN_PRE_S = LOOKBACK_S - SCREEN_POST_S


@dataclass
class SegmentBounds:
    """Timing facts for one emitted segment."""

    t_end: float
    t_max: float
    t_end_star: float
    beta: float
    regression_cost: float = 0.0

    def window(self) -> tuple[float, float]:
        return (self.t_max - PRE_CONTEXT_S, self.t_end_star)


def _linreg_sse(y: np.ndarray) -> float:
    """Sum of squared residuals of the least-squares line through y."""
    n = y.size
    if n < 3:
        return 0.0
    x = np.arange(n, dtype=float)
    xm = x - x.mean()
    ym = y - y.mean()
    denom = float(xm @ xm)
    slope = float(xm @ ym) / denom if denom else 0.0
    resid = ym - slope * xm
    return float(resid @ resid)


def default_beta(series: DynamicsSeries, t_end_idx: int) -> float:
    """Penalty default: 2x the residual variance of the first fitted second."""
    fs = int(round(series.fs))
    seg = series.values[t_end_idx:t_end_idx + fs].mean(axis=1)
    if seg.size < 3:
        return 1e-9
    sse = _linreg_sse(seg)
    return max(2.0 * sse / seg.size, 1e-12)


def changepoint_refine(series: DynamicsSeries, t_end: float,
                       beta: float | None = None) -> float:
    """Greedy change-point extension of t_end by at most one second.

    Walks forward one sample at a time fitting a line to S(t_end..t); stops
    at the first sample whose inclusion raises the regression SSE by more
    than beta and returns the previous time, else t_end + 1 s (clamped to
    the stream end).  Works on the stream-averaged series.
    """
    t0 = series.timestamps[0]
    fs = series.fs
    i_end = int(round((t_end - t0) * fs))
    i_stop = min(len(series) - 1, i_end + int(round(REFINE_S * fs)))
    if i_end >= len(series) - 2:
        return float(series.timestamps[min(i_end, len(series) - 1)])
    if beta is None:
        beta = default_beta(series, i_end)
    y = series.values[i_end:i_stop + 1].mean(axis=1)
    prev_err = _linreg_sse(y[:2])
    for k in range(2, y.size):
        err = _linreg_sse(y[:k + 1])
        if err > prev_err + beta:
            return float(series.timestamps[i_end + k - 1])
        prev_err = err
    return float(series.timestamps[i_stop])


@dataclass
class SegmenterConfig:
    gamma: float | None = None          # movement threshold; None = calibrate
    theta: float = ACCEL_THRESHOLD
    beta: float | None = None           # change-point penalty; None = adaptive
    lambda_m: float = DEFAULT_WAVELENGTH_M
    accel_mode: str = "ridge"
    calib_from_s: float = 0.0
    calib_to_s: float = 2.0
    min_event_s: float = 0.25           # require this much motion before a pause counts


@dataclass
class SegmentRecord:
    segment: SpectroSegment
    bounds: SegmentBounds
    accel: AccelTrace
    warning_t: float       # stream time when the fall-like screen fired
    decision_ready_t: float  # stream time when the refined window was known


def segment_stream(series: DynamicsSeries,
                   config: SegmenterConfig | None = None) -> list[SegmentRecord]:
    """Run the pause-triggered segmenter over a full dynamics series.

    The scan is causal: every trigger only looks at samples at or before
    the pause plus the one-second refinement horizon, so the same code
    path serves live streaming, just fed incrementally.
    """
    cfg = config or SegmenterConfig()
    fs = series.fs
    n = len(series)
    w = series.window_samples()
    if cfg.gamma is not None:
        series.gamma = cfg.gamma
    elif series.gamma is None:
        calibrate_gamma(series, cfg.calib_from_s, cfg.calib_to_s)
    gamma = series.gamma

    ms = moving_std(series.values, w)
    moving = (ms > gamma).any(axis=1)

    # per-bin noise floor from the calibration interval
    calib_i1 = int(round(cfg.calib_to_s * fs))
    try:
        static_spec = stft(series, series.timestamps[0],
                           series.timestamps[min(calib_i1, n - 1)], pad=False)
        floor = noise_floor(static_spec)
    except SegmentTooShort:
        floor = None

    records: list[SegmentRecord] = []
    min_run = max(1, int(round(cfg.min_event_s * fs)))
    t0 = series.timestamps[0]
    suppress_until = -np.inf
    run = 0           # consecutive moving samples seen before current index
    i = w
    while i < n:
        if moving[i]:
            run += 1
            i += 1
            continue
        paused_after_motion = run >= min_run
        run = 0
        if not paused_after_motion or series.timestamps[i] < suppress_until:
            i += 1
            continue
        t_end = float(series.timestamps[i])
        look_from = max(t0, t_end - SCREEN_PRE_S)
        look_to = min(float(series.timestamps[-1]), t_end + SCREEN_POST_S)
        try:
            recent = stft(series, look_from, look_to, pad=False)
        except SegmentTooShort:
            i += 1
            continue
        if floor is None:
            i += 1
            continue
        trace = fall_screen(recent, floor, cfg.lambda_m, cfg.accel_mode, cfg.theta)
        if trace.max_accel() <= cfg.theta:
            i += 1
            continue
        # timestamp of the acceleration peak inside the lookback window
        t_max = recent.t_start + trace.argmax_accel() * recent.hop_s
        t_end_star = changepoint_refine(series, t_end, cfg.beta)
        t_lo = max(t0, t_max - PRE_CONTEXT_S)
        try:
            # emitted tensors are detrended: the network learns the motion
            # band, not the environment-specific similarity baseline
            seg = stft(series, t_lo, t_end_star, detrend=True)
        except SegmentTooShort:
            i += 1
            continue
        bounds = SegmentBounds(t_end=t_end, t_max=t_max, t_end_star=t_end_star,
                               beta=cfg.beta if cfg.beta is not None else -1.0)
        records.append(SegmentRecord(
            segment=seg, bounds=bounds, accel=trace,
            warning_t=t_end,
            decision_ready_t=max(t_end_star, t_end + REFINE_S)))
        suppress_until = t_end + DEBOUNCE_S
        i += 1
    return records
