"""Synthetic corpora: full CSI scenarios for the segmentation pipeline and
a fast dynamics-motif bank for training/evaluating the detector network
without rendering 56-subcarrier channel traces.

The motif bank writes S(t) clips directly with the same spectro-temporal
shapes the CSI pipeline produces (low-frequency pedestal plus a Doppler
ridge plus noise), which keeps network experiments inside desk-scale time
budgets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicsSeries
from .simulate import (DEFAULT_SAMPLE_RATE_HZ, ChannelScenario, GroundTruthEvent,
                       MotionEvent, make_daily_event, make_fall_event,
                       make_scenario, make_walk_event)

FALL_LIKE_DAILY = ("sit", "jump", "squat", "bow", "swing")
FALL_KIND_CYCLE = ("walk_fall", "stop_fall", "slow_fall")


@dataclass
class CorpusTrace:
    scenario: ChannelScenario
    truth: list
    trace_id: str


def build_segmentation_corpus(n_events: int = 100, seed: int = 0,
                              events_per_trace: int = 10,
                              fall_fraction: float = 0.33,
                              with_walks: bool = True) -> list[CorpusTrace]:
    """Sequenced corpus of fall-like events, every one ending in a pause.

    Events are spaced so a pause plus the change-point second always fits
    before the next activity starts; optional walking stretches are placed
    between events as non-fall-like distractors.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
    traces = []
    placed = 0
    trace_no = 0
    while placed < n_events:
        take = min(events_per_trace, n_events - placed)
        events: list[MotionEvent] = []
        t = 4.0   # leading static stretch for calibration
        for k in range(take):
            if with_walks and rng.random() < 0.4:
                walk = make_walk_event(rng, t, rng.uniform(2.0, 4.0))
                events.append(walk)
                t = walk.end_s + rng.uniform(1.6, 2.4)
            if rng.random() < fall_fraction:
                kind = FALL_KIND_CYCLE[int(rng.integers(len(FALL_KIND_CYCLE)))]
                ev = make_fall_event(rng, t, kind)
            else:
                kind = FALL_LIKE_DAILY[int(rng.integers(len(FALL_LIKE_DAILY)))]
                ev = make_daily_event(rng, t, kind, vigorous=True)
            events.append(ev)
            t = ev.end_s + rng.uniform(2.2, 3.5)
        scenario = make_scenario(t + 2.0, events, seed=seed * 1009 + trace_no,
                                 noise_snr_db=30.0)
        truth = [GroundTruthEvent(ev.kind, ev.start_s, ev.end_s, ev.is_fall)
                 for ev in events]
        traces.append(CorpusTrace(scenario, truth, f"corpus-{seed}-{trace_no}"))
        placed += take
        trace_no += 1
    return traces


# ---------------------------------------------------------------------------
# Dynamics motif bank
# ---------------------------------------------------------------------------

BENIGN_MOTIFS = ("sit", "jump", "bow", "swing")


def _motif_profile(kind: str, rng: np.random.Generator):
    """(duration_s, f_D(t) callable over relative time) per motif family."""
    if kind == "sit":
        peak = rng.uniform(17.0, 25.0)
        rise = rng.uniform(0.5, 0.8)
        plateau = rng.uniform(0.15, 0.25)
        dur = rise + plateau

        def f(t):
            return np.where(t < rise, peak * t / rise, peak)
    elif kind == "jump":
        peak = rng.uniform(20.0, 30.0)
        full = rng.uniform(0.5, 0.75)
        dur = full * rng.uniform(0.6, 0.75)

        def f(t):
            return peak * np.sin(math.pi * np.clip(t, 0, full) / full)
    elif kind == "bow":
        peak = rng.uniform(15.0, 20.0)
        rise = rng.uniform(0.7, 1.0)
        plateau = rng.uniform(0.15, 0.25)
        dur = rise + plateau

        def f(t):
            return np.where(t < rise, peak * np.sqrt(np.clip(t, 0, None) / rise), peak)
    elif kind == "swing":
        peak = rng.uniform(18.0, 26.0)
        cyc = rng.uniform(0.9, 1.5)
        dur = cyc * rng.uniform(0.55, 0.75)

        def f(t):
            return np.abs(peak * np.sin(math.pi * t / cyc))
    elif kind == "fall":
        accel = rng.uniform(3.0, 8.0)
        rate = accel / 0.125
        peak = rng.uniform(16.0, max(16.5, min(42.0, 0.62 * rate)))
        rise = peak / rate
        plateau = rng.uniform(0.12, 0.2)
        dur = rise + plateau

        def f(t):
            return np.where(t < rise, rate * t, peak)
    else:
        raise ValueError(f"unknown motif kind {kind!r}")
    return dur, f


def synth_dynamics_clip(kind: str, rng: np.random.Generator,
                        fs: float = DEFAULT_SAMPLE_RATE_HZ,
                        n_streams: int = 3,
                        clip_s: float = 4.5,
                        noise_std: float = 8e-4) -> DynamicsSeries:
    """One S(t) clip of a single activity with leading/trailing stillness.

    The activity ends 0.9 s before the clip end, mirroring the segment
    window [t_max - 3 s, t_end*] the front-end emits.
    """
    n = int(round(clip_s * fs))
    t = np.arange(n) / fs
    dur, f = _motif_profile(kind, rng)
    start = clip_s - 0.9 - dur
    rel = t - start
    inside = (rel >= 0) & (rel <= dur)
    freq = np.where(inside, f(np.clip(rel, 0.0, dur)), 0.0)
    phase = 2.0 * math.pi * np.cumsum(freq) / fs

    base = rng.uniform(0.88, 0.96)
    values = np.empty((n, n_streams))
    for c in range(n_streams):
        amp = rng.uniform(0.01, 0.03)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        osc = amp * np.sin(phase + phi) * inside
        # slow envelope dip while the body is mid-motion
        envelope = -rng.uniform(0.005, 0.02) * inside
        values[:, c] = base + osc + envelope + rng.normal(0.0, noise_std, n)
    np.clip(values, 0.0, 1.0, out=values)
    return DynamicsSeries(values=values, fs=fs, timestamps=t,
                          trace_id=f"motif-{kind}")


def motif_bank(kinds, count_per_kind: int, seed: int,
               clip_s: float = 4.5) -> list[tuple[str, DynamicsSeries]]:
    """count_per_kind clips of each kind, deterministic under seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB0]))
    out = []
    for kind in kinds:
        for _ in range(count_per_kind):
            out.append((kind, synth_dynamics_clip(kind, rng, clip_s=clip_s)))
    return out
