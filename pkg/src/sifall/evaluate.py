"""Replay and evaluation: TPR/FPR against ground truth, windowed metrics,
and latency summaries.

Matching rule: a reported fall is true when its segment interval overlaps
a ground-truth fall event; alarms matching no fall event are false
positives.  The false-positive rate divides by the number of non-fall
fall-like activities in the truth (walking is not fall-like and is not in
the denominator).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import trace_dynamics
from .online import Decision, ObservedSegment, OnlineDetector
from .segmentation import SegmenterConfig, segment_stream
from .simulate import CsiTrace

NON_FALL_LIKE_KINDS = ("walk",)


@dataclass
class LatencySummary:
    inference_ms: dict = field(default_factory=dict)
    update_ms: dict = field(default_factory=dict)
    warning_delay_s: dict = field(default_factory=dict)
    alarm_delay_s: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"inference_ms": self.inference_ms, "update_ms": self.update_ms,
                "warning_delay_s": self.warning_delay_s,
                "alarm_delay_s": self.alarm_delay_s}


def percentiles(values) -> dict:
    if not len(values):
        return {}
    arr = np.asarray(values, dtype=float)
    return {"p50": float(np.percentile(arr, 50)),
            "p95": float(np.percentile(arr, 95)),
            "max": float(arr.max()), "mean": float(arr.mean())}


@dataclass
class EvalReport:
    tpr: float
    fpr: float
    true_falls: int
    total_falls: int
    false_alarms: int
    non_fall_activities: int
    per_window: list = field(default_factory=list)
    latency: LatencySummary = field(default_factory=LatencySummary)
    decisions: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"tpr": self.tpr, "fpr": self.fpr, "true_falls": self.true_falls,
                "total_falls": self.total_falls, "false_alarms": self.false_alarms,
                "non_fall_activities": self.non_fall_activities,
                "per_window": self.per_window, "latency": self.latency.to_json(),
                "decisions": [d.to_json() for d in self.decisions]}


def overlaps(a_start: float, a_end: float, b_start: float, b_end: float) -> bool:
    return a_start <= b_end and b_start <= a_end


def score_decisions(decisions: list, segments: list, truth: list,
                    window_s: float | None = None) -> EvalReport:
    """Confusion counts from decision events and their segment intervals.

    `segments` holds (t_start, t_end) per decision, index-aligned.
    """
    falls = [ev for ev in truth if ev.is_fall]
    fall_like = [ev for ev in truth
                 if not ev.is_fall and ev.kind not in NON_FALL_LIKE_KINDS]
    reported = [(d, segments[i]) for i, d in enumerate(decisions)
                if d.decision is Decision.FALL or d.decision == Decision.FALL.value]

    matched_falls = set()
    false_alarms = 0
    for d, (s0, s1) in reported:
        hit = [k for k, ev in enumerate(falls) if overlaps(s0, s1, ev.start_s, ev.end_s)]
        if hit:
            matched_falls.update(hit)
        else:
            false_alarms += 1
    tpr = len(matched_falls) / len(falls) if falls else 1.0
    fpr = false_alarms / len(fall_like) if fall_like else 0.0

    per_window = []
    if window_s:
        t_end = max([ev.end_s for ev in truth], default=0.0)
        w0 = 0.0
        while w0 < t_end:
            w1 = w0 + window_s
            wf = [ev for ev in falls if w0 <= ev.start_s < w1]
            wfl = [ev for ev in fall_like if w0 <= ev.start_s < w1]
            wrep = [(d, seg) for d, seg in reported if w0 <= seg[0] < w1 or w0 <= seg[1] < w1]
            wmatched = set()
            wfa = 0
            for d, (s0, s1) in wrep:
                hit = [k for k, ev in enumerate(wf) if overlaps(s0, s1, ev.start_s, ev.end_s)]
                if hit:
                    wmatched.update(hit)
                elif not any(overlaps(s0, s1, ev.start_s, ev.end_s) for ev in falls):
                    wfa += 1
            per_window.append({
                "window_start": w0,
                "tpr": len(wmatched) / len(wf) if wf else 1.0,
                "fpr": wfa / len(wfl) if wfl else 0.0,
            })
            w0 = w1
    return EvalReport(tpr=tpr, fpr=fpr, true_falls=len(matched_falls),
                      total_falls=len(falls), false_alarms=false_alarms,
                      non_fall_activities=len(fall_like), per_window=per_window,
                      decisions=decisions)


def replay(trace: CsiTrace, truth: list, detector: OnlineDetector,
           seg_config: SegmenterConfig | None = None,
           window_s: float | None = None,
           decision_hook=None) -> EvalReport:
    """Full pipeline replay: dynamics, segmentation, detection, scoring.

    decision_hook(index, event) runs after every decision; tests use it to
    simulate crashes mid-replay.
    """
    series = trace_dynamics(trace)
    records = segment_stream(series, seg_config)
    decisions = []
    intervals = []
    inference_ms = []
    warning_delays = []
    alarm_delays = []
    for i, rec in enumerate(records):
        seg = rec.segment
        obs = ObservedSegment(
            segment_id=f"{trace.trace_id}:{i}",
            tensor=seg.tensor, dynamics=seg.dynamics,
            dynamics_fs=seg.dynamics_fs,
            t_start=seg.t_start, t_end=seg.t_end, trace_id=trace.trace_id)
        t0 = time.perf_counter()
        event = detector.observe(obs, t=rec.decision_ready_t)
        inference_ms.append((time.perf_counter() - t0) * 1e3)
        decisions.append(event)
        intervals.append((seg.t_start, seg.t_end))
        matched = [ev for ev in truth
                   if overlaps(seg.t_start, seg.t_end, ev.start_s, ev.end_s)
                   and ev.kind not in NON_FALL_LIKE_KINDS]
        if matched:
            ref_end = max(ev.end_s for ev in matched)
            warning_delays.append(rec.warning_t - ref_end)
            if event.decision is Decision.FALL:
                alarm_delays.append(rec.decision_ready_t - ref_end)
        if decision_hook is not None:
            decision_hook(i, event)
    report = score_decisions(decisions, intervals, truth, window_s)
    report.latency.inference_ms = percentiles(inference_ms)
    report.latency.warning_delay_s = percentiles(warning_delays)
    report.latency.alarm_delay_s = percentiles(alarm_delays)
    return report
