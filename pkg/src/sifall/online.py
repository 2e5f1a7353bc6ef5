"""Self-evolving online fall detection.

Reconstruction errors are classified against adaptive thresholds derived
from the running mean (alpha) and median of recent errors:

  e >  2*alpha          -> fall: raise an alarm, freeze alpha and the median
  alpha < e <= 2*alpha  -> suspicious: buffer the sample, update stats
  e <= alpha            -> normal: update stats and retrain on a 24x
                           augmented mini-batch of the sample

Every 50th suspicious sample triggers a triage: PCA to 8 dims over the
buffered latent means, mean-shift clustering, retraining on the member
nearest the largest cluster's centroid (many repeats = benign), and
quarantining clusters far away from all others (a possibly undiscovered
activity).  Human verdicts close alarms: true positives are discarded,
false positives feed a 24x retrain.

Retraining runs inline in the single-writer decision loop and swaps in a
fresh immutable params dict (model_version increments), which keeps the
full decision sequence reproducible for replay and crash recovery.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .augment import AugmentPlan, augment_24x, augment_24x_spectral
from .clustering import ClusterReport, mean_shift, pca_reduce
from .net import (AdamState, FallNetConfig, encode, reconstruction_error,
                  train_step)

ERROR_WINDOW = 200
SUSPICIOUS_CAPACITY = 50
ALPHA_EMA_WEIGHT = 0.01
MEDIAN_CHANGE_FLAG = 0.5
PCA_COMPONENTS = 8
QUARANTINE_CAPACITY = 500
RETRAIN_STEPS = 10
RETRAIN_BATCH = 24


class Decision(str, Enum):
    FALL = "fall"
    SUSPICIOUS = "suspicious"
    NORMAL = "normal"


class AlarmStatus(str, Enum):
    OPEN = "open"
    CONFIRMED_FALL = "confirmed_fall"
    FALSE_POSITIVE = "false_positive"


class Verdict(str, Enum):
    TRUE_POSITIVE = "true_positive"
    FALSE_POSITIVE = "false_positive"


class DetectorError(RuntimeError):
    pass


class UnknownAlarm(DetectorError):
    pass


class AlarmClosed(DetectorError):
    pass


@dataclass
class ObservedSegment:
    """What the detector keeps per ingested segment."""

    segment_id: str
    tensor: np.ndarray                  # (F, T, C)
    dynamics: np.ndarray | None = None  # (N, C) source S(t) clip
    dynamics_fs: float | None = None
    t_start: float = 0.0
    t_end: float = 0.0
    trace_id: str = ""


@dataclass
class DetectorState:
    """Running reconstruction-error statistics; the loop's mutable core."""

    alpha: float
    median: float
    e_history: deque = field(default_factory=lambda: deque(maxlen=ERROR_WINDOW))
    env_change_flag: bool = False
    model_version: int = 0

    @staticmethod
    def from_errors(errors) -> "DetectorState":
        errors = [float(e) for e in errors]
        if not errors:
            raise DetectorError("cannot initialize state from zero errors")
        st = DetectorState(alpha=float(np.mean(errors)),
                           median=float(np.median(errors)))
        st.e_history.extend(errors[-ERROR_WINDOW:])
        return st


def update_stats(state: DetectorState, e: float) -> DetectorState:
    """EMA on alpha, rolling-window median, environment-change flag."""
    state.alpha = (1.0 - ALPHA_EMA_WEIGHT) * state.alpha + ALPHA_EMA_WEIGHT * e
    state.e_history.append(float(e))
    prev = state.median
    state.median = float(np.median(state.e_history))
    if prev > 0 and abs(state.median - prev) / prev > MEDIAN_CHANGE_FLAG:
        state.env_change_flag = True
    return state


def classify(e: float, state: DetectorState) -> Decision:
    """Pure decision rule; the caller applies the matching side effects."""
    if state.alpha <= 0:
        raise DetectorError("detector state not initialized")
    if e > 2.0 * state.alpha:
        return Decision.FALL
    if e > state.alpha:
        return Decision.SUSPICIOUS
    return Decision.NORMAL


@dataclass
class AlarmRecord:
    alarm_id: int
    timestamp: float
    segment_id: str
    error: float
    status: AlarmStatus
    model_version: int

    def to_json(self) -> dict:
        return {"alarm_id": self.alarm_id, "timestamp": self.timestamp,
                "segment_id": self.segment_id, "error": self.error,
                "status": self.status.value, "model_version": self.model_version}


@dataclass
class DecisionEvent:
    t: float
    segment_id: str
    e: float
    alpha: float
    median: float
    decision: Decision
    model_version: int
    alarm_id: int | None = None

    def to_json(self) -> dict:
        return {"t": self.t, "segment_id": self.segment_id, "e": self.e,
                "alpha": self.alpha, "gamma": self.median,
                "decision": self.decision.value,
                "model_version": self.model_version, "alarm_id": self.alarm_id}


@dataclass
class OnlineConfig:
    retrain_enabled: bool = True
    retrain_steps: int = RETRAIN_STEPS
    retrain_lr: float = 1e-3
    retrain_on_normal: bool = True
    seed: int = 0


class OnlineDetector:
    """Single-writer detection loop over an immutable network snapshot."""

    def __init__(self, params: dict, net_config: FallNetConfig,
                 state: DetectorState, config: OnlineConfig | None = None,
                 augment_plan: AugmentPlan | None = None):
        self.params = params
        self.net_config = net_config
        self.state = state
        self.config = config or OnlineConfig()
        self.augment_plan = augment_plan or AugmentPlan()
        self.buffer: list[tuple[ObservedSegment, np.ndarray, float]] = []
        self.quarantine: deque = deque(maxlen=QUARANTINE_CAPACITY)
        self.alarms: dict[int, AlarmRecord] = {}
        self._alarm_payloads: dict[int, ObservedSegment] = {}
        self._next_alarm = 1
        self.flush_reports: list[ClusterReport] = []
        self.decision_log: list[DecisionEvent] = []

    # -- scoring ----------------------------------------------------------

    def score(self, tensor: np.ndarray) -> float:
        return reconstruction_error(tensor, self.params, self.net_config)

    def latent_mean(self, tensor: np.ndarray) -> np.ndarray:
        stats, _, _, _ = encode(tensor, self.params, self.net_config)
        return stats.mu[0]

    # -- main loop --------------------------------------------------------

    def observe(self, seg: ObservedSegment, t: float | None = None) -> DecisionEvent:
        e = self.score(seg.tensor)
        decision = classify(e, self.state)
        alarm_id = None
        if decision is Decision.FALL:
            alarm_id = self._open_alarm(seg, e, t if t is not None else seg.t_end)
        elif decision is Decision.SUSPICIOUS:
            update_stats(self.state, e)
            self.buffer.append((seg, self.latent_mean(seg.tensor), e))
            if len(self.buffer) >= SUSPICIOUS_CAPACITY:
                self.flush_buffer()
        else:
            update_stats(self.state, e)
            if self.config.retrain_on_normal:
                self._retrain(seg)
        event = DecisionEvent(
            t=float(t if t is not None else seg.t_end), segment_id=seg.segment_id,
            e=e, alpha=self.state.alpha, median=self.state.median,
            decision=decision, model_version=self.state.model_version,
            alarm_id=alarm_id)
        self.decision_log.append(event)
        return event

    # -- alarms and verdicts ------------------------------------------------

    def _open_alarm(self, seg: ObservedSegment, e: float, t: float) -> int:
        alarm_id = self._next_alarm
        self._next_alarm += 1
        rec = AlarmRecord(alarm_id=alarm_id, timestamp=float(t),
                          segment_id=seg.segment_id, error=e,
                          status=AlarmStatus.OPEN,
                          model_version=self.state.model_version)
        self.alarms[alarm_id] = rec
        self._alarm_payloads[alarm_id] = seg
        return alarm_id

    def apply_verdict(self, alarm_id: int, verdict: Verdict) -> AlarmRecord:
        rec = self.alarms.get(alarm_id)
        if rec is None:
            raise UnknownAlarm(f"no alarm {alarm_id}")
        if rec.status is not AlarmStatus.OPEN:
            raise AlarmClosed(f"alarm {alarm_id} already {rec.status.value}")
        if verdict is Verdict.TRUE_POSITIVE:
            rec.status = AlarmStatus.CONFIRMED_FALL
            self._alarm_payloads.pop(alarm_id, None)
        else:
            rec.status = AlarmStatus.FALSE_POSITIVE
            seg = self._alarm_payloads.pop(alarm_id, None)
            if seg is not None:
                self._retrain(seg)
        return rec

    # -- suspicious buffer ---------------------------------------------------

    def flush_buffer(self) -> ClusterReport:
        """PCA + mean-shift triage of the 50 buffered latents."""
        if not self.buffer:
            raise DetectorError("flush on empty buffer")
        latents = np.stack([mu for _, mu, _ in self.buffer])
        reduced = pca_reduce(latents, PCA_COMPONENTS)
        report = mean_shift(reduced)
        members = np.where(report.labels == report.largest_cluster_id)[0]
        centroid = report.centroids[report.largest_cluster_id]
        nearest = members[int(np.argmin(
            np.linalg.norm(reduced[members] - centroid, axis=1)))]
        seg = self.buffer[nearest][0]
        for cid in report.far_cluster_ids:
            for j in np.where(report.labels == cid)[0]:
                self.quarantine.append(self.buffer[j][0])
        self.buffer.clear()
        self.flush_reports.append(report)
        self._retrain(seg)
        return report

    # -- retraining -----------------------------------------------------------

    def _augmented_batch(self, seg: ObservedSegment, seed: int) -> list[np.ndarray]:
        if seg.dynamics is not None and seg.dynamics_fs:
            return augment_24x(seg.dynamics, fs=seg.dynamics_fs,
                               plan=self.augment_plan, seed=seed)
        return augment_24x_spectral(seg.tensor, plan=self.augment_plan, seed=seed)

    def _retrain(self, seg: ObservedSegment) -> None:
        if not self.config.retrain_enabled:
            return
        version = self.state.model_version
        seed = (self.config.seed * 0x9E3779B1 + version + 1) & 0x7FFFFFFF
        batch = self._augmented_batch(seg, seed)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x17]))
        params = self.params
        opt = AdamState(lr=self.config.retrain_lr)
        for _ in range(self.config.retrain_steps):
            params, _ = train_step(batch, params, self.net_config, opt, rng)
        # atomic swap: a fresh dict replaces the snapshot in one assignment
        self.params = params
        self.state.model_version = version + 1

    # -- reconstruction for restart -------------------------------------------

    def open_alarms(self) -> list[AlarmRecord]:
        return [a for a in self.alarms.values() if a.status is AlarmStatus.OPEN]
