"""Seeded synthetic WiFi CSI generator.

Emits complex channel traces H(f, t) = (H_s + H_d(t)) * eps1(t) *
exp(i*(eps2(f,t) + eps3(t) + eps4)) + noise, where H_s is a static
frequency-selective multipath channel and H_d is the moving-body
reflection.  Human motion is modeled as one dominant Doppler reflector
per event (optionally with a weaker limb harmonic), which is enough to
drive every downstream stage without radio hardware.

Everything is deterministic given (scenario, seed): the same scenario
produces bit-identical traces.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_SAMPLE_RATE_HZ = 200.0
DEFAULT_SUBCARRIERS = 56
DEFAULT_STREAMS = 3
# 2.4 GHz band
DEFAULT_WAVELENGTH_M = 0.125
SUBCARRIER_SPACING_HZ = 312.5e3

FALL_KINDS = frozenset({"walk_fall", "stop_fall", "slow_fall"})
DAILY_KINDS = frozenset({"walk", "sit", "jump", "squat", "bow", "swing", "custom"})


class SimulationError(ValueError):
    """Raised for invalid scenarios or distortion parameters."""


# ---------------------------------------------------------------------------
# Doppler profiles
#
# Each profile maps time-since-event-start to an instantaneous Doppler
# frequency f_D(t) in Hz and provides the analytic phase integral
# \int_0^t f_D so the reflector phase is exact (no numeric quadrature).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantTone:
    """Fixed Doppler frequency (constant radial speed)."""

    hz: float

    def freq(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.hz)

    def phase_integral(self, t):
        return self.hz * np.asarray(t, dtype=float)

    def max_slope_hz_s(self) -> float:
        return 0.0

    def peak_hz(self) -> float:
        return abs(self.hz)

    def to_json(self):
        return {"type": "constant", "hz": self.hz}


@dataclass(frozen=True)
class LinearChirp:
    """f_D(t) = f0 + rate * t."""

    rate_hz_s: float
    f0_hz: float = 0.0

    def freq(self, t):
        t = np.asarray(t, dtype=float)
        return self.f0_hz + self.rate_hz_s * t

    def phase_integral(self, t):
        t = np.asarray(t, dtype=float)
        return self.f0_hz * t + 0.5 * self.rate_hz_s * t * t

    def max_slope_hz_s(self) -> float:
        return abs(self.rate_hz_s)

    def peak_hz(self) -> float:
        # only meaningful together with an event duration; callers clamp
        return abs(self.f0_hz)

    def to_json(self):
        return {"type": "chirp", "rate_hz_s": self.rate_hz_s, "f0_hz": self.f0_hz}


@dataclass(frozen=True)
class RampPlateau:
    """Piecewise fall profile: optional slow lead-in, a fast ramp up to
    peak speed, then a short plateau at peak until the event (impact) ends.

    The fast ramp carries the fall's acceleration signature; the plateau is
    the near-constant terminal speed right before impact.
    """

    peak_hz: float
    rise_s: float
    lead_hz: float = 0.0
    lead_s: float = 0.0

    def freq(self, t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        in_lead = t < self.lead_s
        ramp_end = self.lead_s + self.rise_s
        in_rise = (t >= self.lead_s) & (t < ramp_end)
        lead_slope = self.lead_hz / self.lead_s if self.lead_s > 0 else 0.0
        out[in_lead] = lead_slope * t[in_lead]
        rise_slope = (self.peak_hz - self.lead_hz) / self.rise_s
        out[in_rise] = self.lead_hz + rise_slope * (t[in_rise] - self.lead_s)
        out[t >= ramp_end] = self.peak_hz
        return out

    def phase_integral(self, t):
        t = np.asarray(t, dtype=float)
        lead_slope = self.lead_hz / self.lead_s if self.lead_s > 0 else 0.0
        rise_slope = (self.peak_hz - self.lead_hz) / self.rise_s
        ramp_end = self.lead_s + self.rise_s
        tl = np.clip(t, 0.0, self.lead_s)
        tr = np.clip(t - self.lead_s, 0.0, self.rise_s)
        tp = np.clip(t - ramp_end, 0.0, None)
        out = 0.5 * lead_slope * tl * tl
        out = out + self.lead_hz * tr + 0.5 * rise_slope * tr * tr
        out = out + self.peak_hz * tp
        return out

    def max_slope_hz_s(self) -> float:
        return abs(self.peak_hz - self.lead_hz) / self.rise_s

    def to_json(self):
        return {
            "type": "ramp_plateau",
            "peak_hz": self.peak_hz,
            "rise_s": self.rise_s,
            "lead_hz": self.lead_hz,
            "lead_s": self.lead_s,
        }


@dataclass(frozen=True)
class GaitOscillation:
    """Walking-style profile oscillating between floor_hz and peak_hz at the
    gait cadence.  The torso never fully stops mid-stride, hence the floor.

    max |df/dt| = pi * step_hz * (peak_hz - floor_hz).
    """

    peak_hz: float
    step_hz: float
    floor_hz: float = 0.0

    def freq(self, t):
        t = np.asarray(t, dtype=float)
        swing = (self.peak_hz - self.floor_hz) * 0.5
        return self.floor_hz + swing * (1.0 - np.cos(2.0 * math.pi * self.step_hz * t))

    def phase_integral(self, t):
        t = np.asarray(t, dtype=float)
        w = 2.0 * math.pi * self.step_hz
        swing = (self.peak_hz - self.floor_hz) * 0.5
        return self.floor_hz * t + swing * (t - np.sin(w * t) / w)

    def max_slope_hz_s(self) -> float:
        return math.pi * self.step_hz * (self.peak_hz - self.floor_hz)

    def to_json(self):
        return {"type": "gait", "peak_hz": self.peak_hz, "step_hz": self.step_hz,
                "floor_hz": self.floor_hz}


@dataclass(frozen=True)
class SineBurst:
    """Half-sine speed bump (jump/squat style): f_D = peak * sin(pi*t/dur)."""

    peak_hz: float
    duration_s: float

    def freq(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.duration_s)
        return np.where(inside, self.peak_hz * np.sin(math.pi * t / self.duration_s), 0.0)

    def phase_integral(self, t):
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, 0.0, self.duration_s)
        w = math.pi / self.duration_s
        return self.peak_hz / w * (1.0 - np.cos(w * tc))

    def max_slope_hz_s(self) -> float:
        return self.peak_hz * math.pi / self.duration_s

    def to_json(self):
        return {"type": "sine_burst", "peak_hz": self.peak_hz, "duration_s": self.duration_s}


_PROFILE_TYPES = {
    "constant": ConstantTone,
    "chirp": LinearChirp,
    "ramp_plateau": RampPlateau,
    "gait": GaitOscillation,
    "sine_burst": SineBurst,
}


def profile_from_json(d: dict):
    kind = d.get("type")
    if kind not in _PROFILE_TYPES:
        raise SimulationError(f"unknown doppler profile type: {kind!r}")
    kwargs = {k: v for k, v in d.items() if k != "type"}
    return _PROFILE_TYPES[kind](**kwargs)


# ---------------------------------------------------------------------------
# Events and scenarios
# ---------------------------------------------------------------------------


@dataclass
class MotionEvent:
    """One moving-body reflection in the scene.

    `profile` maps time-since-start to Doppler frequency; `harmonic_gain`
    adds a weaker reflector at `harmonic_ratio` * f_D (slower body parts).
    """

    kind: str
    start_s: float
    end_s: float
    profile: object
    reflect_gain: float = 0.25
    ends_in_pause: bool = True
    stream_phases: tuple = ()
    harmonic_gain: float = 0.0
    harmonic_ratio: float = 0.45

    def __post_init__(self):
        if self.end_s <= self.start_s:
            raise SimulationError("event must have end_s > start_s")

    @property
    def is_fall(self) -> bool:
        return self.kind in FALL_KINDS

    def stream_phase(self, c: int) -> float:
        if not self.stream_phases:
            return 0.0
        return self.stream_phases[c % len(self.stream_phases)]

    def to_json(self):
        return {
            "kind": self.kind,
            "start_s": self.start_s,
            "end_s": self.end_s,
            "profile": self.profile.to_json(),
            "reflect_gain": self.reflect_gain,
            "ends_in_pause": self.ends_in_pause,
            "stream_phases": list(self.stream_phases),
            "harmonic_gain": self.harmonic_gain,
            "harmonic_ratio": self.harmonic_ratio,
        }

    @staticmethod
    def from_json(d: dict) -> "MotionEvent":
        return MotionEvent(
            kind=d["kind"],
            start_s=d["start_s"],
            end_s=d["end_s"],
            profile=profile_from_json(d["profile"]),
            reflect_gain=d.get("reflect_gain", 0.25),
            ends_in_pause=d.get("ends_in_pause", True),
            stream_phases=tuple(d.get("stream_phases", ())),
            harmonic_gain=d.get("harmonic_gain", 0.0),
            harmonic_ratio=d.get("harmonic_ratio", 0.45),
        )


@dataclass
class GroundTruthEvent:
    """What actually happened, for scoring (stands in for camera truth)."""

    kind: str
    start_s: float
    end_s: float
    is_fall: bool

    def to_json(self):
        return {"kind": self.kind, "start": self.start_s, "end": self.end_s,
                "is_fall": self.is_fall}

    @staticmethod
    def from_json(d: dict) -> "GroundTruthEvent":
        return GroundTruthEvent(d["kind"], d["start"], d["end"], d["is_fall"])


@dataclass
class ChannelScenario:
    """Full description of a synthetic capture.

    static_paths: (P, M, C) complex stack of static multipath components,
    summed to form H_s.  The seed fully determines the emitted trace.
    """

    duration_s: float
    static_paths: np.ndarray
    events: list = field(default_factory=list)
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    seed: int = 0
    noise_snr_db: float | None = 30.0

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise SimulationError("sample_rate_hz must be positive")
        paths = np.asarray(self.static_paths, dtype=np.complex128)
        if paths.size == 0:
            raise SimulationError(
                "scenario needs at least one static path (conjugate-product "
                "denoising is meaningless without a static component)")
        if paths.ndim == 2:
            paths = paths[None, :, :]
        if paths.ndim != 3:
            raise SimulationError("static_paths must be (P, M, C)")
        self.static_paths = paths
        nyquist = self.sample_rate_hz / 2.0
        for ev in self.events:
            peak = float(np.max(np.abs(ev.profile.freq(
                np.linspace(0.0, ev.end_s - ev.start_s, 64)))))
            if peak >= nyquist:
                raise SimulationError(
                    f"event {ev.kind} doppler {peak:.1f} Hz aliases at fs={self.sample_rate_hz}")

    @property
    def n_subcarriers(self) -> int:
        return self.static_paths.shape[1]

    @property
    def n_streams(self) -> int:
        return self.static_paths.shape[2]

    def static_channel(self) -> np.ndarray:
        """H_s as an (M, C) complex matrix."""
        return self.static_paths.sum(axis=0)


# ---------------------------------------------------------------------------
# Hardware distortion model
# ---------------------------------------------------------------------------


@dataclass
class CsiModelParams:
    """Receiver-chain distortions applied on top of the clean channel.

    eps1: t -> positive AGC gain; eps2_slope: t -> linear phase slope in
    rad/subcarrier (PDD/SFO/STO combined, identical across streams);
    eps3: t -> common phase in rad (CFO); eps4: constant initial phase.
    """

    eps1: Callable[[np.ndarray], np.ndarray]
    eps2_slope: Callable[[np.ndarray], np.ndarray]
    eps3: Callable[[np.ndarray], np.ndarray]
    eps4: float = 0.0
    noise_snr_db: float | None = None

    @staticmethod
    def identity() -> "CsiModelParams":
        one = lambda t: np.ones_like(np.asarray(t, dtype=float))
        zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))
        return CsiModelParams(eps1=one, eps2_slope=zero, eps3=zero, eps4=0.0)


def _piecewise_constant(rng: np.random.Generator, duration_s: float,
                        low: float, high: float,
                        min_hold_s: float, max_hold_s: float):
    """Random piecewise-constant function over [0, duration]."""
    times = [0.0]
    while times[-1] < duration_s:
        times.append(times[-1] + rng.uniform(min_hold_s, max_hold_s))
    knots = np.asarray(times)
    values = rng.uniform(low, high, size=len(knots))

    def f(t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, len(values) - 1)
        return values[idx]

    return f


def _random_walk(rng: np.random.Generator, duration_s: float,
                 grid_hz: float, step_sigma: float):
    """Random walk sampled on a fixed grid, piecewise-linear in between."""
    n = max(2, int(math.ceil(duration_s * grid_hz)) + 1)
    grid_t = np.arange(n) / grid_hz
    walk = np.concatenate([[0.0], np.cumsum(rng.normal(0.0, step_sigma, size=n - 1))])

    def f(t):
        t = np.asarray(t, dtype=float)
        return np.interp(t, grid_t, walk)

    return f


def make_distortion_model(seed: int, duration_s: float,
                          noise_snr_db: float | None = 30.0) -> CsiModelParams:
    """AGC-like gain steps, slowly wandering phase slope, CFO random walk."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5D]))
    eps1 = _piecewise_constant(rng, duration_s, 0.5, 2.0, 0.05, 0.2)
    eps2 = _random_walk(rng, duration_s, grid_hz=20.0, step_sigma=0.01)
    eps3 = _random_walk(rng, duration_s, grid_hz=200.0, step_sigma=0.05)
    eps4 = float(rng.uniform(0.0, 2.0 * math.pi))
    return CsiModelParams(eps1=eps1, eps2_slope=eps2, eps3=eps3, eps4=eps4,
                          noise_snr_db=noise_snr_db)


# ---------------------------------------------------------------------------
# Frames and traces
# ---------------------------------------------------------------------------


@dataclass
class CsiFrame:
    """One packet's channel estimate: (M, C) complex matrix."""

    timestamp: float
    seq: int
    h: np.ndarray


class CsiTrace:
    """A captured sequence of CsiFrames backed by dense arrays."""

    def __init__(self, timestamps: np.ndarray, h: np.ndarray,
                 seq: np.ndarray | None = None, trace_id: str = "trace"):
        self.timestamps = np.asarray(timestamps, dtype=float)
        self.h = np.asarray(h, dtype=np.complex128)
        if self.h.ndim != 3 or len(self.timestamps) != self.h.shape[0]:
            raise SimulationError("trace h must be (N, M, C) matching timestamps")
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise SimulationError("timestamps must be strictly increasing")
        self.seq = (np.arange(len(self.timestamps), dtype=np.uint64)
                    if seq is None else np.asarray(seq, dtype=np.uint64))
        self.trace_id = trace_id

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, i: int) -> CsiFrame:
        return CsiFrame(float(self.timestamps[i]), int(self.seq[i]), self.h[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def sample_rate_hz(self) -> float:
        if len(self.timestamps) < 2:
            return DEFAULT_SAMPLE_RATE_HZ
        return 1.0 / float(np.median(np.diff(self.timestamps)))


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------


def synth_dynamic_component(event: MotionEvent, t, f: int = 0, c: int = 0):
    """Moving-body channel component H_d(f, t) for one stream.

    reflect_gain * exp(i*(2*pi*\int_0^{t-start} f_D + stream phase)) inside
    the event window, exactly zero outside.  The subcarrier index is part
    of the interface but the reflector is modeled flat across frequency.
    """
    del f
    t_arr = np.asarray(t, dtype=float)
    rel = t_arr - event.start_s
    inside = (t_arr >= event.start_s) & (t_arr <= event.end_s)
    rel_c = np.clip(rel, 0.0, event.end_s - event.start_s)
    phase = 2.0 * math.pi * event.profile.phase_integral(rel_c) + event.stream_phase(c)
    h = event.reflect_gain * np.exp(1j * phase)
    if event.harmonic_gain > 0.0:
        h = h + event.harmonic_gain * np.exp(
            1j * (2.0 * math.pi * event.harmonic_ratio * event.profile.phase_integral(rel_c)
                  + event.stream_phase(c) + 1.1))
    out = np.where(inside, h, 0.0 + 0.0j)
    if np.isscalar(t) or t_arr.ndim == 0:
        return complex(out)
    return out


def apply_hardware_distortion(h_clean: np.ndarray, params: CsiModelParams,
                              t: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Distort a clean (M, C) channel matrix at time t per the CSI model."""
    h_clean = np.asarray(h_clean, dtype=np.complex128)
    if not np.all(np.isfinite(h_clean.view(float))):
        raise SimulationError("h_clean must be finite")
    m = h_clean.shape[0]
    e1 = float(np.asarray(params.eps1(t)))
    if e1 <= 0:
        raise SimulationError("eps1 must be positive")
    slope = float(np.asarray(params.eps2_slope(t)))
    e3 = float(np.asarray(params.eps3(t)))
    phase = slope * np.arange(m)[:, None] + e3 + params.eps4
    out = h_clean * e1 * np.exp(1j * phase)
    if params.noise_snr_db is not None and rng is not None and np.isfinite(params.noise_snr_db):
        # noise tracks the AGC-scaled signal so the per-frame SNR is the
        # configured value regardless of the instantaneous gain step
        p_sig = float(np.mean(np.abs(h_clean) ** 2)) * e1 * e1
        sigma2 = p_sig / (10.0 ** (params.noise_snr_db / 10.0))
        scale = math.sqrt(sigma2 / 2.0)
        out = out + (rng.normal(0.0, scale, out.shape)
                     + 1j * rng.normal(0.0, scale, out.shape))
    return out


def generate_trace(scenario: ChannelScenario,
                   params: CsiModelParams | None = None,
                   trace_id: str = "trace"):
    """Render a scenario to (CsiTrace, list[GroundTruthEvent]).

    Deterministic given scenario.seed.  Frame count is
    round(duration * fs); noise and distortions come from child seeds of
    the scenario seed so adding events never reshuffles the noise.
    """
    fs = scenario.sample_rate_hz
    n = int(round(scenario.duration_s * fs))
    t = np.arange(n) / fs
    m, c = scenario.n_subcarriers, scenario.n_streams

    if params is None:
        params = make_distortion_model(scenario.seed, scenario.duration_s,
                                       scenario.noise_snr_db)

    h = np.empty((n, m, c), dtype=np.complex128)
    h[:] = scenario.static_channel()[None, :, :]
    for ev in scenario.events:
        for ci in range(c):
            comp = synth_dynamic_component(ev, t, 0, ci)
            h[:, :, ci] += comp[:, None]

    e1 = np.asarray(params.eps1(t), dtype=float)
    if np.any(e1 <= 0):
        raise SimulationError("eps1 must be positive over the whole trace")
    slope = np.asarray(params.eps2_slope(t), dtype=float)
    e3 = np.asarray(params.eps3(t), dtype=float)
    phase = slope[:, None] * np.arange(m)[None, :] + e3[:, None] + params.eps4
    h *= (e1[:, None] * np.exp(1j * phase))[:, :, None]

    if params.noise_snr_db is not None and np.isfinite(params.noise_snr_db):
        rng = np.random.default_rng(np.random.SeedSequence([scenario.seed, 0x7E]))
        p_sig = float(np.mean(np.abs(scenario.static_channel()) ** 2))
        sigma2 = p_sig / (10.0 ** (params.noise_snr_db / 10.0))
        scale = np.sqrt(sigma2 / 2.0) * e1[:, None, None]
        h += scale * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape))

    truth = [GroundTruthEvent(ev.kind, ev.start_s, ev.end_s, ev.is_fall)
             for ev in scenario.events]
    return CsiTrace(t, h, trace_id=trace_id), truth


# ---------------------------------------------------------------------------
# Factories
# ---------------------------------------------------------------------------


def make_static_paths(rng: np.random.Generator, n_subcarriers: int = DEFAULT_SUBCARRIERS,
                      n_streams: int = DEFAULT_STREAMS, n_paths: int = 5) -> np.ndarray:
    """Frequency-selective static channel: a few delayed multipath rays.

    Frequency selectivity matters: a flat H_s would make the amplitude
    shape insensitive to motion and the dynamics series would never move.
    """
    k = np.arange(n_subcarriers)
    paths = np.empty((n_paths, n_subcarriers, n_streams), dtype=np.complex128)
    for p in range(n_paths):
        delay_s = rng.uniform(10e-9, 120e-9) if p else rng.uniform(5e-9, 30e-9)
        gain = (0.9 if p == 0 else rng.uniform(0.15, 0.5)) * rng.uniform(0.8, 1.2)
        for s in range(n_streams):
            phi = rng.uniform(0.0, 2.0 * math.pi)
            paths[p, :, s] = gain * np.exp(
                -1j * (2.0 * math.pi * k * SUBCARRIER_SPACING_HZ * delay_s + phi))
    return paths


def _stream_phases(rng: np.random.Generator, n_streams: int = DEFAULT_STREAMS) -> tuple:
    return tuple(rng.uniform(0.0, 2.0 * math.pi, size=n_streams))


def make_fall_event(rng: np.random.Generator, start_s: float,
                    kind: str = "stop_fall") -> MotionEvent:
    """Fall: fast ramp to a high terminal speed, brief plateau, abrupt stop.

    Peak lambda*|df_D/dt| is drawn from [3, 8] m/s^2 and the terminal
    Doppler sits well above what walking can reach.
    """
    accel = rng.uniform(3.0, 8.0)                      # m/s^2
    rate = accel / DEFAULT_WAVELENGTH_M                # Hz/s, in [24, 64]
    peak = rng.uniform(16.0, max(16.5, min(42.0, 0.62 * rate)))
    rise = peak / rate
    plateau = min(rng.uniform(0.12, 0.2), max(0.08, 0.8 - rise))
    lead_s = 0.0
    lead_hz = 0.0
    if kind == "slow_fall":
        # dizziness-style: slow descent first, then the terminal collapse
        lead_s = rng.uniform(0.5, 0.9)
        lead_hz = rng.uniform(4.0, 7.0)
    dur = lead_s + rise + plateau
    return MotionEvent(
        kind=kind, start_s=start_s, end_s=start_s + dur,
        profile=RampPlateau(peak_hz=peak, rise_s=rise, lead_hz=lead_hz, lead_s=lead_s),
        reflect_gain=rng.uniform(0.22, 0.4), ends_in_pause=True,
        stream_phases=_stream_phases(rng),
        harmonic_gain=rng.uniform(0.05, 0.12))


def make_daily_event(rng: np.random.Generator, start_s: float, kind: str,
                     vigorous: bool = True) -> MotionEvent:
    """Fall-like daily activity (sit/jump/squat/bow/swing) ending in a pause.

    `vigorous=True` keeps the peak Doppler above the fall-like screen so the
    activity is segmented (the network, not the front-end, tells it apart).
    """
    if kind == "walk":
        return make_walk_event(rng, start_s, rng.uniform(2.0, 6.0))
    if kind == "swing":
        # arm/torso swing cut off mid-stroke: the limb stops while still fast
        full = rng.uniform(0.9, 1.6)
        peak = rng.uniform(18.0, 26.0) if vigorous else rng.uniform(8.0, 12.0)
        profile = SineBurst(peak_hz=peak, duration_s=full)
        dur = full * rng.uniform(0.55, 0.75)
    elif kind == "jump":
        # landing truncates the arc: impact happens at substantial speed
        full = rng.uniform(0.5, 0.75)
        peak = rng.uniform(20.0, 30.0) if vigorous else rng.uniform(10.0, 14.0)
        profile = SineBurst(peak_hz=peak, duration_s=full)
        dur = full * rng.uniform(0.55, 0.75)
    else:  # sit / squat / bow: ramp down into the seat and stop
        peak = rng.uniform(18.0, 26.0) if vigorous else rng.uniform(8.0, 12.0)
        rise = rng.uniform(0.45, 0.8)
        plateau = rng.uniform(0.15, 0.25)
        dur = rise + plateau
        profile = RampPlateau(peak_hz=peak, rise_s=rise)
    return MotionEvent(
        kind=kind, start_s=start_s, end_s=start_s + dur, profile=profile,
        reflect_gain=rng.uniform(0.2, 0.38), ends_in_pause=True,
        stream_phases=_stream_phases(rng),
        harmonic_gain=rng.uniform(0.04, 0.1))


def make_walk_event(rng: np.random.Generator, start_s: float,
                    duration_s: float) -> MotionEvent:
    """Ordinary walking: low Doppler, gentle slope, no fall-like signature.

    Bounds keep lambda * max|df/dt| <= 2.5 m/s^2 (pi * step * swing * lambda
    tops out around 2.1 here) and the reflection weak enough that gait
    harmonics in S(t) stay under the spectral noise floor.
    """
    floor = rng.uniform(0.8, 1.4)
    peak = floor + rng.uniform(3.2, 4.8)
    step = rng.uniform(0.8, 1.05)
    return MotionEvent(
        kind="walk", start_s=start_s, end_s=start_s + duration_s,
        profile=GaitOscillation(peak_hz=peak, step_hz=step, floor_hz=floor),
        reflect_gain=rng.uniform(0.1, 0.16), ends_in_pause=False,
        stream_phases=_stream_phases(rng),
        harmonic_gain=rng.uniform(0.02, 0.05))


def make_scenario(duration_s: float, events: Sequence[MotionEvent], seed: int,
                  noise_snr_db: float | None = 30.0,
                  n_subcarriers: int = DEFAULT_SUBCARRIERS,
                  n_streams: int = DEFAULT_STREAMS) -> ChannelScenario:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1C]))
    paths = make_static_paths(rng, n_subcarriers, n_streams)
    return ChannelScenario(duration_s=duration_s, static_paths=paths,
                           events=list(events), seed=seed,
                           noise_snr_db=noise_snr_db)


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------


def scenario_to_json(scenario: ChannelScenario) -> dict:
    return {
        "duration_s": scenario.duration_s,
        "sample_rate_hz": scenario.sample_rate_hz,
        "seed": scenario.seed,
        "noise_snr_db": scenario.noise_snr_db,
        "n_subcarriers": scenario.n_subcarriers,
        "n_streams": scenario.n_streams,
        "static_paths": "seeded",
        "events": [ev.to_json() for ev in scenario.events],
    }


def scenario_from_json(d: dict) -> ChannelScenario:
    events = [MotionEvent.from_json(e) for e in d.get("events", [])]
    seed = int(d.get("seed", 0))
    if d.get("static_paths", "seeded") == "seeded":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1C]))
        paths = make_static_paths(rng, int(d.get("n_subcarriers", DEFAULT_SUBCARRIERS)),
                                  int(d.get("n_streams", DEFAULT_STREAMS)))
    else:
        raw = np.asarray(d["static_paths"], dtype=float)
        paths = raw[..., 0] + 1j * raw[..., 1]
    noise = d.get("noise_snr_db", 30.0)
    return ChannelScenario(duration_s=float(d["duration_s"]), static_paths=paths,
                           events=events,
                           sample_rate_hz=float(d.get("sample_rate_hz", DEFAULT_SAMPLE_RATE_HZ)),
                           seed=seed, noise_snr_db=noise)


def load_scenario(path: str) -> ChannelScenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_json(json.load(fh))
