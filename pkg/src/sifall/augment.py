"""24x training-data augmentation.

Per source clip: four white-noise levels applied to the dynamics series
S(t) before the STFT (adding noise there is equivalent to adding it in
the channel domain of the input tensor), crossed with six circular
horizontal shifts of the spectrogram (one zero shift plus five random
ones bounded by the STFT window length).  The first output is always the
untouched original's spectrogram.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicsSeries
from .spectral import STFT_HOP, STFT_WINDOW, SpectroSegment, stft_array

DEFAULT_NOISE_LEVELS = (math.inf, 20.0, 10.0, 5.0)
SHIFTS_PER_LEVEL = 6


@dataclass
class AugmentPlan:
    noise_snr_db_levels: tuple = DEFAULT_NOISE_LEVELS
    shifts_per_level: int = SHIFTS_PER_LEVEL
    max_shift_samples: int = STFT_WINDOW - 1

    def __post_init__(self):
        if self.max_shift_samples >= STFT_WINDOW:
            raise ValueError("shift must stay below the STFT window length")
        if len(self.noise_snr_db_levels) * self.shifts_per_level != 24:
            raise ValueError("plan must multiply out to 24 variants")

    @property
    def factor(self) -> int:
        return len(self.noise_snr_db_levels) * self.shifts_per_level

    @property
    def max_shift_bins(self) -> int:
        return self.max_shift_samples // STFT_HOP


def add_noise_to_dynamics(values: np.ndarray, snr_db: float,
                          rng: np.random.Generator) -> np.ndarray:
    """White Gaussian noise at snr_db relative to the clip's variance.

    snr_db = inf returns the input bit-identical.
    """
    values = np.asarray(values, dtype=float)
    if math.isinf(snr_db):
        return values
    signal_power = float(values.var())
    if signal_power == 0.0:
        signal_power = 1e-12
    noise_power = signal_power / (10.0 ** (snr_db / 10.0))
    return values + rng.normal(0.0, math.sqrt(noise_power), values.shape)


def horizontal_shift(seg: SpectroSegment | np.ndarray, offset_bins: int,
                     hop: int = STFT_HOP) -> SpectroSegment | np.ndarray:
    """Circular shift along the time axis; shape and energy preserved."""
    if abs(offset_bins) * hop >= STFT_WINDOW:
        raise ValueError(
            f"shift of {offset_bins} bins ({abs(offset_bins) * hop} samples) "
            f"reaches the {STFT_WINDOW}-sample STFT window")
    if isinstance(seg, SpectroSegment):
        return SpectroSegment(
            tensor=np.roll(seg.tensor, offset_bins, axis=1),
            hop_s=seg.hop_s, freq_res_hz=seg.freq_res_hz,
            t_start=seg.t_start, t_end=seg.t_end,
            source_trace=seg.source_trace,
            valid_time_bins=seg.n_time,
            dynamics=seg.dynamics, dynamics_fs=seg.dynamics_fs)
    return np.roll(np.asarray(seg), offset_bins, axis=1)


def augment_24x(clip: DynamicsSeries | np.ndarray, fs: float | None = None,
                plan: AugmentPlan | None = None, seed: int = 0) -> list[np.ndarray]:
    """Exactly 24 spectrogram tensors from one dynamics clip.

    Deterministic under seed; element [0] is the plain STFT of the clip.
    """
    plan = plan or AugmentPlan()
    if isinstance(clip, DynamicsSeries):
        values, fs = clip.values, clip.fs
    else:
        values = np.asarray(clip, dtype=float)
        if fs is None:
            raise ValueError("fs required when passing a bare array")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA6]))
    out: list[np.ndarray] = []
    max_bins = max(1, plan.max_shift_bins)
    for snr_db in plan.noise_snr_db_levels:
        noisy = add_noise_to_dynamics(values, snr_db, rng)
        base = stft_array(noisy, fs, detrend=True)
        shifts = [0] + list(_nonzero_shifts(rng, plan.shifts_per_level - 1, max_bins))
        for off in shifts:
            out.append(np.roll(base, off, axis=1) if off else base.copy())
    return out


def augment_24x_spectral(tensor: np.ndarray, plan: AugmentPlan | None = None,
                         seed: int = 0) -> list[np.ndarray]:
    """Tensor-only fallback when the source dynamics are unavailable: noise
    goes directly into the spectrogram channels at the same SNR ladder."""
    plan = plan or AugmentPlan()
    tensor = np.asarray(tensor, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA7]))
    out: list[np.ndarray] = []
    power = float((tensor ** 2).mean())
    max_bins = max(1, plan.max_shift_bins)
    for snr_db in plan.noise_snr_db_levels:
        if math.isinf(snr_db):
            noisy = tensor
        else:
            sigma = math.sqrt(power / (10.0 ** (snr_db / 10.0)))
            noisy = np.abs(tensor + rng.normal(0.0, sigma, tensor.shape))
        shifts = [0] + list(_nonzero_shifts(rng, plan.shifts_per_level - 1, max_bins))
        for off in shifts:
            out.append(np.roll(noisy, off, axis=1) if off else noisy.copy())
    return out


def _nonzero_shifts(rng: np.random.Generator, count: int, max_bins: int):
    choices = np.concatenate([np.arange(-max_bins, 0), np.arange(1, max_bins + 1)])
    return rng.choice(choices, size=count, replace=True)
