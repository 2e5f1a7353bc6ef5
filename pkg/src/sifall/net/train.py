"""Adam training loop pieces for the autoencoder.

Parameters are treated as a value: train_step consumes a params dict and
returns a fresh one, so inference threads can keep reading an immutable
snapshot while a retrain produces the next version.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import FallNetConfig, LossReport, loss_and_grads, pad_time


class TrainingAborted(RuntimeError):
    """Raised when a step produces non-finite gradients."""


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def stack_batch(batch: list, config: FallNetConfig):
    """Pad a list of (F, T, C) tensors to a common multiple-of-2^blocks T
    and stack; returns (x, valid_t per sample)."""
    mult = config.time_multiple
    ts = [b.shape[1] for b in batch]
    target = max(mult, ((max(ts) + mult - 1) // mult) * mult)
    x = np.zeros((len(batch), config.freq_bins, target, config.in_channels),
                 dtype=config.dtype)
    for k, item in enumerate(batch):
        x[k, :, :item.shape[1], :] = item
    return x, np.asarray(ts)


def train_step(batch: list, params: dict, config: FallNetConfig,
               opt: AdamState, rng: np.random.Generator):
    """One full forward/backward/Adam update on a batch of segments.

    Sampling noise eps is drawn per call from the supplied generator, the
    only stochastic input.  Returns (new params, LossReport).
    """
    if len(batch) < 1:
        raise ValueError("batch must contain at least one segment")
    x, valid_t = stack_batch([np.asarray(b, dtype=config.dtype) for b in batch], config)
    noise = rng.standard_normal((x.shape[0], config.latent_dim)).astype(config.dtype)
    report, grads = loss_and_grads(x, params, config, noise, valid_t)

    for g in grads.values():
        if not np.all(np.isfinite(g)):
            raise TrainingAborted("non-finite gradient; step aborted")

    opt.step += 1
    t = opt.step
    new_params = {}
    for name, value in params.items():
        g = grads[name]
        m = opt.m.get(name)
        v = opt.v.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = opt.beta1 * m + (1 - opt.beta1) * g
        v = opt.beta2 * v + (1 - opt.beta2) * (g * g)
        opt.m[name] = m
        opt.v[name] = v
        m_hat = m / (1 - opt.beta1 ** t)
        v_hat = v / (1 - opt.beta2 ** t)
        new_params[name] = value - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return new_params, report


def train_epochs(batches: list, params: dict, config: FallNetConfig,
                 opt: AdamState, rng: np.random.Generator,
                 epochs: int = 1, shuffle: bool = True):
    """Convenience loop over pre-built batches; returns (params, last report)."""
    report = None
    order = np.arange(len(batches))
    for _ in range(epochs):
        if shuffle:
            rng.shuffle(order)
        for j in order:
            params, report = train_step(batches[j], params, config, opt, rng)
    return params, report


def numeric_gradient(f, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function over one tensor."""
    g = np.zeros_like(theta, dtype=float)
    it = np.nditer(theta, flags=["multi_index"])
    while not it.finished:
        ix = it.multi_index
        orig = theta[ix]
        theta[ix] = orig + h
        fp = f()
        theta[ix] = orig - h
        fm = f()
        theta[ix] = orig
        g[ix] = (fp - fm) / (2 * h)
        it.iternext()
    return g
