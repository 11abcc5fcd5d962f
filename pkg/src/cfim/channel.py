"""Flat Rayleigh fading plus AWGN on spread frames.

One fading coefficient ``h ~ CN(0, 1)`` per (block, subcarrier), held over
the ``L`` chips of a symbol.  Noise is drawn independently per chip with
variance ``N0/2`` per real dimension.

Seeds are derived with :func:`derive_seed` so that trial ``t`` of a run
seeded with ``master`` always sees the same random stream, whatever order
or worker the trial runs on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import EnergyBudget
from .errors import FramingError


def derive_seed(master: int, *keys: int) -> np.random.SeedSequence:
    """Counter-based child seed: ``mix(master, keys...)``."""
    return np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in keys))


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return np.sqrt(variance / 2.0) * (re + 1j * im)


@dataclass(frozen=True)
class ReceivedFrame:
    """Received chips plus the fading the receiver is assumed to know.

    ``h`` has shape ``samples.shape[:-1]`` for single-user and downlink
    frames and ``(U,) + samples.shape[:-1]`` for uplink frames.
    """

    samples: np.ndarray
    h: np.ndarray


def _noise(rng, shape, n0):
    z = complex_normal(rng, shape, 1.0)
    return np.sqrt(n0) * z


def apply(frame, energy: EnergyBudget, seed) -> ReceivedFrame:
    """``Y = h X + Z`` for a frame of shape ``(..., N, L)``."""
    frame = np.asarray(frame)
    rng = as_generator(seed)
    h = complex_normal(rng, frame.shape[:-1])
    z = _noise(rng, frame.shape, energy.n0)
    return ReceivedFrame(h[..., None] * frame + z, h)


def _stack(frames):
    frames = [np.asarray(f) for f in frames]
    if not frames:
        raise FramingError("no user frames given")
    shape = frames[0].shape
    for u, f in enumerate(frames):
        if f.shape != shape:
            raise FramingError(f"user {u} frame has shape {f.shape}, expected {shape}")
    return np.stack(frames)


def apply_multiuser_downlink(frames, energy: EnergyBudget, seed) -> ReceivedFrame:
    """Superpose user frames, then one fading field and one noise field."""
    stacked = _stack(frames)
    rng = as_generator(seed)
    h = complex_normal(rng, stacked.shape[1:-1])
    z = _noise(rng, stacked.shape[1:], energy.n0)
    return ReceivedFrame(h[..., None] * stacked.sum(axis=0) + z, h)


def apply_multiuser_uplink(frames, energy: EnergyBudget, seed) -> ReceivedFrame:
    """Each user's frame passes through its own fading before superposition."""
    stacked = _stack(frames)
    rng = as_generator(seed)
    h = complex_normal(rng, stacked.shape[:-1])
    z = _noise(rng, stacked.shape[1:], energy.n0)
    return ReceivedFrame((h[..., None] * stacked).sum(axis=0) + z, h)
