"""Detection chain: channel loss, Poisson background, 50/50 split, dead time."""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .core import PulseProfile


@dataclass(frozen=True)
class ChannelModel:
    efficiency: float
    background: float = 0.0
    dead_time: float = 0.0
    split_ratio: float = 0.5
    # Accepted for completeness; afterpulsing is not modeled.
    afterpulsing: bool = False

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if self.background < 0:
            raise ValueError(f"background must be >= 0, got {self.background}")
        if self.dead_time < 0:
            raise ValueError(f"dead_time must be >= 0, got {self.dead_time}")
        if self.split_ratio != 0.5:
            raise ValueError("split_ratio is fixed at 0.5")


def thin(counts: np.ndarray, keep: float, rng: np.random.Generator) -> np.ndarray:
    """Independent per-excitation survival with probability ``keep``.

    One uniform is drawn per excitation, so calls sharing an rng state are
    coupled: a larger ``keep`` never yields fewer survivors.
    """
    counts = np.asarray(counts, dtype=np.int64)
    owner = np.repeat(np.arange(counts.size), counts)
    alive = rng.random(owner.size) < keep
    return np.bincount(owner[alive], minlength=counts.size)


def detect_many(
    n_true: np.ndarray,
    channel: ChannelModel,
    rng: np.random.Generator,
    pulse: PulseProfile | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``detect`` over many trials.

    Draw order is fixed (background counts, survival uniforms, split
    uniforms, then arrival times). Under the same rng state the background
    is therefore identical whatever ``n_true`` is, and changing
    ``efficiency`` or ``dead_time`` only changes which photons are kept.
    """
    n_true = np.asarray(n_true, dtype=np.int64)
    if np.any(n_true < 0):
        raise ValueError("photon numbers must be >= 0")
    trials = n_true.size
    if channel.dead_time > 0 and (pulse is None or pulse.flux.size == 0 or pulse.total <= 0):
        raise ValueError("dead-time censoring needs a non-degenerate pulse profile")

    background = rng.poisson(channel.background, trials) if channel.background > 0 else np.zeros(trials, np.int64)
    signal_owner = np.repeat(np.arange(trials), n_true)
    survived = rng.random(signal_owner.size) < channel.efficiency
    bg_owner = np.repeat(np.arange(trials), background)
    owner = np.concatenate([signal_owner, bg_owner])
    present = np.concatenate([survived, np.ones(bg_owner.size, bool)])
    to_first = rng.random(owner.size) < channel.split_ratio

    if channel.dead_time > 0:
        times = sample_arrival_times(pulse, owner.size, rng)
        present = present & _dead_time_mask(owner, to_first, times, present, channel.dead_time)

    d1 = np.bincount(owner[present & to_first], minlength=trials)
    d2 = np.bincount(owner[present & ~to_first], minlength=trials)
    return d1, d2


def detect(
    n_true: int,
    channel: ChannelModel,
    pulse: PulseProfile | None,
    rng: np.random.Generator,
) -> tuple[int, int]:
    """Detector counts (d1, d2) for ``n_true`` photons arriving at one channel."""
    d1, d2 = detect_many(np.array([n_true]), channel, rng, pulse)
    return int(d1[0]), int(d2[0])


def sample_arrival_times(pulse: PulseProfile, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF samples from the normalized piecewise-constant pulse."""
    weights = pulse.flux / pulse.flux.sum()
    cdf = np.cumsum(weights)
    u = rng.random(size)
    k = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), pulse.flux.size - 1)
    return pulse.t0 + (k + rng.random(size)) * pulse.dt


def _dead_time_mask(owner, detector, times, present, dead_time) -> np.ndarray:
    order = np.lexsort((times, detector, owner))
    keep_sorted = _censor(owner[order], detector[order], times[order], present[order], dead_time)
    keep = np.empty_like(keep_sorted)
    keep[order] = keep_sorted
    return keep


@nb.njit(cache=True)
def _censor(owner, detector, times, present, dead_time):
    # Non-paralyzable: a photon is lost if it arrives within dead_time of
    # the last registered count on the same detector in the same trial.
    keep = np.zeros(owner.size, np.bool_)
    last_owner = -1
    last_detector = False
    last_time = -np.inf
    for i in range(owner.size):
        if owner[i] != last_owner or detector[i] != last_detector:
            last_owner = owner[i]
            last_detector = detector[i]
            last_time = -np.inf
        if not present[i]:
            continue
        if times[i] - last_time >= dead_time:
            keep[i] = True
            last_time = times[i]
    return keep


def zeta(n_bg: float, alpha: float, n_s: float) -> float:
    """Fock-purity figure of merit n_bg (1 - alpha) / (n_s alpha); want << 1."""
    if alpha <= 0 or alpha > 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if n_s <= 0:
        raise ValueError(f"n_s must be > 0, got {n_s}")
    return n_bg * (1.0 - alpha) / (n_s * alpha)
