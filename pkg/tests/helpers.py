"""Independent reference solutions used as test oracles."""

import numpy as np
from scipy.special import i0e


def adiabatic_retrieval_efficiency(depth: float, shape, n: int = 2000) -> float:
    """Forward-retrieval efficiency in the adiabatic, decay-free limit.

    Quadratic form of the retrieval kernel
    k(z, z') = (d/2) exp(-d (2 - z - z')/2) I0(d sqrt((1-z)(1-z'))),
    applied to the normalized spin-wave amplitude ``shape(z)``.
    """
    z = (np.arange(n) + 0.5) / n
    Z, Zp = np.meshgrid(z, z, indexing="ij")
    x = depth * np.sqrt((1 - Z) * (1 - Zp))
    kernel = 0.5 * depth * np.exp(-depth * (2 - Z - Zp) / 2 + x) * i0e(x)
    s = shape(z)
    s = s / np.sqrt((s**2).mean())
    return float((kernel * np.outer(s, s)).sum() / n**2)


def poisson_batch(means, trials, seed=0):
    """Independent Poisson counts on the four detectors (coherent-equivalent light)."""
    from ensemble_memory.sampler import TrialBatch

    rng = np.random.default_rng(seed)
    s1, s2, as1, as2 = (rng.poisson(m, trials) for m in means)
    return TrialBatch.from_counts(s1, s2, as1, as2)


def fock_batch(n, trials, seed=0, antistokes_mean=None):
    """Lossless chain with every trial holding exactly n pairs, split 50/50."""
    from ensemble_memory.sampler import TrialBatch

    rng = np.random.default_rng(seed)
    s1 = rng.binomial(n, 0.5, trials)
    as1 = rng.binomial(n, 0.5, trials)
    return TrialBatch.from_counts(s1, n - s1, as1, n - as1)
