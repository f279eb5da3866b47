"""Estimators for photon-number correlations, with jackknife errors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.stats import binom, poisson

from .core import Estimate, SolverError, StatsSummary
from .detection import zeta as zeta_criterion
from .sampler import TrialBatch

LOW_STATISTICS = 100
MAX_CONDITION_NUMBER = 1e8


def jackknife(func: Callable[..., np.ndarray], *columns: np.ndarray) -> tuple[float, float]:
    """Leave-one-out jackknife for a function of per-trial sample means.

    ``func(n, *means)`` is evaluated on the full sample and, vectorized, on
    every leave-one-out sample. Returns (full-sample value, standard error).
    """
    cols = [np.asarray(c, dtype=float) for c in columns]
    n = cols[0].size
    sums = [c.sum() for c in cols]
    with np.errstate(divide="ignore", invalid="ignore"):
        value = float(func(n, *(s / n for s in sums)))
        if n < 2:
            return value, float("nan")
        loo = func(n - 1, *((s - c) / (n - 1) for s, c in zip(sums, cols)))
        loo = np.broadcast_to(np.asarray(loo, dtype=float), (n,))
        stderr = float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))
    return value, stderr


def _var(n, m1, m2):
    return n / (n - 1) * (m2 - m1 * m1)


def psn_meas(batch: TrialBatch) -> Estimate:
    """var(AS1 - AS2) + var(S1 - S2): the measured shot-noise level."""
    n = len(batch)
    if n < 2:
        raise ValueError("psn_meas needs at least 2 trials")
    x = (batch.as1 - batch.as2).astype(float)
    y = (batch.s1 - batch.s2).astype(float)
    value, err = jackknife(lambda n, mx, mx2, my, my2: _var(n, mx, mx2) + _var(n, my, my2), x, x * x, y, y * y)
    return Estimate(value, err, n)


def normalized_variance(batch: TrialBatch) -> Estimate:
    """var(n_AS - n_S) / PSN_meas; 1 for classical, 0 for perfect correlation."""
    n = len(batch)
    if n < 2:
        raise ValueError("normalized_variance needs at least 2 trials")
    d = (batch.antistokes - batch.stokes).astype(float)
    x = (batch.as1 - batch.as2).astype(float)
    y = (batch.s1 - batch.s2).astype(float)
    if psn_meas(batch).value <= 0:
        raise ValueError("degenerate batch: measured photon shot noise is zero")

    def v(n, md, md2, mx, mx2, my, my2):
        return _var(n, md, md2) / (_var(n, mx, mx2) + _var(n, my, my2))

    value, err = jackknife(v, d, d * d, x, x * x, y, y * y)
    return Estimate(value, err, n)


def _subsample(batch: TrialBatch, n_s: int, latent: bool = False) -> TrialBatch:
    key = batch.true_stokes if latent else batch.stokes
    sub = batch.subset(key == n_s)
    if len(sub) == 0:
        raise ValueError(f"no trials with n_S = {n_s}")
    return sub


def _g2(n, m1, m2, m12):
    return m12 / (m1 * m2)


def _q(n, m1, m2, m12):
    return (m1 + m2) * (m12 / (m1 * m2) - 1.0)


def _conditional(batch, n_s, func, latent):
    sub = _subsample(batch, n_s, latent)
    a1, a2 = sub.as1.astype(float), sub.as2.astype(float)
    value, err = jackknife(func, a1, a2, a1 * a2)
    return Estimate(value, err, len(sub), len(sub) < LOW_STATISTICS)


def conditional_g2(batch: TrialBatch, n_s: int, latent: bool = False) -> Estimate:
    """<AS1 AS2> / (<AS1><AS2>) over trials with s1 + s2 == n_s."""
    return _conditional(batch, n_s, _g2, latent)


def mandel_q(batch: TrialBatch, n_s: int, latent: bool = False) -> Estimate:
    """Conditional Mandel Q = mean_AS (g2 - 1) from detected counts."""
    return _conditional(batch, n_s, _q, latent)


def conditional_mean(batch: TrialBatch, n_s: int, latent: bool = False) -> Estimate:
    sub = _subsample(batch, n_s, latent)
    value, err = jackknife(lambda n, m: m, sub.antistokes.astype(float))
    return Estimate(value, err, len(sub), len(sub) < LOW_STATISTICS)


@dataclass(frozen=True)
class LinearFit:
    slope: float
    slope_stderr: float
    intercept: float
    intercept_stderr: float


def conditional_mean_slope(batch: TrialBatch, ns_values: Iterable[int] = range(5)) -> LinearFit:
    """Weighted straight-line fit of the conditional mean against n_S."""
    xs, ys, errs = [], [], []
    for n_s in ns_values:
        try:
            est = conditional_mean(batch, n_s)
        except ValueError:
            continue
        xs.append(n_s)
        ys.append(est.value)
        errs.append(est.stderr)
    if len(xs) < 2:
        raise ValueError("need conditional means at two or more n_S values")
    x, y, e = np.array(xs, float), np.array(ys), np.array(errs)
    w = 1.0 / e**2 if np.all(e > 0) else np.ones_like(x)
    A = np.vstack([x, np.ones_like(x)]).T
    cov = np.linalg.inv(A.T @ (w[:, None] * A))
    slope, intercept = cov @ (A.T @ (w * y))
    if not np.all(e > 0):
        resid = y - A @ np.array([slope, intercept])
        dof = max(len(x) - 2, 1)
        cov = cov * (resid @ resid) / dof
    return LinearFit(float(slope), float(np.sqrt(cov[0, 0])), float(intercept), float(np.sqrt(cov[1, 1])))


def loss_background_matrix(alpha: float, background: float, n_max: int) -> np.ndarray:
    """T[k, m] = P(m detected | k incident): binomial loss then Poisson background."""
    k = np.arange(n_max + 1)
    survive = binom.pmf(k[None, :], k[:, None], alpha)
    bg = poisson.pmf(k, background)
    T = np.zeros((n_max + 1, n_max + 1))
    for m in range(n_max + 1):
        T[:, m] = survive[:, : m + 1] @ bg[m::-1]
    return T


@dataclass(frozen=True)
class CorrectedEstimate:
    mean: float
    q: float
    mean_stderr: float
    q_stderr: float
    clipped_mass: float
    distribution: np.ndarray
    condition_number: float


def invert_loss_background(p_detected: np.ndarray, alpha: float, background: float) -> tuple[np.ndarray, float, float]:
    """Linear-inverse deconvolution of loss and background on {0..n_max}.

    Returns (corrected distribution, clipped negative mass, condition
    number). Negative entries are clipped to zero and the rest renormalized.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    p_detected = np.asarray(p_detected, dtype=float)
    T = loss_background_matrix(alpha, background, p_detected.size - 1)
    cond = float(np.linalg.cond(T))
    if not cond <= MAX_CONDITION_NUMBER:
        raise SolverError(f"loss/background inversion is ill-conditioned (condition number {cond:.3g})")
    raw = np.linalg.solve(T.T, p_detected)
    clipped = float(-raw[raw < 0].sum())
    p = np.clip(raw, 0.0, None)
    total = p.sum()
    return (p / total if total > 0 else p), clipped, cond


def _mean_q(p: np.ndarray) -> tuple[float, float]:
    k = np.arange(p.size)
    mean = float(p @ k)
    return mean, float((p @ (k * (k - 1)) - mean**2) / mean) if mean > 0 else float("nan")


def corrected_estimates(
    batch: TrialBatch, alpha_as: float, bg_as: float, n_s: int = 2, n_max: int | None = None
) -> CorrectedEstimate:
    """Conditional anti-Stokes mean and Q with channel loss and background removed.

    ``alpha_as`` is the total anti-Stokes efficiency being inverted and
    ``bg_as`` the mean background count. Jackknife errors use the fact that
    leaving one trial out only ever changes one histogram bin.
    """
    counts = _subsample(batch, n_s).antistokes
    top = int(counts.max()) if n_max is None else int(n_max)
    hist = np.bincount(np.minimum(counts, top), minlength=top + 1).astype(float)
    n = hist.sum()
    p, clipped, cond = invert_loss_background(hist / n, alpha_as, bg_as)
    mean, q = _mean_q(p)

    mean_err = q_err = float("nan")
    if n > 1:
        loo = []
        for m in np.flatnonzero(hist):
            h = hist.copy()
            h[m] -= 1
            pm, _, _ = invert_loss_background(h / (n - 1), alpha_as, bg_as)
            loo.append((*_mean_q(pm), hist[m]))
        vals = np.array(loo)
        w = vals[:, 2]
        for col in (0, 1):
            centre = np.average(vals[:, col], weights=w)
            var = (n - 1) / n * np.sum(w * (vals[:, col] - centre) ** 2)
            if col == 0:
                mean_err = float(np.sqrt(var))
            else:
                q_err = float(np.sqrt(var))
    return CorrectedEstimate(mean, q, mean_err, q_err, clipped, p, cond)


def summarize(batch: TrialBatch, ns_values: Iterable[int] = range(5)) -> StatsSummary:
    """Every estimator in one pass; conditional ones for each n_S present."""
    mean_s = float(batch.stokes.mean())
    mean_as = float(batch.antistokes.mean())
    psn = psn_meas(batch)
    try:
        v = normalized_variance(batch)
    except ValueError:
        v = Estimate(float("nan"), float("nan"), len(batch))
    summary = StatsSummary(
        mean_s=mean_s,
        mean_as=mean_as,
        psn_meas=psn.value,
        psn_meas_stderr=psn.stderr,
        psn_th=mean_s + mean_as,
        v_norm=v.value,
        v_stderr=v.stderr,
        trials=len(batch),
    )
    for n_s in ns_values:
        if not np.any(batch.stokes == n_s):
            continue
        summary.g2_by_ns[n_s] = conditional_g2(batch, n_s)
        summary.mean_as_by_ns[n_s] = conditional_mean(batch, n_s)
        summary.q_by_ns[n_s] = mandel_q(batch, n_s)
    cfg = batch.config
    if cfg is not None and cfg.stokes_efficiency > 0 and mean_s > 0:
        summary.zeta = zeta_criterion(cfg.stokes_background, cfg.stokes_efficiency, mean_s)
    return summary
