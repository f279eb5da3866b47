"""Exact joint count distributions on a truncated lattice.

Used to validate the Monte Carlo engine and the estimators without sampling
error. Dead time is not treated (Monte Carlo only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d
from scipy.stats import binom, poisson

from .core import Estimate, ExperimentConfig, SolverError, StatsSummary, ValidatedConfig, validate
from .detection import zeta as zeta_criterion
from .sampler import ProtocolModel, TrialBatch, prepare
from . import stats

TAIL_BUDGET = 1e-6


@dataclass(frozen=True)
class JointDistribution:
    """P(n_S detected, n_AS detected) on {0..n_max}^2 plus the truncated mass."""

    n_max: int
    probabilities: np.ndarray
    tail_mass: float
    config: ValidatedConfig | None = None

    def marginal_stokes(self) -> np.ndarray:
        return self.probabilities.sum(axis=1)

    def marginal_antistokes(self) -> np.ndarray:
        return self.probabilities.sum(axis=0)


def thermal_pmf(mean: float, n_max: int) -> np.ndarray:
    """Bose-Einstein P(n) = mean^n / (1 + mean)^(n+1) for n = 0..n_max."""
    n = np.arange(n_max + 1)
    if mean == 0:
        return (n == 0).astype(float)
    return np.exp(n * np.log(mean) - (n + 1) * np.log1p(mean))


def thinning_matrix(alpha: float, n_max: int) -> np.ndarray:
    """B[k, j] = Binomial(j; k, alpha): independent per-excitation survival."""
    k = np.arange(n_max + 1)
    return binom.pmf(k[None, :], k[:, None], alpha)


def thin_joint(P: np.ndarray, alpha_s: float, alpha_as: float) -> np.ndarray:
    n_max = P.shape[0] - 1
    return thinning_matrix(alpha_s, n_max).T @ P @ thinning_matrix(alpha_as, n_max)


def convolve_joint(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Distribution of the sum of independent lattice variables, truncated."""
    n = P.shape[0]
    return convolve2d(P, Q)[:n, :n]


def add_background(P: np.ndarray, bg_s: float, bg_as: float) -> np.ndarray:
    n = P.shape[0]
    noise = np.outer(poisson.pmf(np.arange(n), bg_s), poisson.pmf(np.arange(n), bg_as))
    return convolve_joint(P, noise)


def pair_source(per_mode_mean: float, modes: int, n_max: int) -> np.ndarray:
    """Joint (Stokes, spin) numbers of ``modes`` independent thermal pairs."""
    single = np.diag(thermal_pmf(per_mode_mean, n_max))
    P = single
    for _ in range(modes - 1):
        P = convolve_joint(P, single)
    return P


def exact_joint(
    config: ExperimentConfig | ValidatedConfig | ProtocolModel,
    n_max: int = 30,
    *,
    tail_budget: float = TAIL_BUDGET,
) -> JointDistribution:
    """Exact detected-count distribution for the sampler's model.

    Thermal pairs per mode, convolved over modes; binomial thinning for
    storage, retrieval and the two detection efficiencies; Poisson
    background per channel. Raises SolverError if more than
    ``tail_budget`` probability falls outside the lattice.
    """
    model = config if isinstance(config, ProtocolModel) else prepare(config)
    cfg = model.config
    if cfg.dead_time > 0:
        raise ValueError("the exact oracle does not model detector dead time")
    P = pair_source(model.per_mode_mean, cfg.mode_count, n_max)
    # Spin-side losses, applied in protocol order.
    P = thin_joint(P, 1.0, model.storage_survival)
    P = thin_joint(P, 1.0, model.retrieval_efficiency)
    P = thin_joint(P, cfg.stokes_efficiency, cfg.antistokes_efficiency)
    P = add_background(P, cfg.stokes_background, cfg.antistokes_background)
    P = np.clip(P, 0.0, None)
    tail = max(0.0, 1.0 - float(P.sum()))
    if tail > tail_budget:
        raise SolverError(f"tail mass {tail:.3g} exceeds budget {tail_budget:g} at n_max={n_max}; raise n_max")
    return JointDistribution(n_max, P, tail, cfg)


def _moments(weights: np.ndarray) -> tuple[float, float]:
    """(mean, factorial second moment) of a lattice distribution, normalized."""
    n = np.arange(weights.size)
    total = weights.sum()
    return float(weights @ n / total), float(weights @ (n * (n - 1)) / total)


def exact_stats(dist: JointDistribution, ns_values=range(5)) -> StatsSummary:
    """Closed-form estimator values from the lattice.

    Splitter moments use the binomial(n, 1/2) identities
    <D1 D2> = <n(n-1)>/4 and <D1> = <D2> = <n>/2, so g2 = <n(n-1)>/<n>^2
    and var(D1 - D2) = <n>.
    """
    P = dist.probabilities / dist.probabilities.sum()
    n = np.arange(dist.n_max + 1)
    mean_s, _ = _moments(P.sum(axis=1))
    mean_as, _ = _moments(P.sum(axis=0))
    diff = n[None, :] - n[:, None]
    var_diff = float(np.sum(P * diff**2) - np.sum(P * diff) ** 2)
    psn = mean_s + mean_as
    v = var_diff / psn if psn > 0 else float("nan")
    summary = StatsSummary(
        mean_s=mean_s,
        mean_as=mean_as,
        psn_meas=psn,
        psn_th=psn,
        v_norm=v,
        v_stderr=0.0,
        psn_meas_stderr=0.0,
    )
    for n_s in ns_values:
        row = P[n_s]
        if n_s > dist.n_max or row.sum() <= 0:
            continue
        m, f2 = _moments(row)
        g2 = f2 / m**2 if m > 0 else float("nan")
        summary.g2_by_ns[n_s] = Estimate(g2, 0.0, 0)
        summary.mean_as_by_ns[n_s] = Estimate(m, 0.0, 0)
        summary.q_by_ns[n_s] = Estimate((f2 - m * m) / m if m > 0 else float("nan"), 0.0, 0)
    cfg = dist.config
    if cfg is not None and cfg.stokes_efficiency > 0 and mean_s > 0:
        summary.zeta = zeta_criterion(cfg.stokes_background, cfg.stokes_efficiency, mean_s)
    return summary


def stokes_g2(dist: JointDistribution) -> float:
    """Unconditional two-detector Stokes g2 from the marginal."""
    m, f2 = _moments(dist.marginal_stokes())
    return f2 / m**2


def tv_distance(dist: JointDistribution, batch: TrialBatch) -> float:
    """Total-variation distance to the empirical joint of (s1+s2, as1+as2).

    Empirical mass off the lattice and the oracle's tail mass both count
    as disagreement.
    """
    s, a = batch.stokes, batch.antistokes
    inside = (s <= dist.n_max) & (a <= dist.n_max)
    size = dist.n_max + 1
    counts = np.bincount(s[inside] * size + a[inside], minlength=size * size).reshape(size, size)
    empirical = counts / len(batch)
    off = 1.0 - inside.mean()
    return 0.5 * (float(np.abs(empirical - dist.probabilities).sum()) + off + dist.tail_mass)


@dataclass(frozen=True)
class ZScore:
    name: str
    exact: float
    estimate: float
    stderr: float

    @property
    def z(self) -> float:
        return (self.estimate - self.exact) / self.stderr if self.stderr > 0 else float("nan")


def z_scores(dist: JointDistribution, batch: TrialBatch, ns_values=range(4)) -> list[ZScore]:
    """Monte Carlo estimate vs exact value for every estimator.

    Conditional estimators are included only where the subsample is not
    flagged as low-statistics.
    """
    exact = exact_stats(dist, ns_values)
    out = []
    n = len(batch)
    for name, column, value in (
        ("mean_s", batch.stokes, exact.mean_s),
        ("mean_as", batch.antistokes, exact.mean_as),
    ):
        out.append(ZScore(name, value, float(column.mean()), float(column.std(ddof=1) / np.sqrt(n))))
    psn = stats.psn_meas(batch)
    out.append(ZScore("psn_meas", exact.psn_meas, psn.value, psn.stderr))
    v = stats.normalized_variance(batch)
    out.append(ZScore("v_norm", exact.v_norm, v.value, v.stderr))
    for n_s in ns_values:
        if n_s not in exact.g2_by_ns or not np.any(batch.stokes == n_s):
            continue
        for name, fn, table in (
            ("g2", stats.conditional_g2, exact.g2_by_ns),
            ("mean_as", stats.conditional_mean, exact.mean_as_by_ns),
            ("q", stats.mandel_q, exact.q_by_ns),
        ):
            est = fn(batch, n_s)
            if est.low_statistics or not np.isfinite(est.stderr):
                continue
            out.append(ZScore(f"{name}[n_s={n_s}]", table[n_s].value, est.value, est.stderr))
    return out
