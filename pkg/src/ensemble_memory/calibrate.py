"""Fit the unpublished instrument parameters to target observables.

Solves for (single_atom_rate, antistokes_efficiency, stokes_background,
antistokes_background), and optionally the retrieve coupling, given
target values of the detected means, the normalized variance, the Fock
purity figure zeta and the retrieval efficiency. Every step is either
closed-form or a bracketed derivative-free root find against the exact
oracle, so the result is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy.optimize import brentq

from .core import ExperimentConfig, SolverError, ValidatedConfig, validate
from .oracle import exact_joint, exact_stats
from .retrieval import retrieval_efficiency, storage_survival
from .sampler import prepare
from .write import MAX_GAIN

TARGET_KEYS = ("ns", "nas", "V", "zeta", "retrieval")
REQUIRED_KEYS = ("ns", "nas", "V")


@dataclass(frozen=True)
class Calibration:
    config: ExperimentConfig
    targets: dict[str, float]
    achieved: dict[str, float] = field(default_factory=dict)


def parse_targets(text: str) -> dict[str, float]:
    """``"ns=1.06,nas=0.36,V=0.942"`` -> dict; unknown keys are an error."""
    targets: dict[str, float] = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in TARGET_KEYS:
            raise ValueError(f"bad target {item!r}; expected key=value with key in {TARGET_KEYS}")
        targets[key] = float(value)
    missing = [k for k in REQUIRED_KEYS if k not in targets]
    if missing:
        raise ValueError(f"missing targets: {', '.join(missing)}")
    return targets


def _solve_coupling(config: ExperimentConfig, target: float) -> float:
    """Retrieve coupling whose finite-depth efficiency equals ``target``."""

    def gap(log_k: float) -> float:
        return retrieval_efficiency(config.replace(retrieve_coupling=math.exp(log_k))) - target

    lo, hi = math.log(0.01), math.log(2.0)
    if gap(lo) > 0 or gap(hi) < 0:
        raise SolverError(f"retrieval efficiency {target} is outside the reachable range for this optical depth")
    return math.exp(brentq(gap, lo, hi, xtol=1e-6))


def calibrate(base: ExperimentConfig | ValidatedConfig, targets: dict[str, float]) -> Calibration:
    """Calibrated copy of ``base``; its stokes_efficiency is held fixed.

    1. zeta fixes the Stokes background, b_S = zeta n_s alpha_S / (1 - alpha_S);
       without a zeta target the base background is kept.
    2. The detected Stokes mean fixes the emitted number M, hence the
       write rate through M = N (exp(xi t_W) - 1).
    3. Optionally, the coupling is solved for the target retrieval efficiency.
    4. The overall anti-Stokes detection probability eta_A solves V = target
       on the exact oracle, with b_AS = n_as - eta_A M keeping the mean fixed.
    """
    cfg = validate(base).config
    if cfg.dead_time > 0:
        raise ValueError("calibration assumes dead_time = 0")
    ns, nas, v_target = targets["ns"], targets["nas"], targets["V"]
    alpha_s = cfg.stokes_efficiency
    if not 0 < alpha_s < 1:
        raise ValueError("calibration needs 0 < stokes_efficiency < 1")

    b_s = targets["zeta"] * ns * alpha_s / (1 - alpha_s) if "zeta" in targets else cfg.stokes_background
    emitted = (ns - b_s) / alpha_s
    if emitted <= 0:
        raise SolverError(f"Stokes background {b_s:.3g} leaves no signal for n_s = {ns}")
    gain = math.log1p(emitted / cfg.mode_count)
    if gain > MAX_GAIN:
        raise SolverError("target Stokes mean needs a write gain beyond the supported range")
    xi = gain / cfg.write_duration
    cfg = cfg.replace(stokes_background=b_s, single_atom_rate=xi / cfg.optical_depth)

    if "retrieval" in targets:
        cfg = cfg.replace(retrieve_coupling=_solve_coupling(cfg, targets["retrieval"]))
    model = prepare(cfg)
    spin_side = model.retrieval_efficiency * model.storage_survival
    eta_max = min(nas / emitted, spin_side)

    def config_for(eta_a: float) -> ExperimentConfig:
        return cfg.replace(antistokes_efficiency=eta_a / spin_side, antistokes_background=max(nas - eta_a * emitted, 0.0))

    def v_gap(eta_a: float) -> float:
        return exact_stats(exact_joint(prepare(config_for(eta_a), model.retrieval_efficiency))).v_norm - v_target

    lo, hi = 1e-9 * eta_max, eta_max
    if v_gap(lo) * v_gap(hi) > 0:
        raise SolverError(f"V = {v_target} is not reachable with n_s = {ns}, n_as = {nas} and this Stokes efficiency")
    eta_a = brentq(v_gap, lo, hi, xtol=1e-12)
    cfg = config_for(eta_a)

    summary = exact_stats(exact_joint(prepare(cfg, model.retrieval_efficiency)))
    achieved = {"ns": summary.mean_s, "nas": summary.mean_as, "V": summary.v_norm,
                "zeta": summary.zeta, "retrieval": model.retrieval_efficiency,
                "survival": storage_survival(validate(cfg))}
    return Calibration(cfg, dict(targets), achieved)
