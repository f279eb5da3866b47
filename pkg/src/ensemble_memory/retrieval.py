"""Storage decay and EIT retrieval of a stored spin wave.

The finite-depth solver integrates the linear three-field retrieval
equations in the co-moving frame (light crossing time neglected)::

    dE/dz = i sqrt(d) P
    dP/dt = -gamma P + i gamma sqrt(d) E + i Omega S
    dS/dt = -(gamma_c / 2) S + i Omega P

with z in cell lengths and d the optical depth. |S|^2 is the spin density
and gamma |E(z=1)|^2 the output photon flux. In the adiabatic regime the
spin wave drifts out at v_g = Omega^2 / (gamma d), so Omega is set from the
requested group velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numba as nb
import numpy as np

from .core import (
    REFERENCE_GROUP_VELOCITY,
    PulseProfile,
    SolverError,
    SpinWaveProfile,
    ValidatedConfig,
    validate,
)

# Half-width of the optical transition (Rb D1 natural linewidth / 2), 1/us.
OPTICAL_LINEWIDTH = 18.0
MAX_COURANT = 0.5
# Retrieve-beam switch-on time; an instantaneous step excites a
# non-adiabatic burst on the 1/gamma timescale.
SWITCH_ON_TIME = 0.1

# A coupling is a constant multiplier of REFERENCE_GROUP_VELOCITY, or a
# piecewise-constant schedule of (t_start_us, multiplier) with t_start[0] == 0.
Coupling = Union[float, Sequence[tuple[float, float]]]


@dataclass(frozen=True)
class RetrievalResult:
    antistokes_flux: PulseProfile
    efficiency: float
    fwhm: float
    retrieval_time: float
    stored: float
    retrieved: float
    absorbed: float = 0.0
    decayed: float = 0.0
    remaining: float = 0.0


def apply_storage_decay(profile: SpinWaveProfile, gamma_c: float, tau_d: float) -> SpinWaveProfile:
    """Scale the excitation density by exp(-gamma_c tau_d), uniformly in z."""
    if gamma_c < 0 or tau_d < 0:
        raise ValueError(f"gamma_c and tau_d must be >= 0, got {gamma_c}, {tau_d}")
    if tau_d == 0:
        return profile
    return profile.scaled(math.exp(-gamma_c * tau_d))


def storage_survival(config: ValidatedConfig) -> float:
    return math.exp(-config.decoherence_rate * config.delay)


def _schedule(coupling: Coupling) -> tuple[np.ndarray, np.ndarray]:
    if np.isscalar(coupling):
        starts, values = np.array([0.0]), np.array([float(coupling)])
    else:
        pairs = np.asarray(coupling, dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
            raise ValueError("coupling schedule must be a sequence of (t_start, value) pairs")
        starts, values = pairs[:, 0], pairs[:, 1]
        if starts[0] != 0 or np.any(np.diff(starts) <= 0):
            raise ValueError("schedule start times must begin at 0 and increase")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ValueError("coupling values must be finite and >= 0")
    if values[-1] <= 0:
        raise ValueError("retrieval needs a nonzero coupling (final segment is zero)")
    return starts, values


def switch_on_schedule(coupling: float, rise_time: float = SWITCH_ON_TIME, steps: int = 32) -> list[tuple[float, float]]:
    """Piecewise-constant sin^2 ramp of the coupling up to ``coupling``."""
    if rise_time <= 0:
        return [(0.0, float(coupling))]
    starts = np.arange(steps) * rise_time / steps
    mids = starts + 0.5 * rise_time / steps
    ramp = [(float(t), float(coupling * np.sin(0.5 * np.pi * m / rise_time) ** 2)) for t, m in zip(starts, mids)]
    return ramp + [(float(rise_time), float(coupling))]


def _coupling_at(starts: np.ndarray, values: np.ndarray, t: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(starts, t, side="right") - 1
    return values[np.clip(idx, 0, None)]


def _released_fraction_time(starts, values, target: float) -> float:
    """Time at which the integrated drift X(t) = sum v dt reaches ``target``."""
    x = 0.0
    for k, (t0, v) in enumerate(zip(starts, values * REFERENCE_GROUP_VELOCITY)):
        t1 = starts[k + 1] if k + 1 < len(starts) else math.inf
        if v > 0 and x + v * (t1 - t0) >= target:
            return t0 + (target - x) / v
        x += v * (t1 - t0)
    raise AssertionError("unreachable: last segment has positive velocity")


def retrieve_ideal(profile: SpinWaveProfile, coupling: Coupling, bins: int = 1000) -> RetrievalResult:
    """Lossless retrieval: spin density at z leaves at the time it drifts to z = 1.

    For constant group velocity v the output is v * density(1 - v t) on
    [0, 1/v]. Bin values are exact bin integrals of the cumulative release,
    so the pulse carries exactly the stored excitation number.
    """
    starts, values = _schedule(coupling)
    if np.all(values == 0):
        raise ValueError("zero coupling: nothing is retrieved")
    t_end = _released_fraction_time(starts, values, 1.0)
    dt = t_end / bins
    edges = np.arange(bins + 1) * dt
    # X(t) is piecewise linear; integrate exactly across schedule breakpoints.
    drift = np.array([_drift(starts, values, t) for t in edges])
    drift = np.clip(drift, 0.0, 1.0)
    cum_z = np.concatenate(
        [[0.0], np.cumsum(0.5 * (profile.density[1:] + profile.density[:-1]) * np.diff(profile.z))]
    )
    total = cum_z[-1]
    released = total - _cumulative_at(profile, cum_z, 1.0 - drift)
    released[-1] = total
    flux = np.maximum(np.diff(released) / dt, 0.0)
    pulse = PulseProfile(0.0, dt, flux)
    return RetrievalResult(
        antistokes_flux=pulse,
        efficiency=1.0 if total > 0 else 0.0,
        fwhm=pulse.fwhm(),
        retrieval_time=_ninety_percent_time(edges, released),
        stored=total,
        retrieved=pulse.total,
    )


def _drift(starts, values, t: float) -> float:
    x = 0.0
    for k, t0 in enumerate(starts):
        if t <= t0:
            break
        t1 = starts[k + 1] if k + 1 < len(starts) else math.inf
        x += values[k] * REFERENCE_GROUP_VELOCITY * (min(t, t1) - t0)
    return x


def _cumulative_at(profile: SpinWaveProfile, cum_z: np.ndarray, zq: np.ndarray) -> np.ndarray:
    """Trapezoid integral of the (piecewise-linear) density from 0 to zq."""
    z, rho = profile.z, profile.density
    k = np.clip(np.searchsorted(z, zq, side="right") - 1, 0, z.size - 2)
    frac = zq - z[k]
    slope = (rho[k + 1] - rho[k]) / (z[k + 1] - z[k])
    return cum_z[k] + rho[k] * frac + 0.5 * slope * frac**2


def _ninety_percent_time(times: np.ndarray, cumulative: np.ndarray) -> float:
    if cumulative[-1] <= 0:
        return 0.0
    target = 0.9 * cumulative[-1]
    k = int(np.searchsorted(cumulative, target))
    if k == 0:
        return float(times[0])
    c0, c1 = cumulative[k - 1], cumulative[k]
    return float(times[k - 1] + (target - c0) / (c1 - c0) * (times[k] - times[k - 1]))


@nb.njit(cache=True)
def _rhs(P, S, sqrt_depth, gamma, omega, spin_decay, h, dP, dS):
    # First-order upwind march in z: the face field E_i includes cell i.
    E = 0j
    dissipated = 0.0
    for i in range(P.size):
        step = 1j * sqrt_depth * h * P[i]
        E = E + step
        dissipated += abs(step) ** 2
        dP[i] = -gamma * P[i] + 1j * gamma * sqrt_depth * E + 1j * omega * S[i]
        dS[i] = -0.5 * spin_decay * S[i] + 1j * omega * P[i]
    return E, dissipated


@nb.njit(cache=True)
def _rates(P, S, E_out, dissipated, gamma, spin_decay, h):
    pol = 0.0
    spin = 0.0
    for i in range(P.size):
        pol += abs(P[i]) ** 2
        spin += abs(S[i]) ** 2
    flux = gamma * abs(E_out) ** 2
    absorbed = gamma * (2.0 * pol * h + dissipated)
    decayed = spin_decay * spin * h
    return flux, absorbed, decayed


@nb.njit(cache=True)
def _rk4_march(P, S, sqrt_depth, gamma, omegas, spin_decay, h, dt, flux, absorbed, decayed):
    """Advance len(omegas) RK4 steps in place, recording rates after each."""
    n = P.size
    k1P = np.empty(n, np.complex128)
    k1S = np.empty(n, np.complex128)
    k2P = np.empty(n, np.complex128)
    k2S = np.empty(n, np.complex128)
    k3P = np.empty(n, np.complex128)
    k3S = np.empty(n, np.complex128)
    k4P = np.empty(n, np.complex128)
    k4S = np.empty(n, np.complex128)
    tP = np.empty(n, np.complex128)
    tS = np.empty(n, np.complex128)
    for step in range(omegas.size):
        om = omegas[step]
        _rhs(P, S, sqrt_depth, gamma, om, spin_decay, h, k1P, k1S)
        for i in range(n):
            tP[i] = P[i] + 0.5 * dt * k1P[i]
            tS[i] = S[i] + 0.5 * dt * k1S[i]
        _rhs(tP, tS, sqrt_depth, gamma, om, spin_decay, h, k2P, k2S)
        for i in range(n):
            tP[i] = P[i] + 0.5 * dt * k2P[i]
            tS[i] = S[i] + 0.5 * dt * k2S[i]
        _rhs(tP, tS, sqrt_depth, gamma, om, spin_decay, h, k3P, k3S)
        for i in range(n):
            tP[i] = P[i] + dt * k3P[i]
            tS[i] = S[i] + dt * k3S[i]
        _rhs(tP, tS, sqrt_depth, gamma, om, spin_decay, h, k4P, k4S)
        for i in range(n):
            P[i] += dt / 6.0 * (k1P[i] + 2.0 * k2P[i] + 2.0 * k3P[i] + k4P[i])
            S[i] += dt / 6.0 * (k1S[i] + 2.0 * k2S[i] + 2.0 * k3S[i] + k4S[i])
        # Rates use the coupling of the step just taken.
        E_out, diss = _rhs(P, S, sqrt_depth, gamma, om, spin_decay, h, k1P, k1S)
        flux[step], absorbed[step], decayed[step] = _rates(P, S, E_out, diss, gamma, spin_decay, h)


def stable_time_step(optical_depth: float, max_coupling: float, linewidth: float = OPTICAL_LINEWIDTH) -> float:
    """Largest time step with Courant number <= 0.5 for the explicit march."""
    omega = math.sqrt(max_coupling * REFERENCE_GROUP_VELOCITY * linewidth * optical_depth)
    return MAX_COURANT / (linewidth * (1.0 + optical_depth) + omega)


def retrieve_finite_depth(
    profile: SpinWaveProfile,
    config: ValidatedConfig,
    coupling: Coupling | None = None,
    *,
    cells: int = 512,
    dt: float | None = None,
    linewidth: float = OPTICAL_LINEWIDTH,
    rise_time: float = SWITCH_ON_TIME,
    bins_per_transit: int = 400,
    tolerance: float = 1e-6,
    max_transits: float = 40.0,
) -> RetrievalResult:
    """Retrieve ``profile`` through a medium of finite optical depth.

    A constant coupling (the config's by default) is switched on over
    ``rise_time``; pass an explicit schedule to control it fully.

    Integrates until the excitation left in the medium falls below
    ``tolerance`` of the stored number, or ``max_transits`` ideal transit
    times have elapsed. Spin decay at ``config.decoherence_rate`` acts
    during retrieval. Raises SolverError if ``dt`` breaks the Courant bound.
    """
    config = validate(config)
    depth = config.optical_depth
    if coupling is None:
        coupling = config.retrieve_coupling
    if np.isscalar(coupling):
        coupling = switch_on_schedule(float(coupling), rise_time)
    starts, values = _schedule(coupling)
    stable = stable_time_step(depth, values.max(), linewidth)
    if dt is None:
        dt = stable
    elif dt > stable * (1 + 1e-12):
        raise SolverError(
            f"time step {dt:.3g} us violates the Courant bound {MAX_COURANT} "
            f"(optical depth {depth:g}); use dt <= {stable:.3g} us"
        )

    stored = profile.total
    # Work on the unit-normalized shape; efficiency depends only on shape.
    h = 1.0 / cells
    centers = (np.arange(cells) + 0.5) * h
    shape = np.interp(centers, profile.z, profile.density) if stored > 0 else np.ones(cells)
    shape = shape / (shape.sum() * h)
    S = np.sqrt(shape).astype(np.complex128)
    P = np.zeros(cells, np.complex128)

    transit = _released_fraction_time(starts, values, 1.0)
    per_bin = max(1, int(round(transit / bins_per_transit / dt)))
    chunk = per_bin * max(1, 4096 // per_bin)
    t_max = max_transits * transit
    sqrt_depth = math.sqrt(depth)

    # Rate samples at t = k dt; at t = 0 there is no polarization or output.
    flux_steps = [np.zeros(1)]
    absorbed_steps = [np.zeros(1)]
    decayed_steps = [np.array([config.decoherence_rate])]
    steps_done = 0
    while True:
        t_steps = (steps_done + np.arange(chunk)) * dt
        omegas = np.sqrt(_coupling_at(starts, values, t_steps) * REFERENCE_GROUP_VELOCITY * linewidth * depth)
        flux = np.empty(chunk)
        absorbed = np.empty(chunk)
        decayed = np.empty(chunk)
        _rk4_march(P, S, sqrt_depth, linewidth, omegas, config.decoherence_rate, h, dt, flux, absorbed, decayed)
        if not (np.all(np.isfinite(flux)) and np.all(np.isfinite(S))):
            raise SolverError(f"retrieval solver diverged; reduce dt below {stable:.3g} us")
        flux_steps.append(flux)
        absorbed_steps.append(absorbed)
        decayed_steps.append(decayed)
        steps_done += chunk
        remaining = float(h * (np.sum(np.abs(S) ** 2) + np.sum(np.abs(P) ** 2)))
        if remaining < tolerance or steps_done * dt >= t_max:
            break

    samples = np.concatenate(flux_steps)  # flux at t = k dt, k = 0..K
    interval = 0.5 * (samples[1:] + samples[:-1]) * dt
    cumulative = np.concatenate([[0.0], np.cumsum(interval)])
    bin_integrals = interval.reshape(-1, per_bin).sum(axis=1)
    bin_dt = per_bin * dt
    pulse = PulseProfile(0.0, bin_dt, stored * bin_integrals / bin_dt)
    efficiency = float(cumulative[-1])
    if not 0.0 <= efficiency <= 1.0 + 1e-9:
        raise SolverError(f"unphysical retrieval efficiency {efficiency:.6g}")
    times = np.arange(samples.size) * dt
    absorbed_total = np.trapezoid(np.concatenate(absorbed_steps), dx=dt)
    decayed_total = np.trapezoid(np.concatenate(decayed_steps), dx=dt)
    return RetrievalResult(
        antistokes_flux=pulse,
        efficiency=min(efficiency, 1.0),
        fwhm=pulse.fwhm(),
        retrieval_time=_ninety_percent_time(times, cumulative),
        stored=stored,
        retrieved=stored * efficiency,
        absorbed=stored * absorbed_total,
        decayed=stored * decayed_total,
        remaining=stored * remaining,
    )


def retrieval_efficiency(config: ValidatedConfig, profile: SpinWaveProfile | None = None) -> float:
    """Scalar retrieval efficiency used by the number-statistics path."""
    config = validate(config)
    if config.retrieval_model == "ideal":
        return 1.0
    if profile is None:
        from .write import spin_profile

        profile = spin_profile(config)
    return retrieve_finite_depth(profile, config).efficiency
