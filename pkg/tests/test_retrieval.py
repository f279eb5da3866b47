import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import curve_fit

from ensemble_memory.core import ExperimentConfig, SolverError, SpinWaveProfile, validate
from ensemble_memory.retrieval import (
    apply_storage_decay,
    retrieval_efficiency,
    retrieve_finite_depth,
    retrieve_ideal,
    stable_time_step,
    switch_on_schedule,
)
from ensemble_memory.write import gain_for_mode_mean, spin_profile

from helpers import adiabatic_retrieval_efficiency

Z = np.linspace(0, 1, 256)


def three_spin_profile(depth=20.0):
    cfg = ExperimentConfig(optical_depth=depth)
    gain = gain_for_mode_mean(3.0 / cfg.mode_count)
    return spin_profile(validate(cfg.replace(single_atom_rate=gain / cfg.write_duration / depth)))


def gaussian_profile(total=1.0, centre=0.5, width=0.08):
    rho = np.exp(-0.5 * ((Z - centre) / width) ** 2)
    return SpinWaveProfile(Z, rho * total / np.trapezoid(rho, Z))


# -- storage decay ------------------------------------------------------------


def test_decay_identity_at_zero_delay():
    p = three_spin_profile()
    assert apply_storage_decay(p, 1 / 3, 0.0) is p


def test_decay_one_lifetime():
    p = SpinWaveProfile.uniform(1.0)
    assert apply_storage_decay(p, 1 / 3, 3.0).total == pytest.approx(math.exp(-1), rel=1e-12)


def test_decay_fit_recovers_lifetime():
    p = three_spin_profile()
    taus = np.array([0, 1, 2, 4, 6.0])
    totals = [apply_storage_decay(p, 1 / 3, t).total for t in taus]
    (_, tau_c), _ = curve_fit(lambda t, a, tc: a * np.exp(-t / tc), taus, totals, p0=(1, 1))
    assert tau_c == pytest.approx(3.0, rel=0.05)


def test_decay_rejects_negative():
    with pytest.raises(ValueError):
        apply_storage_decay(SpinWaveProfile.uniform(1.0), -1.0, 1.0)


# -- ideal retrieval ----------------------------------------------------------


def test_ideal_uniform_is_rectangular():
    r = retrieve_ideal(SpinWaveProfile.uniform(3.0), 1.0)
    assert r.antistokes_flux.duration == pytest.approx(1.0)
    assert np.allclose(r.antistokes_flux.flux, 3.0, rtol=1e-9)
    assert r.efficiency == 1.0


def test_ideal_maps_density_to_time():
    p = three_spin_profile()
    v = 0.7
    pulse = retrieve_ideal(p, v, bins=4000).antistokes_flux
    expected = v * np.interp(1 - v * pulse.times, p.z, p.density)
    assert np.allclose(pulse.flux, expected, rtol=1e-4)


def test_ideal_doubling_coupling():
    p = gaussian_profile(2.0)
    a, b = retrieve_ideal(p, 0.5), retrieve_ideal(p, 1.0)
    assert b.fwhm == pytest.approx(a.fwhm / 2, rel=1e-6)
    assert b.antistokes_flux.flux.max() == pytest.approx(2 * a.antistokes_flux.flux.max(), rel=1e-6)
    assert b.retrieved == pytest.approx(a.retrieved, rel=1e-12)


@given(
    st.lists(st.floats(0.0, 10.0), min_size=64, max_size=300).filter(lambda d: sum(d) > 0),
    st.floats(0.05, 5.0),
)
def test_ideal_conserves_number(density, coupling):
    p = SpinWaveProfile(np.linspace(0, 1, len(density)), np.array(density))
    r = retrieve_ideal(p, coupling)
    assert r.retrieved == pytest.approx(p.total, rel=1e-9)


@pytest.mark.parametrize("profile", [three_spin_profile(), gaussian_profile()], ids=["end-weighted", "gaussian"])
def test_ideal_fwhm_times_coupling_constant(profile):
    products = [retrieve_ideal(profile, k).fwhm * k for k in (0.125, 0.5, 1.0, 4.0)]
    assert max(products) / min(products) - 1 < 0.01


def test_ideal_schedule_slows_release():
    p = SpinWaveProfile.uniform(1.0)
    fast = retrieve_ideal(p, 1.0)
    ramped = retrieve_ideal(p, switch_on_schedule(1.0, 0.2))
    assert ramped.retrieval_time > fast.retrieval_time
    assert ramped.retrieved == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("coupling", [0.0, [(0.0, 1.0), (0.5, 0.0)]])
def test_ideal_zero_coupling_is_error(coupling):
    with pytest.raises(ValueError):
        retrieve_ideal(SpinWaveProfile.uniform(1.0), coupling)


# -- finite depth ---------------------------------------------------------------


@pytest.mark.parametrize("depth", [10.0, 20.0, 50.0])
@pytest.mark.parametrize("shape", [lambda z: np.ones_like(z), lambda z: 1 + z], ids=["flat", "ramp"])
def test_finite_depth_matches_adiabatic_kernel(depth, shape):
    rho = shape(Z) ** 2
    profile = SpinWaveProfile(Z, rho / np.trapezoid(rho, Z))
    cfg = ExperimentConfig(optical_depth=depth, decoherence_rate=0.0, retrieve_coupling=0.2)
    got = retrieve_finite_depth(profile, cfg).efficiency
    assert got == pytest.approx(adiabatic_retrieval_efficiency(depth, shape), abs=0.01)


@pytest.mark.parametrize("gamma_c", [0.0, 1 / 3, 1.0])
def test_finite_depth_energy_accounting(gamma_c):
    p = three_spin_profile()
    r = retrieve_finite_depth(p, ExperimentConfig(decoherence_rate=gamma_c, retrieve_coupling=0.2))
    assert r.retrieved + r.absorbed + r.decayed + r.remaining == pytest.approx(r.stored, rel=1e-3)
    assert r.antistokes_flux.total == pytest.approx(r.efficiency * r.stored, rel=1e-3)
    assert 0 <= r.efficiency <= 1


def test_finite_depth_monotone_in_depth():
    p = three_spin_profile()
    effs = [retrieve_finite_depth(p, ExperimentConfig(optical_depth=d)).efficiency for d in (5, 10, 20, 40)]
    assert np.all(np.diff(effs) > 0)


def test_finite_depth_monotone_in_decay():
    p = three_spin_profile()
    effs = [retrieve_finite_depth(p, ExperimentConfig(decoherence_rate=g)).efficiency for g in (0, 0.1, 0.3, 1.0)]
    assert np.all(np.diff(effs) < 0)


def test_finite_depth_flattens_pulse():
    p = three_spin_profile()
    for k in (0.1, 0.4):
        finite = retrieve_finite_depth(p, ExperimentConfig(retrieve_coupling=k))
        ideal = retrieve_ideal(p, switch_on_schedule(k))
        assert finite.antistokes_flux.flux.max() < ideal.antistokes_flux.flux.max()


def test_finite_depth_broadens_peaked_pulse():
    p = gaussian_profile()
    for k in (0.1, 0.4):
        finite = retrieve_finite_depth(p, ExperimentConfig(retrieve_coupling=k))
        ideal = retrieve_ideal(p, switch_on_schedule(k))
        assert finite.fwhm >= ideal.fwhm


def test_courant_violation_suggests_dt():
    cfg = ExperimentConfig()
    stable = stable_time_step(cfg.optical_depth, cfg.retrieve_coupling)
    with pytest.raises(SolverError, match="dt <="):
        retrieve_finite_depth(SpinWaveProfile.uniform(1.0), cfg, dt=2 * stable)


def test_reference_efficiency_regression(reference_config):
    eff = retrieval_efficiency(reference_config)
    assert 0.2 <= eff <= 0.4
    assert eff == pytest.approx(0.30, abs=1e-6)


def test_ideal_model_has_unit_efficiency():
    assert retrieval_efficiency(ExperimentConfig(retrieval_model="ideal")) == 1.0
