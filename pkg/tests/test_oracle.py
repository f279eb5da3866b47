import math

import numpy as np
import pytest
from scipy.stats import poisson

from ensemble_memory.core import ExperimentConfig, SolverError
from ensemble_memory.oracle import (
    JointDistribution,
    add_background,
    convolve_joint,
    exact_joint,
    exact_stats,
    pair_source,
    stokes_g2,
    thermal_pmf,
    thin_joint,
    tv_distance,
    z_scores,
)
from ensemble_memory.sampler import prepare, run_batch

LOSSLESS = dict(
    stokes_efficiency=1.0, antistokes_efficiency=1.0, stokes_background=0.0, antistokes_background=0.0
)


def single_mode(per_mode_mean, **kw):
    cfg = ExperimentConfig(mode_count=1, **kw)
    return cfg.replace(single_atom_rate=math.log1p(per_mode_mean) / cfg.write_duration / cfg.optical_depth)


def test_geometric_diagonal():
    d = exact_joint(prepare(single_mode(1.0, **LOSSLESS), retrieval_eff=1.0), n_max=60)
    P = d.probabilities
    assert P[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert P[1, 1] == pytest.approx(0.25, abs=1e-12)
    assert np.all(P[~np.eye(61, dtype=bool)] == 0)
    assert P.sum() + d.tail_mass == pytest.approx(1.0, abs=1e-12)


def test_no_antistokes_is_point_mass():
    d = exact_joint(ExperimentConfig(antistokes_efficiency=0.0, antistokes_background=0.0))
    marginal = d.marginal_antistokes()
    assert marginal[0] == pytest.approx(1.0, abs=1e-6)
    assert np.all(marginal[1:] == 0)


def test_lossless_diagonal_v_zero():
    d = exact_joint(prepare(ExperimentConfig(**LOSSLESS), retrieval_eff=1.0))
    assert exact_stats(d).v_norm == pytest.approx(0.0, abs=1e-12)


def test_poisson_product_v_one():
    n = np.arange(31)
    P = np.outer(poisson.pmf(n, 0.8), poisson.pmf(n, 0.4))
    assert exact_stats(JointDistribution(30, P, 1 - P.sum())).v_norm == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_fock_g2(n):
    P = np.zeros((11, 11))
    P[n, n] = 1.0
    s = exact_stats(JointDistribution(10, P, 0.0), ns_values=[n])
    assert s.g2_by_ns[n].value == pytest.approx(1 - 1 / n, abs=1e-15)
    assert s.q_by_ns[n].value == pytest.approx(-1.0, abs=1e-15)


@pytest.mark.parametrize("modes", [1, 2, 4])
def test_stokes_g2_multimode(modes):
    d = exact_joint(ExperimentConfig(mode_count=modes, stokes_background=0.0))
    assert stokes_g2(d) == pytest.approx(1 + 1 / modes, rel=1e-9)


def test_thinning_commutes_with_mode_convolution():
    n_max, mean, modes = 30, 0.3, 4
    before = np.diag(thermal_pmf(mean, n_max))
    thinned = thin_joint(before, 0.6, 0.35)
    a = thinned
    for _ in range(modes - 1):
        a = convolve_joint(a, thinned)
    b = thin_joint(pair_source(mean, modes, n_max), 0.6, 0.35)
    assert np.max(np.abs(a - b)) < 1e-12


def test_sequential_thinning_composes():
    P = pair_source(0.4, 2, 30)
    a = thin_joint(thin_joint(P, 1.0, 0.5), 1.0, 0.4)
    b = thin_joint(P, 1.0, 0.2)
    assert np.max(np.abs(a - b)) < 1e-12


def test_background_is_convolution():
    P = np.zeros((31, 31))
    P[0, 0] = 1
    B = add_background(P, 0.3, 0.2)
    assert np.allclose(B, np.outer(poisson.pmf(np.arange(31), 0.3), poisson.pmf(np.arange(31), 0.2)))


def test_tail_budget_exceeded():
    with pytest.raises(SolverError, match="tail mass"):
        exact_joint(single_mode(3.0), n_max=10)


def test_dead_time_not_supported():
    with pytest.raises(ValueError):
        exact_joint(ExperimentConfig(dead_time=0.05))


def test_monte_carlo_agreement(reference_config):
    model = prepare(reference_config)
    d = exact_joint(model)
    batch = run_batch(model, 400_000, seed=21)
    assert tv_distance(d, batch) < 1e-2
    for z in z_scores(d, batch):
        assert abs(z.z) < 4, z
