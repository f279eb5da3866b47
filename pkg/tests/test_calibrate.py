import pytest

from ensemble_memory.calibrate import calibrate, parse_targets
from ensemble_memory.core import ExperimentConfig, SolverError
from ensemble_memory.oracle import exact_joint, exact_stats
from ensemble_memory.retrieval import retrieval_efficiency


def test_parse_targets():
    assert parse_targets("ns=1.06, nas=0.36,V=0.942") == {"ns": 1.06, "nas": 0.36, "V": 0.942}


@pytest.mark.parametrize("text", ["ns=1,nas=0.3", "ns=1,nas=0.3,V=0.9,x=2", "ns=1,nas,V=0.9"])
def test_parse_targets_errors(text):
    with pytest.raises(ValueError):
        parse_targets(text)


@pytest.mark.parametrize(
    "targets",
    [
        {"ns": 1.06, "nas": 0.36, "V": 0.942, "zeta": 0.3},
        {"ns": 0.5, "nas": 0.2, "V": 0.9},
    ],
)
def test_calibration_hits_targets_exactly(targets):
    result = calibrate(ExperimentConfig(), targets)
    s = exact_stats(exact_joint(result.config))
    assert s.mean_s == pytest.approx(targets["ns"], rel=1e-6)
    assert s.mean_as == pytest.approx(targets["nas"], rel=1e-6)
    assert s.v_norm == pytest.approx(targets["V"], abs=1e-6)
    if "zeta" in targets:
        assert s.zeta == pytest.approx(targets["zeta"], rel=1e-6)
    assert result.config.stokes_efficiency == ExperimentConfig().stokes_efficiency


def test_calibration_retrieval_target():
    result = calibrate(ExperimentConfig(), {"ns": 1.06, "nas": 0.36, "V": 0.942, "retrieval": 0.25})
    assert retrieval_efficiency(result.config) == pytest.approx(0.25, abs=1e-5)


def test_unreachable_variance():
    with pytest.raises(SolverError):
        calibrate(ExperimentConfig(), {"ns": 1.06, "nas": 0.36, "V": 0.2})


def test_background_swamps_signal():
    with pytest.raises(SolverError):
        calibrate(ExperimentConfig(), {"ns": 0.1, "nas": 0.36, "V": 0.9, "zeta": 5.0})
