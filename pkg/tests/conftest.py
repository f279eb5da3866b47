import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from ensemble_memory.core import config_from_dict

ROOT = Path(__file__).resolve().parents[1]

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def reference_config_path() -> Path:
    return ROOT / "configs" / "reference.json"


@pytest.fixture(scope="session")
def reference_config(reference_config_path):
    return config_from_dict(json.loads(reference_config_path.read_text()))
