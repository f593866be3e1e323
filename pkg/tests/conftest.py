import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def population():
    from mirrorability.synthetic import face_population_model

    return face_population_model()


@pytest.fixture(scope="session")
def small_model(population):
    """A quick 4-stage cascade; good enough for structural checks, not for accuracy targets."""
    from mirrorability.cascade import CascadeConfig, train_cascade
    from mirrorability.synthetic import generate_scenes

    scenes = generate_scenes(population, 40, seed=7, difficulty=(0.0, 0.5), prefix="fx")
    return train_cascade(scenes, CascadeConfig(n_stages=4))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.format_results():
        terminalreporter.write_line(line)
