import os
import random

import pytest
from hypothesis import HealthCheck, settings

from engramnet.engine import EpisodeConfig, Network
from engramnet.graph import GeneratorSpec, generate

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def cfg():
    return EpisodeConfig()


@pytest.fixture
def sparse_net():
    g = generate(GeneratorSpec("er", {"p": 0.0124}, seed=11), 500)
    return Network(g, 20)


def random_er_network(rng: random.Random, n_range=(20, 80), p_range=(0.03, 0.2)) -> Network:
    n = rng.randint(*n_range)
    g = generate(GeneratorSpec("er", {"p": rng.uniform(*p_range)}, seed=rng.getrandbits(32)), n)
    return Network(g, 20)


# acceptance criteria report one line each; printed together at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
