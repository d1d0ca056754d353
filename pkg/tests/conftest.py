import json
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def frozen():
    return json.loads((Path(__file__).parent / "data" / "oracle_values.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_metric(rng, n, dim=2):
    """Euclidean distances of random points: a valid metric almost surely separated."""
    from mmsplit import MetricMeasureSpace

    pts = rng.uniform(0, 1, (n, dim))
    D = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    return MetricMeasureSpace(D, rng.uniform(0.5, 2.0, n), pts, "random")


# one verdict line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def report_criterion(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
