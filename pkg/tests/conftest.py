import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nsk.paths import PiecewiseLinearPath

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def line():
    return PiecewiseLinearPath.line([1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_path(rng, d=1, knots=None, scale=1.0):
    """Random walk path with random knot times."""
    knots = knots or int(rng.integers(2, 12))
    inner = np.sort(rng.uniform(0.02, 0.98, size=knots - 2))
    times = np.concatenate([[0.0], inner, [1.0]])
    if np.any(np.diff(times) <= 1e-6):
        times = np.linspace(0, 1, knots)
    vals = np.cumsum(rng.standard_normal((knots, d)) * scale, axis=0)
    return PiecewiseLinearPath.from_samples(times, vals - vals[0])


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def record(number, passed, detail, seconds):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail} ({seconds:.1f} s)"
    ACCEPTANCE_LINES.append(line)
    print("\n" + line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
