import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def bundle():
    from planar_degen.beltrami import build_counterexample

    return build_counterexample()


@pytest.fixture(scope="session")
def meshes():
    from planar_degen.mesh import build_disc_mesh

    cache = {}

    def get(h):
        if h not in cache:
            cache[h] = build_disc_mesh(h)
        return cache[h]

    return get


def disc_points(rng, n, radius, inner=0.0):
    r = np.sqrt(inner**2 + (radius**2 - inner**2) * rng.random(n))
    t = 2 * np.pi * rng.random(n)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def record(number, name, passed, detail=""):
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
