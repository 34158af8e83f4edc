import numpy as np
import pytest

from vivrom.mesh import cartesian_mesh, ogrid_mesh


@pytest.fixture(scope="session")
def small_ogrid():
    return ogrid_mesh(n_theta=24, n_radial=6, x_min=-5.0, x_max=10.0, half_height=5.0)


@pytest.fixture(scope="session")
def channel():
    return cartesian_mesh(12, 6, 2.0, 1.0, patch_names=("inlet", "outlet", "bottom", "top"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line ``CRITERION n: PASS|FAIL title (detail)``."""

    def record(n, title, passed, detail):
        line = f"CRITERION {n}: {'PASS' if passed else 'FAIL'} {title} ({detail})"
        request.config.acceptance_lines[n] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
