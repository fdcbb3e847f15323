import numpy as np
import pytest

from vortexcore import (PotentialEvaluator, VortexConfig, make_domain, solve_background,
                        solve_profile, vn_preset)
from vortexcore.ansatz import ScaleParams
from vortexcore.solver import continue_in_eps

SWEEP = (0.1, 0.07, 0.05)

# one summary line per acceptance criterion, echoed after the run
CRITERIA_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def disk128():
    return make_domain("disk", {"radius": 1.0}, 128)


@pytest.fixture(scope="session")
def disk256():
    return make_domain("disk", {"radius": 1.0}, 256)


@pytest.fixture(scope="session")
def ev_disk(disk128):
    return PotentialEvaluator(disk128, "analytic-disk")


@pytest.fixture(scope="session")
def ev_disk_grid(disk128):
    return PotentialEvaluator(disk128, "grid-harmonic")


@pytest.fixture(scope="session")
def ev_disk256(disk256):
    return PotentialEvaluator(disk256, "analytic-disk")


@pytest.fixture(scope="session")
def zero_flow(disk128, ev_disk):
    return solve_background(disk128, vn_preset(disk128, "zero"), ev_disk)


@pytest.fixture(scope="session")
def zero_flow256(disk256, ev_disk256):
    return solve_background(disk256, vn_preset(disk256, "zero"), ev_disk256)


@pytest.fixture(scope="session")
def profile2():
    return solve_profile(2.0)


@pytest.fixture(scope="session")
def centered():
    return VortexConfig([1.0], [[0.0, 0.0]])


@pytest.fixture(scope="session")
def disk_sweep(ev_disk256, zero_flow256, profile2, centered):
    """Converged m = 1 disk solutions at eps = 0.1, 0.07, 0.05 on the 256 grid."""
    return continue_in_eps(ev_disk256, zero_flow256, centered, profile2, SWEEP)


@pytest.fixture(scope="session")
def strain_pair():
    """Unit disk with a sin(2t) boundary flux: a symmetric vortex pair has a
    critical point of W on the x axis."""
    dom = make_domain("disk", {"radius": 1.0}, 256)
    ev = PotentialEvaluator(dom)
    flow = solve_background(dom, vn_preset(dom, "sin2", 2.0), ev)
    return dom, ev, flow


def scale(eps, p=2.0):
    return ScaleParams(eps, p)


def random_points(rng, n, rmax=0.8):
    r = rmax * np.sqrt(rng.uniform(0.0, 1.0, n))
    t = rng.uniform(0.0, 2 * np.pi, n)
    return np.column_stack([r * np.cos(t), r * np.sin(t)])
