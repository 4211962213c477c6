import pytest

from tplreg.harness import GroundTruth, benchmark
from tplreg.imagecore import extract_template, synthetic_scene
from tplreg.optim_core import OPTIMIZERS

# small analogue of the default 256x256 scene / 170x138 template pair
DESK_SCENE = 64
DESK_CENTER = (37.5, 37.5)
DESK_MAG = 2.0
DESK_TEMPLATE = (24, 20)
DESK_GT = GroundTruth(DESK_CENTER[0], DESK_CENTER[1], 1.0 / DESK_MAG)

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def desk_scene():
    return synthetic_scene(DESK_SCENE)


@pytest.fixture(scope="session")
def desk_template(desk_scene):
    return extract_template(desk_scene, *DESK_CENTER, DESK_MAG, *DESK_TEMPLATE)


@pytest.fixture(scope="session")
def desk_gt():
    return DESK_GT


@pytest.fixture(scope="session")
def desk_report(desk_scene, desk_template):
    """50 seeded runs of every optimizer plus the random baseline, base seed 0."""
    return benchmark(desk_scene, desk_template, DESK_GT, OPTIMIZERS, runs_per_algorithm=50, base_seed=0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
