import numpy as np
import pytest

from epiorm.lightfield import LightField4D
from epiorm.synth import BandLimitedTexture, Layer, SyntheticScene, gen_lightfield


def plane_scene(d, seed=0, size=48, views=9, channels=3):
    return SyntheticScene([Layer(d, BandLimitedTexture(channels, seed))], size, size, views, views, channels, seed)


@pytest.fixture
def constant_lf():
    return LightField4D(np.full((9, 9, 16, 20, 3), 0.5))


@pytest.fixture(scope="session")
def plane_lf():
    """Fronto-parallel plane at disparity 1.0, 48x48 pixels."""
    return gen_lightfield(plane_scene(1.0, seed=11))


@pytest.fixture(scope="session")
def random_lf():
    rng = np.random.default_rng(5)
    return LightField4D(rng.random((9, 9, 40, 44, 3)))


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome; printed in the terminal summary."""

    def record(cid, passed, detail):
        _ACCEPTANCE.append((cid, bool(passed), detail))
        print(f"{cid}: {'PASS' if passed else 'FAIL'} - {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{cid}: {'PASS' if passed else 'FAIL'} - {detail}")
