import numpy as np
import pytest

from tactile import calib, synthgel

BALL_RADIUS_MM = synthgel.CALIBRATION_BALL_DIAMETER_MM / 2.0


@pytest.fixture(scope="session")
def small_model():
    return synthgel.SensorModel.default(320, 240)


@pytest.fixture(scope="session")
def small_layout():
    return synthgel.MarkerLayout()


@pytest.fixture(scope="session")
def small_reference(small_model):
    return synthgel.render_reference(small_model)


@pytest.fixture(scope="session")
def small_reference_markers(small_model, small_layout):
    return synthgel.render_reference(small_model, small_layout)


@pytest.fixture(scope="session")
def small_table(small_model, small_reference):
    """Lookup table from 5 noiseless presses on the 320x240 sensor."""
    centers = synthgel.random_press_centers(small_model, 5, seed=11)
    presses = [(synthgel.render_press(small_model, synthgel.sphere_press(c))[0], small_reference, BALL_RADIUS_MM)
               for c in centers]
    return calib.build_lookup(presses)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
