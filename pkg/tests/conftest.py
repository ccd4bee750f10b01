import numpy as np
import pytest

from sliptsim.calibrate import calibrate, measured_targets


@pytest.fixture(scope="session")
def calibration():
    """Single shared calibration against the bundled measured targets."""
    return calibrate(measured_targets())


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
