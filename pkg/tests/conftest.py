from __future__ import annotations

import numpy as np
import pytest

from spinometry.geometry import View
from synth import keypoint_set_from_raster

#: Hand-checkable raster configuration used across the suite.
FIXTURE_RASTER = {
    "C7": (130.0, 10.0),
    "T1": (108.0, 20.0),
    "L1_ANT": (105.0, 30.0),
    "L1_POST": (88.0, 32.0),
    "L1_MID": (96.0, 45.0),
    "S1_ANT": (110.0, 95.0),
    "S1_POST": (90.0, 85.0),
    "FEM_L": (120.0, 150.0),
    "FEM_R": (124.0, 154.0),
}
FIXTURE_SPACING = 3.730

#: Frozen outputs of tests/oracles.py:oracle_parameters on FIXTURE_RASTER.
FIXTURE_EXPECTED = {
    "SVA": 10.723860589812332,
    "PT": 19.536654938128386,
    "SS": 26.56505117707799,
    "PI": 46.101706115206376,
    "LL": 33.274887984834926,
    "T1PA": 13.482463044013553,
    "L1PA": 5.879012432316234,
}


@pytest.fixture
def fixture_set():
    return keypoint_set_from_raster(FIXTURE_RASTER, spacing=FIXTURE_SPACING,
                                    view=View.WHOLE_SPINE)


@pytest.fixture
def rng():
    return np.random.default_rng(20240117)
