import numpy as np
import pytest
from skimage import data


@pytest.fixture(scope="session")
def camera():
    """512x512 natural grayscale test image in [0, 1]."""
    return data.camera().astype(np.float64) / 255.0


@pytest.fixture(scope="session")
def crop128(camera):
    return camera[100:228, 100:228].copy()
