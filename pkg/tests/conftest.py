import numpy as np
import pytest

from acsplit.spectral import LaplacianSpectrum


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=[1, 8, 64])
def spectrum(request):
    return LaplacianSpectrum(request.param)
