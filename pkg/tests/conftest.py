import numpy as np
import pytest

from ctte.core import JointSpikeRecord, SpikeTrain
from ctte.models import GaussianModelParams, RefractoryModelParams


@pytest.fixture
def refractory_params():
    return RefractoryModelParams(lambda_y=0.1, a=0.5, tau=1.0, tau_r=1.5)


@pytest.fixture
def gaussian_params():
    return GaussianModelParams(lambda_base=0.5, m=5.0, sigma=0.1, t_cut=1.0,
                               lambda_y=1.0)


@pytest.fixture
def small_record():
    return JointSpikeRecord(
        x=SpikeTrain(0.0, 5.0, [1.0, 2.5, 4.0]),
        y=SpikeTrain(0.0, 5.0, [0.6, 3.1]),
    )
