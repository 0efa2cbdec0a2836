import numpy as np
import pytest

from dsrslab import experiments as xp
from dsrslab import reconstruction as rc
from dsrslab import sensing as sn


@pytest.fixture(scope="session")
def cycle80():
    t, c = xp.gen_cycle_scenario(80, seed=1)
    m = sn.assemble(t)
    z = xp.sample_with_noise(m, c, 0.0, seed=1)
    return t, c, m, z


@pytest.fixture(scope="session")
def cycle20():
    t, c = xp.gen_cycle_scenario(20, seed=3)
    m = sn.assemble(t)
    z = xp.sample_with_noise(m, c, 0.0, seed=3)
    return t, c, m, z


@pytest.fixture(scope="session")
def prism160():
    t, c = xp.gen_prism_scenario(160, seed=11)
    m = sn.assemble(t)
    z = xp.sample_with_noise(m, c, 0.0, seed=11)
    return t, c, m, z


@pytest.fixture(scope="session")
def cycle80_patch8(cycle80):
    _, _, m, _ = cycle80
    return rc.build_patch_operator(m, 8)
