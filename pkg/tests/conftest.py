import os

import numpy as np
import pytest

from gmwb_hhw.contract import ContractParams, MortalityTable
from gmwb_hhw.model import HhwParams


def pytest_collection_modifyitems(config, items):
    if os.environ.get("GMWB_RUN_SLOW"):
        return
    skip = pytest.mark.skip(reason="slow check; set GMWB_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def base_params() -> HhwParams:
    """The demo market parameterization used across the test suite."""
    return HhwParams(v0=0.05, kv=2.0, thetav=0.05, omegav=0.5, rhov=-0.55,
                     r0=0.02, kr=0.15, omegar=0.015, rhor=0.2)


@pytest.fixture
def base_contract() -> ContractParams:
    return ContractParams(P=100.0, T=10, alpha=0.035, kappa=0.10,
                          mortality=MortalityTable.zero(10))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)
