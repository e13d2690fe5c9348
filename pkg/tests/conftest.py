import warnings

import pytest

from bimodal_hydro.params import ActuatorParams
from bimodal_hydro.scenarios import BUILTIN, load_scenario
from bimodal_hydro.simulator import run_scenario


@pytest.fixture(scope="session")
def params():
    return ActuatorParams()


@pytest.fixture(scope="session")
def traces(params):
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name in BUILTIN:
            out[name] = run_scenario(load_scenario(name), params)
    return out
