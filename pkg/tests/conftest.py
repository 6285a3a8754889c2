import pytest

import coinfactory as cf


@pytest.fixture(scope="session")
def quad_scheme():
    return cf.scheme_from_function(cf.preset("quad"))


@pytest.fixture(scope="session")
def trig_scheme():
    return cf.scheme_from_function(cf.preset("trig"))


@pytest.fixture(scope="session")
def lin_scheme():
    return cf.scheme_from_function(cf.preset("lin"))


@pytest.fixture(scope="session")
def const_scheme():
    return cf.scheme_from_function(cf.preset("const13"))
