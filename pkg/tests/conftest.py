import pytest

from shadowpatch import appsim


@pytest.fixture()
def shop():
    return appsim.load_shop_program()


@pytest.fixture()
def store():
    return appsim.initial_store()


@pytest.fixture(scope="session")
def workload42():
    return appsim.generate_workload("shop", 42)
