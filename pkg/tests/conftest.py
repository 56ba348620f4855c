import pytest

from gigopt.experiments import prop5_instance, prop5_policy, canonical_instance


@pytest.fixture(scope="session")
def canon():
    return canonical_instance()


@pytest.fixture(scope="session")
def prop5():
    return prop5_instance(r=1.0, alpha=0.7)


@pytest.fixture(scope="session")
def prop5_cycle():
    return prop5_policy(r=1.0)
