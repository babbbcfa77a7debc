import pytest

from omegalab import reference_model

Q = 0.05
PHI = 1.5
A = -1.0


@pytest.fixture(scope="session")
def model():
    return reference_model()
