import pytest

from rrlevy.identities import IdentityContext
from rrlevy.model import ModelSpec

M1 = ModelSpec(sigma=0.0, drift=1.5, jumps=((1.0, 1.0),), delta=0.25, b=1.0)
M1_DIFFUSIVE = M1.with_(sigma=0.5)
TWO_PHASE = ModelSpec(sigma=0.0, drift=2.0, jumps=((0.6, 1.0), (0.4, 3.0)), delta=0.5, b=1.0)
DRIFT_ONLY = ModelSpec(sigma=0.0, drift=1.5, jumps=(), delta=0.25, b=1.0)
ALL_MODELS = {"m1": M1, "m1_diffusive": M1_DIFFUSIVE, "two_phase": TWO_PHASE}


@pytest.fixture(scope="session")
def m1():
    return M1


@pytest.fixture(scope="session")
def ctx_m1():
    return IdentityContext(M1)


@pytest.fixture(scope="session")
def ctx_diffusive():
    return IdentityContext(M1_DIFFUSIVE)
