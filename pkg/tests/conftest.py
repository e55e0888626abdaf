import pytest

from pda_kit import netsim


@pytest.fixture(scope="session")
def arith_system():
    """Toy arith system with authority (ids 1..7, virtual id 7)."""
    system, result = netsim.build_arith_system(
        kappa=24, n=6, n_min=3, seed=20_240_501, with_authority=True
    )
    return system, result


@pytest.fixture(scope="session")
def plain_arith_system():
    """Toy arith system without authority (ids 1..6)."""
    system, result = netsim.build_arith_system(
        kappa=24, n=6, n_min=3, seed=20_240_502
    )
    return system, result


@pytest.fixture(scope="session")
def pda_system():
    """Toy framework system: kappa=16, six users."""
    system, result = netsim.build_pda_system(
        kappa=16, n=6, theta_min=3, seed=20_240_503, m_max=16
    )
    return system, result
