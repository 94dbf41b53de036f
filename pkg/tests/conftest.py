import numpy as np
import pytest

from tweezer_ising import YB171, TrapConfig

MHZ = 2 * np.pi * 1e6


@pytest.fixture(scope="session")
def species():
    return YB171


@pytest.fixture
def chain_trap():
    # tight radials, loose axial: a 5-ion linear chain
    return TrapConfig(omega_x=2.0 * MHZ, omega_y=1.7 * MHZ, omega_z=0.2 * MHZ, n_ions=5)


def fd_gradient(f, x, step):
    """Central-difference gradient of a scalar function of a flat array."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        d = np.zeros_like(x)
        d[i] = step
        g[i] = (f(x + d) - f(x - d)) / (2 * step)
    return g
