import numpy as np
import pytest

import phasekit as pk

# Fast grids for unit tests; the acceptance suite builds its own cycles at
# production resolution.
UNIT_DIVISOR = 1200


@pytest.fixture(scope="session")
def vdp1():
    sys_ = pk.vdp_system(1.0)
    state = pk.settle(sys_, np.array([0.1, 0.0]), 5, 0.005)
    lc = pk.find_period(sys_, state, 6.6633 / UNIT_DIVISOR, grid_size=256)
    return sys_, lc


@pytest.fixture(scope="session")
def vdp1_port():
    return pk.InjectionPort(state_index=0, gain=1.0)


@pytest.fixture(scope="session")
def vdp1_weak_sweep(vdp1, vdp1_port):
    """24-point sweep at a weak fixed charge, shared across unit tests."""
    sys_, lc = vdp1
    q = 0.04  # ~0.05 rad peak response for vdp mu=1 injected into x
    h = lc.T0 / 1000.0
    impulse = pk.ImpulseSpec(h=h, b=q / h, port=vdp1_port)
    curve = pk.sweep_prc(sys_, lc, impulse, n_points=24,
                         step=lc.T0 / UNIT_DIVISOR)
    return curve


@pytest.fixture(scope="session")
def vdp1_adjoint(vdp1, vdp1_port):
    sys_, lc = vdp1
    return pk.adjoint_ppv(sys_, lc, vdp1_port)
