import numpy as np
import pytest

from ssmuse.config import desk_sequence_params
from ssmuse.energy import NetworkArch, init_network
from ssmuse.forward import make_coil_maps, make_radial_trajectory
from ssmuse.seqsim import build_dictionary, compute_temporal_basis

from helpers import random_complex

SMALL_ARCH = NetworkArch(layers=((2, 8, 3), (8, 2, 3)))


@pytest.fixture(scope="session")
def tiny_seq():
    return desk_sequence_params(16)


@pytest.fixture(scope="session")
def tiny_dictionary(tiny_seq):
    return build_dictionary(np.geomspace(0.1, 5.0, 24), tiny_seq)


@pytest.fixture(scope="session")
def tiny_basis(tiny_dictionary):
    return compute_temporal_basis(tiny_dictionary, 3)


@pytest.fixture(scope="session")
def tiny_traj():
    # 16 frames of 2 spokes, readout 8, on an 8^3 grid with 8 kz planes.
    return make_radial_trajectory(16, 2, 8, 8, ordering_seed=1, n_kz=8)


@pytest.fixture(scope="session")
def tiny_coils():
    return make_coil_maps((8, 8, 8), 2)


@pytest.fixture(scope="session")
def tiny_u(tiny_basis):
    rng = np.random.default_rng(42)
    return random_complex(rng, (8, 8, 8, tiny_basis.rank), scale=0.3)


@pytest.fixture(scope="session")
def small_params():
    return init_network(SMALL_ARCH, seed=0)
