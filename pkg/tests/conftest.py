import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ringscft import ScfConfig, assemble_tensors, build_basis, desk_channels, scf_iterate  # noqa: E402


@pytest.fixture(scope="session")
def desk():
    return assemble_tensors(build_basis(desk_channels()))


@pytest.fixture(scope="session")
def desk_sph():
    return assemble_tensors(build_basis(desk_channels(spherical_only=True)))


@pytest.fixture(scope="session")
def hydrogen(desk):
    return scf_iterate(ScfConfig(Z=1), desk)


@pytest.fixture(scope="session")
def helium(desk):
    return scf_iterate(ScfConfig(Z=2), desk)


@pytest.fixture(scope="session")
def lithium_sph(desk_sph):
    return scf_iterate(ScfConfig(Z=3, spherical_only=True), desk_sph)
