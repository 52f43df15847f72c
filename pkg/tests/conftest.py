import logging

import numpy as np
import pytest

from rdmpt2 import exact, hamio, rdm

logging.getLogger("rdmpt2").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def h2():
    table, entry = hamio.load_fixture("h2_0.70")
    return table, entry


@pytest.fixture(scope="session")
def h2_fci(h2):
    table, _ = h2
    energy, amps = exact.fci_ground_state(table)
    basis = exact.SectorBasis.build(table.n_so, 2, 0)
    return energy, amps, basis


@pytest.fixture(scope="session")
def lih():
    table, entry = hamio.load_fixture("lih_1.5949")
    return table, entry


def random_rdm_pair(rng, n_so=4, n_elec=2):
    """A structurally valid (hermitian, antisymmetric) but unphysical RdmPair."""
    rho1 = rng.normal(size=(n_so, n_so))
    rho1 = 0.5 * (rho1 + rho1.T)
    rho2 = rng.normal(size=(n_so,) * 4)
    rho2 = rho2 - rho2.transpose(1, 0, 2, 3)
    rho2 = rho2 - rho2.transpose(0, 1, 3, 2)
    rho2 = 0.5 * (rho2 + rho2.transpose(2, 3, 0, 1))
    return rdm.RdmPair(rho1, rho2, rdm.RdmMeta(provenance="raw", n_electrons=n_elec))


def random_pure_2e_rdm(rng, n_so=4):
    """Exact RDMs of a random normalized 2-electron Sz=0 state."""
    basis = exact.SectorBasis.build(n_so, 2, 0)
    amps = rng.normal(size=len(basis))
    amps /= np.linalg.norm(amps)
    return exact.rdms_from_amplitudes(amps, basis)
