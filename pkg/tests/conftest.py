import pytest

from spinsc.operator_algebra import (ModelParams, hamiltonian_operator,
                                     symbol_of)
from spinsc.spectrum import exact_spectrum

# the two pinned parameter sets used throughout: a single hyperbolic
# point with a homoclinic separatrix, and a symmetric pair of hyperbolic
# points joined by heteroclinic branches
HOMO = ModelParams(1.0, 4.0, 0.25, 5.0)
HETERO = ModelParams(1.0, 5.0, 2.0, 6.0)


@pytest.fixture(scope="session")
def homo_sym():
    return symbol_of(hamiltonian_operator(HOMO))


@pytest.fixture(scope="session")
def hetero_sym():
    return symbol_of(hamiltonian_operator(HETERO))


_spectra: dict = {}


@pytest.fixture(scope="session")
def spectrum_of():
    """Session-cached exact eigensystems keyed by (params, n)."""

    def get(params: ModelParams, n: int):
        key = (params.h, params.gamma_x, params.gamma_y, params.mu, n)
        if key not in _spectra:
            _spectra[key] = exact_spectrum(params, n)
        return _spectra[key]

    return get
