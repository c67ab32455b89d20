import numpy as np
import pytest

from spinsc.hp_quantization import CriticalAssembly
from spinsc.matrix_elements import (ObservableSpec, branch_fourier,
                                    critical_f0, effective_period,
                                    exact_f_k, observable_matrix,
                                    regular_f_k)

from conftest import HOMO


@pytest.fixture(scope="module")
def sz():
    return ObservableSpec.from_name("sz")


@pytest.mark.parametrize("name", ["sz", "sx", "sy"])
def test_observables_hermitian(name):
    ObservableSpec.from_name(name).check_hermitian(n=12)


def test_observable_matrix_free_spin_diagonal(sz):
    # s_z = 2 Sz / n is diagonal with entries 2m/n in the spin basis
    n = 14
    m = observable_matrix(sz, n)
    want = np.diag(2.0 * np.arange(-(n // 2), n // 2 + 1) / n)
    assert np.max(np.abs(m - want)) < 1e-12


def test_identity_observable_elements(spectrum_of):
    eig = spectrum_of(HOMO, 60)
    ident = ObservableSpec.identity()
    mat = observable_matrix(ident, 60)
    assert np.max(np.abs(mat - np.eye(61))) < 1e-12
    assert exact_f_k(eig, ident, 20, 0, mat) == pytest.approx(1.0, abs=1e-12)
    assert abs(exact_f_k(eig, ident, 20, 3, mat)) < 1e-12


def test_exact_hermiticity_pairs(spectrum_of, sz):
    eig = spectrum_of(HOMO, 60)
    mat = observable_matrix(sz, 60)
    for m, k in [(10, 2), (25, 5), (40, -3)]:
        a = exact_f_k(eig, sz, m, k, mat)
        b = exact_f_k(eig, sz, m + k, -k, mat)
        assert a == pytest.approx(np.conj(b), abs=1e-12)


def test_regular_fourier_consistency_order(homo_sym, spectrum_of, sz):
    # |f_k^sc - f_k^exact| must shrink with n at order >= 0.8
    eps = -0.4
    errs = []
    for n in (200, 400):
        eig = spectrum_of(HOMO, n)
        mat = observable_matrix(sz, n)
        m = int(np.argmin(np.abs(eig.values - eps)))
        worst = 0.0
        for k in (1, 2):
            fe = exact_f_k(eig, sz, m, k, mat)
            fs = regular_f_k(homo_sym, sz, eig.values[m], k)
            worst = max(worst, abs(fs - fe))
        errs.append(worst)
    order = np.log(errs[0] / errs[1]) / np.log(2.0)
    assert order >= 0.8


def test_regular_fourier_rejects_separatrix(homo_sym, sz):
    with pytest.raises(ValueError):
        regular_f_k(homo_sym, sz, -1.0, 1)


def test_branch_fourier_tail_invariance(homo_sym, sz):
    # doubling the end trim changes the transform only at the size of the
    # quadratic corrections to the exponential tail model: the analytic
    # tails replace whatever sampled segment is discarded
    asm = CriticalAssembly(homo_sym, -1.0, 400)
    r = asm.records[0]
    li, lj = asm.lins[r.i_hp], asm.lins[r.j_hp]
    g0 = branch_fourier(r.branch, li, lj, sz, omega=2.0)
    g1 = branch_fourier(r.branch, li, lj, sz, omega=2.0, trim=2e-3)
    g2 = branch_fourier(r.branch, li, lj, sz, omega=2.0, trim=4e-3)
    assert abs(g1 - g2) < 1e-5
    assert abs(g0 - g2) < 1e-5


def test_critical_f0_single_hp(homo_sym, sz):
    asm = CriticalAssembly(homo_sym, -1.0, 400)
    # the homoclinic HP sits at abar = 0 where s_z = -1
    assert critical_f0(sz, asm.lins) == pytest.approx(-1.0, abs=1e-10)


def test_effective_period():
    assert effective_period(2.0 * np.pi, 1) == pytest.approx(1.0)
    assert effective_period(-4.0 * np.pi, 2) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        effective_period(0.0, 1)
