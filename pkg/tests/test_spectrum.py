import numpy as np
import pytest

from spinsc.operator_algebra import ModelParams
from spinsc.spectrum import (CoherentPolynomial, build_matrix,
                             coherent_wavefunction, default_hp_radius,
                             eigensystem, exact_spectrum, husimi_weight,
                             wavefunction_zeros)

from conftest import HOMO


@pytest.mark.parametrize("n", [10, 35, 60])
def test_banded_against_dense_oracle(n):
    m = build_matrix(HOMO, n)
    eig = eigensystem(m)
    ref = np.linalg.eigvalsh(m.dense())
    assert np.max(np.abs(eig.values - ref)) < 1e-10
    assert eig.residual(m) < 1e-10


def test_eigenvector_orthonormality():
    eig = eigensystem(build_matrix(HOMO, 50))
    g = eig.vectors.T @ eig.vectors
    assert np.max(np.abs(g - np.eye(51))) < 1e-10


def test_free_spin_spectrum():
    n = 10
    eig = exact_spectrum(ModelParams(1.0), n)
    want = 2.0 * np.arange(-(n // 2), n // 2 + 1) / n
    assert np.max(np.abs(eig.values - want)) < 1e-12


def test_trace_consistency():
    m = build_matrix(HOMO, 40)
    eig = eigensystem(m)
    assert abs(np.sum(eig.values) - m.trace()) < 1e-10 * 40


def test_coherent_norm_identity():
    # resolution of identity: whole-sphere Husimi weight of a normalized
    # state is exactly 1
    eig = exact_spectrum(HOMO, 40)
    w = husimi_weight(eig.vectors[:, 17], 0j, np.inf, 40)
    assert abs(w - 1.0) < 1e-6


def test_disc_weight_closed_form():
    # the m = -s basis state has |Psi|^2 uniform in the u = r^2/(1+r^2)
    # variable; its unit-disc weight is 1 - 2^-(n+1)
    n = 20
    state = np.zeros(n + 1)
    state[0] = 1.0
    w = husimi_weight(state, 0j, 1.0, n)
    assert abs(w - (1.0 - 2.0 ** (-(n + 1)))) < 1e-8


def test_husimi_weight_radius_monotone():
    eig = exact_spectrum(HOMO, 80)
    i = int(np.argmin(np.abs(eig.values + 1.0)))
    r = default_hp_radius(80)
    ws = [husimi_weight(eig.vectors[:, i], 0j, f * r, 80)
          for f in (0.5, 1.0, 2.0)]
    assert 0.0 < ws[0] < ws[1] < ws[2] <= 1.0 + 1e-8


def test_critical_state_hp_localization(spectrum_of):
    # the critical eigenstate accumulates weight at the hyperbolic point
    # (growing slowly with n); a mid-well regular state carries none
    weights = []
    for n in (150, 300):
        eig = spectrum_of(HOMO, n)
        i = int(np.argmin(np.abs(eig.values + 1.0)))
        j = int(np.argmin(np.abs(eig.values + 0.4)))
        wc = husimi_weight(eig.vectors[:, i], 0j, 0.3, n)
        wr = husimi_weight(eig.vectors[:, j], 0j, 0.3, n)
        assert wc > 0.3
        assert wr < 1e-8
        weights.append(wc)
    assert weights[1] > weights[0]


def test_coherent_wavefunction_roots_count():
    n = 24
    eig = exact_spectrum(HOMO, n)
    pr = wavefunction_zeros(eig.vectors[:, 11], n)
    assert len(pr.roots) == n
    assert np.max(pr.residuals) < 1e-8


def test_coherent_polynomial_evaluation():
    n = 12
    state = np.zeros(n + 1)
    state[3] = 1.0
    psi = coherent_wavefunction(state, n)
    assert isinstance(psi, CoherentPolynomial)
    # single-m state: |Psi(a)|^2 proportional to r^6 binom(n,3)
    val = psi.evaluate(np.array([0.5 + 0.0j]))
    from scipy.special import comb

    assert abs(abs(val[0]) - np.sqrt(comb(n, 3)) * 0.5 ** 3) < 1e-10
