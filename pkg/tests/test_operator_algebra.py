import itertools

import numpy as np
import pytest

from spinsc.operator_algebra import (ModelParams, generator,
                                     hamiltonian_operator, identity_op,
                                     scaled_observable, symbol_of)


def _ladder_dense(name: str, n: int) -> np.ndarray:
    """Independent dense su(2) action on the monomial basis abar^k."""
    dim = n + 1
    m = np.zeros((dim, dim))
    for k in range(dim):
        if name == "Sz":
            m[k, k] = k - n / 2.0
        elif name == "S+" and k + 1 < dim:
            m[k + 1, k] = n - k
        elif name == "S-" and k - 1 >= 0:
            m[k - 1, k] = k
    return m


@pytest.mark.parametrize("name", ["Sz", "S+", "S-"])
@pytest.mark.parametrize("n", [5, 12, 40])
def test_generator_matrix_action(name, n):
    got = generator(name).matrix_image(n)
    assert np.max(np.abs(got - _ladder_dense(name, n))) < 1e-10 * n


@pytest.mark.parametrize("n", [7, 40])
def test_normal_ordering_word_oracle(n):
    # every word of length <= 4: the normal-ordered composition must act
    # exactly like the product of the single-generator matrices
    names = ["Sz", "S+", "S-"]
    ops = {nm: generator(nm) for nm in names}
    dense = {nm: _ladder_dense(nm, n) for nm in names}
    for length in (2, 3, 4):
        for word in itertools.product(names, repeat=length):
            op = ops[word[0]]
            ref = dense[word[0]]
            for nm in word[1:]:
                op = op.compose(ops[nm])
                ref = ref @ dense[nm]
            got = op.matrix_image(n)
            scale = max(1.0, np.max(np.abs(ref)))
            assert np.max(np.abs(got - ref)) < 1e-10 * scale, word


def test_commutation_relations():
    sz, sp_, sm = generator("Sz"), generator("S+"), generator("S-")
    assert sz.compose(sp_) - sp_.compose(sz) == sp_
    assert sz.compose(sm) - sm.compose(sz) == sm.scale(-1)
    assert sp_.compose(sm) - sm.compose(sp_) == sz.scale(2)


def test_casimir_is_scalar():
    import sympy as sy

    n_sym = sy.Symbol("n")
    sz, sp_, sm = generator("Sz"), generator("S+"), generator("S-")
    cas = sz.compose(sz) + (sp_.compose(sm) + sm.compose(sp_)).scale(
        sy.Rational(1, 2))
    for n in (3, 11, 40):
        s = n / 2.0
        got = cas.matrix_image(n)
        assert np.max(np.abs(got - s * (s + 1) * np.eye(n + 1))) < 1e-10 * n


def test_scaled_sz_classical_symbol():
    sym = symbol_of(scaled_observable("sz"))
    from spinsc.phase_space import section

    r = np.array([0.0, 0.5, 1.0, 2.0, 5.0])
    a = r * np.exp(0.7j)
    got = np.real(sym.h0(a, section(a)))
    want = (r ** 2 - 1.0) / (r ** 2 + 1.0)
    assert np.max(np.abs(got - want)) < 1e-12


def test_identity_operator():
    for n in (4, 20):
        assert np.max(np.abs(identity_op().matrix_image(n)
                             - np.eye(n + 1))) == 0.0


def test_hamiltonian_symbol_grading():
    sym = symbol_of(hamiltonian_operator(ModelParams(1, 4, 0.25, 5)))
    assert sym.min_order == 0
    # the classical limit at the north-pole-facing point abar = 0 is
    # eps = -h (spin fully down)
    assert abs(complex(sym.h0(0.0, 0.0)) + 1.0) < 1e-12


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(float("nan"))
