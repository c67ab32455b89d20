import numpy as np
import pytest

from spinsc.hp_quantization import (CriticalAssembly, connection_matrix,
                                    linearize_at_hp, regularized_action)
from spinsc.numerics import DEFAULT_TOL
from spinsc.phase_space import hyperbolic_points


@pytest.fixture(scope="module")
def homo_lin(homo_sym):
    return linearize_at_hp(homo_sym, hyperbolic_points(homo_sym)[0])


@pytest.fixture(scope="module")
def homo_asm(homo_sym):
    return CriticalAssembly(homo_sym, -1.0, 400)


def test_det_t_unit(homo_lin):
    # relative bound: at large |eta| the matrix norm grows like e^{2 pi eta}
    n = 500
    for eps1 in np.linspace(-12.0, 12.0, 41):
        cm = connection_matrix(homo_lin, eps1, n)
        if cm.flag:
            continue
        det = np.linalg.det(cm.mat)
        scale = np.linalg.norm(cm.mat) ** 2
        assert abs(det - 1.0) <= DEFAULT_TOL.det_t_unit * max(1.0, scale)


def test_connection_entry_magnitude(homo_lin):
    for eps1 in (-6.0, -1.0, 0.0, 2.5, 6.0):
        cm = connection_matrix(homo_lin, eps1, 300)
        want = np.sqrt(1.0 + np.exp(-2.0 * np.pi * cm.eta))
        assert abs(abs(cm.c) - want) < 1e-12 * want


def test_connection_matrix_structure(homo_lin):
    cm = connection_matrix(homo_lin, 0.7, 300)
    assert cm.mat[0, 0] == 1.0
    assert abs(cm.mat[0, 1] + np.conj(cm.c)) < 1e-15
    assert abs(cm.mat[1, 0] - cm.c) < 1e-15
    assert abs(cm.mat[1, 1] + np.exp(-2 * np.pi * cm.eta)) < 1e-15


def test_sigma_reorientation_invariance(homo_sym, homo_asm):
    # rotating the log-regulator cut by pi flips sigma; the compensating
    # i pi sigma term must leave the regularized action unchanged
    r = homo_asm.records[0]
    li = homo_asm.lins[r.i_hp]
    base = regularized_action(r.branch, li, None, 400, homo_sym)
    for ang in (-np.pi, 3 * np.pi):
        alt = regularized_action(r.branch, li, None, 400, homo_sym,
                                 cut_angle_i=ang, cut_angle_j=ang)
        for eps1 in (-0.8, 0.0, 1.3):
            assert abs(base.value(eps1) - alt.value(eps1)) < 1e-8


def test_regularized_action_self_convergence(homo_sym, homo_asm):
    r = homo_asm.records[0]
    li = homo_asm.lins[r.i_hp]
    coarse = regularized_action(r.branch, li, None, 400, homo_sym,
                                n_pts=4096)
    fine = regularized_action(r.branch, li, None, 400, homo_sym,
                              n_pts=8192)
    assert abs(coarse.value(0.5) - fine.value(0.5)) < 1e-8


def test_eta_linear_in_eps1(homo_lin):
    # eta is affine in eps1 with slope 1/(4 rho^2 tau2)
    slope = (1.0 / (4 * homo_lin.rho ** 2 * homo_lin.tau2)).real
    e0 = homo_lin.eta(0.0)
    for eps1 in (-2.0, 1.0, 3.0):
        assert homo_lin.eta(eps1) == pytest.approx(e0 + slope * eps1,
                                                   abs=1e-12)


def test_assembly_branch_graph(homo_sym, hetero_sym):
    homo = CriticalAssembly(homo_sym, -1.0, 300)
    assert len(homo.lins) == 1
    assert len(homo.records) == 2      # two separatrix lobes
    het = CriticalAssembly(hetero_sym, -1.25, 300)
    assert len(het.lins) == 2
    assert len(het.records) == 4       # four heteroclinic branches
    for r in het.records:
        assert r.i_hp != r.j_hp


def test_critical_zeros_consistent_eta(homo_sym):
    from spinsc.hp_quantization import critical_spectrum

    n = 300
    zeros = critical_spectrum(homo_sym, n, -1.0, (-1.5, 1.5))
    assert zeros
    lin = linearize_at_hp(homo_sym, hyperbolic_points(homo_sym)[0])
    for z in zeros:
        assert z.eta == pytest.approx(lin.eta(z.eps1), abs=1e-9)
        assert z.eps == pytest.approx(-1.0 + z.eps1 / n, abs=1e-14)
