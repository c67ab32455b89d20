"""End-to-end acceptance criteria with stated tolerances.

Each test states its quantitative bound next to the assertion; residual
tables for the spectral comparisons are written under test_artifacts/
for inspection.
"""

import itertools
import time
from pathlib import Path

import numpy as np
import pytest

from spinsc.cli import compare_records
from spinsc.hp_quantization import (CriticalAssembly, assembly_spectrum,
                                    connection_matrix, linearize_at_hp,
                                    regularized_action)
from spinsc.matrix_elements import (ObservableSpec, critical_f_k,
                                    effective_period, exact_f_k,
                                    observable_matrix)
from spinsc.numerics import log_gamma_complex
from spinsc.operator_algebra import ModelParams, generator
from spinsc.phase_space import (bs_spectrum, classical_energy,
                                hyperbolic_points, level_set_branches,
                                sphere_area)
from spinsc.spectrum import eigensystem, build_matrix, wavefunction_zeros

from conftest import HETERO, HOMO

ARTIFACTS = Path(__file__).resolve().parent.parent / "test_artifacts"


def _dump_residuals(name: str, recs: list) -> None:
    ARTIFACTS.mkdir(exist_ok=True)
    with open(ARTIFACTS / name, "w") as fh:
        fh.write("eps_exact,eps_pred,eta,residual,local_spacing,"
                 "residual_over_spacing\n")
        for r in recs:
            fh.write(",".join(f"{r[k]:.17g}" for k in
                              ("eps_exact", "eps_pred", "eta", "residual",
                               "local_spacing", "residual_over_spacing"))
                     + "\n")


# 1 ---------------------------------------------------------------------
def test_free_spin_spectrum_exact():
    t0 = time.time()
    for n in (2, 10, 100):
        eig = eigensystem(build_matrix(ModelParams(1.0), n))
        want = 2.0 * np.arange(-(n // 2), n // 2 + 1) / n
        assert np.max(np.abs(eig.values - want)) < 1e-12
    assert time.time() - t0 < 1.0


# 2 ---------------------------------------------------------------------
def test_homoclinic_quantization_fig2_up(homo_sym):
    recs, _ = compare_records(homo_sym, HOMO, 500, 2.0,
                              method="closed_form")
    _dump_residuals("homoclinic_n500_residuals.csv", recs)
    assert len(recs) >= 8
    worst = max(r["residual_over_spacing"] for r in recs)
    assert worst < 0.10          # 10% of local mean level spacing


# 3 ---------------------------------------------------------------------
def test_heteroclinic_quantization_fig2_down(hetero_sym):
    recs, _ = compare_records(hetero_sym, HETERO, 500, 2.0,
                              method="determinant", eps_c=-1.25)
    _dump_residuals("heteroclinic_n500_residuals.csv", recs)
    inner = [r for r in recs if abs(r["eta"]) <= 1.0]
    outer = [r for r in recs if 1.0 < abs(r["eta"]) <= 2.0]
    assert len(inner) >= 6 and len(outer) >= 6
    worst = max(r["residual_over_spacing"] for r in inner)
    assert worst < 0.15          # 15% of local spacing inside |eta| <= 1
    # monotone trend: the mean residual grows from the inner to the
    # outer eta band
    mean_in = np.mean([r["residual_over_spacing"] for r in inner])
    mean_out = np.mean([r["residual_over_spacing"] for r in outer])
    assert mean_out > mean_in


# 4 ---------------------------------------------------------------------
@pytest.mark.parametrize("n", [250, 500])
def test_two_path_consistency(homo_sym, n):
    asm = CriticalAssembly(homo_sym, -1.0, n)
    za = assembly_spectrum(asm, (-3.0, 3.0), "closed_form")
    zb = assembly_spectrum(asm, (-3.0, 3.0), "determinant")
    assert len(za) == len(zb) >= 10
    diff = np.max(np.abs(np.array([z.eps1 for z in za])
                         - np.array([z.eps1 for z in zb])))
    assert diff < 1e-6           # identical zero sets in eps1


# 5 ---------------------------------------------------------------------
def test_critical_spacing_law(homo_sym, spectrum_of):
    lin = linearize_at_hp(homo_sym, hyperbolic_points(homo_sym)[0])
    ns = [250, 500, 1000, 2000]
    spacings = []
    for n in ns:
        ev = spectrum_of(HOMO, n).values
        eta = np.array([lin.eta(n * (e + 1.0)) for e in ev])
        sel = ev[np.abs(eta) <= 1.0]
        assert len(sel) >= 4
        spacings.append(float(np.mean(np.diff(sel))))
    x = np.log([n * np.log(n) for n in ns])
    slope = np.polyfit(x, np.log(spacings), 1)[0]
    assert abs(slope + 1.0) < 0.15   # exponent within 15% of -1


# 6 ---------------------------------------------------------------------
def test_eta_matches_caption_closed_form(homo_sym):
    lin = linearize_at_hp(homo_sym, hyperbolic_points(homo_sym)[0])
    for eps1 in np.linspace(-3.0, 3.0, 61):
        assert abs(lin.eta(eps1) + (1.0 + eps1) / 3.0) < 1e-8


# 7 ---------------------------------------------------------------------
def test_matrix_elements_fig3(homo_sym, spectrum_of):
    sz = ObservableSpec.from_name("sz")
    ks = range(1, 7)
    ratios = {}
    amp_exact = {}
    amp_sc = {}
    for n in (1000, 2000):
        eig = spectrum_of(HOMO, n)
        mat = observable_matrix(sz, n)
        asm = CriticalAssembly(homo_sym, -1.0, n)
        m = int(np.argmin(np.abs(eig.values + 1.0)))
        rr, ae, asc = [], [], []
        for k in ks:
            omega = float(n * (eig.values[m + k] - eig.values[m]))
            fe = abs(exact_f_k(eig, sz, m, k, mat))
            fs = abs(critical_f_k(asm, sz, omega,
                                  effective_period(omega, k)))
            rr.append(max(fs / fe, fe / fs))
            ae.append(fe)
            asc.append(fs)
        ratios[n], amp_exact[n], amp_sc[n] = rr, ae, asc
    # predictions track the exact elements within a factor 1.5 at the
    # larger n, and the agreement improves with n
    assert max(ratios[2000]) < 1.5
    assert max(ratios[2000]) < max(ratios[1000])
    # downward amplitude shift with n, consistent with the 1/ln n
    # weight of the critical state: the prediction scales by the
    # effective-period ratio, which must match ln(1000)/ln(2000) to 15%
    shift = np.mean([amp_sc[2000][i] / amp_sc[1000][i]
                     for i in range(len(ks))])
    assert abs(shift - np.log(1000) / np.log(2000)) < 0.15
    for i, k in enumerate(ks):
        if k % 2 == 0:
            assert amp_exact[2000][i] < amp_exact[1000][i]


# 8 ---------------------------------------------------------------------
def test_regular_bs_convergence_order(homo_sym, spectrum_of):
    win = (-0.6, -0.2)
    ns = [100, 200, 400, 800]
    errs = []
    for n in ns:
        bs = np.array(bs_spectrum(homo_sym, n, win))
        ev = spectrum_of(HOMO, n).values
        inner = bs[(bs > win[0] + 0.02) & (bs < win[1] - 0.02)]
        assert len(inner) >= 10
        errs.append(max(np.min(np.abs(ev - b)) for b in inner))
    order = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert order >= 1.8


# 9 ---------------------------------------------------------------------
def test_property_suite(homo_sym):
    t0 = time.time()
    # sphere symplectic area = 1
    assert abs(sphere_area() - 1.0) < 1e-8
    # |Gamma(1/2 + i eta)|^2 = pi / cosh(pi eta)
    for eta in np.linspace(-4.0, 4.0, 17):
        lhs = 2.0 * log_gamma_complex(0.5 + 1j * eta).real
        assert abs(lhs - np.log(np.pi / np.cosh(np.pi * eta))) < 1e-10
    # det T = 1 (relative to the squared matrix norm)
    lin = linearize_at_hp(homo_sym, hyperbolic_points(homo_sym)[0])
    for eps1 in np.linspace(-8.0, 8.0, 17):
        cm = connection_matrix(lin, eps1, 400)
        det = np.linalg.det(cm.mat)
        assert abs(det - 1.0) <= 1e-10 * max(1.0, np.linalg.norm(cm.mat) ** 2)
    # flow energy drift < 1e-9
    br = [b for b in level_set_branches(homo_sym, -0.4) if b.closed][0]
    assert max(abs(classical_energy(homo_sym, a) - (-0.4))
               for a in br.abar[::20]) < 1e-9
    # normal-ordering oracle equivalence at n = 40
    n = 40
    dense = {}
    for nm in ("Sz", "S+", "S-"):
        m = np.zeros((n + 1, n + 1))
        for k in range(n + 1):
            if nm == "Sz":
                m[k, k] = k - n / 2.0
            elif nm == "S+" and k < n:
                m[k + 1, k] = n - k
            elif nm == "S-" and k > 0:
                m[k - 1, k] = k
        dense[nm] = m
    ops = {nm: generator(nm) for nm in dense}
    for w in itertools.product(dense, repeat=3):
        op = ops[w[0]].compose(ops[w[1]]).compose(ops[w[2]])
        ref = dense[w[0]] @ dense[w[1]] @ dense[w[2]]
        scale = max(1.0, np.max(np.abs(ref)))
        assert np.max(np.abs(op.matrix_image(n) - ref)) < 1e-10 * scale
    # sigma-reorientation invariance of the regularized action
    asm = CriticalAssembly(homo_sym, -1.0, 400)
    r = asm.records[0]
    li = asm.lins[r.i_hp]
    base = regularized_action(r.branch, li, None, 400, homo_sym)
    flip = regularized_action(r.branch, li, None, 400, homo_sym,
                              cut_angle_i=-np.pi, cut_angle_j=-np.pi)
    for eps1 in (-1.0, 0.0, 2.0):
        assert abs(base.value(eps1) - flip.value(eps1)) < 1e-8
    assert time.time() - t0 < 60.0


# 10 --------------------------------------------------------------------
def _median_curve_residual(roots: np.ndarray, k: int = 6) -> float:
    """Median distance of each root to the straight line fitted through
    its k nearest neighbors: a local model of the cut curves the zeros
    condense on."""
    pts = np.column_stack([roots.real, roots.imag])
    res = []
    for p in pts:
        d = np.hypot(*(pts - p).T)
        nb = pts[np.argsort(d)[1:k + 1]]
        c = nb.mean(axis=0)
        _, _, vt = np.linalg.svd(nb - c)
        t = vt[0]
        q = p - c
        res.append(abs(t[0] * q[1] - t[1] * q[0]))
    return float(np.median(res))


def test_wavefunction_zero_condensation(spectrum_of):
    n = 120
    eig = spectrum_of(HOMO, n)
    idx_crit = int(np.argmin(np.abs(eig.values + 1.0)))
    idx_reg = int(np.argmin(np.abs(eig.values + 0.4)))
    pr = wavefunction_zeros(eig.vectors[:, idx_crit], n)
    assert len(pr.roots) == n            # exactly 120 roots
    assert np.max(pr.residuals) < 1e-8   # scaled residuals
    baseline = wavefunction_zeros(eig.vectors[:, idx_reg], n)
    m_crit = _median_curve_residual(pr.roots[np.abs(pr.roots) < 10])
    m_reg = _median_curve_residual(
        baseline.roots[np.abs(baseline.roots) < 10])
    # condensation: critical roots hug their cut curves at least as
    # tightly (within 3x) as the regular-state baseline
    assert m_crit < 3.0 * m_reg
