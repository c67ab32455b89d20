import numpy as np
import pytest

from spinsc.operator_algebra import (ModelParams, hamiltonian_operator,
                                     symbol_of)
from spinsc.phase_space import (bs_actions, bs_spectrum, classical_energy,
                                critical_energies, find_critical_points,
                                hyperbolic_points, integrate_flow,
                                level_set_branches, section, sphere_area)
from spinsc.spectrum import exact_spectrum

from conftest import HETERO, HOMO


def test_sphere_symplectic_area():
    assert abs(sphere_area() - 1.0) < 1e-8


def test_flow_energy_drift(homo_sym):
    e = -0.4
    branches = [b for b in level_set_branches(homo_sym, e) if b.closed]
    assert branches
    for br in branches:
        drift = max(abs(classical_energy(homo_sym, a) - e)
                    for a in br.abar[::10])
        assert drift < 1e-9


def test_action_residue_oracle():
    # pure Sz: orbits are circles |abar| = r and I0 = r^2/(1+r^2)
    sym = symbol_of(hamiltonian_operator(ModelParams(1.0)))
    for e in (-0.6, 0.0, 0.4):
        branches = [b for b in level_set_branches(sym, e) if b.closed]
        assert len(branches) == 1
        br = branches[0]
        r = np.mean(np.abs(br.abar))
        i0, _ = bs_actions(br, 0.0, sym)
        assert abs(abs(i0) - r * r / (1 + r * r)) < 1e-8


def test_bs_exact_for_pure_sz():
    # free spin: B-S must hit the exact spectrum {2m/n} to rounding
    sym = symbol_of(hamiltonian_operator(ModelParams(1.0)))
    n = 30
    levels = np.array(bs_spectrum(sym, n, (-0.75, 0.55)))
    exact = 2.0 * np.arange(-n // 2, n // 2 + 1) / n
    for e in levels:
        assert np.min(np.abs(exact - e)) < 1e-9


def test_bs_window_rejects_critical_energy(homo_sym):
    with pytest.raises(ValueError):
        bs_spectrum(homo_sym, 100, (-1.1, -0.9))


def test_homoclinic_critical_point_set(homo_sym):
    fps = find_critical_points(homo_sym)
    hps = hyperbolic_points(homo_sym)
    assert len(hps) == 1
    assert abs(complex(hps[0].abar)) < 1e-8
    assert abs(hps[0].energy + 1.0) < 1e-10
    assert len(fps) >= 3


def test_heteroclinic_hp_pair(hetero_sym):
    # two hyperbolic points at +-i/sqrt(3), shared energy -5/4
    hps = [fp for fp in hyperbolic_points(hetero_sym)
           if abs(fp.energy + 1.25) < 1e-9]
    assert len(hps) == 2
    locs = sorted((complex(fp.abar) for fp in hps), key=lambda z: z.imag)
    assert abs(locs[0] + 1j / np.sqrt(3)) < 1e-8
    assert abs(locs[1] - 1j / np.sqrt(3)) < 1e-8
    assert -1.25 in [round(e, 9) for e in critical_energies(hetero_sym)]


def test_level_set_branch_closure(homo_sym):
    for br in level_set_branches(homo_sym, -0.4):
        if br.closed:
            assert np.isfinite(br.period)
            assert abs(br.abar[0] - br.abar[-1]) < 1e-5
            assert br.t[-1] - br.t[0] == pytest.approx(br.period, rel=1e-6)


def test_separatrix_branches_end_on_hps(homo_sym):
    hp = hyperbolic_points(homo_sym)[0].abar
    branches = level_set_branches(homo_sym, -1.0)
    assert len(branches) >= 2
    for br in branches:
        if not br.closed:
            assert abs(br.abar[0] - hp) < 1e-3
            assert abs(br.abar[-1] - hp) < 1e-3


def test_integrate_flow_period_consistency(homo_sym):
    closed = [b for b in level_set_branches(homo_sym, -0.4) if b.closed]
    br = closed[0]
    path = integrate_flow(homo_sym, br.abar[0], tmax=2.5 * br.period)
    # the flow must return to the start after one period
    from scipy.interpolate import CubicSpline

    a_at = CubicSpline(path.t, path.abar.real)(br.period) \
        + 1j * CubicSpline(path.t, path.abar.imag)(br.period)
    assert abs(a_at - br.abar[0]) < 1e-5


def test_section_is_sphere_chart():
    a = np.array([0.3 + 0.1j, 2.0 - 1.0j])
    z = section(a)
    assert np.max(np.abs(z - np.conj(a) / (1 + np.abs(a) ** 2))) < 1e-14
