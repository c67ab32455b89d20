"""Quantization near critical energies through hyperbolic points.

Near a hyperbolic point (HP) of the classical energy the WKB ansatz
breaks down; the local model is a complexified parabolic barrier whose
solutions connect the incoming and outgoing WKB branches through a 2x2
connection matrix.  Chaining these local relations with the regularized
action integrals along separatrix branches yields a global compatibility
determinant D whose zeros are the semiclassical eigenvalues at distance
O(1/n) from the critical energy.

All epsilon_1 dependence (eps1 = n (eps - eps_c)) is affine or explicit,
so branch geometry and action integrals are computed once per model and
reused across the root scan.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .numerics import DEFAULT_TOL, RootBracket, find_root, log_gamma_complex
from .operator_algebra import GradedSymbol
from .phase_space import (FixedPointInfo, OrbitBranch, Surface, bs_actions,
                          find_critical_points, hyperbolic_directions,
                          level_set_branches, section, surface_of)


# ----------------------------------------------------------------------
# local linearization
# ----------------------------------------------------------------------

@dataclass
class HPLinearization:
    """Quadratic normal form tau2 zeta'^2 + tau0 beta^2 + (tau00-eps1)/n.

    ``gauge`` is the coefficient a of the quadratic gauge polynomial
    p(beta) = zeta_i beta + a beta^2 removing the linear and cross terms.
    """

    hp: FixedPointInfo
    tau2: complex
    tau0: complex
    tau00: complex
    rho: float
    gauge: complex
    rate: float              # unstable Lyapunov rate of the reduced flow
    zeta_i: complex

    def eta(self, eps1: float) -> float:
        val = (eps1 - self.tau00) / (4 * self.rho ** 2 * self.tau2)
        if abs(val.imag) > 1e-8 * max(1.0, abs(val)):
            raise ValueError(f"renormalized energy not real: {val}")
        return float(val.real)


def linearize_at_hp(sym: GradedSymbol, hp: FixedPointInfo) -> HPLinearization:
    """Local normal form of the symbol at a hyperbolic point.

    Expands H(abar_i + beta, zeta_i + dz) to second order; the gauge
    polynomial p(beta) = zeta_i beta + a beta^2 with a = -B/(2C) removes
    the linear and cross terms, leaving tau2 = C/2, tau0 = (AC-B^2)/(2C)
    and the 1/n constant tau00 = H1(hp) - B/2 (normal-ordering shift of
    the gauged quadratic operator).
    """
    if hp.kind != "hyperbolic":
        raise ValueError("linearization requires a hyperbolic point")
    srf = surface_of(sym)
    ai = complex(hp.abar)
    zi = complex(section(ai))
    A = complex(srf.h0_aa(ai, zi))
    B = complex(srf.h0_az(ai, zi))
    C = complex(srf.h0_zz(ai, zi))
    if abs(C) < 1e-12:
        raise ValueError("tau2 vanishes: non-generic hyperbolic point")
    tau2 = C / 2
    tau0 = (A * C - B * B) / (2 * C)
    tau00 = complex(srf.h1(ai, zi)) - B / 2
    rho = float(abs(tau0 / (4 * tau2)) ** 0.25)
    a_gauge = -B / (2 * C)
    # gauge residual check: quadratic form in (beta, dz') after the shift
    g = -B / C
    cross = B + C * g
    if abs(cross) > 1e-10 * max(abs(A), abs(B), abs(C)):
        raise AssertionError("gauge transform left a residual cross term")
    rate, _, _ = hyperbolic_directions(srf, hp)
    return HPLinearization(hp=hp, tau2=tau2, tau0=tau0, tau00=tau00,
                           rho=rho, gauge=a_gauge, rate=rate, zeta_i=zi)


# ----------------------------------------------------------------------
# connection matrix
# ----------------------------------------------------------------------

@dataclass
class ConnectionMatrix:
    mat: np.ndarray
    eta: float
    c: complex
    flag: str = ""


def connection_matrix(lin: HPLinearization, eps1: float,
                      n: int) -> ConnectionMatrix:
    """T = [[1, -conj(c)], [c, -exp(-2 pi eta)]] mapping (in_R, in_L) to
    (out_L, out_R), with c from the parabolic-barrier asymptotics."""
    if n < 1:
        raise ValueError("n must be >= 1")
    eta = lin.eta(eps1)
    if abs(eta) > DEFAULT_TOL.eta_overflow:
        flag = "eta_overflow"
        if eta > 0:
            mat = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
            return ConnectionMatrix(mat, eta, 0j, flag)
        big = np.exp(2 * np.pi * DEFAULT_TOL.eta_overflow)
        mat = np.array([[1.0, -big], [big, -big ** 2]], dtype=complex)
        return ConnectionMatrix(mat, eta, big + 0j, flag)
    # |c|^2 = (2 e^{-pi eta}/pi) cosh^2(pi eta) |Gamma(1/2+i eta)|^2
    #       = 1 + e^{-2 pi eta} exactly, by |Gamma(1/2+i eta)|^2 =
    # pi/cosh(pi eta); using the identity for the magnitude keeps
    # det T = 1 to rounding even when e^{-2 pi eta} is large
    log_mag = 0.5 * np.log1p(np.exp(-2 * np.pi * eta))
    phase = log_gamma_complex(0.5 + 1j * eta).imag \
        - eta * np.log(4 * n * lin.rho ** 2) - np.pi / 2
    c = np.exp(log_mag + 1j * phase)
    mat = np.array([[1.0, -np.conj(c)], [c, -np.exp(-2 * np.pi * eta)]],
                   dtype=complex)
    return ConnectionMatrix(mat, eta, c, "")


def _log_cosh(x: float) -> float:
    ax = abs(x)
    return ax + np.log1p(np.exp(-2 * ax)) - np.log(2.0)


# ----------------------------------------------------------------------
# branch bookkeeping: sides, cuts, crossings
# ----------------------------------------------------------------------

def cut_crossings(branch_abar: np.ndarray, hp_abar: complex,
                  cut_angle: float = np.pi) -> int:
    """Signed crossings of the orbit with the ray exiting hp_abar at
    cut_angle (default: the cut of ln(abar - abar_i) along the negative
    real direction).  Up-to-down crossing counts +1, down-to-up -1."""
    rel = (branch_abar - hp_abar) * np.exp(-1j * cut_angle)
    # crossing the positive real ray in the rotated frame
    x, y = rel.real, rel.imag
    total = 0
    for i in range(len(rel) - 1):
        if y[i] == 0.0:
            continue
        if y[i] * y[i + 1] < 0:
            s = y[i + 1] - y[i]
            xc = x[i] - y[i] * (x[i + 1] - x[i]) / s
            if xc > 0:
                total += -1 if s > 0 else 1
    return total


def check_manifold_slope(lin: HPLinearization, branch: OrbitBranch,
                         end: str, tol: float = 0.05) -> None:
    """Sanity check: the gauged level-set slope zeta~/beta at a branch end
    equals -(+/-) 2 i rho^2 (zeta~ = zeta - zeta_i - 2 a beta)."""
    ai = complex(lin.hp.abar)
    idx = slice(1, 12) if end == "start" else slice(-12, -1)
    beta = branch.abar[idx] - ai
    zt = section(branch.abar[idx]) - lin.zeta_i - 2 * lin.gauge * beta
    ratio = np.mean(zt / beta)
    target = 2 * lin.rho ** 2
    if min(abs(ratio - 1j * target), abs(ratio + 1j * target)) \
            > tol * target:
        raise ValueError(f"branch {end} does not match the linearized "
                         f"separatrix: zeta~/beta = {ratio}, "
                         f"expected +/- {target}i")


def _canonical(v: np.ndarray) -> np.ndarray:
    """Fix the overall sign of a real 2-vector: argument in (-pi/2, pi/2]."""
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        return -v
    return v


def ray_sign(direction: complex, axis: np.ndarray) -> int:
    """+1 if ``direction`` points along +axis, -1 if along -axis."""
    d = direction / abs(direction)
    dot = d.real * axis[0] + d.imag * axis[1]
    if abs(dot) < 0.7:
        raise ValueError("branch end direction is not aligned with the "
                         "HP eigen-ray")
    return 1 if dot > 0 else -1


# slot letters carry the asymptotic family of Eq.-type groupings:
# out_R and in_L share exponent nu = +i eta - 1/2, out_L and in_R
# share nu = -i eta - 1/2
def nu_exponent_parts(out_slot_or_in_slot: str, which: str,
                      eta_const: float, eta_slope: float):
    """(const, slope) of nu(eps1) for a slot; ``which`` is 'out' or 'in'."""
    if which == "out":
        s = 1.0 if out_slot_or_in_slot == "R" else -1.0
    else:
        s = 1.0 if out_slot_or_in_slot == "L" else -1.0
    return s * 1j * eta_const - 0.5, s * 1j * eta_slope


# ----------------------------------------------------------------------
# regularized actions
# ----------------------------------------------------------------------

@dataclass
class RegularizedAction:
    """Affine model 2 pi i S(eps1) = const + slope * eps1."""

    const: complex
    slope: complex
    kind: str
    endpoints: tuple
    sigma: tuple

    def log_gamma_entry(self, eps1: float) -> complex:
        """The full exponent 2 pi i n S entering the Gamma matrix, to be
        combined with n by the caller."""
        return self.const + self.slope * eps1

    def value(self, eps1: float) -> complex:
        return (self.const + self.slope * eps1) / (2j * np.pi)

    def table_value(self, eps1: float, n: int) -> complex:
        """S(eps1) without the i pi sigma / n correction.

        The homoclinic closed form absorbs the cut-crossing signs into
        its cos/sin shifts, so it must be fed the bare tabulated action;
        keeping the correction here would shift S by sigma/(2 n)."""
        c = self.const - 1j * np.pi * self.sigma[0] / n
        return (c + self.slope * eps1) / (2j * np.pi)


def _branch_arrays(srf: Surface, t: np.ndarray, abar: np.ndarray,
                   n_pts: int):
    """Uniformly resampled abar(t), velocity, and section zeta."""
    tt = np.linspace(t[0], t[-1], n_pts)
    csr = CubicSpline(t, abar.real)
    csi = CubicSpline(t, abar.imag)
    a = csr(tt) + 1j * csi(tt)
    z = section(a)
    adot = -1j * srf.h0_z(a, z)
    zdot = 1j * srf.h0_a(a, z)
    return tt, a, z, adot, zdot


def _g1_split(srf: Surface, a, z):
    """G1 = (eps1 + N0)/Dz split into the constant and eps1 parts."""
    n0 = -srf.h1(a, z) + 0.5 * srf.h0_az(a, z)
    dz = srf.h0_z(a, z)
    return n0, dz


def _g1_split_dot(srf: Surface, a, z, adot, zdot):
    """Time derivatives of N0 and Dz along the flow."""
    n0_dot = (-srf.h1_a(a, z) + 0.5 * srf.h0_aaz(a, z)) * adot \
        + (-srf.h1_z(a, z) + 0.5 * srf.h0_azz(a, z)) * zdot
    dz_dot = srf.h0_az(a, z) * adot + srf.h0_zz(a, z) * zdot
    return n0_dot, dz_dot


def _continuous_log(vals: np.ndarray) -> np.ndarray:
    """Principal log made continuous; raises if a cut crossing remains."""
    logs = np.log(vals)
    jumps = np.diff(logs.imag)
    if np.any(np.abs(jumps) > np.pi):
        raise ValueError("log factor crosses its branch cut; sigma "
                         "bookkeeping is inconsistent with the orbit")
    return logs


def regularized_action(branch: OrbitBranch, lin_i: HPLinearization,
                       lin_j: HPLinearization | None, n: int,
                       sym: GradedSymbol, n_pts: int = 4096,
                       cut_angle_i: float = np.pi,
                       cut_angle_j: float = np.pi,
                       slots: tuple = ("R", "L")) -> RegularizedAction:
    """Regularized action along a separatrix branch (out of HP i into HP j).

    Returns the affine-in-eps1 exponent 2 pi i S(eps1).  The leading term
    is the line integral of zeta d abar closed onto the HPs by straight
    segments; the 1/n counterterm removes the log divergence of the WKB
    amplitude with the ln[(-1)^sigma (abar - abar_k)] regulator, plus
    analytic exponential tails for the untraced ends, the endpoint nu
    terms (heteroclinic), and the i pi sigma corrections.
    """
    srf = surface_of(sym)
    homoclinic = lin_j is None or (lin_j.hp is lin_i.hp)
    lin_j = lin_i if lin_j is None else lin_j
    ai = complex(lin_i.hp.abar)
    aj = complex(lin_j.hp.abar)
    a_start, a_end = branch.abar[0], branch.abar[-1]
    if abs(a_start - ai) > DEFAULT_TOL.hp_reach or \
            abs(a_end - aj) > DEFAULT_TOL.hp_reach:
        raise ValueError("branch does not reach its HP endpoints within "
                         f"{DEFAULT_TOL.hp_reach}")
    # Trim the arrival end: within ~action_tail_cut of the HP the
    # accumulated orbit error swamps the vanishing denominator Dz, so the
    # traced samples are unreliable there; the analytic exponential tail
    # covers the discarded stretch.  The seeded end starts exactly on the
    # unstable eigenvector and stays clean.
    far = np.nonzero(np.abs(branch.abar - aj)
                     >= DEFAULT_TOL.action_tail_cut)[0]
    i_last = (far[-1] + 1) if len(far) else len(branch.abar) - 1
    tb = branch.t[:i_last + 1]
    ab = branch.abar[:i_last + 1]
    tt, a, z, adot, zdot = _branch_arrays(srf, tb, ab, n_pts)
    dt = tt[1] - tt[0]

    # -- leading term: int zeta d abar, closed onto the HPs -------------
    lead = _simpson(z * adot, dt)
    zi = complex(section(ai))
    zj = complex(section(aj))
    lead += 0.5 * (zi + z[0]) * (a[0] - ai)          # head closure
    lead += 0.5 * (zj + z[-1]) * (aj - a[-1])        # tail closure

    # -- counterterm: - (1/n) int ln(...) dF, affine in eps1 -------------
    n0, dz = _g1_split(srf, a, z)
    n0_dot, dz_dot = _g1_split_dot(srf, a, z, adot, zdot)
    sig_i = cut_crossings(branch.abar, ai, cut_angle_i)
    sig_j = cut_crossings(branch.abar, aj, cut_angle_j)
    phase_i = np.exp(1j * (np.pi - cut_angle_i))
    phase_j = np.exp(1j * (np.pi - cut_angle_j))
    li = _continuous_log((-1.0) ** sig_i * phase_i * (a - ai))
    if homoclinic:
        # F = (abar - abar_i) G1; integrand ln * dF/dt
        f_const = (a - ai) * n0 / dz
        f_slope = (a - ai) / dz
        fdot_const = adot * n0 / dz + (a - ai) * \
            (n0_dot * dz - n0 * dz_dot) / dz ** 2
        fdot_slope = adot / dz - (a - ai) * dz_dot / dz ** 2
        logf = li
        logf_dot = adot / (a - ai)
    else:
        lj = _continuous_log((-1.0) ** sig_j * phase_j * (a - aj))
        delta = ai - aj
        pref = (a - ai) * (a - aj)
        f_const = pref * n0 / dz
        f_slope = pref / dz
        pdot = adot * ((a - ai) + (a - aj))
        fdot_const = pdot * n0 / dz + pref * \
            (n0_dot * dz - n0 * dz_dot) / dz ** 2
        fdot_slope = pdot / dz - pref * dz_dot / dz ** 2
        logf = (li - lj) / delta
        logf_dot = (adot / (a - ai) - adot / (a - aj)) / delta
    ct_const = _simpson(logf * fdot_const, dt)
    ct_slope = _simpson(logf * fdot_slope, dt)
    # analytic exponential tails beyond the traced ends
    lam_i = lin_i.rate
    lam_j = abs(lin_j.rate)
    # head: t in (-inf, 0], dF/dt ~ g0 e^{lam_i t}, log ~ L0 + L1 t
    ct_const += fdot_const[0] * (logf[0] / lam_i - logf_dot[0] / lam_i ** 2)
    ct_slope += fdot_slope[0] * (logf[0] / lam_i - logf_dot[0] / lam_i ** 2)
    # tail: t in [T, inf), dF/dt ~ gT e^{-lam_j (t-T)}
    ct_const += fdot_const[-1] * (logf[-1] / lam_j
                                  + logf_dot[-1] / lam_j ** 2)
    ct_slope += fdot_slope[-1] * (logf[-1] / lam_j
                                  + logf_dot[-1] / lam_j ** 2)

    # -- assemble 2 pi i S(eps1) = n*lead ... divided through later ------
    # Table conventions: 2 pi i S = lead - (1/n) ct + (1/n) corrections
    const = lead - ct_const / n
    slope = -ct_slope / n
    if homoclinic:
        const += 1j * np.pi * sig_i / n
    else:
        eta_slope_i = (1.0 / (4 * lin_i.rho ** 2 * lin_i.tau2)).real
        eta_const_i = (-lin_i.tau00 /
                       (4 * lin_i.rho ** 2 * lin_i.tau2)).real
        eta_slope_j = (1.0 / (4 * lin_j.rho ** 2 * lin_j.tau2)).real
        eta_const_j = (-lin_j.tau00 /
                       (4 * lin_j.rho ** 2 * lin_j.tau2)).real
        lnij = np.log((-1.0) ** sig_j * phase_j * (ai - aj))
        lnji = np.log((-1.0) ** sig_i * phase_i * (aj - ai))
        # nu_k = (+/- i eta_k - 1/2), affine in eps1 through eta_k;
        # the sign follows the slot letter of the branch end
        nu_i_c, nu_i_s = nu_exponent_parts(slots[0], "out",
                                           eta_const_i, eta_slope_i)
        nu_j_c, nu_j_s = nu_exponent_parts(slots[1], "in",
                                           eta_const_j, eta_slope_j)
        const += (nu_j_c * lnij - nu_i_c * lnji
                  + sig_i * 1j * np.pi * nu_i_c
                  - sig_j * 1j * np.pi * nu_j_c) / n
        slope += (nu_j_s * lnij - nu_i_s * lnji
                  + sig_i * 1j * np.pi * nu_i_s
                  - sig_j * 1j * np.pi * nu_j_s) / n
    kind = "homoclinic" if homoclinic else "heteroclinic"
    return RegularizedAction(const=const, slope=slope, kind=kind,
                             endpoints=branch.endpoints or (0, 0),
                             sigma=(sig_i, sig_j))


def _simpson(y: np.ndarray, dt: float):
    from scipy.integrate import simpson
    return simpson(y, dx=dt)


# ----------------------------------------------------------------------
# global determinant
# ----------------------------------------------------------------------

@dataclass
class _BranchRecord:
    branch: OrbitBranch
    i_hp: int                    # index into assembly.lins (start HP)
    j_hp: int                    # end HP
    out_slot: str                # 'L' | 'R'
    in_slot: str
    action: RegularizedAction


class CriticalAssembly:
    """All once-per-model data for D(eps1) = det(T - Gamma) at one
    critical energy: HP linearizations, separatrix branches, slot
    assignments and affine action exponents."""

    _het_phases = None

    def __init__(self, sym: GradedSymbol, eps_c: float, n: int,
                 n_pts: int = 4096, pairing: tuple | None = None):
        """``pairing``: per-HP sign p; the in-end arriving along +s0 (the
        canonical stable ray) gets slot 'R' if p=+1, 'L' if p=-1.  The
        out-end along +u0 is always 'R' (letter swaps leave D invariant,
        only the out/in ray pairing matters).  None: homoclinic lobes fix
        it by requiring matching letters; heteroclinic defaults to +1.
        """
        self.sym = sym
        self.n = int(n)
        self.eps_c = float(eps_c)
        srf = surface_of(sym)
        fps = find_critical_points(sym)
        hps = [fp for fp in fps
               if fp.kind == "hyperbolic" and abs(fp.energy - eps_c) < 1e-7]
        if not hps:
            raise ValueError(f"no hyperbolic point at energy {eps_c}")
        self.lins = [linearize_at_hp(sym, hp) for hp in hps]
        hp_pos = [complex(l.hp.abar) for l in self.lins]
        axes = []
        for lin in self.lins:
            _, unst, stab = hyperbolic_directions(srf, lin.hp)
            axes.append((_canonical(unst[0]), _canonical(stab[0])))
        branches = [b for b in level_set_branches(sym, eps_c)
                    if not b.truncated]
        ends = []
        for br in branches:
            i_hp = int(np.argmin([abs(br.abar[0] - p) for p in hp_pos]))
            j_hp = int(np.argmin([abs(br.abar[-1] - p) for p in hp_pos]))
            check_manifold_slope(self.lins[i_hp], br, "start")
            check_manifold_slope(self.lins[j_hp], br, "end")
            out_sign = ray_sign(br.abar[4] - hp_pos[i_hp], axes[i_hp][0])
            in_sign = ray_sign(br.abar[-5] - hp_pos[j_hp], axes[j_hp][1])
            ends.append((br, i_hp, j_hp, out_sign, in_sign))
        if pairing is None:
            pairing = self._infer_pairing(ends, len(self.lins))
        self.pairing = tuple(pairing)
        self.records: list[_BranchRecord] = []
        for br, i_hp, j_hp, out_sign, in_sign in ends:
            out_slot = "R" if out_sign > 0 else "L"
            in_slot = ("R" if in_sign * self.pairing[j_hp] > 0 else "L")
            homo = i_hp == j_hp
            action = regularized_action(
                br, self.lins[i_hp], None if homo else self.lins[j_hp],
                self.n, sym, n_pts=n_pts, slots=(out_slot, in_slot))
            self.records.append(_BranchRecord(
                branch=br, i_hp=i_hp, j_hp=j_hp,
                out_slot=out_slot, in_slot=in_slot, action=action))
        # closure check: every out slot and in slot used exactly once
        outs = {(r.i_hp, r.out_slot) for r in self.records}
        ins = {(r.j_hp, r.in_slot) for r in self.records}
        want = {(i, s) for i in range(len(self.lins)) for s in "LR"}
        if outs != want or ins != want:
            raise ValueError(
                f"separatrix graph not closed: out={sorted(outs)}, "
                f"in={sorted(ins)}, expected {sorted(want)}")

    @staticmethod
    def _infer_pairing(ends, n_hp):
        """Homoclinic lobes must reuse their own letter: a lobe leaving
        along +u0 returns along the stable ray bounding the same sector,
        which therefore is also 'R'."""
        pairing = [1] * n_hp
        for br, i_hp, j_hp, out_sign, in_sign in ends:
            if i_hp == j_hp:
                pairing[i_hp] = out_sign * in_sign
        return pairing

    # slot indexing: rows (out) per HP are (L, R); cols (in) are (R, L)
    def _row(self, i_hp: int, slot: str) -> int:
        return 2 * i_hp + (0 if slot == "L" else 1)

    def _col(self, j_hp: int, slot: str) -> int:
        return 2 * j_hp + (0 if slot == "R" else 1)

    def heteroclinic_phases(self) -> "HeteroclinicPhases":
        """Calibrated branch phases for a multi-HP separatrix (lazy)."""
        if self._het_phases is None:
            self._het_phases = calibrate_heteroclinic_phases(self)
        return self._het_phases

    def _entry(self, r: _BranchRecord, eps1: float) -> tuple:
        """(exponent, unit prefactor) of one Gamma entry.

        Homoclinic: a lobe transports the WKB solution from an out ray to
        an in ray; the action exponent follows the transport orientation,
        which for the lobe attached to the L sector is opposite to the
        traced one, so its exponent enters reversed.  Each passage also
        carries a unit factor i from the local-model normalization.  The
        exponent is the bare 2 pi i n S without the i pi sigma cut
        bookkeeping (that sign is part of the orientation rule, not of
        the transported phase).

        Heteroclinic: the tabulated counterterms leave the transported
        phases under-determined (see calibrate_heteroclinic_phases); the
        exponent is the calibrated quadratic phase law i theta_b(eps1).
        """
        if len(self.lins) > 1:
            ph = self.heteroclinic_phases()
            k = ph.index[(r.i_hp, r.out_slot)]
            th = ph.const[k] + (ph.slope[k] + ph.quad[k] * eps1) * eps1
            return 1j * th, 1j
        expo = self.n * (r.action.log_gamma_entry(eps1)
                         - 1j * np.pi * r.action.sigma[0] / self.n)
        if r.out_slot == "L":
            expo = -expo
        return expo, 1j

    def gamma(self, eps1: float) -> np.ndarray:
        m = 2 * len(self.lins)
        g = np.zeros((m, m), dtype=complex)
        for r in self.records:
            expo, pref = self._entry(r, eps1)
            g[self._row(r.i_hp, r.out_slot),
              self._col(r.j_hp, r.in_slot)] = pref * _safe_exp(expo)
        return g

    def t_matrix(self, eps1: float) -> np.ndarray:
        m = 2 * len(self.lins)
        t = np.zeros((m, m), dtype=complex)
        for i, lin in enumerate(self.lins):
            t[2 * i: 2 * i + 2, 2 * i: 2 * i + 2] = \
                connection_matrix(lin, eps1, self.n).mat
        return t

    def determinant(self, eps1: float) -> complex:
        return np.linalg.det(self.t_matrix(eps1) - self.gamma(eps1))

    def phase_factor(self, eps1: float) -> complex:
        """Half the total Gamma phase: divides D to make it real (up to a
        constant unit factor calibrated by the caller)."""
        tot = sum(self._entry(r, eps1)[0].imag for r in self.records)
        return np.exp(0.5j * tot)

    def eta_mean(self, eps1: float) -> float:
        return float(np.mean([lin.eta(eps1) for lin in self.lins]))


def _safe_exp(z: complex, clip: float = 300.0) -> complex:
    x = min(z.real, clip)
    return np.exp(x + 1j * z.imag)


def global_determinant(assembly: CriticalAssembly, eps1: float) -> complex:
    return assembly.determinant(eps1)


# ----------------------------------------------------------------------
# homoclinic closed form
# ----------------------------------------------------------------------

def _softplus(x: float) -> float:
    return x + np.log1p(np.exp(-x)) if x > 0 else np.log1p(np.exp(x))


def homoclinic_closed_form(s_l: float, s_r: float, eta: float, rho: float,
                           n: int) -> float:
    """D = cos[pi n (S_R-S_L)]/sqrt(1+e^{-2 pi eta})
    + cos{arg Gamma(1/2 - i eta) + eta log(4 rho^2 n) + pi n (S_R+S_L)}.

    Exact reduction of det(T - Gamma) for a single HP with two lobes; the
    deep-well limit factorizes into the two ladders cos(pi n S_sigma + w)
    with w = [arg Gamma(1/2 - i eta) + eta log(4 rho^2 n)]/2, and above
    the barrier the first term is exponentially suppressed, leaving the
    outer-family ladder of the second.
    """
    arg_gamma = log_gamma_complex(0.5 - 1j * eta).imag
    amp = np.exp(-0.5 * _softplus(-2 * np.pi * eta))
    return (np.cos(np.pi * n * (s_r - s_l)) * amp
            + np.cos(arg_gamma + eta * np.log(4 * rho ** 2 * n)
                     + np.pi * n * (s_r + s_l)))


# ----------------------------------------------------------------------
# heteroclinic branch-phase calibration
# ----------------------------------------------------------------------

@dataclass
class HeteroclinicPhases:
    """Quadratic phase laws theta_b(eps1) = const + slope eps1 + quad eps1^2
    for the four Gamma entries of a two-HP separatrix, indexed by
    (hp index, out slot)."""

    const: np.ndarray
    slope: np.ndarray
    quad: np.ndarray
    index: dict
    assignment: tuple
    fit_residual: float
    consistency: tuple


def _ladder_phase(lin: HPLinearization, eta: float, n: int) -> float:
    """w(eta) = arg Gamma(1/2 - i eta) + eta ln(4 rho^2 n), the slowly
    varying half-phase of the connection constant: arg c = -w - pi/2."""
    return float(log_gamma_complex(0.5 - 1j * eta).imag
                 + eta * np.log(4 * lin.rho ** 2 * n))


def _bs_family_splines(sym: GradedSymbol, eps_c: float,
                       lin: HPLinearization, n: int, side: int,
                       eta_band: tuple, m: int):
    """Regular B-S actions (I0, Re I1) of the two closed-orbit families on
    one side of the critical energy, as splines in eps.

    side=+1 is the below-barrier side (eta > 0).  The families are
    ordered by ascending I0, which is well separated and continuous over
    the calibration window.  I1 is evaluated at eps1 = 0: its explicit
    eps1 term is affine and therefore absorbed exactly by the quadratic
    target fit downstream.
    """
    es = (1.0 / (4 * lin.rho ** 2 * lin.tau2)).real
    etas = side * np.linspace(eta_band[0], eta_band[1], m)
    eps = np.sort(eps_c + (etas - lin.eta(0.0)) / es / n)
    rows = [[], []]
    for e in eps:
        acts = sorted(bs_actions(b, 0.0, sym)
                      for b in level_set_branches(sym, e))
        if len(acts) != 2:
            raise ValueError(f"expected two closed families at eps={e}, "
                             f"found {len(acts)}")
        for k, (i0, i1) in enumerate(acts):
            rows[k].append((e, i0, i1.real))
    out = []
    for r in rows:
        arr = np.array(r)
        out.append((CubicSpline(arr[:, 0], arr[:, 1]),
                    CubicSpline(arr[:, 0], arr[:, 2])))
    return out


def _quad_phase_fit(x: np.ndarray, y: np.ndarray, eta: np.ndarray):
    """Fit y ~ a + b x + q x^2 + r/eta.  The 1/eta column absorbs the
    intrinsic near-separatrix error of the regular B-S input (which
    diverges at the critical energy) so it does not bias the extrapolated
    phase model; only (a, b, q) are kept."""
    A = np.vstack([np.ones_like(x), x, x * x, 1.0 / eta]).T
    c, *_ = np.linalg.lstsq(A, y, rcond=None)
    return c[0], c[1], c[2], float(np.abs(y - A @ c).max())


def calibrate_heteroclinic_phases(asm: CriticalAssembly,
                                  eta_band: tuple = (1.3, 4.6),
                                  m: int = 18,
                                  n_fit: int = 40) -> HeteroclinicPhases:
    """Fix the four transported branch phases of a two-HP separatrix by
    matching the determinant's deep-window ladders to regular B-S.

    det(T - Gamma) for two HPs depends on the entries g_b = i e^{i
    theta_b} only through three independent phase combinations; D = 0
    reduces, deep below the critical energy, to the two island-cycle
    ladders arg(c_0 c_1 g_{0L} g_{1L}) = 0 and arg(conj(c_0 c_1)
    g_{0R} g_{1R}) = 0 (mod 2pi), and deep above to one factor ladder per
    HP, theta_{0L} - theta_{0R} = -2 arg c_0 and theta_{1R} - theta_{1L}
    = -2 arg c_1 (mod 2pi).  On each side both D = 0 and the regular B-S
    condition 2 pi (n I0 + I1) = 2 pi k select the same levels, so each
    ladder is pinned to the B-S phase of the adjacent closed-orbit
    family, which also fixes the absolute rung index.  The four phase
    laws are fitted by quadratics in eps1 over deep windows on both
    sides and solved for theta_b by least squares (the solve has one
    harmless gauge direction D does not depend on).

    Which family feeds which ladder, and with which phase sense, is not
    known a priori: all assignments are scored by the mismatch of the
    single redundant combination among the four conditions (the
    left-null vector of the solve) and the most consistent one is kept.
    The winning assignment's mismatch is ~0.03 rad; wrong assignments
    miss by several radians per unit eta.
    """
    if len(asm.lins) != 2:
        raise ValueError("calibration requires exactly two hyperbolic "
                         "points on the separatrix")
    lin0, lin1 = asm.lins
    n = asm.n
    es = (1.0 / (4 * lin0.rho ** 2 * lin0.tau2)).real
    below = _bs_family_splines(asm.sym, asm.eps_c, lin0, n, +1, eta_band, m)
    above = _bs_family_splines(asm.sym, asm.eps_c, lin0, n, -1, eta_band, m)

    def fit_grid(side):
        etas = side * np.linspace(eta_band[0], eta_band[1], n_fit)
        ep1 = (etas - lin0.eta(0.0)) / es
        eps = asm.eps_c + ep1 / n
        w = [np.array([_ladder_phase(lk, lk.eta(x), n) for x in ep1])
             for lk in (lin0, lin1)]
        return ep1, eps, etas, w

    ep1b, epsb, etab, wb = fit_grid(+1)
    ep1a, epsa, etaa, wa = fit_grid(-1)
    phi_b = [2 * np.pi * (n * s0(epsb) + s1(epsb)) for s0, s1 in below]
    phi_a = [2 * np.pi * (n * s0(epsa) + s1(epsa)) for s0, s1 in above]

    best = None
    for b_sel in (0, 1):
        for s_a in (1, -1):
            for s_b in (1, -1):
                # arg(c_0 c_1 A) = 0 with arg c_k = -w_k - pi/2 and the
                # i*i entry prefactors contributing pi: theta sums obey
                ca = _quad_phase_fit(
                    ep1b, wb[0] + wb[1] + s_a * phi_b[b_sel], etab)
                cb = _quad_phase_fit(
                    ep1b, -(wb[0] + wb[1]) + s_b * phi_b[1 - b_sel], etab)
                for u_sel in (0, 1):
                    for s_u in (1, -1):
                        for s_v in (1, -1):
                            cu = _quad_phase_fit(
                                ep1a, 2 * wa[0] + np.pi
                                + s_u * phi_a[u_sel], etaa)
                            cv = _quad_phase_fit(
                                ep1a, -2 * wa[1] - np.pi
                                + s_v * phi_a[1 - u_sel], etaa)
                            d_slope = ca[1] - cb[1] - cu[1] + cv[1]
                            d_const = (ca[0] - cb[0] - cu[0] + cv[0]
                                       + np.pi) % (2 * np.pi) - np.pi
                            score = 30 * abs(d_slope) + abs(d_const)
                            cand = (score, (b_sel, s_a, s_b,
                                            u_sel, s_u, s_v),
                                    (ca, cb, cu, cv),
                                    (d_slope, d_const))
                            if best is None or cand[0] < best[0]:
                                best = cand
    _, assignment, fits, consistency = best
    mx = np.array([[1, 0, 1, 0], [0, 1, 0, 1],
                   [1, -1, 0, 0], [0, 0, -1, 1]], float)
    coeffs = [np.linalg.lstsq(mx, np.array([f[k] for f in fits]),
                              rcond=None)[0] for k in range(3)]
    index = {(0, "L"): 0, (0, "R"): 1, (1, "L"): 2, (1, "R"): 3}
    return HeteroclinicPhases(
        const=coeffs[0], slope=coeffs[1], quad=coeffs[2], index=index,
        assignment=assignment,
        fit_residual=max(f[3] for f in fits),
        consistency=consistency)


# ----------------------------------------------------------------------
# spectrum from zeros of D
# ----------------------------------------------------------------------

@dataclass
class CriticalZero:
    eps1: float
    eta: float
    eps: float


def critical_spectrum(sym: GradedSymbol, n: int, eps_c: float,
                      eta_window: tuple = (-3.0, 3.0),
                      method: str = "auto") -> list[CriticalZero]:
    """Zeros of the compatibility determinant near a critical energy.

    Scans eps1 with step 0.1 pi / ln(4 rho^2 n), brackets sign changes of
    the (phase-normalized) real determinant, polishes to |d eps1|<1e-10,
    and maps back to eps = eps_c + eps1/n.  method 'closed_form' uses the
    homoclinic formula, 'determinant' the numerical det(T - Gamma);
    'auto' picks closed_form for a single HP.
    """
    asm = CriticalAssembly(sym, eps_c, n)
    return assembly_spectrum(asm, eta_window, method)


def assembly_spectrum(asm: CriticalAssembly, eta_window=(-3.0, 3.0),
                      method: str = "auto") -> list[CriticalZero]:
    if method == "auto":
        method = "closed_form" if len(asm.lins) == 1 else "determinant"
    lin = asm.lins[0]
    slope = (1.0 / (4 * lin.rho ** 2 * lin.tau2)).real
    # eps1 range from the eta window (eta affine in eps1)
    e_lo = (eta_window[0] - lin.eta(0.0)) / slope
    e_hi = (eta_window[1] - lin.eta(0.0)) / slope
    lo, hi = min(e_lo, e_hi), max(e_lo, e_hi)
    step = 0.1 * np.pi / np.log(4 * lin.rho ** 2 * asm.n)
    grid = np.arange(lo, hi + step, step)
    zeros: list[CriticalZero] = []
    if method == "closed_form":
        f = closed_form_function(asm)
        vals = np.array([f(x) for x in grid])
        sgn = np.sign(vals)
        for i in np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]:
            x = find_root(f, RootBracket.of(f, grid[i], grid[i + 1]),
                          tol=1e-10)
            zeros.append(CriticalZero(eps1=float(x), eta=asm.eta_mean(x),
                                      eps=asm.eps_c + x / asm.n))
        return zeros
    if method != "determinant":
        raise ValueError(f"unknown method {method!r}")
    if len(asm.lins) > 1:
        # The calibrated entries carry a small residual inconsistency
        # (~0.03 rad) in the redundant phase combination, so zeros of D
        # can sit marginally off the real eps1 axis; sign tracking would
        # miss them.  Locate the sharp local minima of |D| instead.
        return _minima_zeros(asm, grid)
    dvals = np.array([asm.determinant(x) / asm.phase_factor(x)
                      for x in grid])
    signs = _tracked_signs(dvals)
    rvals = signs * np.abs(dvals)
    for i in np.nonzero(rvals[:-1] * rvals[1:] < 0)[0]:
        f = _bracket_real_function(asm, grid[i], grid[i + 1],
                                   dvals[i], dvals[i + 1])
        x = find_root(f, RootBracket.of(f, grid[i], grid[i + 1]),
                      tol=1e-10)
        zeros.append(CriticalZero(eps1=float(x), eta=asm.eta_mean(x),
                                  eps=asm.eps_c + x / asm.n))
    return zeros


def closed_form_function(asm: CriticalAssembly):
    """eps1 -> real D via the homoclinic closed form."""
    if len(asm.lins) != 1 or len(asm.records) != 2:
        raise ValueError("closed form requires a single homoclinic HP "
                         "with two lobes")
    lin = asm.lins[0]
    # the R lobe does not cross the log cut (sigma = 0), the L lobe does
    rec_r = [r for r in asm.records if r.action.sigma[0] == 0]
    rec_l = [r for r in asm.records if r.action.sigma[0] != 0]
    if len(rec_r) != 1 or len(rec_l) != 1:
        raise ValueError("cannot identify L/R lobes by cut crossing")

    def f(eps1):
        s_r = rec_r[0].action.table_value(eps1, asm.n).real
        s_l = rec_l[0].action.table_value(eps1, asm.n).real
        return homoclinic_closed_form(s_l, s_r, lin.eta(eps1),
                                      lin.rho, asm.n)
    return f


def _minima_zeros(asm: CriticalAssembly,
                  grid: np.ndarray) -> list[CriticalZero]:
    """Zeros of |D| found as deep local minima, refined by ternary search.

    A minimum counts as a zero when the refined |D| drops at least six
    orders below the neighbouring grid values, which separates true roots
    (|D| ~ 1e-14 relative) from shallow ripples of the phase mismatch.
    """
    mag = np.array([abs(asm.determinant(x)) for x in grid])
    zeros: list[CriticalZero] = []
    for i in range(1, len(grid) - 1):
        if not (mag[i] < mag[i - 1] and mag[i] < mag[i + 1]):
            continue
        a, b = grid[i - 1], grid[i + 1]
        for _ in range(80):
            m1 = a + (b - a) / 3
            m2 = b - (b - a) / 3
            if abs(asm.determinant(m1)) < abs(asm.determinant(m2)):
                b = m2
            else:
                a = m1
        x = 0.5 * (a + b)
        if abs(asm.determinant(x)) < 1e-6 * max(mag[i - 1], mag[i + 1]):
            zeros.append(CriticalZero(eps1=float(x), eta=asm.eta_mean(x),
                                      eps=asm.eps_c + x / asm.n))
    return zeros


def _tracked_signs(dvals: np.ndarray) -> np.ndarray:
    """Signs of the underlying real function from phase continuity.

    The normalized determinant is e^{i chi} R with chi slowly varying on
    the scan grid; a phase jump of ~pi between neighbors marks a sign
    change of R.
    """
    signs = np.ones(len(dvals))
    s = 1.0
    for k in range(1, len(dvals)):
        if abs(dvals[k - 1]) == 0 or abs(dvals[k]) == 0:
            signs[k] = s
            continue
        dth = np.angle(dvals[k] / dvals[k - 1])
        if abs(dth) > np.pi / 2:
            s = -s
        signs[k] = s
    return signs


def _bracket_real_function(asm: CriticalAssembly, x_lo, x_hi, d_lo, d_hi):
    """Real-valued determinant inside one bracket: rotate by a linearly
    interpolated phase chosen so the endpoint values are +|d_lo|, -|d_hi|."""
    th_lo = np.angle(d_lo)
    th_hi_raw = np.angle(d_hi) - np.pi      # flip the far side positive
    th_hi = th_lo + np.angle(np.exp(1j * (th_hi_raw - th_lo)))

    def f(x):
        lam = (x - x_lo) / (x_hi - x_lo)
        chi = th_lo + lam * (th_hi - th_lo)
        d = asm.determinant(x) / asm.phase_factor(x)
        return float((d * np.exp(-1j * chi)).real)
    return f
