"""Observable matrix elements between eigenstates, exact and semiclassical.

Exact elements are computed in the orthonormal spin basis from the
normal-ordered operator.  In regular energy regions the semiclassical
element k levels apart is the k-th Fourier mode of the observable symbol
along the classical orbit.  At a critical energy the orbit period
diverges; the elements split into a local part (Husimi-weighted symbol
values at the hyperbolic points, diagonal only) and a global part
(Fourier transforms of the symbol along the separatrix branches at the
quantum frequency, normalized by the effective recurrence period of the
state).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .hp_quantization import CriticalAssembly, HPLinearization
from .numerics import DEFAULT_TOL
from .operator_algebra import (GradedSymbol, OperatorPoly, identity_op,
                               scaled_observable, symbol_of)
from .phase_space import (OrbitBranch, hyperbolic_points, level_set_branches,
                          section, surface_of)
from .spectrum import EigenSystem, ln_binom


# ----------------------------------------------------------------------
# observables
# ----------------------------------------------------------------------

@dataclass
class ObservableSpec:
    """A Hermitian observable with its operator and graded symbol."""

    operator: OperatorPoly
    symbol: GradedSymbol
    label: str

    @classmethod
    def from_name(cls, name: str) -> "ObservableSpec":
        op = scaled_observable(name)
        return cls(operator=op, symbol=symbol_of(op), label=name)

    @classmethod
    def identity(cls) -> "ObservableSpec":
        op = identity_op()
        return cls(operator=op, symbol=symbol_of(op), label="identity")

    def classical(self, abar) -> np.ndarray:
        """Leading symbol on the sphere section, guaranteed real."""
        a = np.asarray(abar, dtype=complex)
        val = self.symbol.h0(a, section(a))
        return np.real(val)

    def check_hermitian(self, n: int = 8,
                        tol: float = DEFAULT_TOL.matrix_residual) -> None:
        m = observable_matrix(self, n)
        if np.max(np.abs(m - m.conj().T)) > tol * max(1.0, np.max(np.abs(m))):
            raise ValueError(f"observable {self.label!r} is not Hermitian")


def observable_matrix(A: ObservableSpec, n: int) -> np.ndarray:
    """Matrix of the observable in the orthonormal spin basis m = -s..s.

    The operator's action on coherent-polynomial coefficients is
    conjugated by the diagonal square-root-binomial basis change; the
    ratio of adjacent binomials is taken in log space so the conjugation
    stays finite at large n even though the weights themselves overflow.
    """
    m = A.operator.matrix_image(n)
    lw = 0.5 * ln_binom(n, np.arange(n + 1))
    scale = np.exp(lw[None, :] - lw[:, None])
    out = m * scale
    if np.max(np.abs(out.imag)) <= 1e-12 * max(1.0, np.max(np.abs(out))):
        out = out.real
    return out


@dataclass
class MatrixElementRecord:
    m: int
    k: int
    omega: float
    f_exact: complex
    f_semiclassical: complex
    method: str = ""


# ----------------------------------------------------------------------
# exact elements
# ----------------------------------------------------------------------

def exact_f_k(eig: EigenSystem, A: ObservableSpec, m: int, k: int,
              mat: np.ndarray | None = None) -> complex:
    """<Psi_{m+k}| A |Psi_m> with orthonormal eigenvectors.

    ``mat`` may carry a precomputed observable_matrix to amortize batch
    evaluation over many (m, k).
    """
    dim = eig.vectors.shape[0]
    if not (0 <= m < dim and 0 <= m + k < dim):
        raise IndexError(f"(m, k) = ({m}, {k}) out of range for dim {dim}")
    if mat is None:
        mat = observable_matrix(A, dim - 1)
    return complex(eig.vectors[:, m + k].conj() @ (mat @ eig.vectors[:, m]))


# ----------------------------------------------------------------------
# regular region: Fourier modes along the closed orbit
# ----------------------------------------------------------------------

def _resampled_orbit(branch: OrbitBranch, n_pts: int):
    tt = np.linspace(branch.t[0], branch.t[-1], n_pts, endpoint=False)
    csr = CubicSpline(branch.t, branch.abar.real)
    csi = CubicSpline(branch.t, branch.abar.imag)
    return tt, csr(tt) + 1j * csi(tt)


def regular_f_k(sym: GradedSymbol, A: ObservableSpec, eps: float, k: int,
                branch: OrbitBranch | None = None,
                n_pts: int = 2048) -> complex:
    """k-th Fourier mode of the observable symbol on the closed orbit.

    Trapezoid rule on a uniform-in-time resampling of the flow, which is
    spectrally accurate for the periodic smooth integrand.
    """
    if branch is None:
        closed = [b for b in level_set_branches(sym, eps)
                  if b.period is not None and np.isfinite(b.period)]
        if not closed:
            raise ValueError(f"no closed orbit at eps={eps}")
        branch = closed[0]
    hps = hyperbolic_points(sym)
    for hp in hps:
        if np.min(np.abs(branch.abar - complex(hp.abar))) < 1e-3:
            raise ValueError("orbit passes a hyperbolic point; use the "
                             "critical-energy elements instead")
    period = branch.t[-1] - branch.t[0]
    tt, a = _resampled_orbit(branch, n_pts)
    vals = A.classical(a)
    phase = np.exp(1j * k * 2 * np.pi * (tt - tt[0]) / period)
    return complex(np.mean(vals * phase))


# ----------------------------------------------------------------------
# critical energy: HP weights and branch Fourier transforms
# ----------------------------------------------------------------------

def critical_f0(A: ObservableSpec, lins: list[HPLinearization],
                weights: list[float] | None = None) -> float:
    """Weighted average of the symbol over the hyperbolic points.

    ``weights`` are Husimi disc weights of the eigenstate; omitted, the
    equal-weight semiclassical limit is used (exact for symmetric HP
    configurations).
    """
    if weights is None:
        weights = [1.0] * len(lins)
    tot = float(np.sum(weights))
    if tot <= 0.0:
        raise ValueError("all HP weights vanish")
    vals = [float(A.classical(complex(lin.hp.abar))) for lin in lins]
    return float(np.dot(vals, weights) / tot)


def branch_fourier(branch: OrbitBranch, lin_i: HPLinearization,
                   lin_j: HPLinearization, A: ObservableSpec, omega: float,
                   n_pts: int = 4096, trim: float | None = None) -> complex:
    """g(omega) = integral of [A(t) - A_inf(t)] e^{i omega t} dt on the branch.

    A_inf(t) is the HP symbol value toward each end, so the integrand
    decays exponentially; the subtracted plateau only contributes at
    omega = 0, which the diagonal element handles.  The untraced ends are
    integrated analytically with the linearization rates.  Time origin:
    the sample farthest from both endpoint HPs (the symmetric midpoint of
    a separatrix lobe), so that symmetric branches give real transforms.
    """
    if omega == 0.0:
        raise ValueError("omega = 0 is the diagonal element; use the "
                         "HP-weighted average instead")
    ai, aj = complex(lin_i.hp.abar), complex(lin_j.hp.abar)
    t, a = branch.t, branch.abar
    # time origin from the untrimmed trace so trims cannot shift phases
    t0 = t[int(np.argmax(np.minimum(np.abs(a - ai), np.abs(a - aj))))]
    if trim is not None:
        keep = (np.abs(a - ai) >= trim) & (np.abs(a - aj) >= trim)
        t, a = t[keep], a[keep]
    tt = np.linspace(t[0], t[-1], n_pts)
    csr = CubicSpline(t, a.real)
    csi = CubicSpline(t, a.imag)
    aa = csr(tt) + 1j * csi(tt)
    tt = tt - t0
    vals = A.classical(aa).astype(float)
    a_i = float(A.classical(ai))
    a_j = float(A.classical(aj))
    plateau = np.where(tt < 0.0, a_i, a_j)
    integrand = (vals - plateau) * np.exp(1j * omega * tt)
    g = np.trapezoid(integrand, tt)
    lam_i, lam_j = abs(lin_i.rate), abs(lin_j.rate)
    g += (vals[0] - a_i) * np.exp(1j * omega * tt[0]) / (lam_i + 1j * omega)
    g += (vals[-1] - a_j) * np.exp(1j * omega * tt[-1]) / (lam_j - 1j * omega)
    return complex(g)


def _cyclic_order(records):
    """Records chained so each branch starts at the previous one's end HP."""
    left = list(records)
    out = [left.pop(0)]
    while left:
        nxt = next((i for i, r in enumerate(left)
                    if r.i_hp == out[-1].j_hp), 0)
        out.append(left.pop(nxt))
    return out


def effective_period(omega_k: float, k: int) -> float:
    """Recurrence period of the state from the k-level frequency: the
    local level ladder has spacing 2 pi / T in omega = n(eps' - eps)."""
    if k == 0 or omega_k == 0.0:
        raise ValueError("need a nonzero level separation")
    return abs(2 * np.pi * k / omega_k)


def critical_f_k(asm: CriticalAssembly, A: ObservableSpec, omega: float,
                 period: float, n_pts: int = 4096) -> complex:
    """Off-diagonal critical element from the separatrix branch transforms.

    The underlying orbit traverses the K branches of the separatrix graph
    cyclically, so branch b enters with the phase of its position in the
    cycle, at leading order b/K of the effective period (the hyperbolic
    slow-down is shared equally among the HP passages).  The sum is
    normalized by the effective period, the time-measure total weight of
    the state, which is dominated by the logarithmic HP residence times;
    with omega near 2 pi k / period this reduces to the regular
    Fourier-mode formula for a finite-period orbit.
    """
    if period <= 0.0:
        raise ValueError("effective period must be positive")
    recs = _cyclic_order(asm.records)
    K = len(recs)
    g = 0j
    for b, r in enumerate(recs):
        gb = branch_fourier(r.branch, asm.lins[r.i_hp], asm.lins[r.j_hp],
                            A, omega, n_pts=n_pts)
        g += np.exp(1j * omega * period * b / K) * gb
    return g / period


# ----------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------

def records_to_csv(path, records: list[MatrixElementRecord]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "k", "omega", "re_f_exact", "im_f_exact",
                    "re_f_sc", "im_f_sc", "method"])
        for r in records:
            w.writerow([r.m, r.k, f"{r.omega:.17g}",
                        f"{r.f_exact.real:.17g}", f"{r.f_exact.imag:.17g}",
                        f"{r.f_semiclassical.real:.17g}",
                        f"{r.f_semiclassical.imag:.17g}", r.method])
