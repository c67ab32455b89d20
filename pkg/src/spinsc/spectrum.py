"""Exact quantum reference for the spin model.

Banded matrix construction in the S_z eigenbasis, full symmetric banded
eigensolver, coherent-state wavefunctions Psi(abar), Husimi disc weights
and wavefunction zeros.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import lgamma

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sparse

from .numerics import DEFAULT_TOL, PolyRoots, QuadratureError, polynomial_roots
from .operator_algebra import ModelParams


def ln_binom(n: int, k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return lgamma(n + 1) - np.vectorize(lgamma)(k + 1) \
        - np.vectorize(lgamma)(n - k + 1)


# ----------------------------------------------------------------------
# matrix construction
# ----------------------------------------------------------------------

def ladder_matrices(n: int):
    """Sparse S+, S-, Sz for the n+1 dimensional irrep, basis m = -s..s."""
    s = n / 2.0
    m = np.arange(-s, s)            # S+|m> = c(m)|m+1>
    cplus = np.sqrt(s * (s + 1) - m * (m + 1))
    Sp = sparse.diags(cplus, -1, format="csr")
    Sm = Sp.T.tocsr()
    Sz = sparse.diags(np.arange(-s, s + 1), 0, format="csr")
    return Sp, Sm, Sz


@dataclass
class SpinMatrix:
    """Symmetric banded matrix in LAPACK upper-banded storage."""

    n: int
    bands: np.ndarray               # shape (bw+1, n+1), bands[-1] = diagonal

    @property
    def bandwidth(self) -> int:
        return self.bands.shape[0] - 1

    def dense(self) -> np.ndarray:
        dim = self.n + 1
        out = np.zeros((dim, dim))
        bw = self.bandwidth
        for u in range(bw + 1):
            row = self.bands[bw - u]
            d = np.array(row[u:])
            out += np.diag(d, u)
            if u:
                out += np.diag(d, -u)
        return out

    def trace(self) -> float:
        return float(np.sum(self.bands[-1]))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        dim = self.n + 1
        bw = self.bandwidth
        out = self.bands[-1] * v
        for u in range(1, bw + 1):
            d = self.bands[bw - u][u:]
            out[: dim - u] += d * v[u:]
            out[u:] += d * v[: dim - u]
        return out


def build_hamiltonian_sparse(params: ModelParams, n: int):
    Sp, Sm, Sz = ladder_matrices(n)
    Sx = (Sp + Sm) * 0.5
    H = (2.0 / n) * (params.h * Sz)
    if params.gamma_x or params.gamma_y:
        Sy2 = -0.25 * (Sp - Sm) @ (Sp - Sm)      # real-valued: (Sp-Sm)^2/(2i)^2
        Sx2 = Sx @ Sx
        H = H - (2.0 / n ** 2) * (params.gamma_x * Sx2 + params.gamma_y * Sy2)
    if params.mu:
        Sx3 = Sx @ Sx @ Sx
        H = H + (2.0 * params.mu / n ** 3) * Sx3
    return H.tocsr()


def build_matrix(params: ModelParams, n: int) -> SpinMatrix:
    """Banded symmetric matrix of the model Hamiltonian, basis m = -s..s."""
    if n < 1:
        raise ValueError("representation size n must be >= 1")
    H = build_hamiltonian_sparse(params, n).tocoo()
    bw = 3 if params.mu else (2 if (params.gamma_x or params.gamma_y) else 0)
    dim = n + 1
    bands = np.zeros((bw + 1, dim))
    for i, j, v in zip(H.row, H.col, H.data):
        if j < i:
            continue
        u = j - i
        if u > bw:
            if abs(v) > 1e-15:
                raise AssertionError("coupling outside expected bandwidth")
            continue
        bands[bw - u, j] += v
    return SpinMatrix(n, bands)


# ----------------------------------------------------------------------
# eigensystem
# ----------------------------------------------------------------------

@dataclass
class EigenSystem:
    values: np.ndarray
    vectors: np.ndarray             # column k is the k-th eigenvector
    doublets: list = field(default_factory=list)

    def residual(self, M: SpinMatrix) -> float:
        r = 0.0
        for k in range(len(self.values)):
            v = self.vectors[:, k]
            r = max(r, np.max(np.abs(M.matvec(v) - self.values[k] * v)))
        return r


def eigensystem(M: SpinMatrix, tol: float = DEFAULT_TOL.doublet_gap
                ) -> EigenSystem:
    """Full spectrum and eigenvectors of a symmetric banded matrix.

    Deterministic ordering (ascending) and sign convention: the largest
    magnitude component of each vector is positive.  Eigenvalue pairs
    closer than ``tol`` are reported as quasi-degenerate doublets.
    """
    try:
        w, v = sla.eig_banded(M.bands, lower=False)
    except sla.LinAlgError as exc:         # pragma: no cover - LAPACK failure
        raise RuntimeError(f"banded eigensolver failed: {exc}") from exc
    order = np.argsort(w, kind="stable")
    w, v = w[order], v[:, order]
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    v = v * signs
    gaps = np.diff(w)
    doublets = [(int(i), int(i + 1)) for i in np.nonzero(gaps < tol)[0]]
    return EigenSystem(w, v, doublets)


def exact_spectrum(params: ModelParams, n: int) -> EigenSystem:
    return eigensystem(build_matrix(params, n))


# ----------------------------------------------------------------------
# coherent-state wavefunctions
# ----------------------------------------------------------------------

@dataclass
class CoherentPolynomial:
    """Psi(abar) = sum_k ctilde_k abar^k with ctilde_k = c_k binom(n,k)^1/2.

    Binomial weights are kept in log space; ``coefficients`` materializes
    them (valid while binom(n, n/2)^1/2 stays inside double range).
    """

    n: int
    c: np.ndarray                   # eigenvector components, k = m + s
    log_w: np.ndarray               # 0.5 * ln binom(n, k)

    @property
    def coefficients(self) -> np.ndarray:
        if np.max(self.log_w) > 700.0:
            raise OverflowError(
                "binomial weights overflow double range; use log-space "
                "evaluation instead")
        return self.c * np.exp(self.log_w)

    def log_terms(self, abar) -> np.ndarray:
        """Per-point array of sum over k of c_k exp(...), normalized by
        <alpha|alpha>^1/2 so magnitudes stay bounded for any abar."""
        abar = np.atleast_1d(np.asarray(abar, dtype=complex))
        k = np.arange(self.n + 1)
        log_a = np.where(abar == 0, -np.inf, np.log(np.where(abar == 0, 1.0,
                                                             abar)))
        norm = 0.5 * self.n * np.log1p(np.abs(abar) ** 2)
        expo = (self.log_w[None, :] + k[None, :] * log_a[:, None]
                - norm[:, None])
        terms = np.zeros(expo.shape, dtype=complex)
        finite = np.isfinite(expo.real)
        terms[finite] = np.exp(expo[finite])
        # abar == 0: only k = 0 survives with weight 1
        zero = (abar == 0)
        if np.any(zero):
            terms[zero, :] = 0.0
            terms[zero, 0] = np.exp(-norm[zero])
        return terms @ self.c

    def normalized_abs2(self, abar) -> np.ndarray:
        """|Psi(abar)|^2 / <alpha|alpha> for arbitrary points, stable in n."""
        return np.abs(self.log_terms(abar)) ** 2

    def evaluate(self, abar):
        """Psi(abar) itself (Horner); overflow-safe only for moderate n."""
        cs = self.coefficients
        abar = np.asarray(abar, dtype=complex)
        out = np.zeros_like(abar)
        for ck in cs[::-1]:
            out = out * abar + ck
        return out


def coherent_wavefunction(state: np.ndarray, n: int | None = None
                          ) -> CoherentPolynomial:
    state = np.asarray(state, dtype=float)
    if n is None:
        n = state.size - 1
    if state.size != n + 1:
        raise ValueError("state must have n+1 components")
    k = np.arange(n + 1)
    return CoherentPolynomial(n, state.astype(complex), 0.5 * ln_binom(n, k))


# ----------------------------------------------------------------------
# Husimi weights
# ----------------------------------------------------------------------

def default_hp_radius(n: int) -> float:
    """Disc radius sqrt(ln n / n): phase-space area of order ln(n)/n."""
    return float(np.sqrt(np.log(n) / n))


def _disc_weight_fixed(psi: CoherentPolynomial, center: complex, radius: float,
                       n_r: int, n_th: int) -> float:
    n = psi.n
    # Gauss-Legendre radially, trapezoid (periodic) angularly
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * radius * (xr + 1.0)
    wr = 0.5 * radius * wr
    th = np.linspace(0.0, 2.0 * np.pi, n_th, endpoint=False)
    pts = center + r[:, None] * np.exp(1j * th)[None, :]
    flat = pts.ravel()
    total = 0.0
    chunk = max(1, 2_000_000 // (n + 1))
    vals = np.empty(flat.size)
    for i in range(0, flat.size, chunk):
        a = flat[i: i + chunk]
        dens = psi.normalized_abs2(a)
        vals[i: i + chunk] = dens * (n + 1) / np.pi / (1 + np.abs(a) ** 2) ** 2
    vals = vals.reshape(pts.shape)
    ang = vals.mean(axis=1) * 2.0 * np.pi
    total = float(np.sum(wr * r * ang))
    return total


def husimi_weight(state, center: complex, radius: float,
                  n: int | None = None, tol: float = 1e-8) -> float:
    """Norm of the eigenstate in the stereographic disc |abar - center| < r.

    Adaptive polar quadrature around the center; ``radius = inf`` integrates
    over the whole sphere (resolution of identity gives 1 for a normalized
    state).  Raises ``QuadratureError`` on non-convergence.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    psi = state if isinstance(state, CoherentPolynomial) \
        else coherent_wavefunction(state, n)
    if np.isinf(radius):
        return _sphere_weight(psi, tol)
    n_r, n_th = 24, 32
    prev = _disc_weight_fixed(psi, center, radius, n_r, n_th)
    for _ in range(7):
        n_r, n_th = int(n_r * 1.6) + 1, n_th * 2
        cur = _disc_weight_fixed(psi, center, radius, n_r, n_th)
        if abs(cur - prev) <= tol * max(1e-3, abs(cur)):
            return cur
        prev = cur
    raise QuadratureError("husimi weight quadrature did not converge")


def _sphere_weight(psi: CoherentPolynomial, tol: float) -> float:
    # integrate radially with the exact substitution u = r^2/(1+r^2)
    def fixed(n_u, n_th):
        xu, wu = np.polynomial.legendre.leggauss(n_u)
        u = 0.5 * (xu + 1.0)
        wu = 0.5 * wu
        r = np.sqrt(u / (1.0 - u))
        th = np.linspace(0.0, 2.0 * np.pi, n_th, endpoint=False)
        pts = r[:, None] * np.exp(1j * th)[None, :]
        dens = psi.normalized_abs2(pts.ravel()).reshape(pts.shape)
        ang = dens.mean(axis=1)
        return float(np.sum(wu * (psi.n + 1) * ang))

    n_u, n_th = 48, 32
    prev = fixed(n_u, n_th)
    for _ in range(6):
        n_u, n_th = int(n_u * 1.6) + 1, n_th * 2
        cur = fixed(n_u, n_th)
        if abs(cur - prev) <= tol * max(1e-3, abs(cur)):
            return cur
        prev = cur
    raise QuadratureError("sphere weight quadrature did not converge")


# ----------------------------------------------------------------------
# wavefunction zeros
# ----------------------------------------------------------------------

def wavefunction_zeros(state, n: int | None = None,
                       tol: float = DEFAULT_TOL.poly_root_residual
                       ) -> PolyRoots:
    """All roots of the coherent-state polynomial of an eigenstate."""
    psi = state if isinstance(state, CoherentPolynomial) \
        else coherent_wavefunction(state, n)
    coeffs = psi.coefficients
    return polynomial_roots(coeffs, tol=tol)


# ----------------------------------------------------------------------
# export
# ----------------------------------------------------------------------

def spectrum_to_csv(path, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "energy"])
        for i, e in enumerate(values):
            writer.writerow([i, f"{e:.17g}"])
