"""Shared numerical kernels.

Complex log-gamma, bracketed scalar root finding, simultaneous (Aberth)
polynomial root finding, adaptive ODE integration and endpoint-graded
quadrature for integrands with logarithmic endpoint singularities.

All tolerances used across the package are collected in ``Tolerances`` so
that individual modules consume, and never redefine, them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp


@dataclass(frozen=True)
class Tolerances:
    """Central tolerance configuration (defaults are the package contract)."""

    matrix_residual: float = 1e-10
    orthonormality: float = 1e-10
    symbol_reality: float = 1e-12
    gradient_zero: float = 1e-10
    dedup_distance: float = 1e-8
    energy_drift: float = 1e-9
    orbit_closure: float = 1e-6
    hp_seed_offset: float = 1e-7
    hp_reach: float = 1e-4
    action_convergence: float = 1e-8
    action_tail_cut: float = 1e-3
    det_t_unit: float = 1e-10
    root_polish: float = 1e-10
    poly_root_residual: float = 1e-8
    quadrature: float = 1e-8
    doublet_gap: float = 1e-13
    eta_overflow: float = 50.0


DEFAULT_TOL = Tolerances()

_RNG_SEED = 20080417  # fixed seed for any randomized multistart


# ----------------------------------------------------------------------
# complex log-gamma
# ----------------------------------------------------------------------

# Lanczos coefficients, g = 7, giving ~1e-14 relative accuracy.
_LANCZOS_G = 7.0
_LANCZOS_C = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])

_LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def log_gamma_complex(z: complex) -> complex:
    """Principal-branch log Gamma(z) for complex z.

    Lanczos rational approximation for Re z >= 1/2; otherwise the value is
    obtained by shifting into that half plane with the recurrence
    log Gamma(z) = log Gamma(z + m) - sum log(z + k).  Poles (non-positive
    integers) raise ``ValueError``.
    """
    z = complex(z)
    if z.imag == 0.0 and z.real <= 0.0 and z.real == round(z.real):
        raise ValueError(f"log_gamma_complex: pole at z = {z}")
    shift = 0
    if z.real < 0.5:
        shift = int(math.ceil(0.5 - z.real))
    zs = z + shift
    x = _LANCZOS_C[0]
    for k in range(1, len(_LANCZOS_C)):
        x += _LANCZOS_C[k] / (zs - 1.0 + k)
    t = zs - 0.5 + _LANCZOS_G
    out = _LN_SQRT_2PI + (zs - 0.5) * np.log(t) - t + np.log(x)
    if shift:
        out -= sum(np.log(z + k) for k in range(shift))
    return complex(out)


# ----------------------------------------------------------------------
# bracketed scalar root finding
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class RootBracket:
    """Interval [lo, hi] on which a target function changes sign."""

    lo: float
    hi: float

    @classmethod
    def of(cls, f, lo: float, hi: float) -> "RootBracket":
        if not lo < hi:
            raise ValueError("bracket requires lo < hi")
        flo, fhi = f(lo), f(hi)
        if not (np.isfinite(flo) and np.isfinite(fhi)) or flo * fhi >= 0.0:
            raise ValueError(f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
        return cls(lo, hi)


def find_root(f, bracket: RootBracket, tol: float = 1e-12) -> float:
    """Hybrid secant/bisection root inside a validated bracket.

    Terminates when the bracket width falls below ``tol`` times the scale of
    the interval; the returned point carries the smaller |f|.
    """
    a, b = bracket.lo, bracket.hi
    fa, fb = f(a), f(b)
    if fa * fb >= 0.0:
        raise ValueError("invalid bracket passed to find_root")
    scale = max(1.0, abs(a), abs(b))
    for _ in range(300):
        if abs(b - a) < tol * scale:
            break
        # secant step from the current endpoints, safeguarded by bisection
        if fb != fa:
            x = b - fb * (b - a) / (fb - fa)
        else:
            x = 0.5 * (a + b)
        margin = 0.01 * (b - a)
        if not (a + margin < x < b - margin):
            x = 0.5 * (a + b)
        fx = f(x)
        if fx == 0.0:
            return x
        if fa * fx < 0.0:
            b, fb = x, fx
        else:
            a, fa = x, fx
    return a if abs(fa) <= abs(fb) else b


# ----------------------------------------------------------------------
# Aberth-Ehrlich simultaneous polynomial roots
# ----------------------------------------------------------------------

@dataclass
class PolyRoots:
    roots: np.ndarray
    residuals: np.ndarray          # scaled residuals, one per root
    converged: np.ndarray          # per-root convergence flags
    reduced_degree: int            # degree after trimming zero leading coeffs


def _poly_eval_scaled(coeffs: np.ndarray, z: np.ndarray):
    """Evaluate p(z) and p'(z)/p(z)-safe data, scaling away overflow.

    For |z| > 1 the reversed polynomial is evaluated at 1/z so magnitudes
    stay bounded; returns (value, derivative) of the *scaled* polynomial
    q(z) = p(z) / max(1,|z|)^deg, consistent for residual tests.
    """
    deg = len(coeffs) - 1
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) <= 1.0
    val = np.empty_like(z)
    der = np.empty_like(z)
    # ascending Horner for |z| <= 1
    if np.any(small):
        zs = z[small]
        v = np.zeros_like(zs)
        d = np.zeros_like(zs)
        for c in coeffs[::-1]:
            d = d * zs + v
            v = v * zs + c
        val[small], der[small] = v, d
    if np.any(~small):
        zb = z[~small]
        w = 1.0 / zb
        v = np.zeros_like(zb)
        d = np.zeros_like(zb)
        for c in coeffs:               # reversed polynomial r(w) = w^deg p(1/w)
            d = d * w + v
            v = v * w + c
        # p(z)/z^deg = r(w);  p'(z)/z^deg = -w**2 * r'(w)*... chain rule below
        val[~small] = v
        # d/dz [r(1/z)] = -r'(w) w^2 ; p(z) = z^deg r(w) =>
        # p'(z)/z^deg = deg*w*r(w) - w^2 r'(w)
        der[~small] = deg * w * v - w * w * d
    return val, der


def polynomial_roots(coeffs, tol: float = DEFAULT_TOL.poly_root_residual,
                     max_iter: int = 400) -> PolyRoots:
    """All complex roots of sum_k coeffs[k] z^k by Aberth-Ehrlich iteration.

    Exact zero roots (vanishing low-order coefficients) are factored out
    first.  Residuals are measured on the polynomial rescaled by its largest
    coefficient and by max(1,|z|)^deg, so they are meaningful for roots of
    any magnitude.
    """
    c = np.asarray(coeffs, dtype=complex)
    if c.size < 2:
        raise ValueError("polynomial degree must be >= 1")
    # trim (numerically) zero leading coefficients
    nz = np.nonzero(np.abs(c) > 0.0)[0]
    if nz.size == 0:
        raise ValueError("zero polynomial")
    reduced_degree = nz[-1]
    c = c[: nz[-1] + 1]
    c = c / np.max(np.abs(c))
    # factor out roots at the origin
    n_zero = nz[0]
    c = c[n_zero:]
    deg = len(c) - 1
    if deg == 0:
        roots = np.zeros(n_zero, dtype=complex)
        return PolyRoots(roots, np.zeros(n_zero), np.ones(n_zero, bool),
                         reduced_degree)
    # Cauchy-bound radius for the starting circle
    radius = 1.0 + np.max(np.abs(c[:-1]) / np.abs(c[-1])) ** (1.0 / deg)
    k = np.arange(deg)
    z = radius * np.exp(2j * np.pi * (k + 0.35) / deg) * (0.6 + 0.4 * (k % 2))
    converged = np.zeros(deg, dtype=bool)
    for _ in range(max_iter):
        val, der = _poly_eval_scaled(c, z)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(der != 0, val / der, 0.0)
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, np.inf)
            s = np.sum(1.0 / diff, axis=1)
            corr = w / (1.0 - w * s)
        corr = np.where(np.isfinite(corr), corr, 0.0)
        active = ~converged
        z = z - np.where(active, corr, 0.0)
        step = np.abs(corr)
        converged |= step < 1e-14 * np.maximum(1.0, np.abs(z))
        if converged.all():
            break
    val, _ = _poly_eval_scaled(c, z)
    residuals = np.abs(val)
    ok = residuals <= tol
    roots = np.concatenate([np.zeros(n_zero, dtype=complex), z])
    residuals = np.concatenate([np.zeros(n_zero), residuals])
    ok = np.concatenate([np.ones(n_zero, dtype=bool), ok])
    return PolyRoots(roots, residuals, ok, reduced_degree)


# ----------------------------------------------------------------------
# adaptive ODE integration
# ----------------------------------------------------------------------

@dataclass
class OdePath:
    t: np.ndarray
    y: np.ndarray                  # shape (dim, len(t))
    dense: object                  # callable t -> y, from the integrator
    truncated: bool = False
    message: str = ""


def integrate_ode(f, y0, tspan, tol: float = 1e-10, events=None,
                  max_step: float = np.inf) -> OdePath:
    """Adaptive embedded Runge-Kutta integration with dense output.

    Thin wrapper over ``scipy.integrate.solve_ivp`` (RK45).  A step-size
    underflow or event stop is reported through ``truncated``/``message``
    instead of raising, so callers can use partial paths.
    """
    sol = solve_ivp(f, tspan, np.asarray(y0, float), method="RK45",
                    rtol=tol, atol=tol * 1e-2, dense_output=True,
                    events=events, max_step=max_step)
    truncated = not sol.success or (sol.status == 1)
    return OdePath(sol.t, sol.y, sol.sol, truncated, sol.message)


# ----------------------------------------------------------------------
# endpoint-graded quadrature
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    rule: str = "endpoint-graded"   # or "trapezoid"
    points: int = 64
    target: float = DEFAULT_TOL.quadrature

    def __post_init__(self):
        if self.points < 16:
            raise ValueError("quadrature needs at least 16 points")
        if self.target <= 0:
            raise ValueError("quadrature tolerance must be positive")


class QuadratureError(RuntimeError):
    pass


def graded_quadrature(g, a: float, b: float, exponent: int = 4,
                      spec: QuadratureSpec = QuadratureSpec()) -> complex:
    """Integral of ``g`` over [a, b] tolerating log endpoint singularities.

    The interval is split at the midpoint and each half is mapped by
    x = end + (mid-end) * v**exponent, which clusters nodes at the endpoints
    and regularizes integrable logarithmic singularities.  Composite
    Gauss-Legendre panels in v are doubled until self-convergence.
    """
    if not b > a:
        raise ValueError("graded_quadrature requires b > a")
    mid = 0.5 * (a + b)
    p = exponent

    def transformed(end, other):
        span = other - end

        def h(v):
            x = end + span * v ** p
            return g(x) * span * p * v ** (p - 1)

        return h

    # each half is mapped from its endpoint inward; the b-side map reverses
    # orientation, hence the sign flip
    h_right = transformed(b, mid)
    halves = [transformed(a, mid), lambda v: -h_right(v)]

    nodes, weights = np.polynomial.legendre.leggauss(16)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights

    def total(n_panels):
        acc = 0.0 + 0.0j
        edges = np.linspace(0.0, 1.0, n_panels + 1)
        for h in halves:
            for i in range(n_panels):
                lo, hi = edges[i], edges[i + 1]
                x = lo + (hi - lo) * nodes
                acc += (hi - lo) * np.sum(weights * h(x))
        return acc

    n = max(1, spec.points // 32)
    prev = total(n)
    for _ in range(6):
        n *= 2
        cur = total(n)
        if abs(cur - prev) <= spec.target * max(1.0, abs(cur)):
            return cur
        prev = cur
    raise QuadratureError(
        f"graded quadrature did not self-converge (last delta "
        f"{abs(cur - prev):.3e})")
