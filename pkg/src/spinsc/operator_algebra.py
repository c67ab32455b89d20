"""Exact noncommutative algebra of su(2) generators in the coherent-state
differential representation.

Operators are normal-ordered differential operators sum_i p_i(abar, n) d^i
with exact (sympy rational) coefficients; substituting d -> n*zeta yields
the graded symbol H0 + H1/n + ... .  All exact arithmetic happens at
construction time; numeric work uses dense complex coefficient arrays
extracted once per symbol.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
import sympy as sp

ABAR, ZETA, NSYM = sp.symbols("abar zeta n", commutative=True)


def _rationalize(x) -> sp.Expr:
    """Exact sympy number for a parameter (floats are binary-exact)."""
    if isinstance(x, sp.Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return sp.Rational(x)
    f = Fraction(float(x))
    return sp.Rational(f.numerator, f.denominator)


@dataclass(frozen=True)
class ModelParams:
    """Couplings of the LMG-type Hamiltonian: field h, quadratic gamma_x,
    gamma_y and cubic mu."""

    h: float
    gamma_x: float = 0.0
    gamma_y: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        for name in ("h", "gamma_x", "gamma_y", "mu"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"parameter {name} must be finite")


class OperatorPoly:
    """Normal-ordered operator sum_i p_i(abar, n) * d_abar^i.

    ``terms`` maps derivative order i to an expanded sympy expression in
    (abar, n); coefficients are exact rationals (times I where needed).
    Instances are immutable; ring operations return new objects.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: dict):
        clean = {}
        for i, p in terms.items():
            p = sp.expand(p)
            if p != 0:
                clean[int(i)] = p
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, *a):
        raise AttributeError("OperatorPoly is immutable")

    # -- ring operations -------------------------------------------------
    def __add__(self, other: "OperatorPoly") -> "OperatorPoly":
        terms = dict(self.terms)
        for i, p in other.terms.items():
            terms[i] = terms.get(i, sp.Integer(0)) + p
        return OperatorPoly(terms)

    def __sub__(self, other: "OperatorPoly") -> "OperatorPoly":
        return self + other.scale(-1)

    def scale(self, c) -> "OperatorPoly":
        c = _rationalize(c) if not isinstance(c, sp.Expr) else c
        return OperatorPoly({i: c * p for i, p in self.terms.items()})

    def __eq__(self, other) -> bool:
        if not isinstance(other, OperatorPoly):
            return NotImplemented
        keys = set(self.terms) | set(other.terms)
        return all(
            sp.expand(self.terms.get(k, sp.Integer(0))
                      - other.terms.get(k, sp.Integer(0))) == 0
            for k in keys)

    def __hash__(self):
        return hash(frozenset((i, sp.srepr(p)) for i, p in self.terms.items()))

    def __repr__(self):
        parts = [f"({p}) d^{i}" for i, p in sorted(self.terms.items())]
        return "OperatorPoly[" + " + ".join(parts) + "]"

    # -- composition (normal ordering) -----------------------------------
    def compose(self, other: "OperatorPoly") -> "OperatorPoly":
        """Normal-ordered product self * other via d^i q = sum C(i,r) q^(r) d^(i-r)."""
        out: dict = {}
        for i, p in self.terms.items():
            for j, q in other.terms.items():
                for r in range(i + 1):
                    dq = sp.diff(q, ABAR, r) if r else q
                    if dq == 0:
                        continue
                    coeff = sp.binomial(i, r) * p * dq
                    k = i - r + j
                    out[k] = out.get(k, sp.Integer(0)) + coeff
        return OperatorPoly(out)

    def __mul__(self, other):
        if isinstance(other, OperatorPoly):
            return self.compose(other)
        return self.scale(other)

    __rmul__ = scale

    # -- matrix image -----------------------------------------------------
    def matrix_image(self, n: int) -> np.ndarray:
        """Action on the monomial basis {abar^k, k=0..n} as a dense matrix.

        Column k holds the expansion of (A abar^k).  This basis is not
        orthonormal; the image is meant for algebra checks, not spectra.
        """
        dim = n + 1
        mat = np.zeros((dim, dim), dtype=complex)
        for i, p in self.terms.items():
            pn = sp.expand(p.subs(NSYM, sp.Integer(n)))
            poly = sp.Poly(pn, ABAR)
            coeffs = {m[0]: complex(c) for m, c in zip(poly.monoms(),
                                                       poly.coeffs())}
            for k in range(dim):
                if k < i:
                    continue
                fall = 1.0
                for r in range(i):
                    fall *= (k - r)
                for d, c in coeffs.items():
                    row = k - i + d
                    if 0 <= row < dim:
                        mat[row, k] += c * fall
        return mat

    def symbol(self) -> "GradedSymbol":
        return symbol_of(self)


# ----------------------------------------------------------------------
# generators and model Hamiltonian
# ----------------------------------------------------------------------

def generator(name: str) -> OperatorPoly:
    """Exact su(2) generator: S+ = n*abar - abar^2 d, S- = d, Sz = -n/2 + abar d."""
    if name in ("S+", "Sp", "splus"):
        return OperatorPoly({0: NSYM * ABAR, 1: -ABAR ** 2})
    if name in ("S-", "Sm", "sminus"):
        return OperatorPoly({1: sp.Integer(1)})
    if name in ("Sz", "sz"):
        return OperatorPoly({0: -NSYM / 2, 1: ABAR})
    if name in ("Sx", "sx"):
        return (generator("S+") + generator("S-")).scale(sp.Rational(1, 2))
    if name in ("Sy", "sy"):
        return (generator("S+") - generator("S-")).scale(1 / (2 * sp.I))
    raise ValueError(f"unknown generator {name!r}")


def identity_op() -> OperatorPoly:
    return OperatorPoly({0: sp.Integer(1)})


@lru_cache(maxsize=32)
def _hamiltonian_cached(h, gx, gy, mu) -> OperatorPoly:
    sz = generator("Sz")
    sx = generator("Sx")
    sy = generator("Sy")
    H = sz.scale(h)
    if gx != 0:
        H = H - (sx * sx).scale(gx / NSYM)
    if gy != 0:
        H = H - (sy * sy).scale(gy / NSYM)
    if mu != 0:
        H = H + (sx * sx * sx).scale(mu / NSYM ** 2)
    return H.scale(2 / NSYM)


def hamiltonian_operator(params: ModelParams) -> OperatorPoly:
    """Normal-ordered (2/n)(h Sz - (gx Sx^2 + gy Sy^2)/n + mu Sx^3/n^2)."""
    return _hamiltonian_cached(_rationalize(params.h),
                               _rationalize(params.gamma_x),
                               _rationalize(params.gamma_y),
                               _rationalize(params.mu))


# ----------------------------------------------------------------------
# graded symbols
# ----------------------------------------------------------------------

class _Poly2D:
    """Numeric bivariate polynomial sum c[i,j] x^i y^j with derivative algebra."""

    __slots__ = ("c",)

    def __init__(self, c: np.ndarray):
        self.c = np.asarray(c, dtype=complex)

    def __call__(self, x, y):
        return np.polynomial.polynomial.polyval2d(x, y, self.c)

    def dx(self) -> "_Poly2D":
        c = self.c
        if c.shape[0] == 1:
            return _Poly2D(np.zeros((1, 1)))
        return _Poly2D(c[1:, :] * np.arange(1, c.shape[0])[:, None])

    def dy(self) -> "_Poly2D":
        c = self.c
        if c.shape[1] == 1:
            return _Poly2D(np.zeros((1, 1)))
        return _Poly2D(c[:, 1:] * np.arange(1, c.shape[1])[None, :])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.c)


_ZERO2D = _Poly2D(np.zeros((1, 1)))


class GradedSymbol:
    """Symbol H(abar, zeta, n) = sum_j n^-j H_j(abar, zeta), finite grading.

    ``orders_exact`` keeps the exact sympy polynomials (coefficient-level
    assertions); ``order(j)`` returns a fast numeric evaluator.
    """

    def __init__(self, orders_exact: dict):
        self.orders_exact = {int(j): sp.expand(p)
                             for j, p in orders_exact.items()
                             if sp.expand(p) != 0}
        self._numeric = {}

    @property
    def min_order(self) -> int:
        return min(self.orders_exact, default=0)

    @property
    def max_order(self) -> int:
        return max(self.orders_exact, default=0)

    def order(self, j: int) -> _Poly2D:
        """Numeric evaluator for H_j (zero polynomial if absent)."""
        if j not in self._numeric:
            expr = self.orders_exact.get(j)
            if expr is None:
                self._numeric[j] = _ZERO2D
            else:
                poly = sp.Poly(expr, ABAR, ZETA)
                deg_a = poly.degree(ABAR)
                deg_z = poly.degree(ZETA)
                c = np.zeros((deg_a + 1, deg_z + 1), dtype=complex)
                for (i, k), coeff in zip(poly.monoms(), poly.coeffs()):
                    c[i, k] = complex(coeff)
                self._numeric[j] = _Poly2D(c)
        return self._numeric[j]

    @property
    def h0(self) -> _Poly2D:
        return self.order(0)

    @property
    def h1(self) -> _Poly2D:
        return self.order(1)

    def full(self, abar, zeta, n):
        """Exact-resummation evaluation sum_j n^-j H_j(abar, zeta)."""
        tot = 0.0 + 0.0j
        for j in self.orders_exact:
            tot += self.order(j)(abar, zeta) * float(n) ** (-j)
        return tot

    def full_exact(self) -> sp.Expr:
        return sum((p * NSYM ** (-j) for j, p in self.orders_exact.items()),
                   sp.Integer(0))


def symbol_of(op: OperatorPoly) -> GradedSymbol:
    """Graded symbol of a normal-ordered operator: d -> n*zeta, collect n powers."""
    expr = sp.Integer(0)
    for i, p in op.terms.items():
        expr += p * (NSYM * ZETA) ** i
    expr = sp.together(sp.expand(expr))
    num, den = sp.fraction(sp.cancel(expr))
    shift = int(sp.degree(den, NSYM)) if den.has(NSYM) else 0
    den_coeff = sp.simplify(den / NSYM ** shift)
    if not den_coeff.is_Number:
        raise ValueError(f"symbol denominator not c * n^k: {den}")
    num = sp.expand(num / den_coeff)
    orders: dict = {}
    poly = sp.Poly(num, NSYM)
    deg = poly.degree()
    for k in range(deg + 1):
        ck = poly.nth(k)
        if ck != 0:
            j = shift - k          # n^k / n^shift = n^-(shift-k)
            orders[j] = orders.get(j, sp.Integer(0)) + ck
    sym = GradedSymbol(orders)
    if sym.min_order < 0:
        raise ValueError("operator symbol has positive powers of n; "
                         "rescale the operator before grading")
    return sym


# convenience observables ------------------------------------------------

def scaled_observable(name: str) -> OperatorPoly:
    """Unit-normalized spin component, e.g. s_z = 2 Sz / n."""
    base = {"sz": "Sz", "sx": "Sx", "sy": "Sy"}
    if name == "identity":
        return identity_op()
    if name not in base:
        raise ValueError(f"unknown observable {name!r}")
    return generator(base[name]).scale(2 / NSYM)
