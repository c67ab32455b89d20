"""Classical limit machinery on the Riemann sphere.

The classical energy is the leading symbol restricted to the sphere section
zeta = conj(abar)/(1+|abar|^2).  To evaluate it (and its derivatives)
stably on the whole sphere, the restriction is rewritten once, exactly, as
a bivariate polynomial over (1+|w|^2)^J in each stereographic chart.
Fixed-point finding, Hamiltonian flow, level-set tracing and regular
Bohr-Sommerfeld quantization all run on that representation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp

from .numerics import DEFAULT_TOL, RootBracket, find_root
from .operator_algebra import ABAR, GradedSymbol, _Poly2D

CHART_HANDOFF = 3.0          # |w| at which integration switches charts

ABARC = sp.Symbol("abarc")


def section(abar):
    """Physical sphere section zeta = conj(abar)/(1+|abar|^2)."""
    abar = np.asarray(abar, dtype=complex)
    return np.conj(abar) / (1.0 + np.abs(abar) ** 2)


@dataclass(frozen=True)
class PhasePoint:
    abar: complex
    zeta: complex
    on_section: bool = True

    @classmethod
    def on_sphere(cls, abar: complex) -> "PhasePoint":
        return cls(complex(abar), complex(section(abar)), True)


@dataclass
class FixedPointInfo:
    abar: complex                 # south-chart location (inf for north pole)
    kind: str                     # 'hyperbolic' | 'elliptic' | 'degenerate'
    energy: float
    sigma: int = 0
    chart: str = "south"
    w: complex = 0j               # coordinate in ``chart``
    svec: tuple = (0.0, 0.0, 0.0)

    def to_dict(self) -> dict:
        return {
            "re_abar": None if np.isinf(abs(self.abar)) else self.abar.real,
            "im_abar": None if np.isinf(abs(self.abar)) else self.abar.imag,
            "kind": self.kind,
            "energy": self.energy,
            "sigma": self.sigma,
        }


@dataclass
class OrbitBranch:
    t: np.ndarray
    abar: np.ndarray
    energy: float
    endpoints: tuple | None = None     # (start fp index, end fp index)
    period: float = np.inf
    closed: bool = False
    truncated: bool = False
    reason: str = ""

    @property
    def zeta(self) -> np.ndarray:
        return section(self.abar)

    def to_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "re_abar", "im_abar", "energy"])
            for t, a in zip(self.t, self.abar):
                w.writerow([f"{t:.17g}", f"{a.real:.17g}", f"{a.imag:.17g}",
                            f"{self.energy:.17g}"])


# ----------------------------------------------------------------------
# stable two-chart energy surface
# ----------------------------------------------------------------------

class _ChartPoly:
    """E(w) = Q(w, conj w) / (1 + |w|^2)^J with analytic Wirtinger data."""

    def __init__(self, Q: np.ndarray, J: int):
        self.Q = _Poly2D(Q)
        self.Qx = self.Q.dx()
        self.Qy = self.Q.dy()
        self.Qxx = self.Qx.dx()
        self.Qxy = self.Qx.dy()
        self.J = J

    def value(self, w):
        wb = np.conj(w)
        s = (w * wb).real
        return (self.Q(w, wb) / (1.0 + s) ** self.J).real

    def dw(self, w):
        wb = np.conj(w)
        s = (w * wb).real
        num = self.Qx(w, wb) * (1.0 + s) - self.J * wb * self.Q(w, wb)
        return num / (1.0 + s) ** (self.J + 1)

    def second(self, w):
        """(F_ww, F_wwbar) Wirtinger second derivatives."""
        wb = np.conj(w)
        s = (w * wb).real
        one = 1.0 + s
        Q = self.Q(w, wb)
        Qx = self.Qx(w, wb)
        Qy = self.Qy(w, wb)
        Qxx = self.Qxx(w, wb)
        Qxy = self.Qxy(w, wb)
        N1 = Qx * one - self.J * wb * Q
        dwN1 = Qxx * one + wb * Qx - self.J * wb * Qx
        dwbN1 = Qxy * one + w * Qx - self.J * Q - self.J * wb * Qy
        f_ww = (dwN1 * one - (self.J + 1) * wb * N1) / one ** (self.J + 2)
        f_wwb = (dwbN1 * one - (self.J + 1) * w * N1) / one ** (self.J + 2)
        return f_ww, f_wwb

    def grad_real(self, w):
        fw = self.dw(w)
        return np.array([2.0 * fw.real, -2.0 * fw.imag])

    def hess_real(self, w):
        f_ww, f_wwb = self.second(w)
        hxx = 2.0 * f_ww.real + 2.0 * f_wwb.real
        hxy = -2.0 * f_ww.imag
        hyy = -2.0 * f_ww.real + 2.0 * f_wwb.real
        return np.array([[hxx, hxy], [hxy, hyy]])

    def velocity(self, w):
        """Reduced sphere flow dw/dt = -i (1+|w|^2)^2 conj(dE/dw)."""
        s = (w * np.conj(w)).real
        return -1j * (1.0 + s) ** 2 * np.conj(self.dw(w))


class Surface:
    """Two-chart view of a graded symbol's classical energy."""

    def __init__(self, sym: GradedSymbol):
        self.sym = sym
        from .operator_algebra import ZETA
        h0 = sym.orders_exact.get(0, sp.Integer(0))
        # exact substitution zeta -> abarc/(1+abar*abarc), common denominator
        J = max((m[1] for m in sp.Poly(h0, ABAR, ZETA).monoms()), default=0)
        expr = sp.expand(h0.subs(ZETA, ABARC / (1 + ABAR * ABARC))
                         * (1 + ABAR * ABARC) ** J)
        expr = sp.expand(sp.cancel(sp.together(expr)))
        Qp = sp.Poly(expr, ABAR, ABARC)
        Q = np.zeros((Qp.degree(ABAR) + 1, Qp.degree(ABARC) + 1),
                     dtype=complex)
        for (i, k), c in zip(Qp.monoms(), Qp.coeffs()):
            Q[i, k] = complex(c)
        if Q.shape[0] > J + 1 or Q.shape[1] > J + 1:
            # a symbol smooth on the sphere cancels down to degree J
            spill = np.max(np.abs(Q[J + 1:, :])) if Q.shape[0] > J + 1 else 0.0
            if Q.shape[1] > J + 1:
                spill = max(spill, np.max(np.abs(Q[:, J + 1:])))
            if spill > 1e-9 * np.max(np.abs(Q)):
                raise ValueError("classical energy is not smooth at the "
                                 "north pole; cannot build north chart")
            Q = Q[: J + 1, : J + 1]
        Qfull = np.zeros((J + 1, J + 1), dtype=complex)
        Qfull[: Q.shape[0], : Q.shape[1]] = Q
        self.south = _ChartPoly(Qfull, J)
        self.north = _ChartPoly(Qfull[::-1, ::-1].copy(), J)
        self.J = J
        # leading-symbol derivative evaluators in (abar, zeta)
        self.h0 = sym.h0
        self.h0_a = self.h0.dx()
        self.h0_z = self.h0.dy()
        self.h0_aa = self.h0_a.dx()
        self.h0_az = self.h0_a.dy()
        self.h0_zz = self.h0_z.dy()
        self.h0_aaz = self.h0_az.dx()
        self.h0_azz = self.h0_az.dy()
        self.h1 = sym.h1
        self.h1_a = self.h1.dx()
        self.h1_z = self.h1.dy()

    def chart(self, name: str) -> _ChartPoly:
        return self.south if name == "south" else self.north

    def energy(self, abar) -> float:
        a = complex(abar)
        if np.isinf(abs(a)):
            return float(self.north.value(0j))
        if abs(a) <= CHART_HANDOFF:
            return float(self.south.value(a))
        return float(self.north.value(1.0 / a))

    def velocity_abar(self, abar):
        """d abar/dt of the reduced flow, evaluated in the better chart."""
        a = complex(abar)
        if abs(a) <= CHART_HANDOFF:
            return self.south.velocity(a)
        b = 1.0 / a
        return -self.north.velocity(b) / b ** 2


_SURFACE_CACHE: dict = {}


def surface_of(sym: GradedSymbol) -> Surface:
    key = id(sym)
    if key not in _SURFACE_CACHE:
        _SURFACE_CACHE[key] = Surface(sym)
    return _SURFACE_CACHE[key]


def classical_energy(sym: GradedSymbol, abar,
                     tol: float = DEFAULT_TOL.symbol_reality) -> float:
    """H0 on the sphere section; asserts the imaginary part is negligible."""
    srf = surface_of(sym)
    a = complex(abar)
    if not np.isinf(abs(a)):
        raw = complex(srf.h0(a, complex(section(a))))
        if abs(raw.imag) > tol * max(1.0, abs(raw)):
            raise ValueError(f"classical energy not real at {abar}: {raw}")
    return srf.energy(abar)


# ----------------------------------------------------------------------
# fixed points
# ----------------------------------------------------------------------

def _svec(abar) -> np.ndarray:
    a = complex(abar)
    if np.isinf(abs(a)):
        return np.array([0.0, 0.0, 1.0])
    r2 = abs(a) ** 2
    return np.array([2 * a.real, 2 * a.imag, r2 - 1.0]) / (1.0 + r2)


_FP_CACHE: dict = {}


def find_critical_points(sym: GradedSymbol, grid: int = 40,
                         tol: float = DEFAULT_TOL.gradient_zero
                         ) -> list[FixedPointInfo]:
    """All fixed points of the classical flow, Newton-polished and classified.

    Multistart Newton on the chart gradient from a grid over both
    stereographic charts; duplicates are merged by chordal distance.
    Results are cached per symbol.
    """
    cache_key = (id(sym), grid)
    if cache_key in _FP_CACHE:
        return _FP_CACHE[cache_key]
    srf = surface_of(sym)
    scale = max(1.0, np.max(np.abs(srf.south.Q.c)))
    found: list[FixedPointInfo] = []

    def consider(w, chart_name):
        cp = srf.chart(chart_name)
        w = complex(w)
        for _ in range(60):
            g = cp.grad_real(w)
            if np.linalg.norm(g) < 1e-13 * scale:
                break
            H = cp.hess_real(w)
            try:
                step = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                return
            if np.linalg.norm(step) > 1.0:
                step = step / np.linalg.norm(step)
            w = w + step[0] + 1j * step[1]
            if abs(w) > 2 * CHART_HANDOFF:
                return
        else:
            return
        if np.linalg.norm(cp.grad_real(w)) > tol * scale:
            return
        abar = w if chart_name == "south" else \
            (np.inf if abs(w) < 1e-9 else 1.0 / w)
        sv = _svec(abar)
        for fp in found:
            if np.linalg.norm(sv - np.array(fp.svec)) < DEFAULT_TOL.dedup_distance:
                return
        H = cp.hess_real(w)
        ev = np.linalg.eigvalsh(H)
        if min(np.abs(ev)) < 1e-8 * max(1.0, np.max(np.abs(ev))):
            kind = "degenerate"
        elif ev[0] * ev[1] < 0:
            kind = "hyperbolic"
        else:
            kind = "elliptic"
        found.append(FixedPointInfo(
            abar=complex(abar) if not np.isinf(abs(np.complex128(abar)))
            else complex(np.inf),
            kind=kind, energy=float(cp.value(w)), chart=chart_name,
            w=w, svec=tuple(sv)))

    lin = np.linspace(-2.0, 2.0, grid)
    for chart_name in ("south", "north"):
        for x in lin:
            for y in lin:
                consider(x + 1j * y, chart_name)
        consider(0j, chart_name)       # poles explicitly
    found.sort(key=lambda fp: (fp.energy, fp.svec[2], fp.svec[0]))
    _FP_CACHE[cache_key] = found
    return found


def hyperbolic_points(sym: GradedSymbol, energy: float | None = None,
                      atol: float = 1e-7) -> list[FixedPointInfo]:
    hps = [fp for fp in find_critical_points(sym) if fp.kind == "hyperbolic"]
    if energy is not None:
        hps = [fp for fp in hps if abs(fp.energy - energy) < atol]
    return hps


def critical_energies(sym: GradedSymbol) -> list[float]:
    return sorted({round(fp.energy, 10) for fp in find_critical_points(sym)
                   if fp.kind == "hyperbolic"})


def flow_jacobian(srf: Surface, fp: FixedPointInfo) -> np.ndarray:
    """Real 2x2 Jacobian of the reduced flow at a fixed point (its chart)."""
    cp = srf.chart(fp.chart)
    h = 1e-6
    w = fp.w
    cols = []
    for dw in (h, 1j * h):
        vp = cp.velocity(w + dw)
        vm = cp.velocity(w - dw)
        d = (vp - vm) / (2 * h)
        cols.append([d.real, d.imag])
    return np.array(cols).T


def hyperbolic_directions(srf: Surface, fp: FixedPointInfo):
    """(rate, unstable unit vectors [2], stable unit vectors [2]) in chart."""
    Mfl = flow_jacobian(srf, fp)
    ev, vec = np.linalg.eig(Mfl)
    if np.max(np.abs(ev.imag)) > 1e-6 * np.max(np.abs(ev)):
        raise ValueError("flow linearization is not hyperbolic")
    ev = ev.real
    iu, ist = int(np.argmax(ev)), int(np.argmin(ev))
    vu = vec[:, iu].real
    vs = vec[:, ist].real
    vu /= np.linalg.norm(vu)
    vs /= np.linalg.norm(vs)
    rate = float(ev[iu])
    return rate, [vu, -vu], [vs, -vs]


# ----------------------------------------------------------------------
# flow integration (chart-switching)
# ----------------------------------------------------------------------

def _rhs_for(cp: _ChartPoly):
    def rhs(t, y):
        v = cp.velocity(y[0] + 1j * y[1])
        return [v.real, v.imag]
    return rhs


def _integrate_chart_switching(srf: Surface, w0: complex, chart: str,
                               tmax: float, stop=None, rtol: float = 1e-11,
                               max_step: float = np.inf):
    """Integrate the reduced flow, switching charts at |w| = CHART_HANDOFF.

    ``stop(t, abar)`` may return True on dense samples to terminate.
    Returns (t array, abar array, truncated flag, reason).
    """
    t_all = [0.0]
    a0 = w0 if chart == "south" else 1.0 / w0
    abar_all = [complex(a0)]
    t0 = 0.0
    w = complex(w0)
    reason = ""
    truncated = False

    def leave_event(t, y):
        return y[0] ** 2 + y[1] ** 2 - CHART_HANDOFF ** 2
    leave_event.terminal = True

    chunk = tmax if stop is None else min(tmax, 5.0)
    while t0 < tmax - 1e-12:
        cp = srf.chart(chart)
        t_end = min(t0 + chunk, tmax)
        sol = solve_ivp(_rhs_for(cp), (t0, t_end), [w.real, w.imag],
                        method="RK45", rtol=rtol, atol=rtol * 1e-2,
                        dense_output=True, events=[leave_event],
                        max_step=max_step)
        if not sol.success:
            truncated, reason = True, sol.message
        # resample this segment densely and convert to abar
        seg_t = sol.t
        if len(seg_t) < 2:
            truncated, reason = True, "step underflow"
            break
        n_sub = max(len(seg_t) * 4, 8)
        ts = np.linspace(seg_t[0], seg_t[-1], n_sub + 1)[1:]
        ys = sol.sol(ts)
        ws = ys[0] + 1j * ys[1]
        a = ws if chart == "south" else 1.0 / ws
        stop_at = None
        if stop is not None:
            for i, (tt, aa) in enumerate(zip(ts, a)):
                if stop(tt, aa):
                    stop_at = i
                    break
        if stop_at is not None:
            t_all.extend(ts[: stop_at + 1])
            abar_all.extend(a[: stop_at + 1])
            truncated, reason = False, "stop condition"
            return (np.array(t_all), np.array(abar_all), False, reason)
        t_all.extend(ts)
        abar_all.extend(a)
        if truncated:
            break
        if sol.status == 1:       # hit the chart boundary
            w_end = sol.y[0, -1] + 1j * sol.y[1, -1]
            w = 1.0 / w_end
            chart = "north" if chart == "south" else "south"
            t0 = sol.t[-1]
            continue
        if sol.t[-1] < tmax - 1e-12:      # end of a chunk, keep going
            w = sol.y[0, -1] + 1j * sol.y[1, -1]
            t0 = sol.t[-1]
            continue
        break                     # reached tmax
    return np.array(t_all), np.array(abar_all), truncated, reason


def integrate_flow(sym: GradedSymbol, start, tmax: float,
                   rtol: float = 1e-11) -> OrbitBranch:
    """Trace the reduced Hamiltonian flow from a sphere-section start point."""
    srf = surface_of(sym)
    a0 = start.abar if isinstance(start, PhasePoint) else complex(start)
    chart = "south" if abs(a0) <= CHART_HANDOFF else "north"
    w0 = a0 if chart == "south" else 1.0 / a0
    t, a, truncated, reason = _integrate_chart_switching(
        srf, w0, chart, tmax, rtol=rtol)
    return OrbitBranch(t, a, energy=srf.energy(a0), truncated=truncated,
                       reason=reason)


# ----------------------------------------------------------------------
# level sets
# ----------------------------------------------------------------------

def _trace_closed_orbit(srf: Surface, a0: complex, rtol: float = 1e-11,
                        closure: float = DEFAULT_TOL.orbit_closure,
                        tmax: float = 2000.0):
    """Follow the flow from a0 until it returns to a0; returns (t, abar, T).

    A coarse proximity test on dense samples finds the approach; the
    period is then pinned by integrating to the transversal hyperplane
    through a0 normal to the initial velocity.
    """
    sv0 = _svec(a0)
    state = {"armed": False, "dmax": 0.0}

    def stop(t, a):
        d = np.linalg.norm(_svec(a) - sv0)
        state["dmax"] = max(state["dmax"], d)
        if not state["armed"]:
            if d > 1e-3:
                state["armed"] = True
            return False
        return d < min(0.3 * state["dmax"], 0.05)

    chart = "south" if abs(a0) <= CHART_HANDOFF else "north"
    w0 = a0 if chart == "south" else 1.0 / a0
    t, a, truncated, reason = _integrate_chart_switching(
        srf, w0, chart, tmax, stop=stop, rtol=rtol)
    if reason != "stop condition":
        return t, a, None
    # refine: continue to the section {Re conj(v0) (w - w0) = 0}
    cp = srf.chart(chart)
    v0 = cp.velocity(complex(w0))
    a_end = a[-1]
    w_end = a_end if chart == "south" else 1.0 / a_end

    def plane(tt, y):
        return ((y[0] - w0.real) * v0.real + (y[1] - w0.imag) * v0.imag)
    plane.terminal = True
    plane.direction = 1.0
    gap = abs(w_end - w0)
    sol = solve_ivp(_rhs_for(cp), (0.0, 10.0 * gap / max(abs(v0), 1e-30) + 1e-6),
                    [w_end.real, w_end.imag], method="RK45", rtol=rtol,
                    atol=rtol * 1e-2, dense_output=True, events=[plane])
    if sol.status != 1 or len(sol.t_events[0]) == 0:
        # fall back to a first-order correction
        v = srf.velocity_abar(a_end)
        period = t[-1] + (np.conj(v) * (a0 - a_end)).real / abs(v) ** 2
        return t, a, float(period)
    t_hit = float(sol.t_events[0][0])
    ts = np.linspace(0.0, t_hit, 12)[1:]
    ys = sol.sol(ts)
    ws = ys[0] + 1j * ys[1]
    a_tail = ws if chart == "south" else 1.0 / ws
    w_hit = sol.y_events[0][0][0] + 1j * sol.y_events[0][0][1]
    miss = abs(w_hit - w0)
    if miss > 100 * closure * max(1.0, state["dmax"]):
        return t, a, None      # not actually closed (e.g. hit another lobe)
    t = np.concatenate([t, t[-1] + ts])
    a = np.concatenate([a, a_tail])
    return t, a, float(t[-1])


def level_set_branches(sym: GradedSymbol, eps: float,
                       critical_atol: float = 1e-9,
                       rtol: float = 1e-11) -> list[OrbitBranch]:
    """Connected components of {E = eps}, oriented by the flow.

    Regular energies: one closed orbit per component, traced to closure.
    Critical energies (eps at a hyperbolic point's energy): separatrix
    branches seeded just off each HP along its unstable directions and
    traced until they reach a hyperbolic point again.
    """
    srf = surface_of(sym)
    fps = find_critical_points(sym)
    energies = [fp.energy for fp in fps]
    if not energies:
        return []
    if eps < min(energies) - 1e-12 or eps > max(energies) + 1e-12:
        return []
    hps = [fp for fp in fps if fp.kind == "hyperbolic"
           and abs(fp.energy - eps) < critical_atol]
    if hps:
        return _critical_branches(srf, fps, hps)
    return _regular_branches(srf, fps, eps, rtol)


def _regular_branches(srf, fps, eps, rtol) -> list[OrbitBranch]:
    # seed search: radial scans from each elliptic point catch every
    # component that encircles it (closed orbits of an integrable sphere
    # flow always encircle an elliptic point)
    branches = []

    def is_duplicate(a_seed):
        sv = _svec(a_seed)
        for br in branches:
            svs = np.array([_svec(x) for x in br.abar])
            d = np.linalg.norm(svs - sv, axis=1)
            i = int(np.argmin(d))
            j = min(i + 1, len(d) - 1)
            gap = np.linalg.norm(svs[j] - svs[i - 1])
            if d[i] < max(3.0 * gap, 1e-9):
                return True
        return False

    elliptic = [fp for fp in fps if fp.kind == "elliptic"]
    for fp in elliptic:
        cp = srf.chart(fp.chart)
        for angle in np.linspace(0, 2 * np.pi, 8, endpoint=False):
            d = np.exp(1j * angle)

            def f(r):
                return cp.value(fp.w + r * d) - eps

            # bracket the first crossing along the ray
            rs = np.linspace(1e-4, 2.5, 120)
            vals = np.array([f(r) for r in rs])
            sgn = np.sign(vals)
            idx = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
            if idx.size == 0:
                continue
            r0 = find_root(f, RootBracket.of(f, rs[idx[0]], rs[idx[0] + 1]))
            w_seed = fp.w + r0 * d
            a_seed = w_seed if fp.chart == "south" else 1.0 / w_seed
            if is_duplicate(a_seed):
                continue
            t, a, period = _trace_closed_orbit(srf, complex(a_seed),
                                               rtol=rtol)
            if period is None:
                continue
            branches.append(OrbitBranch(t, a, energy=eps, period=period,
                                        closed=True))
    return branches


def _critical_branches(srf, fps, hps) -> list[OrbitBranch]:
    offset = DEFAULT_TOL.hp_seed_offset
    reach = DEFAULT_TOL.hp_reach
    branches = []
    hp_idx = {id(fp): i for i, fp in enumerate(fps)}
    for fp in hps:
        rate, unstable, _ = hyperbolic_directions(srf, fp)
        for v in unstable:
            w_seed = fp.w + offset * (v[0] + 1j * v[1])
            a_seed = w_seed if fp.chart == "south" else 1.0 / w_seed
            armed = [False]

            def stop(t, a, _fps=fps, _armed=armed):
                dmin = min(np.linalg.norm(_svec(a) - np.array(f.svec))
                           for f in _fps if f.kind == "hyperbolic")
                if not _armed[0]:
                    if dmin > 1e-2:
                        _armed[0] = True
                    return False
                return dmin < reach * 0.1
            chart = "south" if abs(a_seed) <= CHART_HANDOFF else "north"
            w0 = a_seed if chart == "south" else 1.0 / a_seed
            tmax = 60.0 / max(rate, 1e-3)
            t, a, truncated, reason = _integrate_chart_switching(
                srf, w0, chart, tmax, stop=stop, rtol=1e-12)
            end_fp = None
            dend = np.inf
            for f2 in fps:
                if f2.kind != "hyperbolic":
                    continue
                d = np.linalg.norm(_svec(a[-1]) - np.array(f2.svec))
                if d < dend:
                    dend, end_fp = d, f2
            ok = reason == "stop condition" and dend < reach
            branches.append(OrbitBranch(
                t, a, energy=fp.energy,
                endpoints=(fps.index(fp), fps.index(end_fp) if end_fp else -1),
                closed=False, truncated=not ok,
                reason="" if ok else f"did not reach an HP ({reason})"))
    return branches


# ----------------------------------------------------------------------
# actions and regular Bohr-Sommerfeld spectrum
# ----------------------------------------------------------------------

def _resample_uniform(branch: OrbitBranch, n_pts: int):
    """Uniform-in-t resampling by cubic interpolation of the stored samples."""
    from scipy.interpolate import CubicSpline
    t = branch.t
    tt = np.linspace(t[0], t[-1] if not branch.closed else branch.period,
                     n_pts, endpoint=not branch.closed)
    csr = CubicSpline(t, branch.abar.real)
    csi = CubicSpline(t, branch.abar.imag)
    return tt, csr(tt) + 1j * csi(tt)


def g1_numerator(srf: Surface, abar, eps1: float):
    """eps1 - H1 + (1/2) d_zeta d_abar H0, on the section."""
    z = section(abar)
    return eps1 - srf.h1(abar, z) + 0.5 * srf.h0_az(abar, z)


def bs_actions(branch: OrbitBranch, eps1: float, sym: GradedSymbol,
               n_pts: int = 4096, hp_guard: float = 1e-3):
    """(I0, I1) action integrals over a closed regular orbit.

    I0 is the enclosed symplectic area; I1 carries the Maslov-like 1/2 and
    the subleading contour integral.  Refuses orbits passing near a
    hyperbolic point (use the hp-quantization module there).
    """
    if not branch.closed:
        raise ValueError("bs_actions requires a closed orbit")
    srf = surface_of(sym)
    for fp in find_critical_points(sym):
        if fp.kind == "hyperbolic":
            if np.min(np.abs(branch.abar - fp.abar)) < hp_guard:
                raise ValueError("orbit passes near a hyperbolic point; "
                                 "use the HP quantization path")
    tt, a = _resample_uniform(branch, n_pts)
    dt = tt[1] - tt[0]
    adot = np.array([srf.velocity_abar(x) for x in a])
    z = section(a)
    # I0 = -(1/2 pi i) contour ζ dᾱ
    i0 = (-np.sum(z * adot) * dt / (2j * np.pi)).real
    num = g1_numerator(srf, a, eps1)
    den = srf.h0_z(a, z)
    i1 = 0.5 - np.sum(num / den * adot) * dt / (2j * np.pi)
    sign = 1.0
    if i0 < 0:
        i0, i1, sign = -i0, 1.0 - i1, -1.0
    return float(i0), complex(i1)


def sphere_area(n_grid: int = 200, r_max: float = 40.0) -> float:
    """Total symplectic area int (1/pi)(1+r^2)^-2 d2a, normalized to 1.

    Direct radial Gauss quadrature plus the exact tail beyond r_max; kept
    as an independent check of the measure convention.
    """
    xu, wu = np.polynomial.legendre.leggauss(n_grid)
    r = 0.5 * r_max * (xu + 1.0)
    w = 0.5 * r_max * wu
    bulk = np.sum(w * 2.0 * r / (1.0 + r * r) ** 2)
    tail = 1.0 / (1.0 + r_max * r_max)
    return float(bulk + tail)


@dataclass
class BsLevel:
    k: int
    energy: float
    family: int


def _orbit_family(branch: OrbitBranch, fps) -> int:
    """Label a closed orbit by the elliptic fixed point it winds around."""
    for i, fp in enumerate(fps):
        if fp.kind != "elliptic" or np.isinf(abs(fp.abar)):
            continue
        rel = branch.abar - fp.abar
        winding = np.sum(np.angle(rel[1:] / rel[:-1])) / (2 * np.pi)
        if abs(winding) > 0.5:
            return i
    return -1


def family_orbit(sym: GradedSymbol, fp: FixedPointInfo, e: float,
                 rtol: float = 1e-11) -> OrbitBranch | None:
    """The closed orbit at energy e encircling the elliptic point fp.

    Seeded at the first level crossing of a radial ray from fp; the first
    crossing always lies in the annulus foliated by this family.
    """
    srf = surface_of(sym)
    cp = srf.chart(fp.chart)
    for angle in (0.0, np.pi / 3, 2 * np.pi / 3, np.pi):
        d = np.exp(1j * angle)

        def f(r):
            return cp.value(fp.w + r * d) - e

        rs = np.linspace(1e-4, 2.5, 160)
        vals = np.array([f(r) for r in rs])
        sgn = np.sign(vals)
        idx = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
        if idx.size == 0:
            continue
        r0 = find_root(f, RootBracket.of(f, rs[idx[0]], rs[idx[0] + 1]))
        w_seed = fp.w + r0 * d
        a_seed = w_seed if fp.chart == "south" else 1.0 / w_seed
        t, a, period = _trace_closed_orbit(srf, complex(a_seed), rtol=rtol)
        if period is not None:
            return OrbitBranch(t, a, energy=e, period=period, closed=True)
    return None


def bs_spectrum(sym: GradedSymbol, n: int, window: tuple,
                guard_factor: float = 4.0, n_scan: int = 48) -> list[float]:
    """Regular Bohr-Sommerfeld predictions in an energy window.

    Solves I0(e) + I1(e)/n = k/n per orbit family, with e the single root
    variable (the eps1 split is absorbed: dI0/de matches the eps1 term of
    I1 at first order).  A spline over a scan grid brackets each root;
    Newton steps on the true action function, with dI0/de = T/(2 pi) from
    the traced period, polish it.  The window must stay clear of critical
    energies.
    """
    lo, hi = window
    fps = find_critical_points(sym)
    guard = guard_factor / n
    for ec in critical_energies(sym):
        if lo - guard < ec < hi + guard:
            raise ValueError(
                f"window touches the critical energy {ec}; use the "
                "hp-quantization module near critical energies")
    es = np.linspace(lo, hi, n_scan)
    families: dict[int, list] = {}
    for e in es:
        for br in level_set_branches(sym, e, rtol=1e-9):
            fam = _orbit_family(br, fps)
            i0, i1 = bs_actions(br, 0.0, sym, n_pts=2048)
            families.setdefault(fam, []).append((e, i0, i1.real, br.period))
    out: list[BsLevel] = []
    from scipy.interpolate import CubicSpline
    for fam, rows in families.items():
        if fam < 0 or len(rows) < 4:
            continue
        rows.sort()
        e_arr = np.array([r[0] for r in rows])
        phi = np.array([r[1] + r[2] / n for r in rows])
        spl = CubicSpline(e_arr, phi)
        kmin = int(np.ceil(min(phi) * n - 1e-9))
        kmax = int(np.floor(max(phi) * n + 1e-9))
        for k in range(max(kmin, 0), min(kmax, n + 1) + 1):
            vals = phi - k / n
            sgn = np.sign(vals)
            idx = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
            for i in idx:
                e_star = find_root(lambda e, _k=k: spl(e) - _k / n,
                                   RootBracket.of(
                                       lambda e, _k=k: spl(e) - _k / n,
                                       e_arr[i], e_arr[i + 1]))
                e_star = _newton_polish_bs(sym, fps[fam], n, k, e_star)
                out.append(BsLevel(k, e_star, fam))
    return sorted(lvl.energy for lvl in out)


def _newton_polish_bs(sym, fp, n, k, e0, max_iter: int = 3):
    e = e0
    for _ in range(max_iter):
        br = family_orbit(sym, fp, e)
        if br is None:
            return e
        i0, i1 = bs_actions(br, 0.0, sym)
        resid = i0 + i1.real / n - k / n
        slope = br.period / (2 * np.pi)
        step = -resid / slope
        e = e + step
        if abs(resid) < 1e-13 or abs(step) < 1e-13:
            break
    return e


def fixed_points_to_json(fps: list[FixedPointInfo], path) -> None:
    with open(path, "w") as fh:
        json.dump([fp.to_dict() for fp in fps], fh, indent=2, sort_keys=True)
        fh.write("\n")
